#include "funflow/error.hpp"

namespace funflow {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidBasis: return "invalid-basis";
    case ErrorKind::InvalidOperator: return "invalid-operator";
    case ErrorKind::OutOfDomain: return "out-of-domain";
    case ErrorKind::DomainMismatch: return "domain-mismatch";
    case ErrorKind::BasisMismatch: return "basis-mismatch";
    case ErrorKind::InvalidData: return "invalid-data";
    case ErrorKind::RankDeficient: return "rank-deficiency";
    case ErrorKind::FoldSize: return "fold-size";
    case ErrorKind::DegenerateFold: return "degenerate-fold";
    case ErrorKind::InvalidLevel: return "invalid-level";
    case ErrorKind::Alignment: return "alignment";
    case ErrorKind::InsufficientData: return "insufficient-data";
    case ErrorKind::DegenerateRegressor: return "degenerate-regressor";
    case ErrorKind::History: return "history";
    case ErrorKind::Divergence: return "divergence";
    case ErrorKind::Shape: return "shape";
    case ErrorKind::Degenerate: return "degenerate";
    case ErrorKind::Parse: return "parse";
    case ErrorKind::NoData: return "no-data";
    case ErrorKind::Usage: return "usage";
    case ErrorKind::Config: return "config";
    case ErrorKind::Io: return "io";
  }
  return "unknown";
}

}  // namespace funflow
