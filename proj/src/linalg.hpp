#pragma once

// Internal helpers shared by the model fitters.

#include "funflow/error.hpp"

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <sstream>
#include <string>

namespace funflow::detail {

inline constexpr double kMinRcond = 1e-13;

inline std::string sci(double v) {
  std::ostringstream os;
  os.precision(6);
  os << std::scientific << v;
  return os.str();
}

inline double min_eigenvalue(const Eigen::MatrixXd& a) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

/// LDLT of a symmetric matrix that must be numerically positive definite.
inline Eigen::LDLT<Eigen::MatrixXd> factor_spd(const Eigen::MatrixXd& a,
                                               const std::string& hint) {
  Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || !(ldlt.rcond() >= kMinRcond)) {
    throw Error(ErrorKind::RankDeficient,
                "normal matrix is singular (smallest eigenvalue " +
                    sci(min_eigenvalue(a)) + "); " + hint);
  }
  return ldlt;
}

/// Minimizes ||X b - y||^2 + ||P b||^2 through a rank-revealing QR of the
/// stacked matrix [X; P]. `P` is the (already lambda-scaled) penalty root.
class PenalizedQR {
 public:
  PenalizedQR(const Eigen::MatrixXd& design, const Eigen::MatrixXd& scaled_root,
              const std::string& hint)
      : ncols_(design.cols()) {
    Eigen::MatrixXd stacked(design.rows() + scaled_root.rows(), ncols_);
    stacked << design, scaled_root;
    qr_.compute(stacked);
    if (qr_.rank() < ncols_) {
      throw Error(ErrorKind::RankDeficient, "normal matrix is singular (numerical rank " +
                                                std::to_string(qr_.rank()) + " of " +
                                                std::to_string(ncols_) + "); " + hint);
    }
    nstack_ = stacked.rows();
  }

  /// Coefficients for one or more right-hand sides aligned with the design rows.
  Eigen::MatrixXd solve(const Eigen::MatrixXd& rhs) const {
    Eigen::MatrixXd full = Eigen::MatrixXd::Zero(nstack_, rhs.cols());
    full.topRows(rhs.rows()) = rhs;
    return qr_.solve(full);
  }

  /// R^{-T} P' x for each column x; squared column norms are hat diagonals.
  Eigen::MatrixXd whiten(const Eigen::MatrixXd& cols) const {
    const auto r = qr_.matrixR().topLeftCorner(ncols_, ncols_).triangularView<Eigen::Upper>();
    Eigen::MatrixXd permuted = qr_.colsPermutation().transpose() * cols;
    r.transpose().solveInPlace(permuted);
    return permuted;
  }

  /// (X'X + P'P)^{-1}.
  Eigen::MatrixXd inverse_normal() const {
    const Eigen::MatrixXd w = whiten(Eigen::MatrixXd::Identity(ncols_, ncols_));
    return w.transpose() * w;
  }

 private:
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr_;
  Eigen::Index ncols_;
  Eigen::Index nstack_ = 0;
};

}  // namespace funflow::detail
