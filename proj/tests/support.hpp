#pragma once

#include <doctest.h>

#include "funflow/error.hpp"
#include "funflow/smoothing.hpp"
#include "oracles.hpp"

#include <functional>
#include <random>
#include <string>

namespace funflow::testing {

inline ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected funflow::Error");
  return ErrorKind::Usage;
}

inline std::vector<std::string> labels(Eigen::Index n, const std::string& prefix = "c") {
  std::vector<std::string> out;
  for (Eigen::Index i = 0; i < n; ++i) out.push_back(prefix + std::to_string(i));
  return out;
}

/// n curves with iid N(0, sd^2) coefficients.
inline FunctionalDataset random_curves(std::mt19937_64& rng, const BasisSystem& basis, int n,
                                       double sd = 1.0) {
  return FunctionalDataset(basis, oracle::random_matrix(rng, n, basis.nbasis(), sd), labels(n));
}

inline std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace funflow::testing
