#pragma once

#include "funflow/basis.hpp"
#include "funflow/smoothing.hpp"

#include <Eigen/Dense>

#include <span>
#include <vector>

namespace funflow {

/// One functional covariate of a scalar-response model.
struct ScalarTerm {
  BasisSystem x_basis;
  BasisSystem beta_basis;
  Eigen::VectorXd beta_coefs;
  Eigen::MatrixXd j_phi_theta;  // K_x x K_beta cross Gram matrix
};

/// y_i = alpha + sum_j int beta_j(t) x_ij(t) dt.
struct ScalarFLMModel {
  double intercept = 0.0;
  std::vector<ScalarTerm> terms;
  double lambda = 0.0;
  DiffOperator op;
  /// (chi'chi + lambda R)^{-1}, intercept first, then the beta blocks in term order.
  Eigen::MatrixXd xtx_inv;
  double sigma2 = 0.0;

  const BasisSystem& beta_basis() const { return terms.front().beta_basis; }
  const Eigen::VectorXd& beta_coefs() const { return terms.front().beta_coefs; }
};

struct FitDiagnostics {
  std::vector<double> fitted;
  std::vector<double> residuals;
  double r2 = 0.0;  // NaN when y has zero variance
  double rmse = 0.0;
  double bias = 0.0;
  double loocv = 0.0;  // +inf when some hat diagonal equals 1
  double effective_df = 0.0;
};

struct ScalarFit {
  ScalarFLMModel model;
  FitDiagnostics diagnostics;
};

/// Penalized least squares on chi = [1 | C J_{Phi Theta}] with the intercept
/// left unpenalized.
ScalarFit fit_flms(const FunctionalDataset& x, std::span<const double> y,
                   const BasisSystem& beta_basis, double lambda, DiffOperator op = {});

/// Several functional covariates; one beta basis per covariate, a shared lambda
/// and a block-diagonal penalty.
ScalarFit fit_flms(std::span<const FunctionalDataset> xs, std::span<const double> y,
                   std::span<const BasisSystem> beta_bases, double lambda, DiffOperator op = {});

std::vector<double> predict_flms(const ScalarFLMModel& model, const FunctionalDataset& xnew);
std::vector<double> predict_flms(const ScalarFLMModel& model,
                                 std::span<const FunctionalDataset> xnew);

struct ConfidenceBand {
  std::vector<double> lower;
  std::vector<double> center;
  std::vector<double> upper;
};

/// Pointwise band center +- z_{(1+level)/2} * se(t) for the coefficient curve
/// of covariate `term`.
ConfidenceBand beta_confidence_band(const ScalarFLMModel& model, std::span<const double> times,
                                    double level, std::size_t term = 0);

/// Leave-one-out squared residuals for one lambda via the hat-diagonal identity.
std::vector<double> loo_residuals_flms(const FunctionalDataset& x, std::span<const double> y,
                                       const BasisSystem& beta_basis, double lambda,
                                       DiffOperator op = {});

/// Leave-one-out CV over a lambda grid. se = sd(squared LOO residuals)/sqrt(n).
CVResult loocv_flms(const FunctionalDataset& x, std::span<const double> y,
                    const BasisSystem& beta_basis, std::span<const double> grid,
                    DiffOperator op = {}, CVRule rule = CVRule::Minimum);

}  // namespace funflow
