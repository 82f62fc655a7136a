#pragma once

#include "funflow/basis.hpp"
#include "funflow/smoothing.hpp"

#include <Eigen/Dense>

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace funflow {

struct FlmfBases {
  BasisSystem s_basis;      // H over the covariate domain
  BasisSystem t_basis;      // Theta over the response domain
  BasisSystem alpha_basis;  // intercept curve basis over the response domain
};

struct FlmfLambdas {
  double lambda0 = 0.0;  // intercept roughness
  double lambda1 = 0.0;  // roughness of beta along s
  double lambda2 = 0.0;  // roughness of beta along t
  bool operator==(const FlmfLambdas&) const = default;
};

struct FlmfOps {
  DiffOperator l0;
  DiffOperator l1;
  DiffOperator l2;
};

/// y_i(t) = alpha(t) + int beta(s, t) x_i(s) ds with beta(s, t) = H(s)' B Theta(t).
struct FullFLMModel {
  BasisSystem x_basis;
  BasisSystem alpha_basis;
  Eigen::VectorXd alpha_coefs;
  BasisSystem s_basis;
  BasisSystem t_basis;
  Eigen::MatrixXd b_matrix;  // K1 x K2
  FlmfLambdas lambdas;
  FlmfOps ops;
  Eigen::MatrixXd j_phi_h;  // K_x x K1
  std::vector<std::string> warnings;
};

struct CurvePrediction {
  FunctionalDataset dataset;  // over the model's t basis
  std::optional<std::vector<double>> per_time_se;
};

/// Joint normal equations in (alpha_coefs, vec(B)) with vec taken s-index major.
struct FlmfNormalSystem {
  Eigen::MatrixXd matrix;
  Eigen::VectorXd rhs;
};

FlmfNormalSystem flmf_normal_equations(const FunctionalDataset& x, const FunctionalDataset& y,
                                       const FlmfBases& bases, const FlmfLambdas& lambdas,
                                       const FlmfOps& ops = {});

FullFLMModel fit_flmf(const FunctionalDataset& x, const FunctionalDataset& y,
                      const FlmfBases& bases, const FlmfLambdas& lambdas,
                      const FlmfOps& ops = {});

CurvePrediction predict_flmf(const FullFLMModel& model, const FunctionalDataset& xnew);

/// Entry (j, l) = beta(s_j, t_l).
Eigen::MatrixXd beta_surface(const FullFLMModel& model, std::span<const double> s_grid,
                             std::span<const double> t_grid);

/// Share of the squared surface lying where s > t, on a uniform grid over the
/// two domains. Near zero means the future of x has no influence on y.
double backward_mass_fraction(const FullFLMModel& model, int grid_points = 201);

/// Integral of (L phi)^2 for the three fitted functions: {alpha, beta along s, beta along t}.
std::array<double, 3> flmf_roughness(const FullFLMModel& model);

struct FlmfLambdaGrids {
  std::vector<double> lambda0;
  std::vector<double> lambda1;
  std::vector<double> lambda2;
};

struct LocvOptions {
  /// Evaluation times over the response domain; default is one per day.
  std::vector<double> eval_times;
  /// When set, held-out error is measured against these raw values (one
  /// series per label, aligned with y) instead of the smoothed response curve.
  std::optional<std::vector<DiscreteSeries>> raw_response;
};

struct LocvResult {
  std::vector<FlmfLambdas> triples;  // product grid, lambda0 slowest
  std::vector<double> scores;
  std::vector<double> ses;
  std::size_t chosen_index = 0;
  FlmfLambdas chosen;
  /// Score profile along each lambda with the other two held at the optimum.
  std::array<CVResult, 3> profiles;
  std::vector<std::string> labels;
  std::vector<double> eval_times;
  std::vector<double> per_label_error;  // at the chosen triple
  std::vector<double> per_time_error;   // at the chosen triple
  FunctionalDataset predictions;        // held-out predictions at the chosen triple
};

/// Leave-one-curve-out cross-validation over the product lambda grid.
LocvResult locv_flmf(const FunctionalDataset& x, const FunctionalDataset& y,
                     const FlmfBases& bases, const FlmfLambdaGrids& grids,
                     const FlmfOps& ops = {}, const LocvOptions& options = {});

}  // namespace funflow
