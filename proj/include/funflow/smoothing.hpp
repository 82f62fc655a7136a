#pragma once

#include "funflow/basis.hpp"

#include <Eigen/Dense>

#include <span>
#include <string>
#include <vector>

namespace funflow {

/// Discrete measurements z_j at times t_j for one unit (typically a year).
struct DiscreteSeries {
  std::string label;
  std::vector<double> times;
  std::vector<double> values;
};

/// Throws InvalidData unless the series has >= 2 points, matching lengths,
/// strictly increasing times, all inside `domain`.
void validate_series(const DiscreteSeries& series, const Interval& domain);

/// n curves sharing one basis, stored as an n x K coefficient matrix.
class FunctionalDataset {
 public:
  FunctionalDataset(BasisSystem basis, Eigen::MatrixXd coefs, std::vector<std::string> labels);

  const BasisSystem& basis() const noexcept { return basis_; }
  const Eigen::MatrixXd& coefs() const noexcept { return coefs_; }
  const std::vector<std::string>& labels() const noexcept { return labels_; }
  Eigen::Index size() const noexcept { return coefs_.rows(); }

  /// Dataset restricted to the given rows, in the given order.
  FunctionalDataset subset(std::span<const Eigen::Index> rows) const;
  /// Dataset with one row removed.
  FunctionalDataset without(Eigen::Index row) const;

 private:
  BasisSystem basis_;
  Eigen::MatrixXd coefs_;
  std::vector<std::string> labels_;
};

struct SmoothReport {
  double lambda = 0.0;
  double effective_df = 0.0;  // trace of the hat matrix
  double sse = 0.0;
  std::vector<double> hat_diag;
};

struct SmoothResult {
  FunctionalDataset data;
  std::vector<SmoothReport> reports;
};

enum class CVRule {
  Minimum,
  LowestWithinOneSE,
  Fixed,  // single-value grid, no search performed
};

std::string_view to_string(CVRule rule);
CVRule parse_cv_rule(std::string_view name);

struct CVResult {
  std::vector<double> grid;
  std::vector<double> scores;
  std::vector<double> ses;
  double chosen = 0.0;
  std::size_t chosen_index = 0;
  CVRule rule = CVRule::Minimum;
};

/// ln(max(v, epsilon)) elementwise; negative inputs are rejected.
std::vector<double> preprocess_log(std::span<const double> values, double epsilon = 0.05);

/// Penalized least-squares smoothing of every series onto `basis`:
/// (Phi'Phi + lambda R) c = Phi'z with R the D^op penalty.
SmoothResult smooth(std::span<const DiscreteSeries> series, const BasisSystem& basis,
                    double lambda, DiffOperator op = {});

/// Leave-one-out residuals of one series via the hat-diagonal identity
/// (z_j - zhat_j) / (1 - H_jj).
std::vector<double> loo_residuals(const DiscreteSeries& series, const BasisSystem& basis,
                                  double lambda, DiffOperator op = {});

/// Applies a selection rule to precomputed CV scores and returns the index of
/// the chosen grid value. Minimum: argmin. LowestWithinOneSE: smallest grid
/// value whose score is <= min score + se at the argmin.
std::size_t choose_lambda_index(std::span<const double> grid, std::span<const double> scores,
                                std::span<const double> ses, CVRule rule);

/// K-fold cross-validation over time points. Each series is cut into `folds`
/// contiguous blocks of time indices; fold f holds out block f of every series.
/// score = mean over folds of the held-out mean squared error (pooled over
/// series with equal weight per observation); se = sd(fold scores)/sqrt(folds).
CVResult select_lambda(std::span<const DiscreteSeries> series, const BasisSystem& basis,
                       std::span<const double> grid, int folds, CVRule rule,
                       DiffOperator op = {});

/// Curve values (n x |times|), optionally of a derivative.
Eigen::MatrixXd eval_curves(const FunctionalDataset& ds, std::span<const double> times,
                            int deriv = 0);

/// Single-curve dataset holding the coefficient column means.
FunctionalDataset mean_curve(const FunctionalDataset& ds);

/// 10^lo, 10^(lo+step), ..., up to 10^hi inclusive.
std::vector<double> log10_grid(double lo_exp, double hi_exp, double step);

}  // namespace funflow
