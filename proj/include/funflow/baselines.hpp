#pragma once

#include "funflow/smoothing.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace funflow {

// ------------------------------------------------ aggregate linear model

struct AggLinearModel {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_se = 0.0;
  double p_value = 1.0;  // two-sided t-test of slope = 0
};

/// Per-series sums of the daily values.
std::vector<double> aggregate_sums(std::span<const DiscreteSeries> x_daily);

/// OLS of y on (1, sum_j z_ij).
AggLinearModel fit_agg_lm(std::span<const DiscreteSeries> x_daily, std::span<const double> y);

std::vector<double> predict_agg_lm(const AggLinearModel& model,
                                   std::span<const DiscreteSeries> x_daily);

// ------------------------------------------------------------ lag features

/// Row per horizon time t holding the values at t-1, ..., t-lags. Times are
/// matched exactly (daily grids), so a missing day counts as missing history.
Eigen::MatrixXd make_lag_matrix(const DiscreteSeries& x, int lags,
                                std::span<const double> horizon_times);

// ----------------------------------------------------------- lagged network

enum class Activation { Tanh };

struct NetTrainConfig {
  int hidden = 5;
  int max_epochs = 3000;
  double step_size = 0.05;
  double momentum = 0.9;  // heavy-ball term; 0 gives plain gradient descent
  int patience = 200;
  double validation_fraction = 0.2;  // trailing rows held out for early stopping
  std::uint64_t seed = 1;
  bool zero_output_init = false;
};

/// One tanh hidden layer and a linear output. Inputs are standardized with the
/// stored training mean and scale before the first layer.
struct LaggedNetModel {
  int lags = 3;
  int hidden = 5;
  Eigen::MatrixXd w1;  // hidden x lags
  Eigen::VectorXd b1;  // hidden
  Eigen::MatrixXd w2;  // 1 x hidden
  Eigen::VectorXd b2;  // 1
  Activation activation = Activation::Tanh;
  Eigen::VectorXd input_mean;
  Eigen::VectorXd input_scale;
  std::uint64_t seed = 1;
  NetTrainConfig train_config;
  int epochs_run = 0;
  std::vector<double> train_fitted;
};

/// Seeded initialization; w1 ~ N(0, 1/lags), w2 ~ N(0, 1/hidden) (or zero),
/// b1 = 0, b2 = mean(targets).
LaggedNetModel init_lagged_net(const Eigen::MatrixXd& features, std::span<const double> targets,
                               const NetTrainConfig& config);

LaggedNetModel fit_lagged_net(const Eigen::MatrixXd& features, std::span<const double> targets,
                              const NetTrainConfig& config = {});

std::vector<double> predict_lagged_net(const LaggedNetModel& model, const Eigen::MatrixXd& features);

/// Weights flattened as [w1 (column-major), b1, w2, b2].
Eigen::VectorXd pack_weights(const LaggedNetModel& model);
void unpack_weights(LaggedNetModel& model, const Eigen::VectorXd& packed);

/// Mean squared error and its gradient with respect to the packed weights.
double net_loss(const LaggedNetModel& model, const Eigen::MatrixXd& features,
                std::span<const double> targets);
Eigen::VectorXd net_gradient(const LaggedNetModel& model, const Eigen::MatrixXd& features,
                             std::span<const double> targets);

/// Hidden-size choice by leave-one-group-out CV (groups are typically years).
/// Returns the size with the lowest mean held-out squared error; ties go to
/// the smaller size.
struct HiddenSearch {
  std::vector<int> sizes;
  std::vector<double> scores;
  int chosen = 0;
};
HiddenSearch select_hidden_size(std::span<const Eigen::MatrixXd> group_features,
                                std::span<const std::vector<double>> group_targets,
                                std::span<const int> sizes, const NetTrainConfig& config);

// ------------------------------------------------- autoregressive variant

/// Features [x(t-1..t-x_lags), y(t-1..t-y_lags)] for each horizon time.
Eigen::MatrixXd make_joint_lag_matrix(const DiscreteSeries& x, int x_lags, const DiscreteSeries& y,
                                      int y_lags, std::span<const double> horizon_times);

/// Multi-step forecast over consecutive `horizon_times`: covariate lags come
/// from `x`, response lags from `y_history` before the first horizon time and
/// from the model's own earlier forecasts after it.
std::vector<double> forecast_recursive(const LaggedNetModel& model, const DiscreteSeries& x,
                                       int x_lags, const DiscreteSeries& y_history, int y_lags,
                                       std::span<const double> horizon_times);


/// Leave-one-group-out evaluation of the lagged network. For each held-out
/// series the net is trained on the others and then forecasts the held-out
/// horizon times: recursively (its own outputs feed the response lags) when
/// y_lags > 0, else directly from covariate lags. Errors are squared.
struct LoyoNetResult {
  std::vector<std::string> labels;
  std::vector<double> horizon_times;
  std::vector<std::vector<double>> forecasts;  // one row per held-out series
  std::vector<double> per_label_error;         // mean over horizon times
  std::vector<double> per_time_error;          // mean over held-out series
  double score = 0.0;                          // mean over everything
};
LoyoNetResult loyo_lagged_net(std::span<const DiscreteSeries> x, int x_lags,
                              std::span<const DiscreteSeries> y, int y_lags,
                              std::span<const double> horizon_times, const NetTrainConfig& config);

}  // namespace funflow
