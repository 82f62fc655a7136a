#pragma once

#include "funflow/basis.hpp"
#include "funflow/smoothing.hpp"

#include <span>
#include <string>
#include <vector>

namespace funflow {

/// mean(fitted - actual).
double bias(std::span<const double> actual, std::span<const double> fitted);
/// sqrt(mean((fitted - actual)^2)).
double rmse(std::span<const double> actual, std::span<const double> fitted);
/// 1 - SSE/SST with SST about mean(actual). Throws Degenerate if SST = 0.
double r2(std::span<const double> actual, std::span<const double> fitted);

/// Spearman rank correlation (average ranks for ties).
double spearman(std::span<const double> x, std::span<const double> y);

struct CriteriaRow {
  std::string model_name;
  double bias = 0.0;
  double rmse = 0.0;
  double cv = 0.0;
  double r2 = 0.0;
};

struct CriteriaInput {
  std::string model_name;
  std::vector<double> actual;
  std::vector<double> fitted;
  double cv_score = 0.0;
};

/// One row per input, in input order.
std::vector<CriteriaRow> criteria_table(std::span<const CriteriaInput> inputs);

/// Integer days ceil(lo), ..., floor(hi) inside the interval.
std::vector<double> daily_grid(const Interval& domain);

/// Curve values on `times`, flattened curve by curve (row-major over labels).
std::vector<double> pooled_values(const FunctionalDataset& ds, std::span<const double> times);

}  // namespace funflow
