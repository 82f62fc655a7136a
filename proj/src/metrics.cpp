#include "funflow/metrics.hpp"

#include "funflow/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace funflow {

namespace {

void check_pair(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw Error(ErrorKind::Shape, "length mismatch: " + std::to_string(a.size()) + " vs " +
                                      std::to_string(b.size()));
  }
  if (a.empty()) throw Error(ErrorKind::Shape, "empty input");
}

std::vector<double> ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

double bias(std::span<const double> actual, std::span<const double> fitted) {
  check_pair(actual, fitted);
  double s = 0.0;
  for (std::size_t i = 0; i < actual.size(); ++i) s += fitted[i] - actual[i];
  return s / static_cast<double>(actual.size());
}

double rmse(std::span<const double> actual, std::span<const double> fitted) {
  check_pair(actual, fitted);
  double s = 0.0;
  for (std::size_t i = 0; i < actual.size(); ++i) {
    const double d = fitted[i] - actual[i];
    s += d * d;
  }
  return std::sqrt(s / static_cast<double>(actual.size()));
}

double r2(std::span<const double> actual, std::span<const double> fitted) {
  check_pair(actual, fitted);
  const double mean =
      std::accumulate(actual.begin(), actual.end(), 0.0) / static_cast<double>(actual.size());
  double sse = 0.0, sst = 0.0;
  for (std::size_t i = 0; i < actual.size(); ++i) {
    sse += (actual[i] - fitted[i]) * (actual[i] - fitted[i]);
    sst += (actual[i] - mean) * (actual[i] - mean);
  }
  if (!(sst > 0.0)) throw Error(ErrorKind::Degenerate, "actual values have zero variance");
  return 1.0 - sse / sst;
}

double spearman(std::span<const double> x, std::span<const double> y) {
  check_pair(x, y);
  const auto rx = ranks(x);
  const auto ry = ranks(y);
  const double n = static_cast<double>(x.size());
  const double mean = (n + 1.0) / 2.0;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mean) * (ry[i] - mean);
    sxx += (rx[i] - mean) * (rx[i] - mean);
    syy += (ry[i] - mean) * (ry[i] - mean);
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) throw Error(ErrorKind::Degenerate, "constant input to spearman");
  return sxy / std::sqrt(sxx * syy);
}

std::vector<CriteriaRow> criteria_table(std::span<const CriteriaInput> inputs) {
  std::vector<CriteriaRow> rows;
  rows.reserve(inputs.size());
  for (const auto& in : inputs) {
    rows.push_back({in.model_name, bias(in.actual, in.fitted), rmse(in.actual, in.fitted),
                    in.cv_score, r2(in.actual, in.fitted)});
  }
  return rows;
}

std::vector<double> daily_grid(const Interval& domain) {
  std::vector<double> g;
  for (double t = std::ceil(domain.lo()); t <= domain.hi(); t += 1.0) g.push_back(t);
  return g;
}

std::vector<double> pooled_values(const FunctionalDataset& ds, std::span<const double> times) {
  const Eigen::MatrixXd v = eval_curves(ds, times);
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(v.size()));
  for (Eigen::Index i = 0; i < v.rows(); ++i)
    for (Eigen::Index j = 0; j < v.cols(); ++j) out.push_back(v(i, j));
  return out;
}

}  // namespace funflow
