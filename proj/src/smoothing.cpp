#include "funflow/smoothing.hpp"

#include "funflow/error.hpp"
#include "funflow/parallel.hpp"
#include "linalg.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

namespace funflow {

namespace {

constexpr const char* kLambdaHint = "use lambda > 0 or fewer basis functions";

// Series sharing one time grid share the basis matrix and its factorization.
std::map<std::vector<double>, std::vector<std::size_t>> group_by_times(
    std::span<const DiscreteSeries> series) {
  std::map<std::vector<double>, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < series.size(); ++i) groups[series[i].times].push_back(i);
  return groups;
}

Eigen::Map<const Eigen::VectorXd> as_vector(const std::vector<double>& v) {
  return {v.data(), static_cast<Eigen::Index>(v.size())};
}

std::pair<Eigen::Index, Eigen::Index> block_range(Eigen::Index n, int folds, int f) {
  return {n * f / folds, n * (f + 1) / folds};
}

}  // namespace

void validate_series(const DiscreteSeries& s, const Interval& domain) {
  if (s.times.size() != s.values.size()) {
    throw Error(ErrorKind::InvalidData, "series '" + s.label + "': times and values differ in length");
  }
  if (s.times.size() < 2) {
    throw Error(ErrorKind::InvalidData, "series '" + s.label + "' needs at least 2 points");
  }
  for (std::size_t j = 0; j < s.times.size(); ++j) {
    if (!std::isfinite(s.values[j])) {
      throw Error(ErrorKind::InvalidData, "series '" + s.label + "' has a non-finite value");
    }
    if (j > 0 && !(s.times[j] > s.times[j - 1])) {
      throw Error(ErrorKind::InvalidData, "series '" + s.label + "': times must be strictly increasing");
    }
    domain.clamp_checked(s.times[j]);
  }
}

// ------------------------------------------------------- FunctionalDataset

FunctionalDataset::FunctionalDataset(BasisSystem basis, Eigen::MatrixXd coefs,
                                     std::vector<std::string> labels)
    : basis_(std::move(basis)), coefs_(std::move(coefs)), labels_(std::move(labels)) {
  if (coefs_.cols() != basis_.nbasis()) {
    throw Error(ErrorKind::Shape, "coefficient matrix has " + std::to_string(coefs_.cols()) +
                                      " columns but the basis has " +
                                      std::to_string(basis_.nbasis()) + " functions");
  }
  if (static_cast<Eigen::Index>(labels_.size()) != coefs_.rows()) {
    throw Error(ErrorKind::Shape, "label count does not match the number of curves");
  }
  std::set<std::string> seen(labels_.begin(), labels_.end());
  if (seen.size() != labels_.size()) {
    throw Error(ErrorKind::InvalidData, "dataset labels must be unique");
  }
}

FunctionalDataset FunctionalDataset::subset(std::span<const Eigen::Index> rows) const {
  Eigen::MatrixXd c(static_cast<Eigen::Index>(rows.size()), coefs_.cols());
  std::vector<std::string> l;
  l.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    c.row(static_cast<Eigen::Index>(i)) = coefs_.row(rows[i]);
    l.push_back(labels_.at(static_cast<std::size_t>(rows[i])));
  }
  return FunctionalDataset(basis_, std::move(c), std::move(l));
}

FunctionalDataset FunctionalDataset::without(Eigen::Index row) const {
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < size(); ++i)
    if (i != row) keep.push_back(i);
  return subset(keep);
}

// ------------------------------------------------------------------- rules

std::string_view to_string(CVRule rule) {
  switch (rule) {
    case CVRule::Minimum: return "minimum";
    case CVRule::LowestWithinOneSE: return "one-se";
    case CVRule::Fixed: return "fixed";
  }
  return "minimum";
}

CVRule parse_cv_rule(std::string_view name) {
  if (name == "minimum" || name == "min") return CVRule::Minimum;
  if (name == "one-se" || name == "1se" || name == "lowest-within-one-se") {
    return CVRule::LowestWithinOneSE;
  }
  if (name == "fixed") return CVRule::Fixed;
  throw Error(ErrorKind::Config, "unknown CV rule '" + std::string(name) + "'");
}

std::size_t choose_lambda_index(std::span<const double> grid, std::span<const double> scores,
                                std::span<const double> ses, CVRule rule) {
  if (grid.empty() || grid.size() != scores.size() || grid.size() != ses.size()) {
    throw Error(ErrorKind::Shape, "CV grid, scores and standard errors must be nonempty and aligned");
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i)
    if (scores[i] < scores[best]) best = i;
  if (rule != CVRule::LowestWithinOneSE) return best;
  const double threshold = scores[best] + ses[best];
  std::size_t pick = best;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (scores[i] <= threshold && grid[i] < grid[pick]) pick = i;
  }
  return pick;
}

// --------------------------------------------------------------- smoothing

std::vector<double> preprocess_log(std::span<const double> values, double epsilon) {
  if (!(epsilon > 0.0)) throw Error(ErrorKind::InvalidData, "log epsilon must be positive");
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i] < 0.0 || std::isnan(values[i])) {
      throw Error(ErrorKind::InvalidData,
                  "negative value at position " + std::to_string(i) + " cannot be log-transformed");
    }
    out[i] = std::log(std::max(values[i], epsilon));
  }
  return out;
}

SmoothResult smooth(std::span<const DiscreteSeries> series, const BasisSystem& basis,
                    double lambda, DiffOperator op) {
  if (!(lambda >= 0.0)) throw Error(ErrorKind::InvalidData, "lambda must be >= 0");
  if (series.empty()) throw Error(ErrorKind::NoData, "no series to smooth");
  for (const auto& s : series) validate_series(s, basis.domain());

  const int K = basis.nbasis();
  const Eigen::MatrixXd root =
      lambda > 0.0 ? Eigen::MatrixXd(std::sqrt(lambda) * penalty_root(basis, op))
                   : Eigen::MatrixXd::Zero(0, K);

  Eigen::MatrixXd coefs(static_cast<Eigen::Index>(series.size()), K);
  std::vector<SmoothReport> reports(series.size());
  std::vector<std::string> labels;
  for (const auto& s : series) labels.push_back(s.label);

  for (const auto& [times, members] : group_by_times(series)) {
    const auto T = static_cast<Eigen::Index>(times.size());
    if (lambda == 0.0 && T < K) {
      throw Error(ErrorKind::RankDeficient,
                  "series '" + series[members.front()].label + "' has " + std::to_string(T) +
                      " points for " + std::to_string(K) + " basis functions; " + kLambdaHint);
    }
    const Eigen::MatrixXd phi = eval_basis(basis, times, 0);
    const detail::PenalizedQR solver(phi, root, kLambdaHint);
    const Eigen::MatrixXd w = solver.whiten(phi.transpose());  // K x T
    std::vector<double> hat(T);
    for (Eigen::Index j = 0; j < T; ++j) hat[j] = w.col(j).squaredNorm();
    const double edf = std::accumulate(hat.begin(), hat.end(), 0.0);

    Eigen::MatrixXd z(T, static_cast<Eigen::Index>(members.size()));
    for (std::size_t m = 0; m < members.size(); ++m) z.col(m) = as_vector(series[members[m]].values);
    const Eigen::MatrixXd c = solver.solve(z);
    for (std::size_t m = 0; m < members.size(); ++m) {
      const std::size_t i = members[m];
      coefs.row(static_cast<Eigen::Index>(i)) = c.col(m).transpose();
      reports[i] = SmoothReport{lambda, edf, (z.col(m) - phi * c.col(m)).squaredNorm(), hat};
    }
  }
  return SmoothResult{FunctionalDataset(basis, std::move(coefs), std::move(labels)),
                      std::move(reports)};
}

std::vector<double> loo_residuals(const DiscreteSeries& series, const BasisSystem& basis,
                                  double lambda, DiffOperator op) {
  const auto fit = smooth(std::span(&series, 1), basis, lambda, op);
  const auto& rep = fit.reports.front();
  const Eigen::VectorXd fitted =
      eval_curves(fit.data, series.times).row(0).transpose();
  std::vector<double> out(series.times.size());
  for (std::size_t j = 0; j < out.size(); ++j) {
    const double denom = 1.0 - rep.hat_diag[j];
    if (denom <= 1e-12) {
      throw Error(ErrorKind::DegenerateFold,
                  "hat diagonal equals 1 at time " + std::to_string(series.times[j]));
    }
    out[j] = (series.values[j] - fitted(static_cast<Eigen::Index>(j))) / denom;
  }
  return out;
}

CVResult select_lambda(std::span<const DiscreteSeries> series, const BasisSystem& basis,
                       std::span<const double> grid, int folds, CVRule rule, DiffOperator op) {
  if (grid.empty()) throw Error(ErrorKind::InvalidData, "lambda grid is empty");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!(grid[i] >= 0.0) || (i > 0 && !(grid[i] > grid[i - 1]))) {
      throw Error(ErrorKind::InvalidData, "lambda grid must be nonnegative and strictly increasing");
    }
  }
  if (series.empty()) throw Error(ErrorKind::NoData, "no series to cross-validate");
  for (const auto& s : series) validate_series(s, basis.domain());

  std::size_t total = 0;
  for (const auto& s : series) total += s.times.size();
  if (folds < 2 || static_cast<std::size_t>(folds) > total) {
    throw Error(ErrorKind::FoldSize, "need 2 <= folds <= " + std::to_string(total) + ", got " +
                                         std::to_string(folds));
  }

  // Per (time-grid group, fold): Gram pieces of the training rows.
  struct FoldPiece {
    Eigen::MatrixXd phi_train;
    Eigen::MatrixXd z_train;    // one column per series
    Eigen::MatrixXd phi_test;
    Eigen::MatrixXd z_test;
  };
  const auto groups = group_by_times(series);
  const int K = basis.nbasis();
  std::vector<std::vector<FoldPiece>> pieces;  // [group][fold]
  std::vector<double> fold_counts(folds, 0.0);
  for (const auto& [times, members] : groups) {
    const auto T = static_cast<Eigen::Index>(times.size());
    const Eigen::MatrixXd phi = eval_basis(basis, times, 0);
    Eigen::MatrixXd z(T, static_cast<Eigen::Index>(members.size()));
    for (std::size_t m = 0; m < members.size(); ++m) z.col(m) = as_vector(series[members[m]].values);

    std::vector<FoldPiece> per_fold(folds);
    for (int f = 0; f < folds; ++f) {
      const auto [b0, b1] = block_range(T, folds, f);
      FoldPiece& p = per_fold[f];
      p.phi_test = phi.middleRows(b0, b1 - b0);
      p.z_test = z.middleRows(b0, b1 - b0);
      p.phi_train.resize(T - (b1 - b0), K);
      p.phi_train << phi.topRows(b0), phi.bottomRows(T - b1);
      p.z_train.resize(T - (b1 - b0), z.cols());
      p.z_train << z.topRows(b0), z.bottomRows(T - b1);
      fold_counts[f] += static_cast<double>((b1 - b0) * static_cast<Eigen::Index>(members.size()));
    }
    pieces.push_back(std::move(per_fold));
  }
  for (int f = 0; f < folds; ++f) {
    if (fold_counts[f] < 2) {
      throw Error(ErrorKind::FoldSize, "fold " + std::to_string(f) + " holds out fewer than 2 points");
    }
  }

  const Eigen::MatrixXd root =
      grid.back() > 0.0 ? penalty_root(basis, op) : Eigen::MatrixXd::Zero(K, K);

  CVResult out;
  out.grid.assign(grid.begin(), grid.end());
  out.scores.assign(grid.size(), 0.0);
  out.ses.assign(grid.size(), 0.0);
  parallel_for(grid.size(), [&](std::size_t g) {
    const double lambda = grid[g];
    const Eigen::MatrixXd scaled_root =
        lambda > 0.0 ? Eigen::MatrixXd(std::sqrt(lambda) * root) : Eigen::MatrixXd::Zero(0, K);
    std::vector<double> fold_sse(folds, 0.0);
    for (const auto& per_fold : pieces) {
      for (int f = 0; f < folds; ++f) {
        const FoldPiece& p = per_fold[f];
        if (p.z_test.rows() == 0) continue;
        if (lambda == 0.0 && p.phi_train.rows() < K) {
          throw Error(ErrorKind::RankDeficient,
                      "fold " + std::to_string(f) + " leaves too few training points; " +
                          kLambdaHint);
        }
        const detail::PenalizedQR solver(p.phi_train, scaled_root, kLambdaHint);
        const Eigen::MatrixXd c = solver.solve(p.z_train);
        fold_sse[f] += (p.z_test - p.phi_test * c).squaredNorm();
      }
    }
    Eigen::VectorXd fold_mse(folds);
    for (int f = 0; f < folds; ++f) fold_mse(f) = fold_sse[f] / fold_counts[f];
    const double mean = fold_mse.mean();
    const double var = (fold_mse.array() - mean).square().sum() / (folds - 1);
    out.scores[g] = mean;
    out.ses[g] = std::sqrt(var / folds);
  });

  out.rule = rule;
  out.chosen_index = choose_lambda_index(out.grid, out.scores, out.ses, rule);
  out.chosen = out.grid[out.chosen_index];
  return out;
}

// --------------------------------------------------------------- evaluation

Eigen::MatrixXd eval_curves(const FunctionalDataset& ds, std::span<const double> times, int deriv) {
  return ds.coefs() * eval_basis(ds.basis(), times, deriv).transpose();
}

FunctionalDataset mean_curve(const FunctionalDataset& ds) {
  if (ds.size() < 1) throw Error(ErrorKind::NoData, "mean of an empty dataset");
  Eigen::MatrixXd c = ds.coefs().colwise().mean();
  return FunctionalDataset(ds.basis(), std::move(c), {"mean"});
}

std::vector<double> log10_grid(double lo_exp, double hi_exp, double step) {
  if (!(step > 0.0) || hi_exp < lo_exp) {
    throw Error(ErrorKind::InvalidData, "log10 grid needs step > 0 and hi >= lo");
  }
  std::vector<double> g;
  const int n = static_cast<int>(std::floor((hi_exp - lo_exp) / step + 1e-9));
  for (int i = 0; i <= n; ++i) g.push_back(std::pow(10.0, lo_exp + step * i));
  return g;
}

}  // namespace funflow
