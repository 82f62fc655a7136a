#include "funflow/flm_scalar.hpp"

#include "funflow/error.hpp"
#include "funflow/parallel.hpp"
#include "linalg.hpp"

#include <boost/math/distributions/normal.hpp>

#include <cmath>
#include <limits>
#include <numeric>

namespace funflow {

namespace {

constexpr const char* kHint =
    "use lambda > 0 or fewer coefficient basis functions than observations";

struct Design {
  Eigen::MatrixXd chi;   // n x (1 + sum K_beta)
  Eigen::MatrixXd root;  // sum K_beta x (1 + sum K_beta), zero intercept column
  std::vector<Eigen::MatrixXd> cross;
};

Design build_design(std::span<const FunctionalDataset> xs, std::span<const double> y,
                    std::span<const BasisSystem> beta_bases, DiffOperator op, bool need_root) {
  if (xs.empty()) throw Error(ErrorKind::Shape, "at least one functional covariate is required");
  if (xs.size() != beta_bases.size()) {
    throw Error(ErrorKind::Shape, "one coefficient basis is needed per covariate");
  }
  const Eigen::Index n = xs.front().size();
  if (static_cast<Eigen::Index>(y.size()) != n) {
    throw Error(ErrorKind::Shape, "response has " + std::to_string(y.size()) +
                                      " values but there are " + std::to_string(n) + " curves");
  }
  for (double v : y) {
    if (!std::isfinite(v)) throw Error(ErrorKind::InvalidData, "response has a non-finite value");
  }
  for (const auto& x : xs) {
    if (x.labels() != xs.front().labels()) {
      throw Error(ErrorKind::Alignment, "functional covariates must share labels in the same order");
    }
  }
  Eigen::Index p = 1;
  for (const auto& b : beta_bases) p += b.nbasis();

  Design d;
  d.chi.resize(n, p);
  d.chi.col(0).setOnes();
  d.root = Eigen::MatrixXd::Zero(p - 1, p);
  Eigen::Index off = 1;
  for (std::size_t j = 0; j < xs.size(); ++j) {
    const int k = beta_bases[j].nbasis();
    d.cross.push_back(gram_matrix(xs[j].basis(), beta_bases[j]));
    d.chi.middleCols(off, k) = xs[j].coefs() * d.cross.back();
    if (need_root) d.root.block(off - 1, off, k, k) = penalty_root(beta_bases[j], op);
    off += k;
  }
  return d;
}

struct Solved {
  Eigen::VectorXd coefs;
  Eigen::MatrixXd xtx_inv;
  std::vector<double> hat;
};

Solved solve_design(const Design& d, std::span<const double> y, double lambda, bool want_inv) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw Error(ErrorKind::InvalidData, "lambda must be finite and >= 0");
  }
  const Eigen::Index n = d.chi.rows(), p = d.chi.cols();
  if (lambda == 0.0 && p > n) {
    throw Error(ErrorKind::RankDeficient, std::to_string(p) + " coefficients for " +
                                              std::to_string(n) + " observations; " + kHint);
  }
  const Eigen::MatrixXd root =
      lambda > 0.0 ? Eigen::MatrixXd(std::sqrt(lambda) * d.root) : Eigen::MatrixXd::Zero(0, p);
  const detail::PenalizedQR qr(d.chi, root, kHint);
  Solved s;
  s.coefs = qr.solve(Eigen::Map<const Eigen::VectorXd>(y.data(), n));
  const Eigen::MatrixXd w = qr.whiten(d.chi.transpose());
  s.hat.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) s.hat[i] = w.col(i).squaredNorm();
  if (want_inv) s.xtx_inv = qr.inverse_normal();
  return s;
}

Eigen::VectorXd linear_predictor(const ScalarFLMModel& m,
                                 std::span<const FunctionalDataset> xs) {
  if (xs.size() != m.terms.size()) {
    throw Error(ErrorKind::Shape, "model has " + std::to_string(m.terms.size()) +
                                      " covariates but " + std::to_string(xs.size()) +
                                      " were supplied");
  }
  Eigen::VectorXd out = Eigen::VectorXd::Constant(xs.front().size(), m.intercept);
  for (std::size_t j = 0; j < xs.size(); ++j) {
    const auto& t = m.terms[j];
    if (!(xs[j].basis() == t.x_basis)) {
      throw Error(ErrorKind::BasisMismatch, "new curves use a different basis than the training curves");
    }
    if (xs[j].size() != xs.front().size()) {
      throw Error(ErrorKind::Shape, "covariates have different numbers of curves");
    }
    out += xs[j].coefs() * (t.j_phi_theta * t.beta_coefs);
  }
  return out;
}

}  // namespace

ScalarFit fit_flms(const FunctionalDataset& x, std::span<const double> y,
                   const BasisSystem& beta_basis, double lambda, DiffOperator op) {
  return fit_flms(std::span(&x, 1), y, std::span(&beta_basis, 1), lambda, op);
}

ScalarFit fit_flms(std::span<const FunctionalDataset> xs, std::span<const double> y,
                   std::span<const BasisSystem> beta_bases, double lambda, DiffOperator op) {
  const Design d = build_design(xs, y, beta_bases, op, lambda > 0.0);
  const Solved s = solve_design(d, y, lambda, true);

  ScalarFit out;
  auto& m = out.model;
  m.intercept = s.coefs(0);
  m.lambda = lambda;
  m.op = op;
  m.xtx_inv = s.xtx_inv;
  Eigen::Index off = 1;
  for (std::size_t j = 0; j < xs.size(); ++j) {
    const int k = beta_bases[j].nbasis();
    m.terms.push_back({xs[j].basis(), beta_bases[j], s.coefs.segment(off, k), d.cross[j]});
    off += k;
  }

  auto& diag = out.diagnostics;
  const Eigen::VectorXd fitted = linear_predictor(m, xs);
  const auto n = y.size();
  diag.fitted.assign(fitted.data(), fitted.data() + fitted.size());
  diag.residuals.resize(n);
  double sse = 0.0, loo = 0.0, sum_res = 0.0;
  bool saturated = false;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = y[i] - diag.fitted[i];
    diag.residuals[i] = r;
    sse += r * r;
    sum_res += r;
    const double denom = 1.0 - s.hat[i];
    if (denom <= 1e-10) saturated = true;
    else loo += (r / denom) * (r / denom);
  }
  const double nn = static_cast<double>(n);
  diag.effective_df = std::accumulate(s.hat.begin(), s.hat.end(), 0.0);
  const double resid_df = nn - diag.effective_df;
  m.sigma2 = resid_df > 1e-8 ? sse / resid_df : 0.0;
  diag.rmse = std::sqrt(sse / nn);
  diag.bias = -sum_res / nn;
  diag.loocv = saturated ? std::numeric_limits<double>::infinity() : loo / nn;
  const double mean = std::accumulate(y.begin(), y.end(), 0.0) / nn;
  double sst = 0.0;
  for (double v : y) sst += (v - mean) * (v - mean);
  diag.r2 = sst > 0.0 ? 1.0 - sse / sst : std::numeric_limits<double>::quiet_NaN();
  return out;
}

std::vector<double> predict_flms(const ScalarFLMModel& model, const FunctionalDataset& xnew) {
  return predict_flms(model, std::span(&xnew, 1));
}

std::vector<double> predict_flms(const ScalarFLMModel& model,
                                 std::span<const FunctionalDataset> xnew) {
  const Eigen::VectorXd v = linear_predictor(model, xnew);
  return {v.data(), v.data() + v.size()};
}

ConfidenceBand beta_confidence_band(const ScalarFLMModel& model, std::span<const double> times,
                                    double level, std::size_t term) {
  if (!(level > 0.0 && level < 1.0)) {
    throw Error(ErrorKind::InvalidLevel, "confidence level must lie in (0, 1)");
  }
  if (term >= model.terms.size()) throw Error(ErrorKind::Shape, "no such covariate term");
  Eigen::Index off = 1;
  for (std::size_t j = 0; j < term; ++j) off += model.terms[j].beta_basis.nbasis();
  const auto& t = model.terms[term];
  const int k = t.beta_basis.nbasis();

  const double z = boost::math::quantile(boost::math::normal(), 0.5 * (1.0 + level));
  const Eigen::MatrixXd theta = eval_basis(t.beta_basis, times);
  const Eigen::VectorXd center = theta * t.beta_coefs;
  const Eigen::MatrixXd cov = model.xtx_inv.block(off, off, k, k);
  const Eigen::VectorXd var = ((theta * cov).array() * theta.array()).rowwise().sum();

  ConfidenceBand band;
  for (Eigen::Index j = 0; j < center.size(); ++j) {
    const double half = z * std::sqrt(std::max(0.0, model.sigma2 * var(j)));
    band.center.push_back(center(j));
    band.lower.push_back(center(j) - half);
    band.upper.push_back(center(j) + half);
  }
  return band;
}

namespace {

std::vector<double> loo_from_design(const Design& d, const FunctionalDataset& x,
                                    std::span<const double> y, double lambda) {
  const Solved s = solve_design(d, y, lambda, false);
  const Eigen::VectorXd fitted = d.chi * s.coefs;
  std::vector<double> out(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double denom = 1.0 - s.hat[i];
    if (denom <= 1e-10) {
      throw Error(ErrorKind::DegenerateFold,
                  "observation '" + x.labels()[i] + "' has leverage 1 at lambda " +
                      detail::sci(lambda) + "; its leave-one-out prediction is undefined");
    }
    out[i] = (y[i] - fitted(static_cast<Eigen::Index>(i))) / denom;
  }
  return out;
}

}  // namespace

std::vector<double> loo_residuals_flms(const FunctionalDataset& x, std::span<const double> y,
                                       const BasisSystem& beta_basis, double lambda,
                                       DiffOperator op) {
  const Design d = build_design(std::span(&x, 1), y, std::span(&beta_basis, 1), op, lambda > 0.0);
  return loo_from_design(d, x, y, lambda);
}

CVResult loocv_flms(const FunctionalDataset& x, std::span<const double> y,
                    const BasisSystem& beta_basis, std::span<const double> grid,
                    DiffOperator op, CVRule rule) {
  if (grid.empty()) throw Error(ErrorKind::InvalidData, "lambda grid is empty");
  for (std::size_t g = 0; g < grid.size(); ++g) {
    if (!(grid[g] >= 0.0) || (g > 0 && !(grid[g] > grid[g - 1]))) {
      throw Error(ErrorKind::InvalidData, "lambda grid must be strictly increasing and >= 0");
    }
  }
  const Design d = build_design(std::span(&x, 1), y, std::span(&beta_basis, 1), op, grid.back() > 0.0);
  CVResult out;
  out.grid.assign(grid.begin(), grid.end());
  out.scores.resize(grid.size());
  out.ses.resize(grid.size());
  parallel_for(grid.size(), [&](std::size_t g) {
    const auto r = loo_from_design(d, x, y, grid[g]);
    const double n = static_cast<double>(r.size());
    double mean = 0.0;
    for (double v : r) mean += v * v;
    mean /= n;
    double ss = 0.0;
    for (double v : r) ss += (v * v - mean) * (v * v - mean);
    out.scores[g] = mean;
    out.ses[g] = r.size() > 1 ? std::sqrt(ss / (n - 1.0)) / std::sqrt(n) : 0.0;
  });
  out.rule = grid.size() == 1 ? CVRule::Fixed : rule;
  out.chosen_index = choose_lambda_index(grid, out.scores, out.ses, out.rule);
  out.chosen = grid[out.chosen_index];
  return out;
}

}  // namespace funflow
