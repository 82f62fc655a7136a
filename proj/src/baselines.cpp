#include "funflow/baselines.hpp"

#include "funflow/error.hpp"
#include "funflow/parallel.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

namespace funflow {

namespace {

std::string fmt(double t) {
  std::ostringstream os;
  os << t;
  return os.str();
}

// Index of time `t` in a strictly increasing grid, or -1.
std::ptrdiff_t find_time(const std::vector<double>& times, double t) {
  const auto it = std::lower_bound(times.begin(), times.end(), t - 1e-9);
  if (it == times.end() || std::abs(*it - t) > 1e-9) return -1;
  return it - times.begin();
}

double lagged_value(const DiscreteSeries& s, double t, int k) {
  const auto idx = find_time(s.times, t - k);
  if (idx < 0) {
    throw Error(ErrorKind::History, "series '" + s.label + "' has no value at t = " + fmt(t - k) +
                                        ", needed as lag " + std::to_string(k) + " for t = " + fmt(t));
  }
  return s.values[static_cast<std::size_t>(idx)];
}

}  // namespace

// ------------------------------------------------ aggregate linear model

std::vector<double> aggregate_sums(std::span<const DiscreteSeries> x_daily) {
  std::vector<double> out;
  out.reserve(x_daily.size());
  for (const auto& s : x_daily) out.push_back(std::accumulate(s.values.begin(), s.values.end(), 0.0));
  return out;
}

AggLinearModel fit_agg_lm(std::span<const DiscreteSeries> x_daily, std::span<const double> y) {
  if (x_daily.size() != y.size()) {
    throw Error(ErrorKind::Shape, std::to_string(y.size()) + " responses for " +
                                      std::to_string(x_daily.size()) + " series");
  }
  const auto s = aggregate_sums(x_daily);
  const auto n = static_cast<double>(s.size());
  if (s.size() < 2) throw Error(ErrorKind::InsufficientData, "need at least 2 observations");
  const double mx = std::accumulate(s.begin(), s.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    sxx += (s[i] - mx) * (s[i] - mx);
    sxy += (s[i] - mx) * (y[i] - my);
  }
  if (!(sxx > 1e-12 * std::max(1.0, mx * mx) * n)) {
    throw Error(ErrorKind::DegenerateRegressor, "the aggregated covariate has zero variance");
  }
  AggLinearModel m;
  m.slope = sxy / sxx;
  m.intercept = my - m.slope * mx;
  double sse = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double r = y[i] - m.intercept - m.slope * s[i];
    sse += r * r;
  }
  const double df = n - 2.0;
  if (df <= 0.0 || m.slope == 0.0) {
    // No residual degrees of freedom, or no slope at all: no evidence against zero.
    m.slope_se = 0.0;
    m.p_value = 1.0;
    return m;
  }
  m.slope_se = std::sqrt(sse / df / sxx);
  if (m.slope_se == 0.0) {
    m.p_value = 0.0;
  } else {
    const boost::math::students_t dist(df);
    m.p_value = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(m.slope / m.slope_se))));
  }
  return m;
}

std::vector<double> predict_agg_lm(const AggLinearModel& model, std::span<const DiscreteSeries> x_daily) {
  auto s = aggregate_sums(x_daily);
  for (auto& v : s) v = model.intercept + model.slope * v;
  return s;
}

// ------------------------------------------------------------ lag features

Eigen::MatrixXd make_lag_matrix(const DiscreteSeries& x, int lags, std::span<const double> horizon_times) {
  if (lags < 1) throw Error(ErrorKind::InvalidData, "lags must be >= 1");
  Eigen::MatrixXd out(static_cast<Eigen::Index>(horizon_times.size()), lags);
  for (std::size_t r = 0; r < horizon_times.size(); ++r)
    for (int k = 1; k <= lags; ++k) out(static_cast<Eigen::Index>(r), k - 1) = lagged_value(x, horizon_times[r], k);
  return out;
}

Eigen::MatrixXd make_joint_lag_matrix(const DiscreteSeries& x, int x_lags, const DiscreteSeries& y,
                                      int y_lags, std::span<const double> horizon_times) {
  if (y_lags < 0) throw Error(ErrorKind::InvalidData, "response lags must be >= 0");
  const Eigen::MatrixXd a = make_lag_matrix(x, x_lags, horizon_times);
  if (y_lags == 0) return a;
  Eigen::MatrixXd out(a.rows(), x_lags + y_lags);
  out << a, make_lag_matrix(y, y_lags, horizon_times);
  return out;
}

// ----------------------------------------------------------- lagged network

namespace {

Eigen::MatrixXd standardize(const LaggedNetModel& m, const Eigen::MatrixXd& features) {
  if (features.cols() != m.lags) {
    throw Error(ErrorKind::Shape, "feature width " + std::to_string(features.cols()) +
                                      " does not match the network's " + std::to_string(m.lags) + " inputs");
  }
  return (features.rowwise() - m.input_mean.transpose()).array().rowwise() /
         m.input_scale.transpose().array();
}

struct Forward {
  Eigen::MatrixXd hidden;  // n x h, post-activation
  Eigen::VectorXd output;  // n
};

Forward forward(const LaggedNetModel& m, const Eigen::MatrixXd& z) {
  Forward f;
  f.hidden = ((z * m.w1.transpose()).rowwise() + m.b1.transpose()).array().tanh();
  f.output = (f.hidden * m.w2.transpose()).array() + m.b2(0);
  return f;
}

double mse(const Eigen::VectorXd& pred, std::span<const double> targets) {
  const Eigen::Map<const Eigen::VectorXd> y(targets.data(), static_cast<Eigen::Index>(targets.size()));
  return (pred - y).squaredNorm() / static_cast<double>(targets.size());
}

Eigen::VectorXd gradient_std(const LaggedNetModel& m, const Eigen::MatrixXd& z, std::span<const double> targets) {
  const Forward f = forward(m, z);
  const auto n = static_cast<double>(targets.size());
  const Eigen::Map<const Eigen::VectorXd> y(targets.data(), static_cast<Eigen::Index>(targets.size()));
  const Eigen::VectorXd r = (2.0 / n) * (f.output - y);
  const Eigen::MatrixXd dh = (r * m.w2).array() * (1.0 - f.hidden.array().square());
  const Eigen::MatrixXd gw1 = dh.transpose() * z;
  const Eigen::VectorXd gb1 = dh.colwise().sum().transpose();
  const Eigen::RowVectorXd gw2 = r.transpose() * f.hidden;
  Eigen::VectorXd g(gw1.size() + gb1.size() + gw2.size() + 1);
  g << Eigen::Map<const Eigen::VectorXd>(gw1.data(), gw1.size()), gb1, gw2.transpose(), r.sum();
  return g;
}

void check_training_data(const Eigen::MatrixXd& features, std::span<const double> targets) {
  if (features.rows() != static_cast<Eigen::Index>(targets.size())) {
    throw Error(ErrorKind::Shape, "feature rows and targets differ in count");
  }
  if (targets.size() < 10) throw Error(ErrorKind::InsufficientData, "need at least 10 training rows");
  if (!features.allFinite()) throw Error(ErrorKind::InvalidData, "features contain non-finite values");
  for (double v : targets)
    if (!std::isfinite(v)) throw Error(ErrorKind::InvalidData, "targets contain non-finite values");
}

Eigen::Index training_rows(Eigen::Index n, double validation_fraction) {
  const auto nval = static_cast<Eigen::Index>(std::floor(validation_fraction * static_cast<double>(n)));
  return nval >= 1 && n - nval >= 2 ? n - nval : n;
}

}  // namespace

Eigen::VectorXd pack_weights(const LaggedNetModel& m) {
  Eigen::VectorXd p(m.w1.size() + m.b1.size() + m.w2.size() + 1);
  p << Eigen::Map<const Eigen::VectorXd>(m.w1.data(), m.w1.size()), m.b1,
      Eigen::Map<const Eigen::VectorXd>(m.w2.data(), m.w2.size()), m.b2(0);
  return p;
}

void unpack_weights(LaggedNetModel& m, const Eigen::VectorXd& p) {
  if (p.size() != m.w1.size() + m.b1.size() + m.w2.size() + 1) {
    throw Error(ErrorKind::Shape, "packed weight vector has the wrong length");
  }
  Eigen::Index o = 0;
  m.w1 = Eigen::Map<const Eigen::MatrixXd>(p.data(), m.hidden, m.lags);
  o += m.w1.size();
  m.b1 = p.segment(o, m.hidden);
  o += m.hidden;
  m.w2 = p.segment(o, m.hidden).transpose();
  o += m.hidden;
  m.b2(0) = p(o);
}

LaggedNetModel init_lagged_net(const Eigen::MatrixXd& features, std::span<const double> targets,
                               const NetTrainConfig& config) {
  check_training_data(features, targets);
  if (config.hidden < 1) throw Error(ErrorKind::InvalidData, "hidden layer needs at least one node");
  if (!(config.step_size > 0.0) || !(config.momentum >= 0.0 && config.momentum < 1.0) ||
      config.max_epochs < 1 || config.patience < 1 ||
      !(config.validation_fraction >= 0.0 && config.validation_fraction < 1.0)) {
    throw Error(ErrorKind::InvalidData,
                "network settings need step > 0, momentum in [0, 1), epochs and patience >= 1, "
                "validation fraction in [0, 1)");
  }
  const int p = static_cast<int>(features.cols());
  if (p < 1) throw Error(ErrorKind::Shape, "need at least one feature column");
  const Eigen::Index ntr = training_rows(features.rows(), config.validation_fraction);
  const Eigen::MatrixXd train = features.topRows(ntr);

  LaggedNetModel m;
  m.lags = p;
  m.hidden = config.hidden;
  m.seed = config.seed;
  m.train_config = config;
  m.input_mean = train.colwise().mean().transpose();
  m.input_scale.resize(p);
  for (int j = 0; j < p; ++j) {
    const double sd = std::sqrt((train.col(j).array() - m.input_mean(j)).square().sum() / static_cast<double>(ntr));
    m.input_scale(j) = sd > 0.0 ? sd : 1.0;
  }
  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> nd;
  m.w1.resize(m.hidden, p);
  for (int i = 0; i < m.hidden; ++i)
    for (int j = 0; j < p; ++j) m.w1(i, j) = nd(rng) / std::sqrt(static_cast<double>(p));
  m.b1 = Eigen::VectorXd::Zero(m.hidden);
  m.w2.resize(1, m.hidden);
  for (int i = 0; i < m.hidden; ++i)
    m.w2(0, i) = config.zero_output_init ? 0.0 : nd(rng) / std::sqrt(static_cast<double>(m.hidden));
  m.b2 = Eigen::VectorXd::Constant(1, std::accumulate(targets.begin(), targets.begin() + ntr, 0.0) /
                                          static_cast<double>(ntr));
  return m;
}

LaggedNetModel fit_lagged_net(const Eigen::MatrixXd& features, std::span<const double> targets,
                              const NetTrainConfig& config) {
  LaggedNetModel m = init_lagged_net(features, targets, config);
  const Eigen::Index n = features.rows();
  const Eigen::Index ntr = training_rows(n, config.validation_fraction);
  const Eigen::MatrixXd z = standardize(m, features);
  const Eigen::MatrixXd ztr = z.topRows(ntr);
  const auto ytr = targets.first(static_cast<std::size_t>(ntr));
  const bool validate = ntr < n;
  const Eigen::MatrixXd zval = z.bottomRows(n - ntr);
  const auto yval = targets.subspan(static_cast<std::size_t>(ntr));

  Eigen::VectorXd w = pack_weights(m);
  Eigen::VectorXd velocity = Eigen::VectorXd::Zero(w.size());
  Eigen::VectorXd best = w;
  double best_val = validate ? mse(forward(m, zval).output, yval) : 0.0;
  int since_best = 0;
  int epoch = 0;
  for (; epoch < config.max_epochs; ++epoch) {
    velocity = config.momentum * velocity - config.step_size * gradient_std(m, ztr, ytr);
    w += velocity;
    unpack_weights(m, w);
    const double loss = mse(forward(m, ztr).output, ytr);
    if (!std::isfinite(loss) || !w.allFinite()) {
      throw Error(ErrorKind::Divergence, "training loss became non-finite at epoch " + std::to_string(epoch + 1) +
                                             "; try a smaller step size");
    }
    if (!validate) continue;
    const double val = mse(forward(m, zval).output, yval);
    if (val < best_val) {
      best_val = val;
      best = w;
      since_best = 0;
    } else if (++since_best >= config.patience) {
      ++epoch;
      break;
    }
  }
  if (validate) unpack_weights(m, best);
  m.epochs_run = epoch;
  m.train_fitted = predict_lagged_net(m, features);
  return m;
}

std::vector<double> predict_lagged_net(const LaggedNetModel& model, const Eigen::MatrixXd& features) {
  const Eigen::VectorXd out = forward(model, standardize(model, features)).output;
  return {out.data(), out.data() + out.size()};
}

double net_loss(const LaggedNetModel& model, const Eigen::MatrixXd& features, std::span<const double> targets) {
  return mse(forward(model, standardize(model, features)).output, targets);
}

Eigen::VectorXd net_gradient(const LaggedNetModel& model, const Eigen::MatrixXd& features,
                             std::span<const double> targets) {
  return gradient_std(model, standardize(model, features), targets);
}

HiddenSearch select_hidden_size(std::span<const Eigen::MatrixXd> group_features,
                                std::span<const std::vector<double>> group_targets,
                                std::span<const int> sizes, const NetTrainConfig& config) {
  const std::size_t ng = group_features.size();
  if (ng < 2 || group_targets.size() != ng) {
    throw Error(ErrorKind::InsufficientData, "hidden-size search needs at least 2 aligned groups");
  }
  if (sizes.empty()) throw Error(ErrorKind::InvalidData, "no hidden sizes to search");
  HiddenSearch out;
  out.sizes.assign(sizes.begin(), sizes.end());
  std::sort(out.sizes.begin(), out.sizes.end());
  std::vector<double> sse(out.sizes.size() * ng, 0.0);
  std::vector<double> count(ng, 0.0);
  for (std::size_t g = 0; g < ng; ++g) count[g] = static_cast<double>(group_targets[g].size());

  parallel_for(sse.size(), [&](std::size_t job) {
    const std::size_t s = job / ng, g = job % ng;
    Eigen::Index rows = 0;
    for (std::size_t k = 0; k < ng; ++k)
      if (k != g) rows += group_features[k].rows();
    Eigen::MatrixXd f(rows, group_features[g].cols());
    std::vector<double> t;
    Eigen::Index r = 0;
    for (std::size_t k = 0; k < ng; ++k) {
      if (k == g) continue;
      f.middleRows(r, group_features[k].rows()) = group_features[k];
      r += group_features[k].rows();
      t.insert(t.end(), group_targets[k].begin(), group_targets[k].end());
    }
    NetTrainConfig c = config;
    c.hidden = out.sizes[s];
    const auto model = fit_lagged_net(f, t, c);
    const auto pred = predict_lagged_net(model, group_features[g]);
    double e = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) e += (pred[i] - group_targets[g][i]) * (pred[i] - group_targets[g][i]);
    sse[job] = e;
  });
  const double total = std::accumulate(count.begin(), count.end(), 0.0);
  std::size_t best = 0;
  for (std::size_t s = 0; s < out.sizes.size(); ++s) {
    double e = 0.0;
    for (std::size_t g = 0; g < ng; ++g) e += sse[s * ng + g];
    out.scores.push_back(e / total);
    if (out.scores[s] < out.scores[best]) best = s;
  }
  out.chosen = out.sizes[best];
  return out;
}

std::vector<double> forecast_recursive(const LaggedNetModel& model, const DiscreteSeries& x, int x_lags,
                                       const DiscreteSeries& y_history, int y_lags,
                                       std::span<const double> horizon_times) {
  if (x_lags + y_lags != model.lags) {
    throw Error(ErrorKind::Shape, "lag counts do not match the network's input width");
  }
  if (horizon_times.empty()) return {};
  const double origin = horizon_times.front();
  std::map<double, double> forecasts;
  std::vector<double> out;
  Eigen::MatrixXd row(1, model.lags);
  for (double t : horizon_times) {
    for (int k = 1; k <= x_lags; ++k) row(0, k - 1) = lagged_value(x, t, k);
    for (int k = 1; k <= y_lags; ++k) {
      const double s = t - k;
      if (s < origin - 1e-9) {
        row(0, x_lags + k - 1) = lagged_value(y_history, t, k);
        continue;
      }
      const auto it = forecasts.lower_bound(s - 1e-9);
      if (it == forecasts.end() || std::abs(it->first - s) > 1e-9) {
        throw Error(ErrorKind::History, "no forecast available at t = " + fmt(s) + " for lag " + std::to_string(k));
      }
      row(0, x_lags + k - 1) = it->second;
    }
    const double v = predict_lagged_net(model, row)[0];
    forecasts[t] = v;
    out.push_back(v);
  }
  return out;
}

}  // namespace funflow

namespace funflow {

LoyoNetResult loyo_lagged_net(std::span<const DiscreteSeries> x, int x_lags,
                              std::span<const DiscreteSeries> y, int y_lags,
                              std::span<const double> horizon_times, const NetTrainConfig& config) {
  const std::size_t n = x.size();
  if (y.size() != n) throw Error(ErrorKind::Alignment, "covariate and response series counts differ");
  if (n < 2) throw Error(ErrorKind::InsufficientData, "leave-one-out needs at least 2 series");
  if (horizon_times.empty()) throw Error(ErrorKind::InvalidData, "no horizon times");
  const Eigen::Index m = static_cast<Eigen::Index>(horizon_times.size());

  std::vector<Eigen::MatrixXd> feats(n);
  std::vector<std::vector<double>> targets(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (x[i].label != y[i].label) {
      throw Error(ErrorKind::Alignment, "label mismatch: '" + x[i].label + "' vs '" + y[i].label + "'");
    }
    feats[i] = make_joint_lag_matrix(x[i], x_lags, y[i], y_lags, horizon_times);
    for (double t : horizon_times) targets[i].push_back(lagged_value(y[i], t + 1, 1));
  }

  LoyoNetResult out;
  out.horizon_times.assign(horizon_times.begin(), horizon_times.end());
  out.forecasts.assign(n, {});
  parallel_for(n, [&](std::size_t held) {
    Eigen::MatrixXd f((static_cast<Eigen::Index>(n) - 1) * m, x_lags + y_lags);
    std::vector<double> t;
    Eigen::Index r = 0;
    for (std::size_t k = 0; k < n; ++k) {
      if (k == held) continue;
      f.middleRows(r, m) = feats[k];
      r += m;
      t.insert(t.end(), targets[k].begin(), targets[k].end());
    }
    const auto model = fit_lagged_net(f, t, config);
    out.forecasts[held] = y_lags > 0
                              ? forecast_recursive(model, x[held], x_lags, y[held], y_lags, horizon_times)
                              : predict_lagged_net(model, feats[held]);
  });

  out.per_time_error.assign(horizon_times.size(), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    out.labels.push_back(x[i].label);
    double e = 0.0;
    for (std::size_t j = 0; j < horizon_times.size(); ++j) {
      const double d = out.forecasts[i][j] - targets[i][j];
      e += d * d;
      out.per_time_error[j] += d * d / static_cast<double>(n);
    }
    out.per_label_error.push_back(e / static_cast<double>(m));
    out.score += e;
  }
  out.score /= static_cast<double>(n * horizon_times.size());
  return out;
}

}  // namespace funflow
