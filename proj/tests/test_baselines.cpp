#include <doctest.h>

#include "funflow/baselines.hpp"
#include "funflow/flm_scalar.hpp"
#include "funflow/metrics.hpp"
#include "support.hpp"

#include <cmath>
#include <random>

using namespace funflow;
using namespace funflow::testing;

namespace {

std::vector<DiscreteSeries> series_with_sums(std::span<const double> sums) {
  std::vector<DiscreteSeries> out;
  for (std::size_t i = 0; i < sums.size(); ++i)
    out.push_back({"y" + std::to_string(i), {0.0, 1.0}, {sums[i] / 2, sums[i] / 2}});
  return out;
}

}  // namespace

TEST_CASE("fit_agg_lm examples") {
  const std::vector<double> sums{1, 2}, y{1, 3};
  const auto m = fit_agg_lm(series_with_sums(sums), y);
  CHECK(m.slope == doctest::Approx(2.0));
  CHECK(m.intercept == doctest::Approx(-1.0));

  const std::vector<double> s3{1, 4, 2, 8}, flat(4, 2.5);
  const auto c = fit_agg_lm(series_with_sums(s3), flat);
  CHECK(c.slope == 0.0);
  CHECK(c.p_value == 1.0);

  const std::vector<double> same{3, 3, 3};
  CHECK(kind_of([&] { fit_agg_lm(series_with_sums(same), std::vector<double>{1, 2, 3}); }) ==
        ErrorKind::DegenerateRegressor);
  CHECK(kind_of([&] { fit_agg_lm(series_with_sums(same), std::vector<double>{1, 2}); }) == ErrorKind::Shape);
}

TEST_CASE("fit_agg_lm recovers a small slope") {
  std::mt19937_64 rng(61);
  std::gamma_distribution<double> rain(0.6, 8.0);
  std::normal_distribution<double> noise(0.0, 0.02);
  std::vector<DiscreteSeries> x;
  std::vector<double> y;
  for (int i = 0; i < 200; ++i) {
    DiscreteSeries s{"y" + std::to_string(i), {}, {}};
    for (int d = 0; d < 154; ++d) {
      s.times.push_back(d);
      s.values.push_back(rain(rng));
    }
    double sum = 0.0;
    for (double v : s.values) sum += v;
    y.push_back(1.0 + 0.004 * sum + noise(rng));
    x.push_back(std::move(s));
  }
  const auto m = fit_agg_lm(x, y);
  CHECK(std::abs(m.slope - 0.004) < 0.1 * 0.004);
  CHECK(m.p_value < 1e-4);
  CHECK(m.slope_se > 0.0);
  // t statistic and p-value agree with a hand computation
  const auto sums = aggregate_sums(x);
  const auto fitted = predict_agg_lm(m, x);
  double sse = 0.0, mx = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < 200; ++i) sse += (y[i] - fitted[i]) * (y[i] - fitted[i]);
  for (double s : sums) mx += s / 200;
  for (double s : sums) sxx += (s - mx) * (s - mx);
  CHECK(m.slope_se == doctest::Approx(std::sqrt(sse / 198 / sxx)));
}

TEST_CASE("aggregate regression equals the functional model on step embeddings") {
  // One step per day: the curve equals the daily value on [d, d+1), so its
  // integral is the daily sum. A constant beta then sees only that sum.
  std::mt19937_64 rng(62);
  const int days = 20, n = 30;
  const Interval dom(0, days);
  const auto steps = make_bspline(dom, days, 1);
  const auto x = random_curves(rng, steps, n);
  std::vector<DiscreteSeries> daily;
  for (int i = 0; i < n; ++i) {
    DiscreteSeries s{x.labels()[i], {}, {}};
    for (int d = 0; d < days; ++d) {
      s.times.push_back(d);
      s.values.push_back(x.coefs()(i, d));
    }
    daily.push_back(s);
  }
  const auto y = to_std(oracle::random_vector(rng, n));
  const auto lm = fit_agg_lm(daily, y);
  const auto flm = fit_flms(x, y, make_bspline(dom, 1, 1), 0.0);
  const auto pred = predict_agg_lm(lm, daily);
  for (int i = 0; i < n; ++i) CHECK(std::abs(pred[i] - flm.diagnostics.fitted[i]) < 1e-8);
}

TEST_CASE("make_lag_matrix") {
  const DiscreteSeries s{"a", {0, 1, 2, 3, 4}, {10, 20, 30, 40, 50}};
  const auto m = make_lag_matrix(s, 3, std::vector<double>{3, 4});
  CHECK(m.rows() == 2);
  CHECK(m.row(0) == Eigen::RowVector3d(30, 20, 10));
  CHECK(m.row(1) == Eigen::RowVector3d(40, 30, 20));
  const auto one = make_lag_matrix(s, 1, std::vector<double>{1, 2, 3});
  CHECK(one.cols() == 1);
  CHECK(one.col(0) == Eigen::Vector3d(10, 20, 30));
  CHECK(kind_of([&] { make_lag_matrix(s, 3, std::vector<double>{1}); }) == ErrorKind::History);
  try {
    make_lag_matrix(s, 3, std::vector<double>{1});
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("t = 1") != std::string::npos);
  }
  const DiscreteSeries y{"b", {0, 1, 2, 3, 4}, {1, 2, 3, 4, 5}};
  const auto j = make_joint_lag_matrix(s, 2, y, 1, std::vector<double>{4});
  CHECK(j.row(0) == Eigen::RowVector3d(40, 30, 4));
}

TEST_CASE("network gradient matches central differences") {
  std::mt19937_64 rng(63);
  const Eigen::MatrixXd f = oracle::random_matrix(rng, 40, 3, 2.0);
  const auto t = to_std(oracle::random_vector(rng, 40));
  NetTrainConfig c;
  c.seed = 9;
  auto m = init_lagged_net(f, t, c);
  unpack_weights(m, oracle::random_vector(rng, static_cast<int>(pack_weights(m).size())));
  const Eigen::VectorXd g = net_gradient(m, f, t);
  const Eigen::VectorXd w = pack_weights(m);
  const double h = 1e-5;
  for (Eigen::Index k = 0; k < w.size(); ++k) {
    auto a = m, b = m;
    Eigen::VectorXd wp = w, wm = w;
    wp(k) += h;
    wm(k) -= h;
    unpack_weights(a, wp);
    unpack_weights(b, wm);
    const double fd = (net_loss(a, f, t) - net_loss(b, f, t)) / (2 * h);
    CHECK(std::abs(fd - g(k)) <= 1e-4 * std::max(std::abs(g(k)), 1e-3));
  }
}

TEST_CASE("network training") {
  std::mt19937_64 rng(64);

  SUBCASE("zero targets with a zero output layer stay at zero") {
    const Eigen::MatrixXd f = oracle::random_matrix(rng, 30, 3);
    const std::vector<double> t(30, 0.0);
    NetTrainConfig c;
    c.zero_output_init = true;
    c.max_epochs = 50;
    const auto m = fit_lagged_net(f, t, c);
    for (double v : predict_lagged_net(m, f)) CHECK(v == 0.0);
  }
  SUBCASE("linear target is learned") {
    const Eigen::MatrixXd f = oracle::random_matrix(rng, 600, 2);
    std::vector<double> t;
    for (int i = 0; i < 600; ++i) t.push_back(2 * f(i, 0) - f(i, 1));
    NetTrainConfig c;
    c.hidden = 5;
    c.max_epochs = 5000;
    c.step_size = 0.1;
    const auto m = fit_lagged_net(f.topRows(500), std::span(t).first(500), c);
    const auto p = predict_lagged_net(m, f.bottomRows(100));
    const std::vector<double> test(t.begin() + 500, t.end());
    double mean = 0.0, var = 0.0;
    for (double v : t) mean += v / 600;
    for (double v : t) var += (v - mean) * (v - mean) / 599;
    const double err = rmse(test, p);
    MESSAGE("test rmse " << err << " vs sd " << std::sqrt(var));
    CHECK(err < 0.05 * std::sqrt(var));
  }
  SUBCASE("bitwise reproducible and stored fitted values") {
    const Eigen::MatrixXd f = oracle::random_matrix(rng, 80, 3);
    const auto t = to_std(oracle::random_vector(rng, 80));
    NetTrainConfig c;
    c.max_epochs = 300;
    c.seed = 5;
    const auto a = fit_lagged_net(f, t, c), b = fit_lagged_net(f, t, c);
    CHECK(pack_weights(a) == pack_weights(b));
    CHECK(predict_lagged_net(a, f) == a.train_fitted);
    c.seed = 6;
    CHECK(pack_weights(fit_lagged_net(f, t, c)) != pack_weights(a));
  }
  SUBCASE("affine rescaling of features does not change predictions") {
    const Eigen::MatrixXd f = oracle::random_matrix(rng, 100, 3);
    std::vector<double> t;
    for (int i = 0; i < 100; ++i) t.push_back(std::sin(f(i, 0)) + 0.5 * f(i, 2));
    Eigen::MatrixXd g = f;
    g.col(0) = 1000.0 * f.col(0).array() + 17.0;
    g.col(1) = 0.01 * f.col(1).array() - 3.0;
    NetTrainConfig c;
    c.max_epochs = 500;
    const auto a = predict_lagged_net(fit_lagged_net(f, t, c), f);
    const auto b = predict_lagged_net(fit_lagged_net(g, t, c), g);
    for (int i = 0; i < 100; ++i) CHECK(std::abs(a[i] - b[i]) < 1e-8);
  }
  SUBCASE("standardization and constant output") {
    const Eigen::MatrixXd f = oracle::random_matrix(rng, 30, 3);
    const auto t = to_std(oracle::random_vector(rng, 30));
    auto m = init_lagged_net(f, t, {});
    m.w1.setZero();
    m.w2.setZero();
    m.b2(0) = 1.5;
    for (double v : predict_lagged_net(m, f)) CHECK(v == 1.5);
    // a feature row at the training mean enters the hidden layer as zeros
    auto n = init_lagged_net(f, t, {});
    const Eigen::MatrixXd at_mean = n.input_mean.transpose();
    const double expected = (n.w2 * n.b1.array().tanh().matrix())(0, 0) + n.b2(0);
    CHECK(predict_lagged_net(n, at_mean)[0] == doctest::Approx(expected));
  }
  SUBCASE("errors") {
    const Eigen::MatrixXd f = oracle::random_matrix(rng, 30, 3);
    const auto t = to_std(oracle::random_vector(rng, 30));
    const auto m = init_lagged_net(f, t, {});
    CHECK(kind_of([&] { predict_lagged_net(m, Eigen::MatrixXd::Zero(2, 2)); }) == ErrorKind::Shape);
    NetTrainConfig c;
    c.step_size = 1e6;
    c.max_epochs = 100;
    CHECK(kind_of([&] { fit_lagged_net(f, t, c); }) == ErrorKind::Divergence);
    CHECK(kind_of([&] { fit_lagged_net(f.topRows(5), std::span(t).first(5), {}); }) == ErrorKind::InsufficientData);
  }
}

TEST_CASE("hidden-size search and recursive forecasts") {
  std::mt19937_64 rng(65);
  std::vector<Eigen::MatrixXd> feats;
  std::vector<std::vector<double>> targs;
  for (int g = 0; g < 4; ++g) {
    const Eigen::MatrixXd f = oracle::random_matrix(rng, 40, 2);
    std::vector<double> t;
    for (int i = 0; i < 40; ++i) t.push_back(std::tanh(f(i, 0)) - 0.3 * f(i, 1));
    feats.push_back(f);
    targs.push_back(t);
  }
  NetTrainConfig c;
  c.max_epochs = 200;
  const std::vector<int> sizes{3, 1, 2};
  const auto a = select_hidden_size(feats, targs, sizes, c);
  const auto b = select_hidden_size(feats, targs, sizes, c);
  CHECK(a.sizes == std::vector<int>{1, 2, 3});
  CHECK(a.scores == b.scores);
  CHECK(a.chosen == b.chosen);

  // y(t) = 0.5 y(t-1) + x(t-1): a network with both lags forecasts it recursively
  DiscreteSeries x{"x", {}, {}}, y{"y", {}, {}};
  double prev = 0.0;
  std::normal_distribution<double> nd;
  for (int d = 0; d < 400; ++d) {
    x.times.push_back(d);
    y.times.push_back(d);
    const double xv = nd(rng);
    const double yv = d == 0 ? 0.0 : 0.5 * prev + x.values.back();
    x.values.push_back(xv);
    y.values.push_back(yv);
    prev = yv;
  }
  std::vector<double> horizon;
  for (int d = 1; d < 400; ++d) horizon.push_back(d);
  const auto f = make_joint_lag_matrix(x, 1, y, 1, horizon);
  std::vector<double> t(y.values.begin() + 1, y.values.end());
  NetTrainConfig cfg;
  cfg.max_epochs = 4000;
  cfg.step_size = 0.1;
  const auto m = fit_lagged_net(f, t, cfg);
  const std::vector<double> ahead{300, 301, 302};
  const auto fc = forecast_recursive(m, x, 1, y, 1, ahead);
  // first step uses the observed y(299); later steps feed back forecasts
  const Eigen::MatrixXd r0 = make_joint_lag_matrix(x, 1, y, 1, std::vector<double>{300});
  CHECK(fc[0] == predict_lagged_net(m, r0)[0]);
  Eigen::MatrixXd r1(1, 2);
  r1 << x.values[300], fc[0];
  CHECK(fc[1] == predict_lagged_net(m, r1)[0]);
  CHECK(std::abs(fc[2] - y.values[302]) < 0.3);
}

TEST_CASE("loyo_lagged_net matches an explicit refit loop") {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> z(0.0, 1.0);
  std::vector<DiscreteSeries> x, y;
  std::vector<double> days;
  for (int d = 0; d < 25; ++d) days.push_back(d);
  for (int i = 0; i < 4; ++i) {
    DiscreteSeries xs{"g" + std::to_string(i), days, {}}, ys{"g" + std::to_string(i), days, {}};
    for (int d = 0; d < 25; ++d) xs.values.push_back(z(rng));
    for (int d = 0; d < 25; ++d) ys.values.push_back(d > 0 ? 0.5 * xs.values[d - 1] + 0.1 * z(rng) : 0.0);
    x.push_back(xs);
    y.push_back(ys);
  }
  const std::vector<double> horizon{5, 6, 7, 8, 9, 10};
  NetTrainConfig cfg;
  cfg.hidden = 3;
  cfg.max_epochs = 200;

  for (int y_lags : {0, 2}) {
    const auto got = loyo_lagged_net(x, 2, y, y_lags, horizon, cfg);
    REQUIRE(got.per_time_error.size() == horizon.size());
    double total = 0.0;
    std::vector<double> per_time(horizon.size(), 0.0);
    for (std::size_t held = 0; held < x.size(); ++held) {
      Eigen::MatrixXd f(0, 2 + y_lags);
      std::vector<double> t;
      for (std::size_t k = 0; k < x.size(); ++k) {
        if (k == held) continue;
        const Eigen::MatrixXd fk = make_joint_lag_matrix(x[k], 2, y[k], y_lags, horizon);
        f.conservativeResize(f.rows() + fk.rows(), Eigen::NoChange);
        f.bottomRows(fk.rows()) = fk;
        for (double h : horizon) t.push_back(y[k].values[static_cast<std::size_t>(h)]);
      }
      const auto m = fit_lagged_net(f, t, cfg);
      const auto pred = y_lags > 0 ? forecast_recursive(m, x[held], 2, y[held], y_lags, horizon)
                                   : predict_lagged_net(m, make_lag_matrix(x[held], 2, horizon));
      double e = 0.0;
      for (std::size_t j = 0; j < horizon.size(); ++j) {
        const double d = pred[j] - y[held].values[static_cast<std::size_t>(horizon[j])];
        e += d * d;
        per_time[j] += d * d / 4.0;
      }
      CHECK(got.per_label_error[held] == doctest::Approx(e / 6.0).epsilon(1e-12));
      total += e;
    }
    CHECK(got.score == doctest::Approx(total / 24.0).epsilon(1e-12));
    for (std::size_t j = 0; j < horizon.size(); ++j) CHECK(got.per_time_error[j] == doctest::Approx(per_time[j]).epsilon(1e-12));
  }
  CHECK(kind_of([&] { loyo_lagged_net(std::span(x).first(1), 2, std::span(y).first(1), 0, horizon, cfg); }) ==
        ErrorKind::InsufficientData);
}
