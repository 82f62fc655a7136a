#include <doctest.h>

#include "funflow/flm_full.hpp"
#include "funflow/metrics.hpp"
#include "support.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <limits>
#include <random>

using namespace funflow;
using namespace funflow::testing;

namespace {

struct Problem {
  FunctionalDataset x;
  FunctionalDataset y;
  FlmfBases bases;
};

// Response curves in the t basis built from a known intercept and surface.
Problem representable(std::mt19937_64& rng, int n, int k1, int k2, double noise,
                      const Interval& dom_s = Interval(0, 2), const Interval& dom_t = Interval(0.5, 2)) {
  const auto xb = make_bspline(dom_s, 7);
  const auto hb = make_bspline(dom_s, k1);
  const auto tb = make_bspline(dom_t, k2);
  FlmfBases bases{hb, tb, tb};
  auto x = random_curves(rng, xb, n);
  const Eigen::VectorXd alpha = oracle::random_vector(rng, k2);
  const Eigen::MatrixXd b = oracle::random_matrix(rng, k1, k2);
  Eigen::MatrixXd d = x.coefs() * gram_matrix(xb, hb) * b;
  d.rowwise() += alpha.transpose();
  d += oracle::random_matrix(rng, n, k2, noise);
  return {x, FunctionalDataset(tb, d, labels(n)), bases};
}

Eigen::VectorXd vec_smajor(const Eigen::MatrixXd& b) {
  Eigen::VectorXd v(b.size());
  for (Eigen::Index k = 0; k < b.rows(); ++k)
    for (Eigen::Index l = 0; l < b.cols(); ++l) v(k * b.cols() + l) = b(k, l);
  return v;
}

// Minimizes a trapezoid discretization of the integrated criterion directly
// as one stacked least-squares problem in (alpha, vec B).
Eigen::VectorXd dense_oracle(const Problem& p, const FlmfLambdas& l, int nodes) {
  const auto& ds = p.x.basis().domain();
  const auto& dt = p.bases.t_basis.domain();
  const auto sg = oracle::uniform_grid(ds.lo(), ds.hi(), nodes);
  const auto tg = oracle::uniform_grid(dt.lo(), dt.hi(), nodes);
  const Eigen::VectorXd ws = oracle::trapezoid_weights(ds.lo(), ds.hi(), nodes);
  const Eigen::VectorXd wt = oracle::trapezoid_weights(dt.lo(), dt.hi(), nodes);
  const Eigen::MatrixXd h0 = eval_basis(p.bases.s_basis, sg), h2 = eval_basis(p.bases.s_basis, sg, 2);
  const Eigen::MatrixXd t0 = eval_basis(p.bases.t_basis, tg), t2 = eval_basis(p.bases.t_basis, tg, 2);
  const Eigen::MatrixXd a0 = eval_basis(p.bases.alpha_basis, tg), a2 = eval_basis(p.bases.alpha_basis, tg, 2);
  const Eigen::MatrixXd xs = p.x.coefs() * eval_basis(p.x.basis(), sg).transpose();  // n x nodes
  const Eigen::MatrixXd yt = p.y.coefs() * eval_basis(p.y.basis(), tg).transpose();
  const Eigen::MatrixXd xh = xs * ws.asDiagonal() * h0;  // n x K1: int x_i(s) H(s) ds
  const int ka = static_cast<int>(a0.cols()), k1 = static_cast<int>(h0.cols()), k2 = static_cast<int>(t0.cols());
  const int n = static_cast<int>(p.x.size());
  const int cols = ka + k1 * k2;
  const int rows = n * nodes + nodes + 2 * nodes * nodes;
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(rows, cols);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(rows);
  int r = 0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < nodes; ++j, ++r) {
      const double w = std::sqrt(wt(j));
      m.row(r).head(ka) = w * a0.row(j);
      for (int k = 0; k < k1; ++k) m.row(r).segment(ka + k * k2, k2) = w * xh(i, k) * t0.row(j);
      rhs(r) = w * yt(i, j);
    }
  }
  for (int j = 0; j < nodes; ++j, ++r) m.row(r).head(ka) = std::sqrt(l.lambda0 * wt(j)) * a2.row(j);
  for (int a = 0; a < nodes; ++a) {
    for (int j = 0; j < nodes; ++j) {
      const double w = ws(a) * wt(j);
      for (int k = 0; k < k1; ++k) {
        m.row(r).segment(ka + k * k2, k2) = std::sqrt(l.lambda1 * w) * h2(a, k) * t0.row(j);
        m.row(r + 1).segment(ka + k * k2, k2) = std::sqrt(l.lambda2 * w) * h0(a, k) * t2.row(j);
      }
      r += 2;
    }
  }
  return oracle::ols(m, rhs);
}

// int beta(s, t) x(s) ds + alpha(t) with every integral on a dense grid.
Eigen::MatrixXd dense_prediction(const FullFLMModel& m, const FunctionalDataset& x,
                                 std::span<const double> times) {
  const auto& ds = m.s_basis.domain();
  const int nodes = 10000;
  const auto sg = oracle::uniform_grid(ds.lo(), ds.hi(), nodes);
  const Eigen::VectorXd ws = oracle::trapezoid_weights(ds.lo(), ds.hi(), nodes);
  const Eigen::MatrixXd xs = x.coefs() * eval_basis(x.basis(), sg).transpose();
  const Eigen::MatrixXd surf = eval_basis(m.s_basis, sg) * m.b_matrix * eval_basis(m.t_basis, times).transpose();
  Eigen::MatrixXd out = xs * ws.asDiagonal() * surf;
  const Eigen::VectorXd alpha = eval_basis(m.alpha_basis, times) * m.alpha_coefs;
  out.rowwise() += alpha.transpose();
  return out;
}

}  // namespace

TEST_CASE("zero response gives a zero model") {
  std::mt19937_64 rng(41);
  auto p = representable(rng, 12, 4, 5, 0.0);
  const FunctionalDataset zero(p.y.basis(), Eigen::MatrixXd::Zero(12, 5), p.y.labels());
  for (const FlmfLambdas l : {FlmfLambdas{1e-3, 1e-3, 1e-3}, FlmfLambdas{1, 10, 100}, FlmfLambdas{1e5, 1e5, 1e5}}) {
    const auto m = fit_flmf(p.x, zero, p.bases, l);
    CHECK(m.alpha_coefs.cwiseAbs().maxCoeff() <= 1e-10);
    CHECK(m.b_matrix.cwiseAbs().maxCoeff() <= 1e-10);
  }
}

TEST_CASE("fit matches a dense discretization of the integrated criterion") {
  std::mt19937_64 rng(42);
  const auto p = representable(rng, 10, 4, 4, 0.3);
  for (const FlmfLambdas l : {FlmfLambdas{1e-2, 1e-3, 1e-2}, FlmfLambdas{1.0, 0.1, 0.5}}) {
    const auto m = fit_flmf(p.x, p.y, p.bases, l);
    // The trapezoid discretization converges as h^2; extrapolating the
    // 401- and 201-node solutions removes that term.
    const Eigen::VectorXd fine = dense_oracle(p, l, 401);
    const Eigen::VectorXd want = (4.0 * fine - dense_oracle(p, l, 201)) / 3.0;
    CHECK(oracle::rel_err(vec_smajor(m.b_matrix), want.tail(16)) < 1e-5);
    CHECK(oracle::rel_err(m.alpha_coefs, want.head(4)) < 1e-5);
    CHECK(oracle::rel_err(vec_smajor(m.b_matrix), fine.tail(16)) < 1e-3);
  }
}

TEST_CASE("replicated curves act as doubled weights") {
  std::mt19937_64 rng(43);
  const auto p = representable(rng, 10, 4, 5, 0.2);
  Eigen::MatrixXd cx(20, p.x.coefs().cols()), cy(20, p.y.coefs().cols());
  cx << p.x.coefs(), p.x.coefs();
  cy << p.y.coefs(), p.y.coefs();
  const FunctionalDataset x2(p.x.basis(), cx, labels(20)), y2(p.y.basis(), cy, labels(20));
  const FlmfLambdas l{0.4, 0.02, 0.6};
  const auto twice = fit_flmf(x2, y2, p.bases, l);
  const auto once = fit_flmf(p.x, p.y, p.bases, {0.2, 0.01, 0.3});
  CHECK(oracle::rel_err(twice.b_matrix, once.b_matrix) < 1e-9);
  CHECK(oracle::rel_err(twice.alpha_coefs, once.alpha_coefs) < 1e-9);
}

TEST_CASE("noiseless representable data is recovered exactly without penalties") {
  std::mt19937_64 rng(44);
  const int k1 = 5, k2 = 6, n = 45;
  const auto xb = make_bspline(Interval(0, 153), 12);
  const auto hb = make_bspline(Interval(0, 153), k1);
  const auto tb = make_bspline(Interval(30, 153), k2);
  const auto x = random_curves(rng, xb, n);
  const Eigen::VectorXd alpha = oracle::random_vector(rng, k2);
  const Eigen::MatrixXd b = oracle::random_matrix(rng, k1, k2, 0.01);
  Eigen::MatrixXd d = x.coefs() * oracle::richardson_integral(xb, 0, hb, 0) * b;
  d.rowwise() += alpha.transpose();
  const FunctionalDataset y(tb, d, labels(n));
  const auto m = fit_flmf(x, y, {hb, tb, tb}, {0, 0, 0});
  CHECK(oracle::rel_err(vec_smajor(m.b_matrix), vec_smajor(b)) < 1e-6);
  CHECK(oracle::rel_err(m.alpha_coefs, alpha) < 1e-6);
}

TEST_CASE("roughness does not increase along a penalty ladder") {
  std::mt19937_64 rng(45);
  const auto p = representable(rng, 15, 6, 7, 0.5);
  const std::vector<double> ladder{1e-4, 1e-2, 1, 1e2, 1e4};
  for (int which = 0; which < 3; ++which) {
    double prev = std::numeric_limits<double>::infinity();
    for (double v : ladder) {
      FlmfLambdas l{1e-2, 1e-2, 1e-2};
      (which == 0 ? l.lambda0 : which == 1 ? l.lambda1 : l.lambda2) = v;
      const double rough = flmf_roughness(fit_flmf(p.x, p.y, p.bases, l))[which];
      CHECK(rough <= prev + 1e-10);
      prev = rough;
    }
  }
}

TEST_CASE("normal matrix structure") {
  std::mt19937_64 rng(46);
  const auto p = representable(rng, 9, 4, 5, 0.1);
  const auto sys = flmf_normal_equations(p.x, p.y, p.bases, {0.1, 0.1, 0.1});
  CHECK(sys.matrix == sys.matrix.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sys.matrix);
  CHECK(es.eigenvalues().minCoeff() > 0.0);
}

TEST_CASE("predict_flmf") {
  std::mt19937_64 rng(47);
  const auto p = representable(rng, 15, 5, 6, 0.2);
  const auto m = fit_flmf(p.x, p.y, p.bases, {0.01, 0.01, 0.01});
  const auto times = oracle::uniform_grid(0.5, 2, 50);
  const Eigen::VectorXd alpha = eval_basis(m.alpha_basis, times) * m.alpha_coefs;

  SUBCASE("zero input gives the intercept curve") {
    const FunctionalDataset z(p.x.basis(), Eigen::MatrixXd::Zero(1, 7), {"z"});
    const Eigen::MatrixXd v = eval_curves(predict_flmf(m, z).dataset, times);
    CHECK((v.row(0).transpose() - alpha).cwiseAbs().maxCoeff() < 1e-10);
  }
  SUBCASE("zero surface ignores the input") {
    auto flat = m;
    flat.b_matrix.setZero();
    const Eigen::MatrixXd v = eval_curves(predict_flmf(flat, p.x).dataset, times);
    for (Eigen::Index i = 0; i < v.rows(); ++i) CHECK((v.row(i).transpose() - alpha).cwiseAbs().maxCoeff() < 1e-10);
  }
  SUBCASE("dense quadrature oracle") {
    const auto xn = random_curves(rng, p.x.basis(), 4);
    const Eigen::MatrixXd got = eval_curves(predict_flmf(m, xn).dataset, times);
    const Eigen::MatrixXd want = dense_prediction(m, xn, times);
    CHECK((got - want).cwiseAbs().maxCoeff() < 1e-6);
  }
  SUBCASE("affine in the input coefficients") {
    const auto c1 = random_curves(rng, p.x.basis(), 3), c2 = random_curves(rng, p.x.basis(), 3);
    const double a = 2.5, b = -0.75;
    const FunctionalDataset mix(p.x.basis(), a * c1.coefs() + b * c2.coefs(), labels(3));
    const Eigen::MatrixXd want = a * predict_flmf(m, c1).dataset.coefs() + b * predict_flmf(m, c2).dataset.coefs() +
                                 ((1 - a - b) * m.alpha_coefs).transpose().replicate(3, 1);
    CHECK((predict_flmf(m, mix).dataset.coefs() - want).cwiseAbs().maxCoeff() < 1e-10);
  }
  SUBCASE("basis mismatch") {
    const auto other = random_curves(rng, make_bspline(Interval(0, 2), 8), 2);
    CHECK(kind_of([&] { predict_flmf(m, other); }) == ErrorKind::BasisMismatch);
  }
  SUBCASE("intercept in its own basis is projected") {
    auto q = p;
    q.bases.alpha_basis = make_bspline(Interval(0.5, 2), 4);
    const auto m2 = fit_flmf(q.x, q.y, q.bases, {0.01, 0.01, 0.01});
    const FunctionalDataset z(p.x.basis(), Eigen::MatrixXd::Zero(1, 7), {"z"});
    const Eigen::MatrixXd v = eval_curves(predict_flmf(m2, z).dataset, times);
    const Eigen::VectorXd a2 = eval_basis(m2.alpha_basis, times) * m2.alpha_coefs;
    // cubic single-segment intercept lies in the 6-function t basis
    CHECK((v.row(0).transpose() - a2).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("beta_surface") {
  std::mt19937_64 rng(48);
  const auto p = representable(rng, 12, 4, 5, 0.1);
  auto m = fit_flmf(p.x, p.y, p.bases, {0.1, 0.1, 0.1});
  const auto sg = oracle::uniform_grid(0, 2, 13), tg = oracle::uniform_grid(0.5, 2, 11);

  SUBCASE("direct triple product") {
    const Eigen::MatrixXd surf = beta_surface(m, sg, tg);
    for (std::size_t j = 0; j < sg.size(); ++j) {
      for (std::size_t l = 0; l < tg.size(); ++l) {
        double v = 0.0;
        for (int k = 0; k < 4; ++k)
          for (int q = 0; q < 5; ++q)
            v += oracle::cox_de_boor(std::vector<double>(m.s_basis.knots().begin(), m.s_basis.knots().end()), k, 4,
                                     sg[j], sg[j] == 2.0) *
                 m.b_matrix(k, q) *
                 oracle::cox_de_boor(std::vector<double>(m.t_basis.knots().begin(), m.t_basis.knots().end()), q, 4,
                                     tg[l], tg[l] == 2.0);
        CHECK(std::abs(surf(j, l) - v) < 1e-12);
      }
    }
  }
  SUBCASE("rank one and zero surfaces") {
    const Eigen::VectorXd u = oracle::random_vector(rng, 4), v = oracle::random_vector(rng, 5);
    m.b_matrix = u * v.transpose();
    const Eigen::VectorXd hs = eval_basis(m.s_basis, sg) * u;
    const Eigen::VectorXd tv = eval_basis(m.t_basis, tg) * v;
    CHECK((beta_surface(m, sg, tg) - hs * tv.transpose()).cwiseAbs().maxCoeff() < 1e-12);
    m.b_matrix.setZero();
    CHECK(beta_surface(m, sg, tg).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("out of domain") {
    CHECK(kind_of([&] { beta_surface(m, std::vector<double>{2.5}, tg); }) == ErrorKind::OutOfDomain);
  }
}

TEST_CASE("backward mass diagnostic") {
  std::mt19937_64 rng(49);
  const auto p = representable(rng, 12, 4, 5, 0.1, Interval(0, 1), Interval(0, 1));
  auto m = fit_flmf(p.x, p.y, p.bases, {0.1, 0.1, 0.1});
  m.b_matrix.setOnes();  // beta = 1 everywhere
  CHECK(backward_mass_fraction(m) == doctest::Approx(0.5).epsilon(0.01));
  // beta(s, t) = s^3 lives in the upper-left of the (s, t) square: s > t mostly
  m.b_matrix.setZero();
  m.b_matrix.row(3).setOnes();
  CHECK(backward_mass_fraction(m) > 0.8);
}

TEST_CASE("fit errors and warnings") {
  std::mt19937_64 rng(50);
  const auto p = representable(rng, 10, 4, 5, 0.1);
  const FunctionalDataset shuffled(p.y.basis(), p.y.coefs(), labels(10, "other"));
  CHECK(kind_of([&] { fit_flmf(p.x, shuffled, p.bases, {1, 1, 1}); }) == ErrorKind::Alignment);

  const auto few = representable(rng, 3, 6, 5, 0.1);
  CHECK(kind_of([&] { fit_flmf(few.x, few.y, few.bases, {0, 0, 0}); }) == ErrorKind::RankDeficient);
  try {
    fit_flmf(few.x, few.y, few.bases, {0, 0, 0});
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("smallest eigenvalue") != std::string::npos);
  }
  const auto m = fit_flmf(few.x, few.y, few.bases, {1, 1, 1});
  CHECK(m.warnings.size() == 1);
  CHECK(fit_flmf(p.x, p.y, p.bases, {1, 1, 1}).warnings.empty());
}

TEST_CASE("leave-one-curve-out") {
  std::mt19937_64 rng(51);
  const FlmfLambdaGrids one{{0.1}, {0.1}, {0.1}};

  SUBCASE("identical curves give identical errors") {
    const auto p = representable(rng, 1, 4, 5, 0.1);
    Eigen::MatrixXd cx = p.x.coefs().replicate(3, 1), cy = p.y.coefs().replicate(3, 1);
    const FunctionalDataset x(p.x.basis(), cx, labels(3)), y(p.y.basis(), cy, labels(3));
    // identical covariates leave alpha and the linear part of beta confounded
    // under D^2 penalties, so beta gets a ridge penalty along s here
    const auto r = locv_flmf(x, y, p.bases, one, FlmfOps{{2}, {0}, {2}});
    CHECK(std::abs(r.per_label_error[0] - r.per_label_error[1]) < 1e-10);
    CHECK(std::abs(r.per_label_error[0] - r.per_label_error[2]) < 1e-10);
    CHECK(r.chosen == FlmfLambdas{0.1, 0.1, 0.1});
    CHECK(r.profiles[0].rule == CVRule::Fixed);
  }
  SUBCASE("scores equal an explicit refit loop") {
    const auto p = representable(rng, 8, 4, 5, 0.3);
    const FlmfLambdaGrids grids{{1e-2, 1}, {1e-3, 1e-1}, {1e-2, 10}};
    const auto r = locv_flmf(p.x, p.y, p.bases, grids);
    REQUIRE(r.triples.size() == 8);
    const auto times = daily_grid(p.bases.t_basis.domain());
    CHECK(r.eval_times == times);
    for (std::size_t t = 0; t < r.triples.size(); ++t) {
      double total = 0.0;
      for (Eigen::Index i = 0; i < 8; ++i) {
        const auto m = fit_flmf(p.x.without(i), p.y.without(i), p.bases, r.triples[t]);
        const auto pred = eval_curves(predict_flmf(m, p.x.subset(std::span(&i, 1))).dataset, times);
        const auto want = eval_curves(p.y.subset(std::span(&i, 1)), times);
        total += (pred - want).squaredNorm() / static_cast<double>(times.size());
      }
      CHECK(std::abs(r.scores[t] - total / 8) < 1e-9);
    }
    double best = r.scores[0];
    for (double s : r.scores) best = std::min(best, s);
    CHECK(r.scores[r.chosen_index] == best);
    CHECK(r.per_time_error.size() == times.size());
    double mean_label = 0.0;
    for (double v : r.per_label_error) mean_label += v / 8;
    CHECK(std::abs(mean_label - best) < 1e-12);
  }
  SUBCASE("held-out curves are never read by their own fold") {
    const auto p = representable(rng, 8, 4, 5, 0.3);
    const auto clean = locv_flmf(p.x, p.y, p.bases, one);
    for (Eigen::Index i = 0; i < 8; ++i) {
      Eigen::MatrixXd poisoned = p.y.coefs();
      poisoned.row(i).setConstant(std::numeric_limits<double>::quiet_NaN());
      const FunctionalDataset y(p.y.basis(), poisoned, p.y.labels());
      const auto r = locv_flmf(p.x, y, p.bases, one);
      CHECK(r.predictions.coefs().row(i) == clean.predictions.coefs().row(i));
    }
  }
  SUBCASE("errors") {
    const auto p = representable(rng, 2, 4, 5, 0.3);
    CHECK(kind_of([&] { locv_flmf(p.x, p.y, p.bases, one); }) == ErrorKind::InsufficientData);
  }
}
