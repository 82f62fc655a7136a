#include "funflow/flm_full.hpp"

#include "funflow/error.hpp"
#include "funflow/metrics.hpp"
#include "funflow/parallel.hpp"
#include "linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace funflow {

namespace {

constexpr double kMinPivotRatio = 1e-13;

Eigen::MatrixXd kron(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::MatrixXd out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

// Every integral the model needs; depends only on the bases.
struct Structure {
  Eigen::MatrixXd j_phi_h, j_hh, r1;
  Eigen::MatrixXd j_tt, r2;
  Eigen::MatrixXd j_aa, r0, j_at;
  Eigen::MatrixXd j_ay, j_ty;

  Structure(const BasisSystem& x_basis, const BasisSystem& y_basis, const FlmfBases& b,
            const FlmfOps& ops)
      : j_phi_h(gram_matrix(x_basis, b.s_basis)),
        j_hh(gram_matrix(b.s_basis, b.s_basis)),
        r1(penalty_matrix(b.s_basis, ops.l1)),
        j_tt(gram_matrix(b.t_basis, b.t_basis)),
        r2(penalty_matrix(b.t_basis, ops.l2)),
        j_aa(gram_matrix(b.alpha_basis, b.alpha_basis)),
        r0(penalty_matrix(b.alpha_basis, ops.l0)),
        j_at(gram_matrix(b.alpha_basis, b.t_basis)),
        j_ay(gram_matrix(b.alpha_basis, y_basis)),
        j_ty(gram_matrix(b.t_basis, y_basis)) {}
};

void check_lambdas(const FlmfLambdas& l) {
  for (double v : {l.lambda0, l.lambda1, l.lambda2}) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw Error(ErrorKind::InvalidData, "penalty weights must be finite and >= 0");
    }
  }
}

void check_pair(const FunctionalDataset& x, const FunctionalDataset& y) {
  if (x.labels() != y.labels()) {
    throw Error(ErrorKind::Alignment,
                "covariate and response curves must have identical labels in the same order");
  }
}

FlmfNormalSystem assemble(const Structure& st, const Eigen::MatrixXd& cx, const Eigen::MatrixXd& d,
                          const FlmfLambdas& l) {
  const Eigen::Index n = cx.rows();
  const Eigen::Index ka = st.j_aa.rows(), k1 = st.j_hh.rows(), k2 = st.j_tt.rows();
  const Eigen::Index p = k1 * k2;
  const Eigen::MatrixXd z = cx * st.j_phi_h;
  Eigen::MatrixXd ztz = z.transpose() * z;
  ztz = 0.5 * (ztz + ztz.transpose()).eval();

  FlmfNormalSystem sys;
  sys.matrix.resize(ka + p, ka + p);
  sys.matrix.topLeftCorner(ka, ka) = static_cast<double>(n) * st.j_aa + l.lambda0 * st.r0;
  const Eigen::MatrixXd ab = kron(z.colwise().sum(), st.j_at);
  sys.matrix.topRightCorner(ka, p) = ab;
  sys.matrix.bottomLeftCorner(p, ka) = ab.transpose();
  Eigen::MatrixXd bb = kron(ztz, st.j_tt);
  if (l.lambda1 > 0.0) bb += l.lambda1 * kron(st.r1, st.j_tt);
  if (l.lambda2 > 0.0) bb += l.lambda2 * kron(st.j_hh, st.r2);
  sys.matrix.bottomRightCorner(p, p) = bb;

  sys.rhs.resize(ka + p);
  sys.rhs.head(ka) = st.j_ay * d.colwise().sum().transpose();
  const Eigen::MatrixXd m = z.transpose() * d * st.j_ty.transpose();  // K1 x K2
  for (Eigen::Index k = 0; k < k1; ++k)
    for (Eigen::Index j = 0; j < k2; ++j) sys.rhs(ka + k * k2 + j) = m(k, j);
  return sys;
}

Eigen::VectorXd solve_system(const FlmfNormalSystem& sys) {
  // Jacobi scaling evens out the very different magnitudes of the blocks.
  const Eigen::VectorXd diag = sys.matrix.diagonal();
  for (Eigen::Index i = 0; i < diag.size(); ++i) {
    if (!(diag(i) > 0.0)) {
      throw Error(ErrorKind::RankDeficient,
                  "joint normal matrix has a zero diagonal entry (unknown " + std::to_string(i) +
                      " is not identified); the surface is identifiable only if K1 < n and K1 < K2 "
                      "or the penalties are positive");
    }
  }
  const Eigen::VectorXd s = diag.cwiseSqrt().cwiseInverse();
  const Eigen::MatrixXd scaled = s.asDiagonal() * sys.matrix * s.asDiagonal();
  Eigen::LDLT<Eigen::MatrixXd> ldlt(scaled);
  const Eigen::VectorXd pivots = ldlt.vectorD();
  const double ratio = pivots.minCoeff() / pivots.cwiseAbs().maxCoeff();
  if (ldlt.info() != Eigen::Success || !(ratio > kMinPivotRatio)) {
    throw Error(ErrorKind::RankDeficient,
                "joint normal matrix is singular (smallest eigenvalue " +
                    detail::sci(detail::min_eigenvalue(sys.matrix)) +
                    "); the surface is identifiable only if K1 < n and K1 < K2 or the "
                    "penalties are positive");
  }
  return s.asDiagonal() * ldlt.solve(s.asDiagonal() * sys.rhs);
}

FullFLMModel unpack(const Structure& st, const FunctionalDataset& x, const FlmfBases& bases,
                    const FlmfLambdas& l, const FlmfOps& ops, const Eigen::VectorXd& sol) {
  const Eigen::Index ka = bases.alpha_basis.nbasis(), k1 = bases.s_basis.nbasis(),
                     k2 = bases.t_basis.nbasis();
  FullFLMModel m{x.basis(),     bases.alpha_basis, sol.head(ka), bases.s_basis, bases.t_basis,
                 Eigen::MatrixXd(k1, k2), l, ops, st.j_phi_h, {}};
  for (Eigen::Index k = 0; k < k1; ++k)
    for (Eigen::Index j = 0; j < k2; ++j) m.b_matrix(k, j) = sol(ka + k * k2 + j);
  if (!(k1 < x.size() && k1 < k2)) {
    m.warnings.push_back("K1 = " + std::to_string(k1) + " is not below both n = " +
                         std::to_string(x.size()) + " and K2 = " + std::to_string(k2) +
                         "; the fit relies on the penalties for identifiability");
  }
  return m;
}

// Intercept curve expressed in the t basis (exact when the bases coincide).
Eigen::VectorXd alpha_in_t_basis(const FullFLMModel& m) {
  if (m.alpha_basis == m.t_basis) return m.alpha_coefs;
  const Eigen::MatrixXd jtt = gram_matrix(m.t_basis, m.t_basis);
  const Eigen::MatrixXd jta = gram_matrix(m.t_basis, m.alpha_basis);
  return jtt.ldlt().solve(jta * m.alpha_coefs);
}

Eigen::MatrixXd predict_coefs(const FullFLMModel& m, const Eigen::MatrixXd& cx,
                              const Eigen::VectorXd& alpha_t) {
  Eigen::MatrixXd out = cx * m.j_phi_h * m.b_matrix;
  out.rowwise() += alpha_t.transpose();
  return out;
}

}  // namespace

FlmfNormalSystem flmf_normal_equations(const FunctionalDataset& x, const FunctionalDataset& y,
                                       const FlmfBases& bases, const FlmfLambdas& lambdas,
                                       const FlmfOps& ops) {
  check_pair(x, y);
  check_lambdas(lambdas);
  const Structure st(x.basis(), y.basis(), bases, ops);
  return assemble(st, x.coefs(), y.coefs(), lambdas);
}

FullFLMModel fit_flmf(const FunctionalDataset& x, const FunctionalDataset& y,
                      const FlmfBases& bases, const FlmfLambdas& lambdas, const FlmfOps& ops) {
  check_pair(x, y);
  check_lambdas(lambdas);
  if (x.size() < 1) throw Error(ErrorKind::InsufficientData, "no curves to fit");
  const Structure st(x.basis(), y.basis(), bases, ops);
  const auto sol = solve_system(assemble(st, x.coefs(), y.coefs(), lambdas));
  return unpack(st, x, bases, lambdas, ops, sol);
}

CurvePrediction predict_flmf(const FullFLMModel& model, const FunctionalDataset& xnew) {
  if (!(xnew.basis() == model.x_basis)) {
    throw Error(ErrorKind::BasisMismatch, "new curves use a different basis than the training curves");
  }
  return {FunctionalDataset(model.t_basis,
                            predict_coefs(model, xnew.coefs(), alpha_in_t_basis(model)),
                            xnew.labels()),
          std::nullopt};
}

Eigen::MatrixXd beta_surface(const FullFLMModel& model, std::span<const double> s_grid,
                             std::span<const double> t_grid) {
  return eval_basis(model.s_basis, s_grid) * model.b_matrix *
         eval_basis(model.t_basis, t_grid).transpose();
}

double backward_mass_fraction(const FullFLMModel& model, int grid_points) {
  if (grid_points < 2) throw Error(ErrorKind::InvalidData, "grid needs at least 2 points");
  const auto uniform = [&](const Interval& d) {
    std::vector<double> g(grid_points);
    for (int i = 0; i < grid_points; ++i) g[i] = d.lo() + d.length() * i / (grid_points - 1);
    g.back() = d.hi();
    return g;
  };
  const auto sg = uniform(model.s_basis.domain());
  const auto tg = uniform(model.t_basis.domain());
  const Eigen::MatrixXd surf = beta_surface(model, sg, tg);
  double back = 0.0, total = 0.0;
  for (int j = 0; j < grid_points; ++j) {
    for (int l = 0; l < grid_points; ++l) {
      const double v = surf(j, l) * surf(j, l);
      total += v;
      if (sg[j] > tg[l]) back += v;
    }
  }
  return total > 0.0 ? back / total : 0.0;
}

std::array<double, 3> flmf_roughness(const FullFLMModel& m) {
  const Eigen::MatrixXd& b = m.b_matrix;
  const Eigen::MatrixXd r0 = penalty_matrix(m.alpha_basis, m.ops.l0);
  const Eigen::MatrixXd r1 = penalty_matrix(m.s_basis, m.ops.l1);
  const Eigen::MatrixXd r2 = penalty_matrix(m.t_basis, m.ops.l2);
  const Eigen::MatrixXd jhh = gram_matrix(m.s_basis, m.s_basis);
  const Eigen::MatrixXd jtt = gram_matrix(m.t_basis, m.t_basis);
  return {m.alpha_coefs.dot(r0 * m.alpha_coefs), (b.transpose() * r1 * b * jtt).trace(),
          (b.transpose() * jhh * b * r2).trace()};
}

// ------------------------------------------------------------ leave one out

LocvResult locv_flmf(const FunctionalDataset& x, const FunctionalDataset& y,
                     const FlmfBases& bases, const FlmfLambdaGrids& grids, const FlmfOps& ops,
                     const LocvOptions& options) {
  check_pair(x, y);
  const Eigen::Index n = x.size();
  if (n < 3) {
    throw Error(ErrorKind::InsufficientData,
                "leave-one-out needs at least 3 curves, got " + std::to_string(n));
  }
  const std::array<const std::vector<double>*, 3> g{&grids.lambda0, &grids.lambda1, &grids.lambda2};
  for (const auto* v : g) {
    if (v->empty()) throw Error(ErrorKind::InvalidData, "lambda grids must be nonempty");
    for (double l : *v) check_lambdas({l, 0.0, 0.0});
  }
  if (options.raw_response && options.raw_response->size() != static_cast<std::size_t>(n)) {
    throw Error(ErrorKind::Alignment, "raw response needs one series per curve");
  }

  LocvResult out{{}, {}, {}, 0, {}, {}, {}, {}, {}, {},
                 FunctionalDataset(bases.t_basis, Eigen::MatrixXd(0, bases.t_basis.nbasis()), {})};
  for (double a : grids.lambda0)
    for (double b : grids.lambda1)
      for (double c : grids.lambda2) out.triples.push_back({a, b, c});
  out.labels = x.labels();
  out.eval_times = options.eval_times.empty() ? daily_grid(bases.t_basis.domain()) : options.eval_times;

  const Structure st(x.basis(), y.basis(), bases, ops);
  const std::size_t nt = out.triples.size();
  const auto nn = static_cast<std::size_t>(n);
  const Eigen::Index k2 = bases.t_basis.nbasis();

  // Training data for fold i never includes row i.
  std::vector<Eigen::MatrixXd> train_x(nn), train_y(nn);
  for (std::size_t i = 0; i < nn; ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    train_x[i] = x.without(row).coefs();
    train_y[i] = y.without(row).coefs();
  }

  std::vector<Eigen::VectorXd> pred(nt * nn);  // t-basis coefficients, index triple * n + fold
  parallel_for(nt * nn, [&](std::size_t job) {
    const std::size_t t = job / nn, i = job % nn;
    const auto sol = solve_system(assemble(st, train_x[i], train_y[i], out.triples[t]));
    const auto model = unpack(st, x, bases, out.triples[t], ops, sol);
    const Eigen::MatrixXd held = x.coefs().row(static_cast<Eigen::Index>(i));
    pred[job] = predict_coefs(model, held, alpha_in_t_basis(model)).row(0).transpose();
  });

  // Squared errors per label and per evaluation time.
  const Eigen::MatrixXd t_eval = eval_basis(bases.t_basis, out.eval_times);
  const Eigen::MatrixXd target = eval_curves(y, out.eval_times);
  const std::size_t ne = out.eval_times.size();
  const auto errors = [&](std::size_t t, std::vector<double>& per_label, std::vector<double>& per_time) {
    per_label.assign(nn, 0.0);
    per_time.assign(ne, 0.0);
    std::vector<double> counts(ne, 0.0);
    for (std::size_t i = 0; i < nn; ++i) {
      const Eigen::VectorXd& c = pred[t * nn + i];
      if (!options.raw_response) {
        const Eigen::VectorXd p = t_eval * c;
        for (std::size_t j = 0; j < ne; ++j) {
          const double e = p(j) - target(static_cast<Eigen::Index>(i), j);
          per_label[i] += e * e;
          per_time[j] += e * e;
          counts[j] += 1.0;
        }
        per_label[i] /= static_cast<double>(ne);
        continue;
      }
      const auto& raw = (*options.raw_response)[i];
      std::vector<double> times;
      std::vector<double> values;
      for (std::size_t r = 0; r < raw.times.size(); ++r) {
        if (bases.t_basis.domain().contains(raw.times[r])) {
          times.push_back(raw.times[r]);
          values.push_back(raw.values[r]);
        }
      }
      if (times.empty()) {
        throw Error(ErrorKind::NoData, "raw response '" + raw.label + "' has no points in the domain");
      }
      const Eigen::VectorXd p = eval_basis(bases.t_basis, times) * c;
      for (std::size_t r = 0; r < times.size(); ++r) {
        const double e = p(r) - values[r];
        per_label[i] += e * e;
        const auto near = std::lower_bound(out.eval_times.begin(), out.eval_times.end(), times[r]);
        std::size_t j = static_cast<std::size_t>(near - out.eval_times.begin());
        if (j == ne || (j > 0 && times[r] - out.eval_times[j - 1] < *near - times[r])) --j;
        per_time[j] += e * e;
        counts[j] += 1.0;
      }
      per_label[i] /= static_cast<double>(times.size());
    }
    for (std::size_t j = 0; j < ne; ++j)
      per_time[j] = counts[j] > 0.0 ? per_time[j] / counts[j] : std::numeric_limits<double>::quiet_NaN();
  };

  out.scores.resize(nt);
  out.ses.resize(nt);
  std::vector<double> per_label, per_time;
  for (std::size_t t = 0; t < nt; ++t) {
    errors(t, per_label, per_time);
    const double mean = std::accumulate(per_label.begin(), per_label.end(), 0.0) / static_cast<double>(nn);
    double ss = 0.0;
    for (double v : per_label) ss += (v - mean) * (v - mean);
    out.scores[t] = mean;
    out.ses[t] = std::sqrt(ss / static_cast<double>(nn - 1)) / std::sqrt(static_cast<double>(nn));
  }
  for (std::size_t t = 1; t < nt; ++t)
    if (out.scores[t] < out.scores[out.chosen_index]) out.chosen_index = t;
  out.chosen = out.triples[out.chosen_index];
  errors(out.chosen_index, out.per_label_error, out.per_time_error);

  Eigen::MatrixXd pc(n, k2);
  for (std::size_t i = 0; i < nn; ++i) pc.row(static_cast<Eigen::Index>(i)) = pred[out.chosen_index * nn + i].transpose();
  out.predictions = FunctionalDataset(bases.t_basis, pc, x.labels());

  // Profiles along each axis through the optimum.
  const std::array<double, 3> best{out.chosen.lambda0, out.chosen.lambda1, out.chosen.lambda2};
  for (int d = 0; d < 3; ++d) {
    CVResult& prof = out.profiles[d];
    prof.grid = *g[d];
    for (std::size_t t = 0; t < nt; ++t) {
      const std::array<double, 3> v{out.triples[t].lambda0, out.triples[t].lambda1, out.triples[t].lambda2};
      bool on_axis = true;
      for (int e = 0; e < 3; ++e)
        if (e != d && v[e] != best[e]) on_axis = false;
      if (on_axis) {
        prof.scores.push_back(out.scores[t]);
        prof.ses.push_back(out.ses[t]);
      }
    }
    prof.rule = prof.grid.size() == 1 ? CVRule::Fixed : CVRule::Minimum;
    prof.chosen = best[d];
    prof.chosen_index = static_cast<std::size_t>(
        std::find(prof.grid.begin(), prof.grid.end(), best[d]) - prof.grid.begin());
  }
  return out;
}

}  // namespace funflow
