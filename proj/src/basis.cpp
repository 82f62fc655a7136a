#include "funflow/basis.hpp"

#include "funflow/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace funflow {

namespace {

std::string fmt_time(double t) {
  std::ostringstream os;
  os.precision(17);
  os << t;
  return os.str();
}

bool domains_match(const Interval& a, const Interval& b) {
  return std::abs(a.lo() - b.lo()) <= 1e-9 && std::abs(a.hi() - b.hi()) <= 1e-9;
}

// Knot span index for a clamped knot vector, right-continuous inside the
// domain and left-continuous at the upper endpoint.
int find_span(std::span<const double> knots, int nbasis, int degree, double t) {
  if (t >= knots[nbasis]) return nbasis - 1;
  auto first = knots.begin() + degree;
  auto last = knots.begin() + nbasis + 1;
  auto it = std::upper_bound(first, last, t);
  return static_cast<int>(it - knots.begin()) - 1;
}

// Nonzero basis functions on `span` and their derivatives up to `nderiv`.
// Output row d holds the d-th derivatives of the degree+1 active functions.
void basis_derivatives(std::span<const double> knots, int span, double t, int degree,
                       int nderiv, Eigen::MatrixXd& out) {
  const int p = degree;
  Eigen::MatrixXd ndu(p + 1, p + 1);
  std::vector<double> left(p + 1), right(p + 1);
  ndu(0, 0) = 1.0;
  for (int j = 1; j <= p; ++j) {
    left[j] = t - knots[span + 1 - j];
    right[j] = knots[span + j] - t;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      ndu(j, r) = right[r + 1] + left[j - r];
      const double temp = ndu(r, j - 1) / ndu(j, r);
      ndu(r, j) = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    ndu(j, j) = saved;
  }

  out.setZero(nderiv + 1, p + 1);
  for (int j = 0; j <= p; ++j) out(0, j) = ndu(j, p);
  if (nderiv == 0) return;

  Eigen::MatrixXd a(2, p + 1);
  for (int r = 0; r <= p; ++r) {
    int s1 = 0;
    int s2 = 1;
    a.setZero();
    a(0, 0) = 1.0;
    for (int k = 1; k <= nderiv; ++k) {
      double d = 0.0;
      const int rk = r - k;
      const int pk = p - k;
      if (r >= k) {
        a(s2, 0) = a(s1, 0) / ndu(pk + 1, rk);
        d = a(s2, 0) * ndu(rk, pk);
      }
      const int j1 = rk >= -1 ? 1 : -rk;
      const int j2 = (r - 1 <= pk) ? k - 1 : p - r;
      for (int j = j1; j <= j2; ++j) {
        a(s2, j) = (a(s1, j) - a(s1, j - 1)) / ndu(pk + 1, rk + j);
        d += a(s2, j) * ndu(rk + j, pk);
      }
      if (r <= pk) {
        a(s2, k) = -a(s1, k - 1) / ndu(pk + 1, r);
        d += a(s2, k) * ndu(r, pk);
      }
      out(k, r) = d;
      std::swap(s1, s2);
    }
  }
  double factor = p;
  for (int k = 1; k <= nderiv; ++k) {
    out.row(k) *= factor;
    factor *= (p - k);
  }
}

// d-th derivative of Fourier function `j` at t.
double fourier_value(int j, int deriv, double omega, double t) {
  if (j == 0) return deriv == 0 ? 1.0 : 0.0;
  const int h = (j + 1) / 2;
  const double freq = h * omega;
  const double arg = freq * t;
  const double scale = std::pow(freq, deriv);
  const bool is_sin = (j % 2) == 1;
  // Derivative cycle of sin: sin, cos, -sin, -cos; of cos: cos, -sin, -cos, sin.
  const int phase = (deriv + (is_sin ? 0 : 1)) % 4;
  switch (phase) {
    case 0: return scale * std::sin(arg);
    case 1: return scale * std::cos(arg);
    case 2: return -scale * std::sin(arg);
    default: return -scale * std::cos(arg);
  }
}

int nodes_needed(const BasisSystem& b) {
  if (b.kind() == BasisKind::BSpline) return b.order();
  return b.harmonics() == 0 ? 1 : 64;
}

std::vector<double> integration_breaks(const BasisSystem& b, double lo, double hi) {
  if (b.kind() == BasisKind::BSpline) {
    auto br = b.breakpoints();
    br.front() = lo;
    br.back() = hi;
    return br;
  }
  const int h = b.harmonics();
  int pieces = 1;
  if (h > 0) {
    // One piece per wavelength of the highest harmonic.
    const double wavelengths = (hi - lo) * h / b.period();
    pieces = std::max(1, static_cast<int>(std::ceil(wavelengths - 1e-9)));
  }
  std::vector<double> br(pieces + 1);
  for (int i = 0; i <= pieces; ++i) br[i] = lo + (hi - lo) * i / pieces;
  br.back() = hi;
  return br;
}

bool whole_periods(const BasisSystem& a, const BasisSystem& b) {
  if (a.kind() != BasisKind::Fourier || b.kind() != BasisKind::Fourier) return false;
  if (std::abs(a.period() - b.period()) > 1e-12 * a.period()) return false;
  const double ratio = a.domain().length() / a.period();
  return std::abs(ratio - std::round(ratio)) <= 1e-9 && std::round(ratio) >= 1.0;
}

}  // namespace

// ---------------------------------------------------------------- Interval

Interval::Interval(double lo, double hi) : lo_(lo), hi_(hi) {
  if (!std::isfinite(lo) || !std::isfinite(hi) || !(lo < hi)) {
    throw Error(ErrorKind::InvalidData,
                "invalid interval [" + fmt_time(lo) + ", " + fmt_time(hi) + "]: need lo < hi");
  }
}

double Interval::tolerance() const noexcept {
  return 1e-12 * std::max({1.0, std::abs(lo_), std::abs(hi_)});
}

bool Interval::contains(double t) const noexcept {
  const double tol = tolerance();
  return t >= lo_ - tol && t <= hi_ + tol;
}

double Interval::clamp_checked(double t) const {
  if (!contains(t)) {
    throw Error(ErrorKind::OutOfDomain, "time " + fmt_time(t) + " lies outside the domain [" +
                                            fmt_time(lo_) + ", " + fmt_time(hi_) + "]");
  }
  return std::clamp(t, lo_, hi_);
}

// ------------------------------------------------------------- BasisSystem

BasisSystem::BasisSystem(BasisKind kind, Interval domain, int nbasis, int order,
                         double period, std::vector<double> knots)
    : kind_(kind),
      domain_(domain),
      nbasis_(nbasis),
      order_(order),
      period_(period),
      knots_(std::move(knots)) {}

BasisSystem BasisSystem::bspline(Interval domain, std::vector<double> interior, int order) {
  if (order < 1) throw Error(ErrorKind::InvalidBasis, "B-spline order must be >= 1");
  for (std::size_t i = 0; i < interior.size(); ++i) {
    if (!(interior[i] > domain.lo() && interior[i] < domain.hi())) {
      throw Error(ErrorKind::InvalidBasis,
                  "interior knot " + fmt_time(interior[i]) + " is not strictly inside the domain");
    }
    if (i > 0 && interior[i] < interior[i - 1]) {
      throw Error(ErrorKind::InvalidBasis, "interior knots must be nondecreasing");
    }
  }
  const int nbasis = static_cast<int>(interior.size()) + order;
  std::vector<double> knots;
  knots.reserve(nbasis + order);
  knots.insert(knots.end(), order, domain.lo());
  knots.insert(knots.end(), interior.begin(), interior.end());
  knots.insert(knots.end(), order, domain.hi());
  return BasisSystem(BasisKind::BSpline, domain, nbasis, order, 0.0, std::move(knots));
}

BasisSystem BasisSystem::fourier(Interval domain, int nbasis, double period) {
  if (nbasis < 1 || nbasis % 2 == 0) {
    throw Error(ErrorKind::InvalidBasis,
                "Fourier basis needs an odd number of functions, got " + std::to_string(nbasis));
  }
  if (!(period > 0.0) || !std::isfinite(period)) {
    throw Error(ErrorKind::InvalidBasis, "Fourier period must be positive");
  }
  return BasisSystem(BasisKind::Fourier, domain, nbasis, 0, period, {});
}

std::span<const double> BasisSystem::interior_knots() const noexcept {
  if (kind_ != BasisKind::BSpline) return {};
  return std::span<const double>(knots_).subspan(order_, nbasis_ - order_);
}

std::vector<double> BasisSystem::breakpoints() const {
  std::vector<double> br{domain_.lo()};
  for (double k : interior_knots()) {
    if (k > br.back()) br.push_back(k);
  }
  br.push_back(domain_.hi());
  return br;
}

BasisSystem make_bspline(Interval domain, int nbasis, int order) {
  if (order < 1) throw Error(ErrorKind::InvalidBasis, "B-spline order must be >= 1");
  if (nbasis < order) {
    throw Error(ErrorKind::InvalidBasis, "B-spline basis needs nbasis >= order (got nbasis " +
                                             std::to_string(nbasis) + ", order " +
                                             std::to_string(order) + ")");
  }
  const int ninterior = nbasis - order;
  std::vector<double> interior(ninterior);
  const double step = domain.length() / (ninterior + 1);
  for (int i = 0; i < ninterior; ++i) interior[i] = domain.lo() + step * (i + 1);
  return BasisSystem::bspline(domain, std::move(interior), order);
}

BasisSystem make_bspline_with_knots(Interval domain, std::vector<double> interior_knots,
                                    int order) {
  return BasisSystem::bspline(domain, std::move(interior_knots), order);
}

BasisSystem make_fourier(Interval domain, int nbasis, std::optional<double> period) {
  return BasisSystem::fourier(domain, nbasis, period.value_or(domain.length()));
}

// -------------------------------------------------------------- evaluation

Eigen::MatrixXd eval_basis(const BasisSystem& basis, std::span<const double> times, int deriv) {
  if (deriv < 0) throw Error(ErrorKind::InvalidOperator, "derivative order must be >= 0");
  const int K = basis.nbasis();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(times.size()), K);

  if (basis.kind() == BasisKind::BSpline) {
    if (deriv >= basis.order()) {
      throw Error(ErrorKind::InvalidOperator,
                  "derivative order " + std::to_string(deriv) +
                      " is not below the B-spline order " + std::to_string(basis.order()));
    }
    const int degree = basis.order() - 1;
    Eigen::MatrixXd local;
    for (std::size_t j = 0; j < times.size(); ++j) {
      const double t = basis.domain().clamp_checked(times[j]);
      const int span = find_span(basis.knots(), K, degree, t);
      basis_derivatives(basis.knots(), span, t, degree, deriv, local);
      for (int r = 0; r <= degree; ++r) out(j, span - degree + r) = local(deriv, r);
    }
    return out;
  }

  const double omega = 2.0 * std::numbers::pi / basis.period();
  for (std::size_t j = 0; j < times.size(); ++j) {
    const double t = basis.domain().clamp_checked(times[j]);
    for (int k = 0; k < K; ++k) out(j, k) = fourier_value(k, deriv, omega, t);
  }
  return out;
}

// ------------------------------------------------------------- integration

QuadratureRule gauss_legendre(int n) {
  QuadratureRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0;
      double p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    rule.nodes[i] = -x;
    rule.nodes[n - 1 - i] = x;
    rule.weights[i] = w;
    rule.weights[n - 1 - i] = w;
  }
  if (n % 2 == 1) rule.nodes[n / 2] = 0.0;
  return rule;
}

QuadratureRule product_rule(const BasisSystem& a, const BasisSystem& b) {
  if (!domains_match(a.domain(), b.domain())) {
    throw Error(ErrorKind::DomainMismatch, "basis domains differ: [" +
                                               fmt_time(a.domain().lo()) + ", " +
                                               fmt_time(a.domain().hi()) + "] vs [" +
                                               fmt_time(b.domain().lo()) + ", " +
                                               fmt_time(b.domain().hi()) + "]");
  }
  // Symmetric in (a, b) so that integral_matrix(a, b) is the exact transpose of
  // integral_matrix(b, a).
  const double lo = 0.5 * (a.domain().lo() + b.domain().lo());
  const double hi = 0.5 * (a.domain().hi() + b.domain().hi());

  auto breaks = integration_breaks(a, lo, hi);
  auto other = integration_breaks(b, lo, hi);
  breaks.insert(breaks.end(), other.begin(), other.end());
  std::sort(breaks.begin(), breaks.end());
  const double tol = 1e-12 * std::max(1.0, hi - lo);
  std::vector<double> uniq;
  for (double x : breaks) {
    if (uniq.empty() || x - uniq.back() > tol) uniq.push_back(x);
  }
  uniq.back() = hi;

  const int npts = std::max(nodes_needed(a), nodes_needed(b));
  const auto gl = gauss_legendre(npts);
  QuadratureRule rule;
  for (std::size_t i = 0; i + 1 < uniq.size(); ++i) {
    const double half = 0.5 * (uniq[i + 1] - uniq[i]);
    const double mid = 0.5 * (uniq[i + 1] + uniq[i]);
    for (int q = 0; q < npts; ++q) {
      rule.nodes.push_back(mid + half * gl.nodes[q]);
      rule.weights.push_back(half * gl.weights[q]);
    }
  }
  return rule;
}

Eigen::MatrixXd integral_matrix(const BasisSystem& rows, int deriv_rows,
                                const BasisSystem& cols, int deriv_cols) {
  if (!domains_match(rows.domain(), cols.domain())) {
    throw Error(ErrorKind::DomainMismatch, "basis domains differ");
  }
  const int Kr = rows.nbasis();
  const int Kc = cols.nbasis();

  if (deriv_rows == deriv_cols && whole_periods(rows, cols)) {
    // Orthogonality over whole periods.
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(Kr, Kc);
    const double len = rows.domain().length();
    const double omega = 2.0 * std::numbers::pi / rows.period();
    const int d = deriv_rows;
    g(0, 0) = d == 0 ? len : 0.0;
    for (int j = 1; j < std::min(Kr, Kc); ++j) {
      const double freq = ((j + 1) / 2) * omega;
      g(j, j) = std::pow(freq, 2 * d) * len / 2.0;
    }
    return g;
  }

  const auto rule = product_rule(rows, cols);
  const Eigen::MatrixXd vr = eval_basis(rows, rule.nodes, deriv_rows);
  const Eigen::MatrixXd vc = eval_basis(cols, rule.nodes, deriv_cols);
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(Kr, Kc);
  for (std::size_t q = 0; q < rule.nodes.size(); ++q) {
    const double w = rule.weights[q];
    for (int k = 0; k < Kr; ++k) {
      const double a = vr(q, k);
      if (a == 0.0) continue;
      for (int l = 0; l < Kc; ++l) {
        const double b = vc(q, l);
        if (b == 0.0) continue;
        g(k, l) += w * (a * b);
      }
    }
  }
  return g;
}

Eigen::MatrixXd gram_matrix(const BasisSystem& rows, const BasisSystem& cols) {
  return integral_matrix(rows, 0, cols, 0);
}

namespace {

void check_operator(const BasisSystem& basis, DiffOperator op) {
  if (op.order < 0) throw Error(ErrorKind::InvalidOperator, "operator order must be >= 0");
  if (basis.kind() == BasisKind::BSpline && op.order >= basis.order()) {
    throw Error(ErrorKind::InvalidOperator,
                "operator D^" + std::to_string(op.order) + " is too high for a B-spline of order " +
                    std::to_string(basis.order()));
  }
}

}  // namespace

Eigen::MatrixXd penalty_root(const BasisSystem& basis, DiffOperator op) {
  check_operator(basis, op);
  const int K = basis.nbasis();
  if (whole_periods(basis, basis)) {
    return integral_matrix(basis, op.order, basis, op.order).diagonal().cwiseSqrt().asDiagonal();
  }
  const auto rule = product_rule(basis, basis);
  Eigen::MatrixXd rows = eval_basis(basis, rule.nodes, op.order);
  for (Eigen::Index q = 0; q < rows.rows(); ++q) rows.row(q) *= std::sqrt(rule.weights[q]);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(rows);
  Eigen::MatrixXd root = Eigen::MatrixXd::Zero(K, K);
  const Eigen::Index r = std::min<Eigen::Index>(K, rows.rows());
  root.topRows(r) = qr.matrixQR().topRows(r).triangularView<Eigen::Upper>();
  return root;
}

Eigen::MatrixXd penalty_matrix(const BasisSystem& basis, DiffOperator op) {
  check_operator(basis, op);
  return integral_matrix(basis, op.order, basis, op.order);
}

}  // namespace funflow
