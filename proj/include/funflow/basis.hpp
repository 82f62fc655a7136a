#pragma once

#include <Eigen/Dense>

#include <optional>
#include <span>
#include <vector>

namespace funflow {

/// Closed interval [lo, hi] with lo < hi, in time units (days).
class Interval {
 public:
  Interval(double lo, double hi);

  double lo() const noexcept { return lo_; }
  double hi() const noexcept { return hi_; }
  double length() const noexcept { return hi_ - lo_; }

  /// Tolerance used when deciding whether a time lies in the interval.
  double tolerance() const noexcept;
  bool contains(double t) const noexcept;
  /// Clamp `t` into the interval; throws OutOfDomain if it lies outside the
  /// tolerance band.
  double clamp_checked(double t) const;

  bool operator==(const Interval&) const = default;

 private:
  double lo_;
  double hi_;
};

/// Order m of the derivative operator D^m used by roughness penalties.
struct DiffOperator {
  int order = 2;
  bool operator==(const DiffOperator&) const = default;
};

enum class BasisKind { BSpline, Fourier };

/// A finite family of known functions on a common domain.
///
/// B-spline systems are clamped: the knot vector repeats each domain endpoint
/// `order` times, so nbasis = #interior knots + order. Fourier systems follow
/// the ordering {1, sin wt, cos wt, sin 2wt, cos 2wt, ...} with w = 2 pi / period
/// and t measured on the absolute time axis.
class BasisSystem {
 public:
  static BasisSystem bspline(Interval domain, std::vector<double> interior_knots,
                             int order);
  static BasisSystem fourier(Interval domain, int nbasis, double period);

  BasisKind kind() const noexcept { return kind_; }
  const Interval& domain() const noexcept { return domain_; }
  int nbasis() const noexcept { return nbasis_; }
  /// B-spline order (degree + 1); zero for Fourier systems.
  int order() const noexcept { return order_; }
  /// Fourier period; zero for B-spline systems.
  double period() const noexcept { return period_; }
  /// Full clamped knot vector (B-spline only).
  std::span<const double> knots() const noexcept { return knots_; }
  /// Interior knots (B-spline only).
  std::span<const double> interior_knots() const noexcept;
  /// Distinct breakpoints lo = b0 < b1 < ... < hi.
  std::vector<double> breakpoints() const;
  int harmonics() const noexcept { return kind_ == BasisKind::Fourier ? (nbasis_ - 1) / 2 : 0; }

  bool operator==(const BasisSystem&) const = default;

 private:
  BasisSystem(BasisKind kind, Interval domain, int nbasis, int order, double period,
              std::vector<double> knots);

  BasisKind kind_;
  Interval domain_;
  int nbasis_;
  int order_;
  double period_;
  std::vector<double> knots_;
};

/// B-spline system with equally spaced interior knots.
BasisSystem make_bspline(Interval domain, int nbasis, int order = 4);

/// B-spline system with caller-chosen interior knots (e.g. denser near peaks).
BasisSystem make_bspline_with_knots(Interval domain, std::vector<double> interior_knots,
                                    int order = 4);

/// Fourier system; period defaults to the domain length.
BasisSystem make_fourier(Interval domain, int nbasis,
                         std::optional<double> period = std::nullopt);

/// Matrix of basis values (or derivatives) with one row per time.
Eigen::MatrixXd eval_basis(const BasisSystem& basis, std::span<const double> times,
                           int deriv = 0);

/// Nodes and weights of a composite Gauss-Legendre rule.
struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// Gauss-Legendre nodes/weights on [-1, 1].
QuadratureRule gauss_legendre(int npoints);

/// Composite rule that integrates products of functions from `a` and `b`
/// exactly (B-spline) or to machine accuracy (Fourier) over their common
/// domain.
QuadratureRule product_rule(const BasisSystem& a, const BasisSystem& b);

/// Entry (k, l) = integral of D^deriv_rows phi_k times D^deriv_cols theta_l.
Eigen::MatrixXd integral_matrix(const BasisSystem& rows, int deriv_rows,
                                const BasisSystem& cols, int deriv_cols);

/// Entry (k, l) = integral of phi_k theta_l over the shared domain.
Eigen::MatrixXd gram_matrix(const BasisSystem& rows, const BasisSystem& cols);

/// Entry (k, l) = integral of (L phi_k)(L phi_l) with L = D^op.order.
Eigen::MatrixXd penalty_matrix(const BasisSystem& basis, DiffOperator op = {});

/// Upper-triangular K x K factor L with L'L = penalty_matrix(basis, op),
/// obtained by QR of the quadrature-weighted derivative rows so that the
/// penalty null space is preserved to working precision.
Eigen::MatrixXd penalty_root(const BasisSystem& basis, DiffOperator op = {});

}  // namespace funflow
