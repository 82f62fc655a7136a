#include "funflow/cli/synthetic.hpp"

#include "funflow/error.hpp"
#include "funflow/metrics.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace funflow::cli {

namespace {

Eigen::MatrixXd stationary_noise(std::mt19937_64& rng, const Interval& domain, int n, int harmonics,
                                 double sd, std::span<const double> times) {
  std::normal_distribution<double> z(0.0, sd / std::sqrt(static_cast<double>(harmonics)));
  const double w = 2.0 * std::numbers::pi / domain.length();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(times.size()));
  for (int i = 0; i < n; ++i)
    for (int k = 1; k <= harmonics; ++k) {
      const double a = z(rng), b = z(rng);
      for (std::size_t j = 0; j < times.size(); ++j)
        out(i, j) += a * std::cos(k * w * times[j]) + b * std::sin(k * w * times[j]);
    }
  return out;
}

std::vector<double> fine_grid(double lo, double hi, double step) {
  std::vector<double> g;
  const int m = static_cast<int>(std::lround((hi - lo) / step));
  for (int j = 0; j <= m; ++j) g.push_back(lo + (hi - lo) * j / m);
  return g;
}

double trapezoid(std::span<const double> t, const Eigen::Ref<const Eigen::VectorXd>& f) {
  double s = 0.0;
  for (std::size_t j = 1; j < t.size(); ++j) s += 0.5 * (t[j] - t[j - 1]) * (f(j) + f(j - 1));
  return s;
}

SeriesTable as_table(const Eigen::MatrixXd& values, std::span<const double> days, int first_year) {
  SeriesTable t;
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    DiscreteSeries s{std::to_string(first_year + i), {days.begin(), days.end()}, {}};
    for (Eigen::Index j = 0; j < values.cols(); ++j) s.values.push_back(values(i, j));
    t.series.push_back(std::move(s));
  }
  return t;
}

CsvTable surface_truth(const SyntheticSpec& spec, bool zero) {
  CsvTable truth{{"s", "t", "value"}, {}};
  for (double s : daily_grid(spec.covariate_domain))
    for (double t : daily_grid(spec.response_domain))
      truth.rows.push_back({format_number(s), format_number(t), format_number(zero ? 0.0 : flmf_true_beta(s, t))});
  return truth;
}

SyntheticData varying_beta(const SyntheticSpec& spec, std::mt19937_64& rng) {
  const auto xdays = daily_grid(spec.covariate_domain);
  const auto ydays = daily_grid(spec.response_domain);
  const auto fine = fine_grid(spec.covariate_domain.lo(), spec.covariate_domain.hi(), 0.1);
  const int n = spec.n;

  // one draw of coefficients, evaluated on both grids
  const BasisSystem xb = make_bspline(spec.covariate_domain, 15);
  std::normal_distribution<double> z(0.0, 1.0);
  Eigen::MatrixXd c(n, xb.nbasis());
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < xb.nbasis(); ++k) c(i, k) = z(rng);
  const Eigen::MatrixXd x_fine = (c * eval_basis(xb, fine).transpose()).array() + 2.0;
  Eigen::MatrixXd x_daily = (c * eval_basis(xb, xdays).transpose()).array() + 2.0;
  std::normal_distribution<double> day_noise(0.0, 0.05);
  for (Eigen::Index i = 0; i < x_daily.rows(); ++i)
    for (Eigen::Index j = 0; j < x_daily.cols(); ++j) x_daily(i, j) += day_noise(rng);

  Eigen::VectorXd beta(fine.size());
  for (std::size_t j = 0; j < fine.size(); ++j) beta(j) = flms_true_beta(fine[j]);
  Eigen::VectorXd signal(n);
  for (int i = 0; i < n; ++i) signal(i) = trapezoid(fine, x_fine.row(i).transpose().cwiseProduct(beta));
  const double sd = std::sqrt((signal.array() - signal.mean()).square().sum() / (n - 1));
  std::normal_distribution<double> eps(0.0, sd / std::sqrt(10.0));  // SNR 10

  // spread each total over the response days with a fixed seasonal shape
  Eigen::VectorXd shape(ydays.size());
  for (std::size_t j = 0; j < ydays.size(); ++j)
    shape(j) = 1.0 + 0.5 * std::sin(std::numbers::pi * (ydays[j] - ydays.front()) /
                                    (ydays.back() - ydays.front()));
  shape /= shape.sum();

  SyntheticData out;
  Eigen::MatrixXd y_daily(n, ydays.size());
  for (int i = 0; i < n; ++i) {
    const double y = 100.0 + signal(i) + eps(rng);
    y_daily.row(i) = y * shape.transpose();
    out.scalar_response.push_back(y_daily.row(i).sum());
  }
  out.covariate = as_table(x_daily, xdays, spec.first_year);
  out.response = as_table(y_daily, ydays, spec.first_year);
  out.truth = {{"t", "value"}, {}};
  for (double t : xdays) out.truth.rows.push_back({format_number(t), format_number(flms_true_beta(t))});
  return out;
}

SyntheticData bump(const SyntheticSpec& spec, std::mt19937_64& rng, bool null) {
  const auto xdays = daily_grid(spec.covariate_domain);
  const auto ydays = daily_grid(spec.response_domain);
  const auto fine = fine_grid(spec.covariate_domain.lo(), spec.covariate_domain.hi(), 0.25);
  const int n = spec.n;

  const BasisSystem xb = make_bspline(spec.covariate_domain, 20);
  std::normal_distribution<double> z(0.0, 1.0);
  Eigen::MatrixXd c(n, xb.nbasis());
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < xb.nbasis(); ++k) c(i, k) = z(rng);
  const Eigen::MatrixXd x_fine = (c * eval_basis(xb, fine).transpose()).array() + 1.0;
  Eigen::MatrixXd x_daily = (c * eval_basis(xb, xdays).transpose()).array() + 1.0;
  std::normal_distribution<double> day_noise(0.0, 0.05);
  for (Eigen::Index i = 0; i < x_daily.rows(); ++i)
    for (Eigen::Index j = 0; j < x_daily.cols(); ++j) x_daily(i, j) += day_noise(rng);

  // persistent year-level noise the covariate cannot explain; a random
  // Fourier sum has the same variance (0.3^2) on every day
  const Eigen::MatrixXd noise = stationary_noise(rng, spec.response_domain, n, 30, 0.3, ydays);
  Eigen::MatrixXd y_daily(n, ydays.size());
  for (std::size_t j = 0; j < ydays.size(); ++j) {
    const double t = ydays[j];
    Eigen::VectorXd b(fine.size());
    for (std::size_t k = 0; k < fine.size(); ++k) b(k) = null ? 0.0 : flmf_true_beta(fine[k], t);
    const double alpha = 2.0 + std::sin(2.0 * std::numbers::pi * t / spec.response_domain.hi());
    for (int i = 0; i < n; ++i) y_daily(i, j) = alpha + trapezoid(fine, x_fine.row(i).transpose().cwiseProduct(b));
  }
  y_daily += noise;
  for (Eigen::Index i = 0; i < y_daily.rows(); ++i)
    for (Eigen::Index j = 0; j < y_daily.cols(); ++j) y_daily(i, j) += day_noise(rng);

  SyntheticData out;
  out.covariate = as_table(x_daily, xdays, spec.first_year);
  out.response = as_table(y_daily, ydays, spec.first_year);
  out.truth = surface_truth(spec, null);
  return out;
}

}  // namespace

double flms_true_beta(double t) { return std::sin(2.0 * std::numbers::pi * t / 153.0); }

double flmf_true_beta(double s, double t) {
  // bump just below the diagonal: y at t responds to x a few days earlier
  if (s > t) return 0.0;
  const double lag = t - s - 5.0;
  return 0.05 * std::exp(-lag * lag / (2.0 * 8.0 * 8.0));
}

std::vector<std::string> scenario_names() { return {"flms-varying-beta", "flmf-bump", "null"}; }

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  if (spec.n < 4) throw Error(ErrorKind::Usage, "synthetic data needs n >= 4");
  std::mt19937_64 rng(spec.seed);
  if (spec.scenario == "flms-varying-beta") return varying_beta(spec, rng);
  if (spec.scenario == "flmf-bump") return bump(spec, rng, false);
  if (spec.scenario == "null") return bump(spec, rng, true);
  throw Error(ErrorKind::Usage, "unknown scenario '" + spec.scenario +
                                    "' (use flms-varying-beta, flmf-bump or null)");
}

void write_synthetic(const SyntheticData& data, const CalendarAnchor& anchor,
                     const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  export_csv(data.covariate, anchor, dir / "covariate.csv");
  export_csv(data.response, anchor, dir / "response.csv");
  write_csv(dir / "truth_beta.csv", data.truth);
}

}  // namespace funflow::cli
