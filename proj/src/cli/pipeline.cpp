#include "funflow/cli/pipeline.hpp"

#include "funflow/baselines.hpp"
#include "funflow/error.hpp"
#include "funflow/flm_full.hpp"
#include "funflow/flm_scalar.hpp"
#include "funflow/metrics.hpp"
#include "funflow/parallel.hpp"

#include <Eigen/Core>
#include <boost/version.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <fstream>
#include <map>
#include <set>

namespace funflow::cli {

namespace {

using nlohmann::json;
constexpr const char* kVersion = "1.0.0";

std::string num(double v) { return format_number(v); }

CsvTable cv_table(const CVResult& cv) {
  CsvTable t{{"lambda", "score", "se"}, {}};
  for (std::size_t i = 0; i < cv.grid.size(); ++i)
    t.rows.push_back({num(cv.grid[i]), num(cv.scores[i]), num(cv.ses[i])});
  return t;
}

std::vector<DiscreteSeries> logged(const std::vector<DiscreteSeries>& in, double eps) {
  auto out = in;
  for (auto& s : out) s.values = preprocess_log(s.values, eps);
  return out;
}

class Run {
 public:
  Run(const RunConfig& c, const PipelineOptions& o)
      : cfg_(c), opt_(o), dir_(o.out_dir.value_or(c.output_dir)), seed_(o.seed.value_or(c.seed)) {
    std::filesystem::create_directories(dir_);
    manifest_["tool"] = "funflow";
    manifest_["version"] = kVersion;
    manifest_["seed"] = seed_;
    json conf = json::object();
    for (const auto& [k, v] : describe(cfg_)) conf[k] = v;
    conf["cv.seed"] = std::to_string(seed_);
    manifest_["config"] = conf;
    manifest_["libraries"] = {{"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                                            "." + std::to_string(EIGEN_MINOR_VERSION)},
                              {"boost", BOOST_LIB_VERSION}};
    manifest_["threads"] = max_threads();
  }

  const std::filesystem::path& dir() const { return dir_; }

  void ingest() {
    if (loaded_) return;
    timed("ingest", [&] {
      auto xt = ingest_csv(cfg_.covariate, cfg_.anchor, cfg_.covariate_domain);
      auto yt = ingest_csv(cfg_.response, cfg_.anchor, cfg_.response_domain);
      std::map<std::string, const DiscreteSeries*> ys;
      for (const auto& s : yt.series) ys[s.label] = &s;
      json dropped = json::array();
      for (const auto& s : xt.series) {
        const auto it = ys.find(s.label);
        if (it == ys.end()) {
          dropped.push_back(s.label);
          continue;
        }
        x_raw_.push_back(s);
        y_raw_.push_back(*it->second);
        ys.erase(it);
      }
      for (const auto& [label, _] : ys) dropped.push_back(label);
      if (x_raw_.size() < 3) {
        throw Error(ErrorKind::InsufficientData,
                    "only " + std::to_string(x_raw_.size()) + " labels have both covariate and response data");
      }
      json labels = json::array();
      for (const auto& s : x_raw_) labels.push_back(s.label);
      manifest_["ingest"] = {{"labels", labels},
                             {"n", x_raw_.size()},
                             {"unpaired_labels", dropped},
                             {"rejected_covariate", xt.rejected},
                             {"rejected_response", yt.rejected},
                             {"warnings_covariate", xt.warnings},
                             {"warnings_response", yt.warnings}};
      x_ = cfg_.log_covariate ? logged(x_raw_, cfg_.epsilon) : x_raw_;
      y_ = cfg_.log_response ? logged(y_raw_, cfg_.epsilon) : y_raw_;
      say("ingested " + std::to_string(x_raw_.size()) + " paired labels");
    });
    loaded_ = true;
  }

  void write_ingested() {
    ingest();
    export_csv(SeriesTable{x_raw_, {}, {}}, cfg_.anchor, dir_ / "covariate_ingested.csv");
    export_csv(SeriesTable{y_raw_, {}, {}}, cfg_.anchor, dir_ / "response_ingested.csv");
    outputs_.insert("covariate_ingested.csv");
    outputs_.insert("response_ingested.csv");
  }

  const FunctionalDataset& smooth_x() {
    if (!xs_) xs_ = smooth_one("x", x_, cfg_.smoothing_x, cfg_.covariate_domain, cfg_.lambda_smoothing_x);
    return *xs_;
  }
  const FunctionalDataset& smooth_y() {
    if (!ys_) ys_ = smooth_one("y", y_, cfg_.smoothing_y, cfg_.response_domain, cfg_.lambda_smoothing_y);
    return *ys_;
  }

  void flms() {
    smooth_x();
    timed("flms", [&] {
      const std::vector<double> y = scalar_response();
      const BasisSystem bb = cfg_.beta_s.build(cfg_.covariate_domain);
      const CVResult cv = loocv_flms(*xs_, y, bb, cfg_.lambda_flms, DiffOperator{2}, cfg_.rule);
      write("cv_flms.csv", cv_table(cv));
      const ScalarFit fit = fit_flms(*xs_, y, bb, cv.chosen);
      const auto grid = daily_grid(cfg_.covariate_domain);
      const ConfidenceBand band = beta_confidence_band(fit.model, grid, cfg_.level);
      CsvTable b{{"t", "lower", "center", "upper"}, {}};
      for (std::size_t j = 0; j < grid.size(); ++j)
        b.rows.push_back({num(grid[j]), num(band.lower[j]), num(band.center[j]), num(band.upper[j])});
      write("beta_flms.csv", b);
      write_scalar_fit("flms", y, fit.diagnostics.fitted, cv.scores[cv.chosen_index]);
      select("flms", cv.chosen, cv.rule);
      manifest_["flms"] = {{"intercept", fit.model.intercept},
                           {"effective_df", fit.diagnostics.effective_df},
                           {"sigma2", fit.model.sigma2}};
    });
  }

  void lm() {
    ingest();
    timed("lm", [&] {
      const std::vector<double> y = scalar_response();
      const AggLinearModel m = fit_agg_lm(x_raw_, y);
      const auto fitted = predict_agg_lm(m, x_raw_);
      // LOOCV by explicit refit
      double cv = 0.0;
      for (std::size_t i = 0; i < y.size(); ++i) {
        std::vector<DiscreteSeries> xs;
        std::vector<double> ys;
        for (std::size_t k = 0; k < y.size(); ++k)
          if (k != i) {
            xs.push_back(x_raw_[k]);
            ys.push_back(y[k]);
          }
        const auto mi = fit_agg_lm(xs, ys);
        const double e = predict_agg_lm(mi, std::span(&x_raw_[i], 1))[0] - y[i];
        cv += e * e / static_cast<double>(y.size());
      }
      write("lm_model.csv", {{"slope", "intercept", "slope_se", "p_value"},
                             {{num(m.slope), num(m.intercept), num(m.slope_se), num(m.p_value)}}});
      write_scalar_fit("lm", y, fitted, cv);
    });
  }

  void flmf() {
    smooth_x();
    smooth_y();
    timed("flmf", [&] {
      const FlmfBases bases{cfg_.beta_s.build(cfg_.covariate_domain), cfg_.beta_t.build(cfg_.response_domain),
                            cfg_.alpha.build(cfg_.response_domain)};
      const FlmfLambdaGrids grids{cfg_.lambda_flmf_0, cfg_.lambda_flmf_1, cfg_.lambda_flmf_2};
      LocvOptions lo;
      lo.eval_times = daily_grid(cfg_.response_domain);
      const bool raw = cfg_.error_target == "raw";
      if (raw) lo.raw_response = y_;
      const LocvResult cv = locv_flmf(*xs_, *ys_, bases, grids, {}, lo);

      CsvTable all{{"lambda0", "lambda1", "lambda2", "score", "se"}, {}};
      for (std::size_t i = 0; i < cv.triples.size(); ++i) {
        const auto& l = cv.triples[i];
        all.rows.push_back({num(l.lambda0), num(l.lambda1), num(l.lambda2), num(cv.scores[i]), num(cv.ses[i])});
      }
      write("cv_flmf.csv", all);
      for (int k = 0; k < 3; ++k) write("cv_flmf_lambda" + std::to_string(k) + ".csv", cv_table(cv.profiles[k]));
      CsvTable pl{{"label", "error"}, {}};
      for (std::size_t i = 0; i < cv.labels.size(); ++i) pl.rows.push_back({cv.labels[i], num(cv.per_label_error[i])});
      write("per_label_flmf.csv", pl);
      CsvTable pt{{"t", "error"}, {}};
      for (std::size_t j = 0; j < cv.eval_times.size(); ++j)
        pt.rows.push_back({num(cv.eval_times[j]), num(cv.per_time_error[j])});
      write("per_time_flmf.csv", pt);

      const FullFLMModel model = fit_flmf(*xs_, *ys_, bases, cv.chosen);
      const auto sg = daily_grid(cfg_.covariate_domain);
      const auto tg = daily_grid(cfg_.response_domain);
      const Eigen::MatrixXd surf = beta_surface(model, sg, tg);
      CsvTable st{{"s", "t", "value"}, {}};
      for (std::size_t a = 0; a < sg.size(); ++a)
        for (std::size_t b = 0; b < tg.size(); ++b) st.rows.push_back({num(sg[a]), num(tg[b]), num(surf(a, b))});
      write("beta_surface.csv", st);

      const CurvePrediction pred = predict_flmf(model, *xs_);
      const Eigen::MatrixXd fitted = eval_curves(pred.dataset, tg);
      const Eigen::MatrixXd smooth_actual = eval_curves(*ys_, tg);
      CsvTable ft{{"label", "t", "actual", "fitted"}, {}};
      for (Eigen::Index i = 0; i < fitted.rows(); ++i) {
        const auto& label = xs_->labels()[i];
        if (raw) {
          const auto& s = y_[i];
          for (std::size_t j = 0; j < s.times.size(); ++j) {
            const auto it = std::lower_bound(tg.begin(), tg.end(), s.times[j]);
            if (it == tg.end() || *it != s.times[j]) continue;
            ft.rows.push_back({label, num(s.times[j]), num(s.values[j]), num(fitted(i, it - tg.begin()))});
          }
        } else {
          for (std::size_t j = 0; j < tg.size(); ++j)
            ft.rows.push_back({label, num(tg[j]), num(smooth_actual(i, j)), num(fitted(i, j))});
        }
      }
      write("fitted_flmf.csv", ft);
      write("score_flmf.csv", {{"model", "cv"}, {{"flmf", num(cv.scores[cv.chosen_index])}}});
      const auto rule = cv.triples.size() == 1 ? CVRule::Fixed : CVRule::Minimum;
      select("flmf_0", cv.chosen.lambda0, rule);
      select("flmf_1", cv.chosen.lambda1, rule);
      select("flmf_2", cv.chosen.lambda2, rule);
      manifest_["flmf"] = {{"backward_mass_fraction", backward_mass_fraction(model)},
                           {"warnings", model.warnings},
                           {"error_target", cfg_.error_target}};
    });
  }

  void ann() {
    ingest();
    timed("ann", [&] {
      const auto& a = cfg_.ann;
      NetTrainConfig nc;
      nc.hidden = a.hidden;
      nc.max_epochs = a.max_epochs;
      nc.step_size = a.step_size;
      nc.momentum = a.momentum;
      nc.patience = a.patience;
      nc.validation_fraction = a.validation_fraction;
      nc.seed = seed_;

      std::vector<double> times;
      for (double t : daily_grid(cfg_.response_domain))
        if (t >= cfg_.response_domain.lo() + a.response_lags && t - a.lags >= cfg_.covariate_domain.lo())
          times.push_back(t);
      if (times.empty()) throw Error(ErrorKind::Config, "ann lags leave no forecast days in the response domain");

      std::vector<Eigen::MatrixXd> feats;
      std::vector<std::vector<double>> targets;
      for (std::size_t i = 0; i < x_.size(); ++i) {
        feats.push_back(make_joint_lag_matrix(x_[i], a.lags, y_[i], a.response_lags, times));
        targets.push_back(values_at(y_[i], times));
      }
      if (a.search_hidden) {
        const HiddenSearch hs = select_hidden_size(feats, targets, a.hidden_sizes, nc);
        CsvTable ht{{"hidden", "score"}, {}};
        for (std::size_t k = 0; k < hs.sizes.size(); ++k) ht.rows.push_back({std::to_string(hs.sizes[k]), num(hs.scores[k])});
        write("ann_hidden_search.csv", ht);
        nc.hidden = hs.chosen;
      }
      manifest_["ann"] = {{"hidden", nc.hidden}, {"lags", a.lags}, {"response_lags", a.response_lags}};

      const LoyoNetResult cv = loyo_lagged_net(x_, a.lags, y_, a.response_lags, times, nc);
      CsvTable pt{{"t", "horizon", "error"}, {}};
      for (std::size_t j = 0; j < times.size(); ++j)
        pt.rows.push_back({num(times[j]), std::to_string(j + 1), num(cv.per_time_error[j])});
      write("per_time_ann.csv", pt);
      CsvTable pl{{"label", "error"}, {}};
      for (std::size_t i = 0; i < cv.labels.size(); ++i) pl.rows.push_back({cv.labels[i], num(cv.per_label_error[i])});
      write("per_label_ann.csv", pl);

      // in-sample one-step fit on every label
      Eigen::MatrixXd f(static_cast<Eigen::Index>(feats.size() * times.size()), a.lags + a.response_lags);
      std::vector<double> tg;
      for (std::size_t i = 0; i < feats.size(); ++i) {
        f.middleRows(static_cast<Eigen::Index>(i * times.size()), feats[i].rows()) = feats[i];
        tg.insert(tg.end(), targets[i].begin(), targets[i].end());
      }
      const LaggedNetModel model = fit_lagged_net(f, tg, nc);
      const auto fitted = predict_lagged_net(model, f);
      CsvTable ft{{"label", "t", "actual", "fitted"}, {}};
      for (std::size_t i = 0; i < feats.size(); ++i)
        for (std::size_t j = 0; j < times.size(); ++j) {
          const std::size_t r = i * times.size() + j;
          ft.rows.push_back({x_[i].label, num(times[j]), num(tg[r]), num(fitted[r])});
        }
      write("fitted_ann.csv", ft);
      write("score_ann.csv", {{"model", "cv"}, {{"ann", num(cv.score)}}});
      manifest_["ann"]["epochs_run"] = model.epochs_run;
    });
  }

  void evaluate(const std::vector<std::string>& models) {
    timed("evaluate", [&] {
      std::vector<CriteriaInput> inputs;
      for (const auto& m : models) {
        const auto fitted_path = dir_ / ("fitted_" + m + ".csv");
        const auto score_path = dir_ / ("score_" + m + ".csv");
        if (!std::filesystem::exists(fitted_path) || !std::filesystem::exists(score_path)) {
          throw Error(ErrorKind::Io, "no fitted output for model '" + m + "' in " + dir_.string() +
                                         " (run the fitting verb first)");
        }
        const CsvTable f = read_csv(fitted_path);
        const auto cv = numeric_column(read_csv(score_path), "cv");
        if (cv.size() != 1) throw Error(ErrorKind::Parse, score_path.string() + ": expected one score row");
        inputs.push_back({m, numeric_column(f, "actual"), numeric_column(f, "fitted"), cv[0]});
      }
      CsvTable t{{"model_name", "bias", "rmse", "cv", "r2"}, {}};
      for (const auto& r : criteria_table(inputs)) t.rows.push_back({r.model_name, num(r.bias), num(r.rmse), num(r.cv), num(r.r2)});
      write("criteria.csv", t);
    });
  }

  void finish(Verb verb) {
    manifest_["verb"] = std::string(to_string(verb));
    manifest_["selected_lambdas"] = selected_;
    manifest_["timings_ms"] = timings_;
    manifest_["outputs"] = outputs_;
    if (!selected_.empty()) {
      CsvTable t{{"role", "lambda", "rule"}, {}};
      for (const auto& [role, v] : selected_.items()) t.rows.push_back({role, num(v["lambda"]), v["rule"]});
      write("selected_lambdas.csv", t);
      manifest_["outputs"] = outputs_;
    }
    std::ofstream out(dir_ / "manifest.json");
    out << manifest_.dump(2) << "\n";
    if (!out) throw Error(ErrorKind::Io, "cannot write manifest.json");
  }

 private:
  template <class F>
  void timed(const std::string& stage, F&& body) {
    say(stage + " ...");
    const auto t0 = std::chrono::steady_clock::now();
    body();
    const auto ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    timings_[stage] = ms;
    say(stage + " done in " + num(ms) + " ms");
  }

  void say(const std::string& s) {
    if (opt_.verbose && opt_.log) *opt_.log << "[funflow] " << s << "\n";
  }

  void write(const std::string& name, const CsvTable& t) {
    write_csv(dir_ / name, t);
    outputs_.insert(name);
  }

  void select(const std::string& role, double lambda, CVRule rule) {
    selected_[role] = {{"lambda", lambda}, {"rule", std::string(to_string(rule))}};
  }

  static std::vector<double> values_at(const DiscreteSeries& s, std::span<const double> times) {
    std::vector<double> out;
    for (double t : times) {
      const auto it = std::lower_bound(s.times.begin(), s.times.end(), t - 1e-9);
      if (it == s.times.end() || std::abs(*it - t) > 1e-9) {
        throw Error(ErrorKind::History, "series '" + s.label + "' has no value at t = " + num(t));
      }
      out.push_back(s.values[static_cast<std::size_t>(it - s.times.begin())]);
    }
    return out;
  }

  std::vector<double> scalar_response() {
    ingest();
    std::vector<double> y;
    for (const auto& s : y_raw_) {
      double total = 0.0;
      for (double v : s.values) total += v;
      y.push_back(cfg_.scalar_response == "mean" ? total / static_cast<double>(s.values.size()) : total);
    }
    return y;
  }

  void write_scalar_fit(const std::string& model, const std::vector<double>& y,
                        const std::vector<double>& fitted, double cv) {
    CsvTable t{{"label", "actual", "fitted"}, {}};
    for (std::size_t i = 0; i < y.size(); ++i) t.rows.push_back({y_raw_[i].label, num(y[i]), num(fitted[i])});
    write("fitted_" + model + ".csv", t);
    write("score_" + model + ".csv", {{"model", "cv"}, {{model, num(cv)}}});
  }

  FunctionalDataset smooth_one(const std::string& var, const std::vector<DiscreteSeries>& series,
                               const BasisSpec& spec, const Interval& domain, const std::vector<double>& grid) {
    ingest();
    std::optional<FunctionalDataset> out;
    timed("smooth_" + var, [&] {
      const BasisSystem basis = spec.build(domain);
      double lambda = grid.front();
      CVRule rule = CVRule::Fixed;
      if (grid.size() > 1) {
        const CVResult cv = select_lambda(series, basis, grid, cfg_.folds, cfg_.rule);
        write("cv_smooth_" + var + ".csv", cv_table(cv));
        lambda = cv.chosen;
        rule = cv.rule;
      }
      select("smoothing_" + var, lambda, rule);
      SmoothResult r = smooth(series, basis, lambda);
      const auto days = daily_grid(domain);
      const Eigen::MatrixXd v = eval_curves(r.data, days);
      CsvTable t{{"label", "t", "value"}, {}};
      for (Eigen::Index i = 0; i < v.rows(); ++i)
        for (std::size_t j = 0; j < days.size(); ++j) t.rows.push_back({r.data.labels()[i], num(days[j]), num(v(i, j))});
      write("curves_" + var + ".csv", t);
      json edf = json::array();
      for (const auto& rep : r.reports) edf.push_back(rep.effective_df);
      manifest_["smoothing_" + var] = {{"effective_df", edf}};
      out.emplace(std::move(r.data));
    });
    return std::move(*out);
  }

  RunConfig cfg_;
  PipelineOptions opt_;
  std::filesystem::path dir_;
  std::uint64_t seed_;
  json manifest_;
  json selected_ = json::object();
  json timings_ = json::object();
  std::set<std::string> outputs_;
  bool loaded_ = false;
  std::vector<DiscreteSeries> x_raw_, y_raw_, x_, y_;
  std::optional<FunctionalDataset> xs_, ys_;
};

}  // namespace

std::string_view to_string(Verb v) {
  switch (v) {
    case Verb::Ingest: return "ingest";
    case Verb::Smooth: return "smooth";
    case Verb::FitScalar: return "fit-scalar";
    case Verb::FitFunctional: return "fit-functional";
    case Verb::Baseline: return "baseline";
    case Verb::Evaluate: return "evaluate";
    case Verb::Run: return "run";
  }
  return "?";
}

std::filesystem::path run_verb(Verb verb, const RunConfig& config, const PipelineOptions& options) {
  Run run(config, options);
  std::vector<std::string> models;
  for (const char* m : {"flms", "lm", "flmf", "ann"})
    if (config.wants(m)) models.push_back(m);

  switch (verb) {
    case Verb::Ingest:
      run.write_ingested();
      break;
    case Verb::Smooth:
      run.smooth_x();
      run.smooth_y();
      break;
    case Verb::FitScalar:
      run.flms();
      break;
    case Verb::FitFunctional:
      run.flmf();
      break;
    case Verb::Baseline:
      if (config.wants("lm") || !config.wants("ann")) run.lm();
      if (config.wants("ann")) run.ann();
      break;
    case Verb::Evaluate:
      run.evaluate(models);
      break;
    case Verb::Run:
      run.smooth_x();  // curves for both variables are part of every full run
      run.smooth_y();
      for (const auto& m : models) {
        if (m == "flms") run.flms();
        if (m == "lm") run.lm();
        if (m == "flmf") run.flmf();
        if (m == "ann") run.ann();
      }
      run.evaluate(models);
      break;
  }
  run.finish(verb);
  return run.dir();
}

void write_error_report(const std::filesystem::path& dir, std::string_view verb, const std::exception& error) {
  json j;
  j["verb"] = std::string(verb);
  j["message"] = error.what();
  if (const auto* e = dynamic_cast<const Error*>(&error)) {
    j["error"] = std::string(to_string(e->kind()));
  } else {
    j["error"] = "internal";
  }
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  std::ofstream out(dir / "error.json");
  out << j.dump(2) << "\n";
}

}  // namespace funflow::cli
