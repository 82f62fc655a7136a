#include "funflow/cli/config.hpp"

#include "funflow/error.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <set>

namespace funflow::cli {

namespace {

using Values = std::vector<std::string>;

[[noreturn]] void bad(const std::string& key, const std::string& what) {
  throw Error(ErrorKind::Config, "config key '" + key + "': " + what);
}

const std::string& single(const std::string& key, const Values& v) {
  if (v.size() != 1) bad(key, "expected a single value");
  return v.front();
}

double as_double(const std::string& key, const std::string& s) {
  double out = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), out);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) bad(key, "'" + s + "' is not a number");
  return out;
}

long long as_int(const std::string& key, const std::string& s) {
  long long out = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), out);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) bad(key, "'" + s + "' is not an integer");
  return out;
}

bool as_bool(const std::string& key, const std::string& s) {
  if (s == "true") return true;
  if (s == "false") return false;
  bad(key, "expected true or false");
}

std::vector<double> as_doubles(const std::string& key, const Values& v) {
  std::vector<double> out;
  for (const auto& s : v) out.push_back(as_double(key, s));
  return out;
}

Interval as_interval(const std::string& key, const Values& v) {
  if (v.size() != 2) bad(key, "expected [lo, hi]");
  try {
    return Interval(as_double(key, v[0]), as_double(key, v[1]));
  } catch (const Error& e) {
    bad(key, e.what());
  }
}

std::string join(const std::vector<double>& v) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + format_number(v[i]);
  return s + "]";
}

}  // namespace

BasisSystem BasisSpec::build(const Interval& domain) const {
  if (kind == "bspline") return make_bspline(domain, nbasis, order);
  if (kind == "fourier") return make_fourier(domain, nbasis, period);
  throw Error(ErrorKind::Config, "unknown basis kind '" + kind + "' (use bspline or fourier)");
}

bool RunConfig::wants(const std::string& model) const {
  return std::find(models.begin(), models.end(), model) != models.end();
}

RunConfig parse_config(std::istream& in, const std::filesystem::path& base_dir) {
  RunConfig c;
  std::map<std::string, std::function<void(const std::string&, const Values&)>> setters;
  auto path_key = [&](const std::string& k, std::filesystem::path& p) {
    setters[k] = [&p, &base_dir](const std::string& key, const Values& v) {
      std::filesystem::path q = single(key, v);
      p = q.is_absolute() ? q : base_dir / q;
    };
  };
  path_key("input.covariate", c.covariate);
  path_key("input.response", c.response);
  path_key("output.dir", c.output_dir);
  setters["domains.response"] = [&](auto& k, auto& v) { c.response_domain = as_interval(k, v); };
  setters["domains.covariate"] = [&](auto& k, auto& v) { c.covariate_domain = as_interval(k, v); };
  setters["domains.anchor"] = [&](auto& k, auto& v) { c.anchor = parse_anchor(single(k, v)); };
  setters["preprocessing.log_covariate"] = [&](auto& k, auto& v) { c.log_covariate = as_bool(k, single(k, v)); };
  setters["preprocessing.log_response"] = [&](auto& k, auto& v) { c.log_response = as_bool(k, single(k, v)); };
  setters["preprocessing.epsilon"] = [&](auto& k, auto& v) { c.epsilon = as_double(k, single(k, v)); };

  const std::vector<std::pair<std::string, BasisSpec*>> roles{{"smoothing_x", &c.smoothing_x},
                                                              {"smoothing_y", &c.smoothing_y},
                                                              {"beta_s", &c.beta_s},
                                                              {"beta_t", &c.beta_t},
                                                              {"alpha", &c.alpha}};
  for (const auto& [role, spec] : roles) {
    BasisSpec* b = spec;
    const std::string p = "basis." + role + ".";
    setters[p + "kind"] = [b](auto& k, auto& v) { b->kind = single(k, v); };
    setters[p + "nbasis"] = [b](auto& k, auto& v) { b->nbasis = static_cast<int>(as_int(k, single(k, v))); };
    setters[p + "order"] = [b](auto& k, auto& v) { b->order = static_cast<int>(as_int(k, single(k, v))); };
    setters[p + "period"] = [b](auto& k, auto& v) { b->period = as_double(k, single(k, v)); };
  }

  const std::vector<std::pair<std::string, std::vector<double>*>> grids{
      {"smoothing_x", &c.lambda_smoothing_x}, {"smoothing_y", &c.lambda_smoothing_y},
      {"flms", &c.lambda_flms},               {"flmf_0", &c.lambda_flmf_0},
      {"flmf_1", &c.lambda_flmf_1},           {"flmf_2", &c.lambda_flmf_2}};
  for (const auto& [role, grid] : grids) {
    std::vector<double>* g = grid;
    setters["lambda." + role] = [g](auto& k, auto& v) { *g = as_doubles(k, v); };
    setters["lambda." + role + "_log10"] = [g](auto& k, auto& v) {
      const auto e = as_doubles(k, v);
      if (e.size() != 3 || !(e[2] > 0.0) || e[1] < e[0]) bad(k, "expected [lo_exponent, hi_exponent, step]");
      *g = log10_grid(e[0], e[1], e[2]);
    };
  }

  setters["cv.folds"] = [&](auto& k, auto& v) { c.folds = static_cast<int>(as_int(k, single(k, v))); };
  setters["cv.rule"] = [&](auto& k, auto& v) {
    try {
      c.rule = parse_cv_rule(single(k, v));
    } catch (const Error& e) {
      bad(k, e.what());
    }
  };
  setters["cv.seed"] = [&](auto& k, auto& v) { c.seed = static_cast<std::uint64_t>(as_int(k, single(k, v))); };
  setters["cv.level"] = [&](auto& k, auto& v) { c.level = as_double(k, single(k, v)); };
  setters["model.models"] = [&](auto&, auto& v) { c.models = v; };
  setters["model.scalar_response"] = [&](auto& k, auto& v) { c.scalar_response = single(k, v); };
  setters["model.error_target"] = [&](auto& k, auto& v) { c.error_target = single(k, v); };

  auto& a = c.ann;
  setters["ann.lags"] = [&](auto& k, auto& v) { a.lags = static_cast<int>(as_int(k, single(k, v))); };
  setters["ann.hidden"] = [&](auto& k, auto& v) { a.hidden = static_cast<int>(as_int(k, single(k, v))); };
  setters["ann.response_lags"] = [&](auto& k, auto& v) { a.response_lags = static_cast<int>(as_int(k, single(k, v))); };
  setters["ann.max_epochs"] = [&](auto& k, auto& v) { a.max_epochs = static_cast<int>(as_int(k, single(k, v))); };
  setters["ann.step_size"] = [&](auto& k, auto& v) { a.step_size = as_double(k, single(k, v)); };
  setters["ann.momentum"] = [&](auto& k, auto& v) { a.momentum = as_double(k, single(k, v)); };
  setters["ann.patience"] = [&](auto& k, auto& v) { a.patience = static_cast<int>(as_int(k, single(k, v))); };
  setters["ann.validation_fraction"] = [&](auto& k, auto& v) { a.validation_fraction = as_double(k, single(k, v)); };
  setters["ann.search_hidden"] = [&](auto& k, auto& v) { a.search_hidden = as_bool(k, single(k, v)); };
  setters["ann.hidden_sizes"] = [&](auto& k, auto& v) {
    a.hidden_sizes.clear();
    for (const auto& s : v) a.hidden_sizes.push_back(static_cast<int>(as_int(k, s)));
  };

  std::vector<CLI::ConfigItem> items;
  try {
    items = CLI::ConfigTOML().from_config(in);
  } catch (const CLI::Error& e) {
    throw Error(ErrorKind::Config, std::string("malformed config: ") + e.what());
  }
  std::set<std::string> seen;
  for (const auto& item : items) {
    if (item.name == "++" || item.name == "--") continue;  // section markers
    std::string key;
    for (const auto& p : item.parents) key += p + ".";
    key += item.name;
    const auto it = setters.find(key);
    if (it == setters.end()) bad(key, "unknown key");
    if (!seen.insert(key).second) bad(key, "given twice");
    it->second(key, item.inputs);
  }

  if (c.covariate.empty() || c.response.empty()) {
    throw Error(ErrorKind::Config, "input.covariate and input.response are required");
  }
  if (c.covariate_domain.lo() > c.response_domain.lo()) {
    throw Error(ErrorKind::Config, "the covariate domain must start no later than the response domain");
  }
  if (!(c.epsilon > 0.0)) bad("preprocessing.epsilon", "must be positive");
  if (c.folds < 2) bad("cv.folds", "must be >= 2");
  if (!(c.level > 0.0 && c.level < 1.0)) bad("cv.level", "must lie in (0, 1)");
  static const std::set<std::string> known{"flms", "flmf", "lm", "ann"};
  if (c.models.empty()) bad("model.models", "list at least one model");
  for (const auto& m : c.models)
    if (!known.count(m)) bad("model.models", "unknown model '" + m + "' (use flms, flmf, lm, ann)");
  if (c.scalar_response != "sum" && c.scalar_response != "mean") bad("model.scalar_response", "use sum or mean");
  if (c.error_target != "smooth" && c.error_target != "raw") bad("model.error_target", "use smooth or raw");
  if (a.lags < 1 || a.response_lags < 0) bad("ann.lags", "need lags >= 1 and response_lags >= 0");
  for (const auto* g : {&c.lambda_smoothing_x, &c.lambda_smoothing_y, &c.lambda_flms, &c.lambda_flmf_0,
                        &c.lambda_flmf_1, &c.lambda_flmf_2}) {
    if (g->empty()) throw Error(ErrorKind::Config, "lambda grids must be nonempty");
    for (std::size_t i = 0; i < g->size(); ++i)
      if (!((*g)[i] >= 0.0) || (i > 0 && !((*g)[i] > (*g)[i - 1])))
        throw Error(ErrorKind::Config, "lambda grids must be strictly increasing and >= 0");
  }
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open config '" + path.string() + "'");
  return parse_config(in, path.parent_path());
}

std::vector<std::pair<std::string, std::string>> describe(const RunConfig& c) {
  std::vector<std::pair<std::string, std::string>> out;
  auto iv = [](const Interval& i) { return "[" + format_number(i.lo()) + ", " + format_number(i.hi()) + "]"; };
  auto basis = [&](const std::string& role, const BasisSpec& b) {
    out.emplace_back("basis." + role + ".kind", b.kind);
    out.emplace_back("basis." + role + ".nbasis", std::to_string(b.nbasis));
    out.emplace_back("basis." + role + ".order", std::to_string(b.order));
    if (b.period) out.emplace_back("basis." + role + ".period", format_number(*b.period));
  };
  out.emplace_back("input.covariate", c.covariate.filename().string());
  out.emplace_back("input.response", c.response.filename().string());
  out.emplace_back("domains.response", iv(c.response_domain));
  out.emplace_back("domains.covariate", iv(c.covariate_domain));
  out.emplace_back("domains.anchor", to_string(c.anchor));
  out.emplace_back("preprocessing.log_covariate", c.log_covariate ? "true" : "false");
  out.emplace_back("preprocessing.log_response", c.log_response ? "true" : "false");
  out.emplace_back("preprocessing.epsilon", format_number(c.epsilon));
  basis("smoothing_x", c.smoothing_x);
  basis("smoothing_y", c.smoothing_y);
  basis("beta_s", c.beta_s);
  basis("beta_t", c.beta_t);
  basis("alpha", c.alpha);
  out.emplace_back("lambda.smoothing_x", join(c.lambda_smoothing_x));
  out.emplace_back("lambda.smoothing_y", join(c.lambda_smoothing_y));
  out.emplace_back("lambda.flms", join(c.lambda_flms));
  out.emplace_back("lambda.flmf_0", join(c.lambda_flmf_0));
  out.emplace_back("lambda.flmf_1", join(c.lambda_flmf_1));
  out.emplace_back("lambda.flmf_2", join(c.lambda_flmf_2));
  out.emplace_back("cv.folds", std::to_string(c.folds));
  out.emplace_back("cv.rule", std::string(to_string(c.rule)));
  out.emplace_back("cv.seed", std::to_string(c.seed));
  out.emplace_back("cv.level", format_number(c.level));
  std::string models;
  for (const auto& m : c.models) models += (models.empty() ? "" : ",") + m;
  out.emplace_back("model.models", models);
  out.emplace_back("model.scalar_response", c.scalar_response);
  out.emplace_back("model.error_target", c.error_target);
  out.emplace_back("ann.lags", std::to_string(c.ann.lags));
  out.emplace_back("ann.hidden", std::to_string(c.ann.hidden));
  out.emplace_back("ann.response_lags", std::to_string(c.ann.response_lags));
  out.emplace_back("ann.max_epochs", std::to_string(c.ann.max_epochs));
  out.emplace_back("ann.step_size", format_number(c.ann.step_size));
  out.emplace_back("ann.momentum", format_number(c.ann.momentum));
  out.emplace_back("ann.patience", std::to_string(c.ann.patience));
  out.emplace_back("ann.validation_fraction", format_number(c.ann.validation_fraction));
  out.emplace_back("ann.search_hidden", c.ann.search_hidden ? "true" : "false");
  return out;
}

}  // namespace funflow::cli
