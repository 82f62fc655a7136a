// funflow: batch front end for the functional regression toolkit.

#include "funflow/cli/pipeline.hpp"
#include "funflow/cli/synthetic.hpp"
#include "funflow/error.hpp"

#include <CLI11.hpp>

#include <iostream>

using namespace funflow;
using namespace funflow::cli;

int main(int argc, char** argv) {
  CLI::App app{"funflow: smoothing, functional linear models and baselines for daily series"};
  app.require_subcommand(1);

  std::string config_path, out_dir, scenario;
  std::uint64_t seed = 0;
  bool verbose = false;
  int n = 32;

  struct VerbSpec {
    const char* name;
    const char* help;
    Verb verb;
  };
  const VerbSpec verbs[] = {
      {"ingest", "read and validate the input CSVs", Verb::Ingest},
      {"smooth", "smooth both variables with cross-validated lambda", Verb::Smooth},
      {"fit-scalar", "fit the scalar-on-function model", Verb::FitScalar},
      {"fit-functional", "fit the function-on-function model", Verb::FitFunctional},
      {"baseline", "fit the aggregate linear model and/or lagged network", Verb::Baseline},
      {"evaluate", "build the criteria table from fitted outputs", Verb::Evaluate},
      {"run", "full pipeline", Verb::Run},
  };

  std::vector<std::pair<CLI::App*, Verb>> subs;
  for (const auto& v : verbs) {
    auto* sub = app.add_subcommand(v.name, v.help);
    sub->add_option("--config", config_path, "config file")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out_dir, "output directory (overrides output.dir)");
    sub->add_option("--seed", seed, "random seed (overrides cv.seed)");
    sub->add_flag("--verbose", verbose, "progress on stderr");
    subs.emplace_back(sub, v.verb);
  }
  auto* synth = app.add_subcommand("synth", "write a synthetic covariate/response pair");
  synth->add_option("--scenario", scenario, "flms-varying-beta | flmf-bump | null")->required();
  synth->add_option("--n", n, "number of years")->default_val(32);
  synth->add_option("--out", out_dir, "output directory")->required();
  synth->add_option("--seed", seed, "random seed")->default_val(1);
  synth->add_option("--config", config_path, "optional config supplying domains and anchor");
  synth->add_flag("--verbose", verbose, "progress on stderr");

  CLI11_PARSE(app, argc, argv);

  std::string verb_name = "synth";
  std::filesystem::path report_dir = out_dir.empty() ? std::filesystem::path(".") : std::filesystem::path(out_dir);
  try {
    if (synth->parsed()) {
      SyntheticSpec spec;
      spec.scenario = scenario;
      spec.seed = seed;
      spec.n = n;
      if (!config_path.empty()) {
        const RunConfig c = load_config(config_path);
        spec.anchor = c.anchor;
        spec.covariate_domain = c.covariate_domain;
        spec.response_domain = c.response_domain;
      }
      write_synthetic(generate_synthetic(spec), spec.anchor, out_dir);
      if (verbose) std::cerr << "[funflow] wrote scenario " << scenario << " (n = " << n << ") to " << out_dir << "\n";
      return 0;
    }
    for (const auto& [sub, verb] : subs) {
      if (!sub->parsed()) continue;
      verb_name = sub->get_name();
      const RunConfig cfg = load_config(config_path);
      PipelineOptions opt;
      if (!out_dir.empty()) opt.out_dir = out_dir;
      if (sub->count("--seed")) opt.seed = seed;
      opt.verbose = verbose;
      opt.log = &std::cerr;
      report_dir = opt.out_dir.value_or(cfg.output_dir);
      run_verb(verb, cfg, opt);
    }
  } catch (const std::exception& e) {
    std::cerr << "funflow " << verb_name << ": ";
    if (const auto* fe = dynamic_cast<const Error*>(&e)) std::cerr << to_string(fe->kind()) << ": ";
    std::cerr << e.what() << "\n";
    write_error_report(report_dir, verb_name, e);
    const auto* fe = dynamic_cast<const Error*>(&e);
    return fe && (fe->kind() == ErrorKind::Usage || fe->kind() == ErrorKind::Config) ? 2 : 1;
  }
  return 0;
}
