#pragma once

#include "funflow/basis.hpp"
#include "funflow/cli/csv_io.hpp"
#include "funflow/smoothing.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace funflow::cli {

struct BasisSpec {
  std::string kind = "bspline";  // bspline | fourier
  int nbasis = 20;
  int order = 4;
  std::optional<double> period;  // fourier only

  BasisSystem build(const Interval& domain) const;
};

struct AnnSettings {
  int lags = 3;
  int hidden = 5;
  int response_lags = 0;  // 0: covariate lags only
  int max_epochs = 1500;
  double step_size = 0.05;
  double momentum = 0.9;
  int patience = 100;
  double validation_fraction = 0.2;
  bool search_hidden = false;
  std::vector<int> hidden_sizes{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
};

/// Everything a pipeline run needs. Relative input paths resolve against the
/// config file's directory.
struct RunConfig {
  // [input]
  std::filesystem::path covariate;
  std::filesystem::path response;
  // [domains]
  Interval response_domain{30, 153};
  Interval covariate_domain{0, 153};
  CalendarAnchor anchor;
  // [preprocessing]
  bool log_covariate = false;
  bool log_response = false;
  double epsilon = 0.05;
  // [basis.<role>]
  BasisSpec smoothing_x{"bspline", 40, 4, std::nullopt};
  BasisSpec smoothing_y{"bspline", 40, 4, std::nullopt};
  BasisSpec beta_s{"bspline", 10, 4, std::nullopt};
  BasisSpec beta_t{"bspline", 10, 4, std::nullopt};
  BasisSpec alpha{"bspline", 10, 4, std::nullopt};
  // [lambda]
  std::vector<double> lambda_smoothing_x{1.0};
  std::vector<double> lambda_smoothing_y{1.0};
  std::vector<double> lambda_flms{1.0};
  std::vector<double> lambda_flmf_0{1.0};
  std::vector<double> lambda_flmf_1{1.0};
  std::vector<double> lambda_flmf_2{1.0};
  // [cv]
  int folds = 10;
  CVRule rule = CVRule::LowestWithinOneSE;
  std::uint64_t seed = 1;
  double level = 0.95;
  // [model]
  std::vector<std::string> models{"flms", "lm"};
  std::string scalar_response = "sum";  // sum | mean of raw response days
  std::string error_target = "smooth";  // smooth | raw
  // [ann]
  AnnSettings ann;
  // [output]
  std::filesystem::path output_dir = "out";

  bool wants(const std::string& model) const;
};

RunConfig load_config(const std::filesystem::path& path);
RunConfig parse_config(std::istream& in, const std::filesystem::path& base_dir);

/// Flat key = value listing of every setting, for the run manifest.
std::vector<std::pair<std::string, std::string>> describe(const RunConfig& c);

}  // namespace funflow::cli
