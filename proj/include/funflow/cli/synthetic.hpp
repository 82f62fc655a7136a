#pragma once

#include "funflow/cli/csv_io.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace funflow::cli {

struct SyntheticSpec {
  std::string scenario;  // flms-varying-beta | flmf-bump | null
  std::uint64_t seed = 1;
  int n = 32;
  int first_year = 1981;
  CalendarAnchor anchor;
  Interval covariate_domain{0, 153};
  Interval response_domain{30, 153};
};

struct SyntheticData {
  SeriesTable covariate;  // daily, over the covariate domain
  SeriesTable response;   // daily, over the response domain
  /// Ground truth: columns t,value for flms-varying-beta, s,t,value otherwise.
  CsvTable truth;
  /// flms-varying-beta only: the scalar responses (sum of the daily response).
  std::vector<double> scalar_response;
};

std::vector<std::string> scenario_names();

/// Throws Usage for an unknown scenario or n < 4.
SyntheticData generate_synthetic(const SyntheticSpec& spec);

/// covariate.csv, response.csv and truth_beta.csv inside `dir`.
void write_synthetic(const SyntheticData& data, const CalendarAnchor& anchor,
                     const std::filesystem::path& dir);

/// Coefficient functions used by the scenarios.
double flms_true_beta(double t);
double flmf_true_beta(double s, double t);

}  // namespace funflow::cli
