#pragma once

#include "funflow/cli/config.hpp"

#include <cstdint>
#include <exception>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>

namespace funflow::cli {

enum class Verb { Ingest, Smooth, FitScalar, FitFunctional, Baseline, Evaluate, Run };

std::string_view to_string(Verb v);

struct PipelineOptions {
  std::optional<std::filesystem::path> out_dir;  // overrides output.dir
  std::optional<std::uint64_t> seed;             // overrides cv.seed
  bool verbose = false;
  std::ostream* log = nullptr;  // progress lines when verbose
};

/// Runs one verb against `config` and writes its artifacts plus manifest.json
/// into the output directory. Returns the directory used. Throws funflow::Error
/// on failure.
std::filesystem::path run_verb(Verb verb, const RunConfig& config, const PipelineOptions& options);

/// Machine-readable failure report (error.json) for a failed run.
void write_error_report(const std::filesystem::path& dir, std::string_view verb,
                        const std::exception& error);

}  // namespace funflow::cli
