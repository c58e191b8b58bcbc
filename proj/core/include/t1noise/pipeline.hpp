#pragma once

#include <exception>
#include <filesystem>
#include <map>
#include <string>

#include "t1noise/config.hpp"
#include "t1noise/manifest.hpp"

namespace t1noise::workbench {

inline constexpr const char* kOutputRootEnv = "T1NOISE_OUTPUT_ROOT";

enum class ExitCode : int {
  success = 0,
  failure = 1,     // unexpected error
  validation = 2,  // ValidationError, ParseError, DomainError, usage
  numerical = 3,   // NumericalError, DegenerateInputError
  io = 4,          // IoError
  planning = 5,    // PlanningError
};

ExitCode exit_code_for(const std::exception& e);

// $T1NOISE_OUTPUT_ROOT when set and non-empty, else ./t1noise-out.
std::filesystem::path default_output_root();

// config.output_dir, or <default_output_root()>/<pipeline name>.
std::filesystem::path resolve_output_dir(const RunConfig& config);

// File name -> content, in a fixed order.
using OutputSet = std::map<std::string, std::string>;

struct PipelineRun {
  OutputSet outputs;
  std::vector<std::string> input_paths;
};

// Runs the pipeline in memory. Module errors are rethrown with the stage name
// prepended and their type preserved.
PipelineRun execute_pipeline(const RunConfig& config);

struct PipelineResult {
  std::filesystem::path output_dir;
  RunManifest manifest;
};

// execute_pipeline, then writes outputs and manifest.json into a staging
// directory that is renamed onto the output directory. Nothing is left behind
// on failure. An existing output directory is replaced only if it holds a
// manifest.json or is empty.
PipelineResult run_pipeline(const RunConfig& config);

}  // namespace t1noise::workbench
