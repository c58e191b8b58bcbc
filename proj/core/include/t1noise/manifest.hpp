#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "t1noise/config.hpp"

namespace t1noise::workbench {

struct FileDigest {
  std::string path;
  std::string sha256;
};

// Written as manifest.json next to every output set.
struct RunManifest {
  std::string tool = "t1noise";
  std::string version;
  std::string pipeline;
  std::string config_sha256;  // of config_json
  std::string config_json;    // resolved configuration, output_dir cleared
  std::vector<std::uint64_t> seeds;
  std::string rng_algorithm;
  std::vector<FileDigest> inputs;
  std::vector<FileDigest> outputs;
  // Excluded from reproducibility comparisons.
  std::string started_utc;
  double wall_seconds = 0.0;
};

std::string sha256_hex(std::string_view data);
std::string sha256_file(const std::filesystem::path& path);

std::string manifest_to_json(const RunManifest& manifest);
RunManifest manifest_from_json(std::string_view text, const std::string& source = "<manifest>");

// The manifest text with its timing block removed.
std::string strip_timing(std::string_view manifest_json);

// Configuration recorded in a manifest. Input files are re-hashed; a digest
// mismatch is a ValidationError.
RunConfig config_from_manifest(const std::filesystem::path& manifest_path);

std::string tool_version();

}  // namespace t1noise::workbench
