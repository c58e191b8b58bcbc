#include "t1noise/manifest.hpp"

#include <openssl/evp.h>

#include <array>
#include <memory>

#include "json.hpp"
#include "t1noise/csv_io.hpp"
#include "t1noise/errors.hpp"

#ifndef T1NOISE_VERSION
#define T1NOISE_VERSION "0.0.0"
#endif

namespace t1noise::workbench {

using json = nlohmann::ordered_json;

std::string tool_version() { return T1NOISE_VERSION; }

std::string sha256_hex(std::string_view data) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md.data(), &len, EVP_sha256(), nullptr) != 1) {
    throw Error("SHA-256 computation failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out += kHex[md[i] >> 4];
    out += kHex[md[i] & 0xf];
  }
  return out;
}

std::string sha256_file(const std::filesystem::path& path) {
  return sha256_hex(io::read_text_file(path));
}

namespace {

json digests_json(const std::vector<FileDigest>& v) {
  json a = json::array();
  for (const auto& d : v) a.push_back({{"path", d.path}, {"sha256", d.sha256}});
  return a;
}

std::vector<FileDigest> digests_from(const json& a) {
  std::vector<FileDigest> out;
  for (const auto& d : a) out.push_back({d.at("path").get<std::string>(), d.at("sha256").get<std::string>()});
  return out;
}

}  // namespace

std::string manifest_to_json(const RunManifest& m) {
  json j;
  j["tool"] = m.tool;
  j["version"] = m.version;
  j["pipeline"] = m.pipeline;
  j["config_sha256"] = m.config_sha256;
  j["config"] = json::parse(m.config_json);
  j["seeds"] = m.seeds;
  j["rng_algorithm"] = m.rng_algorithm;
  j["inputs"] = digests_json(m.inputs);
  j["outputs"] = digests_json(m.outputs);
  j["timing"] = {{"started_utc", m.started_utc}, {"wall_seconds", m.wall_seconds}};
  return j.dump(2) + "\n";
}

RunManifest manifest_from_json(std::string_view text, const std::string& source) {
  try {
    const json j = json::parse(text);
    RunManifest m;
    m.tool = j.at("tool").get<std::string>();
    m.version = j.at("version").get<std::string>();
    m.pipeline = j.at("pipeline").get<std::string>();
    m.config_sha256 = j.at("config_sha256").get<std::string>();
    m.config_json = j.at("config").dump(2) + "\n";
    m.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    m.rng_algorithm = j.at("rng_algorithm").get<std::string>();
    m.inputs = digests_from(j.at("inputs"));
    m.outputs = digests_from(j.at("outputs"));
    if (j.contains("timing")) {
      m.started_utc = j["timing"].value("started_utc", "");
      m.wall_seconds = j["timing"].value("wall_seconds", 0.0);
    }
    return m;
  } catch (const json::exception& e) {
    throw ValidationError(source + ": malformed manifest: " + e.what());
  }
}

std::string strip_timing(std::string_view manifest_json) {
  try {
    json j = json::parse(manifest_json);
    j.erase("timing");
    return j.dump(2) + "\n";
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed manifest: ") + e.what());
  }
}

RunConfig config_from_manifest(const std::filesystem::path& manifest_path) {
  const RunManifest m = manifest_from_json(io::read_text_file(manifest_path), manifest_path.string());
  if (sha256_hex(m.config_json) != m.config_sha256) {
    throw ValidationError(manifest_path.string() + ": config digest does not match its content");
  }
  for (const auto& in : m.inputs) {
    if (sha256_file(in.path) != in.sha256) {
      throw ValidationError("input '" + in.path + "' changed since the recorded run");
    }
  }
  return parse_config(m.config_json, manifest_path.string());
}

}  // namespace t1noise::workbench
