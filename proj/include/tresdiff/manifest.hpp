#pragma once

// RunManifest: a key = value record written into every artifact directory.
// It echoes the full config under "config.", so a manifest can be fed back
// to the CLI to reproduce the run.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "tresdiff/config.hpp"
#include "tresdiff/dataset.hpp"
#include "tresdiff/denoiser.hpp"
#include "tresdiff/nn/checkpoint.hpp"
#include "tresdiff/predictor.hpp"

namespace tresdiff {

inline constexpr int kManifestVersion = 1;
inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr const char* kManifestFile = "manifest.txt";

struct RunManifest {
  std::string command;
  PipelineConfig config;
  std::vector<std::pair<std::string, std::string>> inputs;
  std::vector<std::pair<std::string, std::string>> outputs;
  std::vector<std::pair<std::string, std::string>> results;
  std::vector<std::pair<std::string, double>> timings;  ///< seconds

  void input(std::string k, std::string v) { inputs.emplace_back(std::move(k), std::move(v)); }
  void output(std::string k, std::string v) { outputs.emplace_back(std::move(k), std::move(v)); }
  void result(std::string k, std::string v) { results.emplace_back(std::move(k), std::move(v)); }
  void result(std::string k, double v) { results.emplace_back(std::move(k), detail::format_double(v)); }
  void timing(std::string k, double s) { timings.emplace_back(std::move(k), s); }

  std::string serialize() const {
    std::ostringstream out;
    out << "manifest_version = " << kManifestVersion << '\n';
    out << "command = " << command << '\n';
    out << "tool_version = " << kToolVersion << '\n';
    out << "seed = " << config.seed << '\n';
    out << "seed.model = " << config.model_seed() << '\n';
    out << "seed.train = " << config.train_seed() << '\n';
    out << "seed.sample = " << config.sample_seed() << '\n';
    out << "format.events = EVT1\n";
    out << "format.voxels = " << kVoxelArchiveTag << '\n';
    out << "format.checkpoint = TRESDIFF-CKPT " << nn::kCheckpointVersion << '\n';
    out << "format.predictor = " << kPredictorFormat << '\n';
    out << "format.denoiser = " << kDenoiserFormat << '\n';
    out << "format.config = " << kConfigVersion << '\n';
    for (const auto& [k, v] : inputs) out << "input." << k << " = " << v << '\n';
    for (const auto& [k, v] : outputs) out << "output." << k << " = " << v << '\n';
    for (const auto& [k, v] : results) out << "result." << k << " = " << v << '\n';
    for (const auto& [k, v] : timings) out << "timing." << k << " = " << detail::format_double(v) << '\n';
    for (const auto& [k, v] : config_entries(config)) out << "config." << k << " = " << v << '\n';
    return out.str();
  }

  void write(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    std::ofstream out(dir / kManifestFile);
    if (!out) throw std::runtime_error("cannot write " + (dir / kManifestFile).string());
    out << serialize();
  }
};

/// Parsed manifest entries, in file order.
struct ManifestRecord {
  std::vector<std::pair<std::string, std::string>> entries;

  std::string get(const std::string& key) const {
    for (const auto& [k, v] : entries)
      if (k == key) return v;
    throw ValidationError("manifest has no '" + key + "' entry");
  }

  PipelineConfig config() const {
    std::string text = "config_version = " + std::to_string(kConfigVersion) + "\n";
    for (const auto& [k, v] : entries)
      if (k.starts_with("config.")) text += k.substr(7) + " = " + v + "\n";
    return parse_config(text);
  }
};

inline ManifestRecord read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingArtifactError("manifest not found: " + path.string());
  ManifestRecord m;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto t = detail::trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string_view::npos) throw ParseError("manifest: expected key = value", lineno);
    m.entries.emplace_back(std::string(detail::trim(t.substr(0, eq))), std::string(detail::trim(t.substr(eq + 1))));
  }
  if (m.get("manifest_version") != std::to_string(kManifestVersion))
    throw ValidationError("unsupported manifest_version " + m.get("manifest_version"));
  return m;
}

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count(); }

 private:
  std::chrono::steady_clock::time_point start_;
};

}  // namespace tresdiff
