#pragma once

// Checkpoint container: a key -> array map with a format tag and an echo of
// the model configuration.
//
//   TRESDIFF-CKPT 1
//   format <tag>
//   dtype <f32|f64>
//   config <n>
//   <key>=<value>            (n lines)
//   tensors <m>
//   <name> <rank> <d0> ... <dr-1>
//   <raw little-endian IEEE-754 payload, prod(d) * sizeof(dtype) bytes>
//   ...                      (m records)
//
// Payloads are copied byte-for-byte, so load(save(m)) reproduces every
// parameter bit-identically.

#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include "tresdiff/nn/layers.hpp"

namespace tresdiff::nn {

inline constexpr int kCheckpointVersion = 1;

struct CheckpointData {
  std::string format;
  std::string dtype;
  std::map<std::string, std::string> config;
  std::vector<std::pair<std::string, Shape>> shapes;
  std::vector<std::vector<char>> payloads;
};

template <typename T>
constexpr const char* dtype_name() {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  return std::is_same_v<T, float> ? "f32" : "f64";
}

template <typename T>
void write_checkpoint(std::ostream& out, const ParameterStore<T>& params, const std::string& format,
                      const std::map<std::string, std::string>& config) {
  out << "TRESDIFF-CKPT " << kCheckpointVersion << '\n';
  out << "format " << format << '\n';
  out << "dtype " << dtype_name<T>() << '\n';
  out << "config " << config.size() << '\n';
  for (const auto& [k, v] : config) out << k << '=' << v << '\n';
  out << "tensors " << params.entries().size() << '\n';
  for (const auto& [name, t] : params.entries()) {
    out << name << ' ' << t.rank();
    for (int d : t.shape()) out << ' ' << d;
    out << '\n';
    out.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(T)));
    out << '\n';
  }
}

inline CheckpointData read_checkpoint_data(std::istream& in) {
  CheckpointData d;
  std::string line, word;
  auto expect_line = [&](const char* what) {
    if (!std::getline(in, line)) throw ParseError(std::string("checkpoint truncated before ") + what);
    return std::istringstream(line);
  };
  {
    auto s = expect_line("magic");
    int version = 0;
    s >> word >> version;
    if (word != "TRESDIFF-CKPT") throw ParseError("not a checkpoint file");
    if (version != kCheckpointVersion) throw ValidationError("unsupported checkpoint version " + std::to_string(version));
  }
  {
    auto s = expect_line("format");
    s >> word >> d.format;
    if (word != "format") throw ParseError("checkpoint: missing format tag");
  }
  {
    auto s = expect_line("dtype");
    s >> word >> d.dtype;
    if (word != "dtype") throw ParseError("checkpoint: missing dtype");
  }
  std::size_t n = 0;
  {
    auto s = expect_line("config");
    s >> word >> n;
    if (word != "config") throw ParseError("checkpoint: missing config block");
  }
  for (std::size_t i = 0; i < n; ++i) {
    expect_line("config entry");
    auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("checkpoint: malformed config entry");
    d.config[line.substr(0, eq)] = line.substr(eq + 1);
  }
  {
    auto s = expect_line("tensors");
    s >> word >> n;
    if (word != "tensors") throw ParseError("checkpoint: missing tensor block");
  }
  const std::size_t elem = d.dtype == "f32" ? 4 : (d.dtype == "f64" ? 8 : 0);
  if (!elem) throw ParseError("checkpoint: unknown dtype " + d.dtype);
  for (std::size_t i = 0; i < n; ++i) {
    auto s = expect_line("tensor header");
    std::string name;
    std::size_t rank = 0;
    s >> name >> rank;
    Shape shape(rank);
    for (auto& dim : shape) s >> dim;
    if (!s) throw ParseError("checkpoint: malformed tensor header");
    std::vector<char> payload(shape_size(shape) * elem);
    in.read(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (in.gcount() != static_cast<std::streamsize>(payload.size())) throw ParseError("checkpoint: truncated payload");
    in.get();  // trailing newline
    d.shapes.emplace_back(name, shape);
    d.payloads.push_back(std::move(payload));
  }
  return d;
}

/// Loads payloads into an already-constructed store; names, shapes, format
/// tag and dtype must all match.
template <typename T>
void load_into(const CheckpointData& d, ParameterStore<T>& params, const std::string& expected_format) {
  if (d.format != expected_format) {
    throw CheckpointMismatchError("checkpoint format '" + d.format + "' does not match expected '" + expected_format + "'");
  }
  if (d.dtype != dtype_name<T>()) throw CheckpointMismatchError("checkpoint dtype mismatch");
  const auto& entries = params.entries();
  if (entries.size() != d.shapes.size()) throw CheckpointMismatchError("checkpoint parameter count does not match the model");
  for (std::size_t i = 0; i < entries.size(); ++i) {
    Tensor<T> t = entries[i].second;
    if (entries[i].first != d.shapes[i].first || t.shape() != d.shapes[i].second) {
      throw CheckpointMismatchError("checkpoint parameter '" + d.shapes[i].first + "' does not match model parameter '" +
                            entries[i].first + "'");
    }
    std::memcpy(t.data(), d.payloads[i].data(), d.payloads[i].size());
  }
}

inline CheckpointData read_checkpoint_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifactError("checkpoint not found: " + path.string());
  return read_checkpoint_data(in);
}

}  // namespace tresdiff::nn
