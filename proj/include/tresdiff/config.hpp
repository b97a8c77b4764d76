#pragma once

// Pipeline configuration: a flat, versioned key = value text format.
//
//   # comment
//   config_version = 1
//   sensor.width = 32
//   flags.event = 1
//
// Every key is typed and validated at load; unknown keys, duplicate keys and
// a missing or different config_version are rejected. serialize() writes every
// key in a fixed order with round-trip-stable number rendering, so
// parse(serialize(c)) == c.

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "tresdiff/common.hpp"
#include "tresdiff/denoiser.hpp"
#include "tresdiff/diffusion.hpp"
#include "tresdiff/events.hpp"
#include "tresdiff/predictor.hpp"
#include "tresdiff/simulator.hpp"

namespace tresdiff {

inline constexpr int kConfigVersion = 1;

enum class SceneKind { moving_square, moving_bar, texture };

inline std::string to_string(SceneKind k) {
  switch (k) {
    case SceneKind::moving_square: return "moving_square";
    case SceneKind::moving_bar: return "moving_bar";
    case SceneKind::texture: return "texture";
  }
  return "?";
}

inline std::string to_string(RecurrenceMode m) {
  switch (m) {
    case RecurrenceMode::always: return "always";
    case RecurrenceMode::never: return "never";
    case RecurrenceMode::from_midpoint: return "from_midpoint";
    case RecurrenceMode::until_midpoint: return "until_midpoint";
  }
  return "?";
}

struct PipelineConfig {
  SensorGeometry sensor{32, 32};
  int voxel_bins = kDefaultVoxelBins;
  double max_density = kDefaultMaxDensity;
  SimulatorConfig simulator;

  SceneKind scene_kind = SceneKind::moving_square;
  int scene_frames = 24;
  double scene_frame_interval = 0.04;

  int schedule_steps = 100;
  double beta_start = 1e-3;
  double beta_end = 0.2;

  DenoiserConfig denoiser{.scales = 3, .base_channels = 16, .groupnorm_groups = 8, .time_embed_dim = 64};
  PredictorConfig predictor;

  int train_frames = 16;  ///< leading windows used for training; 0 uses all
  int predictor_iterations = 400;
  double predictor_learning_rate = 3e-3;
  int truncation = 8;
  int diffusion_iterations = 400;
  double learning_rate = 1e-3;
  double final_learning_rate = 1e-4;
  int batch = 1;  ///< tau draws per frame per iteration
  double grad_clip = 1.0;

  std::uint64_t seed = 0;

  ConditioningFlags flags;
  RecurrenceMode recurrence = RecurrenceMode::always;
  int sample_steps = 100;
  bool start_at_final_step = false;
  bool clip_x0 = true;

  bool equalize = true;
  int eval_first = 0;
  int eval_last = -1;  ///< inclusive; -1 means the last frame

  std::vector<int> sweep_steps{25, 50, 100};
  double spectral_cutoff = 0.125;

  std::string frames_path;  ///< external frame directory for simulate; empty uses the synthetic scene
  std::string events_path;  ///< external EVT1 file for voxelize; empty uses the workspace

  friend bool operator==(const PipelineConfig&, const PipelineConfig&) = default;

  DenoiserConfig denoiser_config() const {
    DenoiserConfig d = denoiser;
    d.voxel_bins = voxel_bins;
    d.cross_attention = flags_cross_attention();
    return d;
  }
  PredictorConfig predictor_config() const {
    PredictorConfig p = predictor;
    p.voxel_bins = voxel_bins;
    return p;
  }
  bool flags_cross_attention() const { return denoiser.cross_attention; }

  NoiseSchedule schedule() const { return make_schedule(schedule_steps, beta_start, beta_end); }

  SamplerOptions sampler_options() const {
    SamplerOptions o;
    o.flags = flags;
    o.recurrence = recurrence;
    o.start_at_final_step = start_at_final_step;
    o.clip_x0 = clip_x0;
    return o;
  }

  std::uint64_t model_seed() const { return seed * 4 + 1; }
  std::uint64_t train_seed() const { return seed * 4 + 2; }
  std::uint64_t sample_seed() const { return seed * 4 + 3; }

  void validate() const;
};

namespace config_detail {

struct Field {
  const char* key;
  std::function<std::string(const PipelineConfig&)> get;
  std::function<void(PipelineConfig&, const std::string&)> set;
};

[[noreturn]] inline void bad_value(const std::string& key, const std::string& value, const char* expected) {
  throw ValidationError("config key '" + key + "': '" + value + "' is not " + expected);
}

template <typename N>
N parse_as(const std::string& key, const std::string& v, const char* expected) {
  N out{};
  if (!detail::parse_number(v, out)) bad_value(key, v, expected);
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true") return true;
  if (v == "0" || v == "false") return false;
  bad_value(key, v, "a boolean (0/1/true/false)");
}

template <typename M>
Field int_field(const char* key, M member) {
  return {key, [member](const PipelineConfig& c) { return std::to_string(member(const_cast<PipelineConfig&>(c))); },
          [key, member](PipelineConfig& c, const std::string& v) { member(c) = parse_as<int>(key, v, "an integer"); }};
}

template <typename M>
Field double_field(const char* key, M member) {
  return {key, [member](const PipelineConfig& c) { return detail::format_double(member(const_cast<PipelineConfig&>(c))); },
          [key, member](PipelineConfig& c, const std::string& v) {
            const double d = parse_as<double>(key, v, "a number");
            if (!std::isfinite(d)) bad_value(key, v, "a finite number");
            member(c) = d;
          }};
}

template <typename M>
Field bool_field(const char* key, M member) {
  return {key, [member](const PipelineConfig& c) { return std::string(member(const_cast<PipelineConfig&>(c)) ? "1" : "0"); },
          [key, member](PipelineConfig& c, const std::string& v) { member(c) = parse_bool(key, v); }};
}

template <typename M>
Field string_field(const char* key, M member) {
  return {key, [member](const PipelineConfig& c) { return member(const_cast<PipelineConfig&>(c)); },
          [member](PipelineConfig& c, const std::string& v) { member(c) = v; }};
}

inline const std::vector<Field>& fields() {
  using C = PipelineConfig;
  static const std::vector<Field> table = {
      int_field("sensor.width", [](C& c) -> int& { return c.sensor.width; }),
      int_field("sensor.height", [](C& c) -> int& { return c.sensor.height; }),
      int_field("voxel.bins", [](C& c) -> int& { return c.voxel_bins; }),
      double_field("events.max_density", [](C& c) -> double& { return c.max_density; }),
      double_field("simulator.phi_pos", [](C& c) -> double& { return c.simulator.phi_pos; }),
      double_field("simulator.phi_neg", [](C& c) -> double& { return c.simulator.phi_neg; }),
      double_field("simulator.epsilon_log", [](C& c) -> double& { return c.simulator.epsilon_log; }),
      Field{"scene.kind", [](const C& c) { return to_string(c.scene_kind); },
            [](C& c, const std::string& v) {
              if (v == "moving_square") c.scene_kind = SceneKind::moving_square;
              else if (v == "moving_bar") c.scene_kind = SceneKind::moving_bar;
              else if (v == "texture") c.scene_kind = SceneKind::texture;
              else bad_value("scene.kind", v, "one of moving_square, moving_bar, texture");
            }},
      int_field("scene.frames", [](C& c) -> int& { return c.scene_frames; }),
      double_field("scene.frame_interval", [](C& c) -> double& { return c.scene_frame_interval; }),
      int_field("schedule.steps", [](C& c) -> int& { return c.schedule_steps; }),
      double_field("schedule.beta_start", [](C& c) -> double& { return c.beta_start; }),
      double_field("schedule.beta_end", [](C& c) -> double& { return c.beta_end; }),
      int_field("denoiser.scales", [](C& c) -> int& { return c.denoiser.scales; }),
      int_field("denoiser.base_channels", [](C& c) -> int& { return c.denoiser.base_channels; }),
      int_field("denoiser.attention_key_dim", [](C& c) -> int& { return c.denoiser.attention_key_dim; }),
      int_field("denoiser.groupnorm_groups", [](C& c) -> int& { return c.denoiser.groupnorm_groups; }),
      int_field("denoiser.time_embed_dim", [](C& c) -> int& { return c.denoiser.time_embed_dim; }),
      int_field("predictor.channels0", [](C& c) -> int& { return c.predictor.channels0; }),
      int_field("predictor.channels1", [](C& c) -> int& { return c.predictor.channels1; }),
      int_field("train.frames", [](C& c) -> int& { return c.train_frames; }),
      int_field("train.predictor_iterations", [](C& c) -> int& { return c.predictor_iterations; }),
      double_field("train.predictor_learning_rate", [](C& c) -> double& { return c.predictor_learning_rate; }),
      int_field("train.truncation", [](C& c) -> int& { return c.truncation; }),
      int_field("train.iterations", [](C& c) -> int& { return c.diffusion_iterations; }),
      double_field("train.learning_rate", [](C& c) -> double& { return c.learning_rate; }),
      double_field("train.final_learning_rate", [](C& c) -> double& { return c.final_learning_rate; }),
      int_field("train.batch", [](C& c) -> int& { return c.batch; }),
      double_field("train.grad_clip", [](C& c) -> double& { return c.grad_clip; }),
      Field{"seed", [](const C& c) { return std::to_string(c.seed); },
            [](C& c, const std::string& v) { c.seed = parse_as<std::uint64_t>("seed", v, "a non-negative integer"); }},
      bool_field("flags.residual", [](C& c) -> bool& { return c.flags.residual; }),
      bool_field("flags.recurrent", [](C& c) -> bool& { return c.flags.recurrent; }),
      bool_field("flags.cross_att", [](C& c) -> bool& { return c.denoiser.cross_attention; }),
      bool_field("flags.event", [](C& c) -> bool& { return c.flags.event; }),
      Field{"sample.recurrence", [](const C& c) { return to_string(c.recurrence); },
            [](C& c, const std::string& v) {
              if (v == "always") c.recurrence = RecurrenceMode::always;
              else if (v == "never") c.recurrence = RecurrenceMode::never;
              else if (v == "from_midpoint") c.recurrence = RecurrenceMode::from_midpoint;
              else if (v == "until_midpoint") c.recurrence = RecurrenceMode::until_midpoint;
              else bad_value("sample.recurrence", v, "one of always, never, from_midpoint, until_midpoint");
            }},
      int_field("sample.steps", [](C& c) -> int& { return c.sample_steps; }),
      bool_field("sample.start_at_final_step", [](C& c) -> bool& { return c.start_at_final_step; }),
      bool_field("sample.clip_x0", [](C& c) -> bool& { return c.clip_x0; }),
      bool_field("eval.equalize", [](C& c) -> bool& { return c.equalize; }),
      int_field("eval.first_frame", [](C& c) -> int& { return c.eval_first; }),
      int_field("eval.last_frame", [](C& c) -> int& { return c.eval_last; }),
      Field{"sweep.steps",
            [](const C& c) {
              std::string s;
              for (std::size_t i = 0; i < c.sweep_steps.size(); ++i) s += (i ? "," : "") + std::to_string(c.sweep_steps[i]);
              return s;
            },
            [](C& c, const std::string& v) {
              c.sweep_steps.clear();
              std::size_t start = 0;
              while (start <= v.size()) {
                const auto comma = std::min(v.find(',', start), v.size());
                c.sweep_steps.push_back(
                    parse_as<int>("sweep.steps", std::string(detail::trim(v.substr(start, comma - start))), "a list of integers"));
                start = comma + 1;
              }
            }},
      double_field("spectral.cutoff", [](C& c) -> double& { return c.spectral_cutoff; }),
      string_field("io.frames", [](C& c) -> std::string& { return c.frames_path; }),
      string_field("io.events", [](C& c) -> std::string& { return c.events_path; }),
  };
  return table;
}

}  // namespace config_detail

inline void PipelineConfig::validate() const {
  sensor.validate();
  require(voxel_bins >= 1, "voxel.bins must be at least 1");
  require(max_density > 0.0, "events.max_density must be positive");
  simulator.validate();
  require(scene_frames >= 2, "scene.frames must be at least 2");
  require(scene_frame_interval > 0.0, "scene.frame_interval must be positive");
  require(schedule_steps >= 1, "schedule.steps must be at least 1");
  require(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0,
          "schedule betas must satisfy 0 < beta_start <= beta_end < 1");
  denoiser_config().validate();
  denoiser_config().check_geometry(sensor.height, sensor.width);
  predictor_config().validate();
  require(sensor.width % 2 == 0 && sensor.height % 2 == 0, "sensor size must be even for the predictor");
  require(train_frames >= 0, "train.frames must be non-negative");
  require(predictor_iterations >= 0 && diffusion_iterations >= 0, "iteration counts must be non-negative");
  require(predictor_learning_rate > 0.0 && learning_rate > 0.0 && final_learning_rate > 0.0, "learning rates must be positive");
  require(truncation >= 1, "train.truncation must be at least 1");
  require(batch >= 1, "train.batch must be at least 1");
  require(grad_clip >= 0.0, "train.grad_clip must be non-negative");
  require(sample_steps >= 1 && sample_steps <= schedule_steps, "sample.steps must lie in [1, schedule.steps]");
  require(eval_first >= 0, "eval.first_frame must be non-negative");
  require(eval_last == -1 || eval_last >= eval_first, "eval.last_frame must be -1 or >= eval.first_frame");
  require(!sweep_steps.empty(), "sweep.steps must not be empty");
  for (int s : sweep_steps) require(s >= 1 && s <= schedule_steps, "sweep.steps entries must lie in [1, schedule.steps]");
  require(spectral_cutoff > 0.0 && spectral_cutoff < 1.0, "spectral.cutoff must lie in (0,1)");
}

inline std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& f : config_detail::fields()) keys.emplace_back(f.key);
  return keys;
}

/// Sets one key from its text form; unknown keys are rejected.
inline void set_config_value(PipelineConfig& c, const std::string& key, const std::string& value) {
  for (const auto& f : config_detail::fields()) {
    if (key == f.key) {
      f.set(c, value);
      return;
    }
  }
  throw ValidationError("unknown config key '" + key + "'");
}

inline std::string get_config_value(const PipelineConfig& c, const std::string& key) {
  for (const auto& f : config_detail::fields())
    if (key == f.key) return f.get(c);
  throw ValidationError("unknown config key '" + key + "'");
}

/// Ordered (key, value) pairs, without the version line.
inline std::vector<std::pair<std::string, std::string>> config_entries(const PipelineConfig& c) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& f : config_detail::fields()) out.emplace_back(f.key, f.get(c));
  return out;
}

inline std::string serialize_config(const PipelineConfig& c) {
  std::string out = "config_version = " + std::to_string(kConfigVersion) + "\n";
  for (const auto& [k, v] : config_entries(c)) out += k + " = " + v + "\n";
  return out;
}

/// Parses a config text over the defaults. Keys that are absent keep their
/// default values.
inline PipelineConfig parse_config(std::string_view text) {
  PipelineConfig c;
  std::map<std::string, std::size_t> seen;
  bool version = false;
  std::size_t lineno = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = std::min(text.find('\n', pos), text.size());
    const auto line = detail::trim(text.substr(pos, nl - pos));
    pos = nl + 1;
    ++lineno;
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError("expected key = value", lineno);
    const std::string key(detail::trim(line.substr(0, eq)));
    const std::string value(detail::trim(line.substr(eq + 1)));
    if (key.empty()) throw ParseError("empty key", lineno);
    if (seen.count(key)) throw ParseError("duplicate key '" + key + "' (first on line " + std::to_string(seen[key]) + ")", lineno);
    seen[key] = lineno;
    if (key == "config_version") {
      int v = 0;
      if (!detail::parse_number(value, v)) throw ParseError("config_version must be an integer", lineno);
      if (v != kConfigVersion) throw ValidationError("unsupported config_version " + value);
      version = true;
      continue;
    }
    try {
      set_config_value(c, key, value);
    } catch (const ValidationError& e) {
      throw ValidationError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (!version) throw ValidationError("config is missing config_version");
  c.validate();
  return c;
}

inline PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingArtifactError("config not found: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

}  // namespace tresdiff
