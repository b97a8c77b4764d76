// tresdiff: event-conditioned diffusion video reconstruction pipeline.
//
//   tresdiff <command> [--config FILE | --manifest FILE] [--seed N] [--out DIR] [overrides]
//
// Exit status: 0 success, 1 runtime failure, 2 invalid config or arguments,
// 3 missing artifact, 4 checkpoint/config mismatch.

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <new>
#include <optional>
#include <string>
#include <vector>

#include "tresdiff/config.hpp"
#include "tresdiff/manifest.hpp"
#include "tresdiff/pipeline.hpp"

// Every heap block starts on a 64-byte boundary, so vectorized kernels see the
// same alignment on every run and results do not depend on heap layout.
void* operator new(std::size_t n) {
  if (void* p = std::aligned_alloc(64, (n + 63) / 64 * 64 + (n == 0) * 64)) return p;
  throw std::bad_alloc();
}
void operator delete(void* p) noexcept { std::free(p); }
void operator delete(void* p, std::size_t) noexcept { std::free(p); }

namespace {

struct Options {
  std::string config_path;
  std::string manifest_path;
  std::string out = "tresdiff-run";
  std::optional<std::uint64_t> seed;
  std::optional<int> steps;
  std::optional<int> iterations;
  std::optional<std::string> residual, recurrent, cross_att, event, recurrence, equalize;
  std::vector<std::string> sets;
  bool quiet = false;
  bool print_config = false;
};

tresdiff::PipelineConfig resolve_config(const std::string& command, const Options& o) {
  using namespace tresdiff;
  if (!o.config_path.empty() && !o.manifest_path.empty())
    throw ValidationError("--config and --manifest are mutually exclusive");
  PipelineConfig cfg;
  if (!o.manifest_path.empty()) {
    auto m = read_manifest(o.manifest_path);
    if (m.get("command") != command)
      throw ValidationError("manifest was written by '" + m.get("command") + "', not '" + command + "'");
    cfg = m.config();
  } else if (!o.config_path.empty()) {
    cfg = load_config(o.config_path);
  }
  auto set = [&](const char* key, const std::optional<std::string>& v) {
    if (v) set_config_value(cfg, key, *v);
  };
  for (const auto& kv : o.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ValidationError("--set expects key=value, got '" + kv + "'");
    set_config_value(cfg, std::string(detail::trim(kv.substr(0, eq))), std::string(detail::trim(kv.substr(eq + 1))));
  }
  if (o.seed) cfg.seed = *o.seed;
  if (o.steps) cfg.sample_steps = *o.steps;
  if (o.iterations) cfg.diffusion_iterations = *o.iterations;
  set("flags.residual", o.residual);
  set("flags.recurrent", o.recurrent);
  set("flags.cross_att", o.cross_att);
  set("flags.event", o.event);
  set("sample.recurrence", o.recurrence);
  set("eval.equalize", o.equalize);
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace tresdiff;
  CLI::App app{"Event-conditioned diffusion video reconstruction"};
  app.require_subcommand(1);
  Options o;

  const std::vector<std::pair<std::string, std::string>> commands = {
      {"simulate", "render or read frames and simulate events"},
      {"voxelize", "cut events into windows and build voxel grids"},
      {"train-predictor", "train the recurrent intensity predictor"},
      {"train-diffusion", "train the conditional denoiser"},
      {"sample", "reconstruct the video"},
      {"eval", "score the reconstruction against the reference frames"},
      {"ablate", "train, sample and score each conditioning ablation"},
      {"spectra", "export frequency panels and the high-frequency/event similarity"},
      {"sweep-steps", "sample with several reverse step counts"},
  };
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", o.config_path, "config file (key = value)");
    sub->add_option("--manifest", o.manifest_path, "re-run with the config recorded in a manifest");
    sub->add_option("--seed", o.seed, "random seed");
    sub->add_option("--out", o.out, "workspace directory")->capture_default_str();
    sub->add_option("--set", o.sets, "override a config key (key=value), repeatable");
    sub->add_flag("--quiet", o.quiet, "no progress output");
    sub->add_flag("--print-config", o.print_config, "print the resolved config and exit");
    if (name == "train-diffusion" || name == "ablate") sub->add_option("--iterations", o.iterations, "training iterations");
    if (name == "sample" || name == "ablate") {
      sub->add_option("--steps", o.steps, "reverse diffusion steps");
      sub->add_option("--recurrence", o.recurrence, "always | never | from_midpoint | until_midpoint");
    }
    if (name == "train-diffusion" || name == "sample" || name == "eval") {
      sub->add_option("--residual", o.residual, "residual target (0/1)");
      sub->add_option("--recurrent", o.recurrent, "recurrent event state (0/1)");
      sub->add_option("--cross-att", o.cross_att, "cross-attention fusion (0/1)");
      sub->add_option("--event", o.event, "event conditioning (0/1)");
    }
    if (name == "eval" || name == "ablate" || name == "sweep-steps")
      sub->add_option("--equalize", o.equalize, "histogram-equalize before scoring (0/1)");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(ExitCode::validation_failure);
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    auto cfg = resolve_config(command, o);
    if (o.print_config) {
      std::cout << serialize_config(cfg);
      return 0;
    }
    Pipeline p(cfg, o.out, o.quiet ? nullptr : &std::cout);
    if (command == "eval")
      std::cout << format_metric_table(p.evaluate());
    else
      p.run(command);
    return 0;
  } catch (const std::exception& e) {
    const auto code = classify_exception(e);
    std::cerr << "tresdiff " << command << ": " << e.what() << '\n';
    return static_cast<int>(code);
  }
}
