#pragma once

// The end-to-end commands behind the CLI. All commands share one workspace
// directory; each writes into its own subdirectory together with a manifest:
//
//   <ws>/simulate/        frames/, events.evt1
//   <ws>/voxelize/        voxels.vox, reference/
//   <ws>/train-predictor/ predictor.ckpt, loss.csv
//   <ws>/train-diffusion/ denoiser.ckpt, loss.csv
//   <ws>/sample/          frames/
//   <ws>/eval/            metrics.csv
//   <ws>/ablate/          ablation.csv, <row>/{train-diffusion,sample,eval}/
//   <ws>/spectra/         spectra.csv, frame_NNNNN/*.pgm (+ .norm.txt)
//   <ws>/sweep-steps/     sweep.csv, steps_K/frames/
//
// Every command is deterministic given the config (including the seed);
// only manifest timings and the sweep runtime column vary between runs.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "tresdiff/config.hpp"
#include "tresdiff/dataset.hpp"
#include "tresdiff/denoiser.hpp"
#include "tresdiff/diffusion.hpp"
#include "tresdiff/events.hpp"
#include "tresdiff/frames_io.hpp"
#include "tresdiff/manifest.hpp"
#include "tresdiff/metrics.hpp"
#include "tresdiff/predictor.hpp"
#include "tresdiff/rng.hpp"
#include "tresdiff/scene.hpp"
#include "tresdiff/simulator.hpp"
#include "tresdiff/spectral.hpp"
#include "tresdiff/training.hpp"

namespace tresdiff {

namespace fs = std::filesystem;

enum class ExitCode : int {
  ok = 0,
  runtime_failure = 1,
  validation_failure = 2,
  missing_artifact = 3,
  checkpoint_mismatch = 4,
};

inline const std::vector<std::string>& pipeline_commands() {
  static const std::vector<std::string> c{"simulate", "voxelize", "train-predictor", "train-diffusion", "sample",
                                          "eval",     "ablate",   "spectra",         "sweep-steps"};
  return c;
}

struct Workspace {
  fs::path root;

  fs::path dir(const std::string& command) const { return root / command; }
  fs::path frames() const { return dir("simulate") / "frames"; }
  fs::path events() const { return dir("simulate") / "events.evt1"; }
  fs::path windows() const { return dir("voxelize"); }
  fs::path predictor() const { return dir("train-predictor") / "predictor.ckpt"; }
  fs::path denoiser() const { return dir("train-diffusion") / "denoiser.ckpt"; }
  fs::path sample() const { return dir("sample") / "frames"; }
  std::string rel(const fs::path& p) const { return fs::relative(p, root).generic_string(); }
};

using Model = float;

struct Ablation {
  std::string name;
  ConditioningFlags flags;
  bool cross_attention = true;
};

inline std::vector<Ablation> ablation_rows() {
  return {
      {"full", {true, true, true}, true},
      {"no_residual", {false, true, true}, true},
      {"no_recurrent", {true, false, true}, true},
      {"no_cross_att", {true, true, true}, false},
      {"no_event", {true, true, false}, true},
  };
}

inline PipelineConfig with_ablation(PipelineConfig cfg, const Ablation& a) {
  cfg.flags = a.flags;
  cfg.denoiser.cross_attention = a.cross_attention;
  return cfg;
}

class Pipeline {
 public:
  Pipeline(PipelineConfig cfg, fs::path workspace, std::ostream* log = nullptr)
      : cfg_(std::move(cfg)), ws_{std::move(workspace)}, log_(log) {
    cfg_.validate();
  }

  const PipelineConfig& config() const { return cfg_; }
  const Workspace& workspace() const { return ws_; }

  // --- data -----------------------------------------------------------------

  FrameSequence scene() const {
    SceneSpec s{cfg_.sensor.width, cfg_.sensor.height, cfg_.scene_frames, cfg_.scene_frame_interval};
    switch (cfg_.scene_kind) {
      case SceneKind::moving_square: return moving_square_scene(s);
      case SceneKind::moving_bar: return moving_bar_scene(s);
      case SceneKind::texture: return texture_scene(s);
    }
    return moving_square_scene(s);
  }

  void simulate() {
    Stopwatch sw;
    RunManifest m = manifest("simulate");
    FrameSequence frames;
    if (cfg_.frames_path.empty()) {
      frames = scene();
      m.input("frames", "synthetic:" + to_string(cfg_.scene_kind));
    } else {
      frames = read_frame_directory(cfg_.frames_path);
      m.input("frames", cfg_.frames_path);
    }
    if (frames.geometry != cfg_.sensor) throw ValidationError("frame size does not match sensor.width/sensor.height");
    const auto events = simulate_events(frames, cfg_.simulator);
    const auto out = ws_.dir("simulate");
    fs::remove_all(out);
    write_frame_directory(ws_.frames(), frames);
    {
      std::ofstream f(ws_.events());
      if (!f) throw std::runtime_error("cannot write " + ws_.events().string());
      write_events(f, events.geometry, events.events);
    }
    m.output("frames", ws_.rel(ws_.frames()));
    m.output("events", ws_.rel(ws_.events()));
    m.result("frame_count", std::to_string(frames.size()));
    m.result("event_count", std::to_string(events.events.size()));
    say("simulate: " + std::to_string(frames.size()) + " frames, " + std::to_string(events.events.size()) + " events");
    m.timing("total", sw.seconds());
    m.write(out);
  }

  void voxelize() {
    Stopwatch sw;
    RunManifest m = manifest("voxelize");
    const fs::path frames_dir = cfg_.frames_path.empty() ? ws_.frames() : fs::path(cfg_.frames_path);
    const fs::path events_file = cfg_.events_path.empty() ? ws_.events() : fs::path(cfg_.events_path);
    auto frames = read_frame_directory(frames_dir);
    std::ifstream in(events_file);
    if (!in) throw MissingArtifactError("event file not found: " + events_file.string());
    auto events = parse_events(in, cfg_.sensor);
    auto ws = build_windows(events, frames, cfg_.voxel_bins, cfg_.max_density);
    const auto out = ws_.windows();
    fs::remove_all(out);
    save_windowed(out, ws);
    m.input("frames", frames_dir.generic_string());
    m.input("events", events_file.generic_string());
    m.output("voxels", ws_.rel(out / "voxels.vox"));
    m.output("reference", ws_.rel(out / "reference"));
    m.result("window_count", std::to_string(ws.size()));
    double peak = 0.0;
    for (const auto& v : ws.voxels)
      peak = std::max(peak, static_cast<double>(v.event_count) / static_cast<double>(cfg_.sensor.pixel_count()));
    m.result("max_window_density", peak);
    say("voxelize: " + std::to_string(ws.size()) + " windows");
    m.timing("total", sw.seconds());
    m.write(out);
  }

  WindowedSequence windows() const { return load_windowed(ws_.windows()); }

  std::size_t train_count(std::size_t n) const {
    return cfg_.train_frames == 0 ? n : std::min<std::size_t>(static_cast<std::size_t>(cfg_.train_frames), n);
  }

  // --- models ---------------------------------------------------------------

  Predictor<Model> load_predictor() const {
    Predictor<Model> p(cfg_.predictor_config(), cfg_.model_seed());
    p.load(nn::read_checkpoint_file(ws_.predictor()));
    return p;
  }

  Denoiser<Model> load_denoiser(const fs::path& path, const PipelineConfig& cfg) const {
    Denoiser<Model> d(cfg.denoiser_config(), cfg.model_seed());
    d.load(nn::read_checkpoint_file(path));
    return d;
  }

  std::vector<double> train_predictor() {
    Stopwatch sw;
    RunManifest m = manifest("train-predictor");
    auto ws = windows();
    const std::size_t n = train_count(ws.size());
    PredictorScene scene;
    scene.voxels.assign(ws.voxels.begin(), ws.voxels.begin() + n);
    scene.frames.geometry = ws.reference.geometry;
    scene.frames.frames.assign(ws.reference.frames.begin(), ws.reference.frames.begin() + n);
    scene.frames.timestamps.assign(ws.reference.timestamps.begin(), ws.reference.timestamps.begin() + n);

    Predictor<Model> net(cfg_.predictor_config(), cfg_.model_seed());
    PredictorTrainOptions opts{cfg_.predictor_iterations, cfg_.predictor_learning_rate, cfg_.truncation};
    auto losses = train_predictor_impl(net, {scene}, opts);
    const auto out = ws_.dir("train-predictor");
    fs::remove_all(out);
    fs::create_directories(out);
    save_checkpoint(ws_.predictor(), [&](std::ostream& o) { net.save(o); });
    write_loss_csv(out / "loss.csv", losses);
    m.input("windows", ws_.rel(ws_.windows()));
    m.output("checkpoint", ws_.rel(ws_.predictor()));
    m.output("loss", ws_.rel(out / "loss.csv"));
    m.result("train_windows", std::to_string(n));
    m.result("final_l1", predictor_l1(net, {scene}));
    m.timing("total", sw.seconds());
    m.write(out);
    return losses;
  }

  /// Trains a denoiser with `cfg` (flags, seed) into `out`.
  std::vector<double> train_diffusion_into(const PipelineConfig& cfg, const fs::path& out) {
    Stopwatch sw;
    RunManifest m = manifest("train-diffusion", cfg);
    auto ws = windows();
    auto predictor = load_predictor();
    const std::size_t n = train_count(ws.size());
    require(n >= 2, "diffusion training needs at least two training windows");
    std::vector<VoxelGrid> voxels(ws.voxels.begin(), ws.voxels.begin() + n);
    auto estimates = predictor_estimates(predictor, voxels);
    std::vector<IntensityImage> frames;
    for (std::size_t t = 0; t < n; ++t) frames.push_back({ws.reference.frames[t], ws.reference.timestamps[t]});

    Denoiser<Model> net(cfg.denoiser_config(), cfg.model_seed());
    RngState rng(cfg.train_seed());
    DiffusionTrainOptions opts{cfg.diffusion_iterations, cfg.learning_rate, cfg.final_learning_rate, cfg.batch,
                               cfg.grad_clip, cfg.flags};
    const int every = std::max(1, cfg.diffusion_iterations / 10);
    auto losses = tresdiff::train_diffusion(net, frames, estimates, voxels, cfg.schedule(), rng, opts, [&](int it, double loss) {
      if ((it + 1) % every == 0) say("  iteration " + std::to_string(it + 1) + " eps-loss " + detail::format_double(loss));
    });
    fs::remove_all(out);
    fs::create_directories(out);
    save_checkpoint(out / "denoiser.ckpt", [&](std::ostream& o) { net.save(o); });
    write_loss_csv(out / "loss.csv", losses);
    {
      std::ofstream f(out / "schedule.csv");
      write_schedule_csv(f, cfg.schedule());
    }
    m.input("windows", ws_.rel(ws_.windows()));
    m.input("predictor", ws_.rel(ws_.predictor()));
    m.output("checkpoint", ws_.rel(out / "denoiser.ckpt"));
    m.output("loss", ws_.rel(out / "loss.csv"));
    m.output("schedule", ws_.rel(out / "schedule.csv"));
    m.result("train_windows", std::to_string(n));
    m.result("final_eps_loss", trailing_mean(losses, 10));
    m.timing("total", sw.seconds());
    m.write(out);
    return losses;
  }

  std::vector<double> train_diffusion() { return train_diffusion_into(cfg_, ws_.dir("train-diffusion")); }

  /// Samples the whole sequence with `steps` reverse steps into `out_frames`.
  std::vector<IntensityImage> sample_into(const PipelineConfig& cfg, const fs::path& checkpoint, int steps,
                                          const fs::path& out_frames) {
    auto ws = windows();
    auto predictor = load_predictor();
    auto net = load_denoiser(checkpoint, cfg);
    DenoiserModel<Model> model(net);
    const auto full = cfg.schedule();
    const auto sched = steps == full.steps() ? full : strided_schedule(full, steps);
    RngState rng(cfg.sample_seed());
    auto video = sample_sequence(ws.voxels, predictor, model, sched, rng, cfg.sampler_options());
    FrameSequence seq;
    seq.geometry = ws.reference.geometry;
    for (auto& f : video) {
      seq.frames.push_back(f.values);
      seq.timestamps.push_back(f.timestamp);
    }
    fs::remove_all(out_frames);
    write_frame_directory(out_frames, seq);
    return video;
  }

  void sample() {
    Stopwatch sw;
    RunManifest m = manifest("sample");
    sample_into(cfg_, ws_.denoiser(), cfg_.sample_steps, ws_.sample());
    m.input("windows", ws_.rel(ws_.windows()));
    m.input("predictor", ws_.rel(ws_.predictor()));
    m.input("denoiser", ws_.rel(ws_.denoiser()));
    m.output("frames", ws_.rel(ws_.sample()));
    m.result("steps", std::to_string(cfg_.sample_steps));
    m.timing("total", sw.seconds());
    m.write(ws_.dir("sample"));
  }

  // --- evaluation -----------------------------------------------------------

  std::pair<std::size_t, std::size_t> eval_range(std::size_t n, int first, int last) const {
    const std::size_t lo = static_cast<std::size_t>(first);
    const std::size_t hi = last < 0 ? n - 1 : static_cast<std::size_t>(last);
    if (n == 0 || lo > hi || hi >= n)
      throw ValidationError("evaluation range [" + std::to_string(first) + ", " + std::to_string(last) +
                            "] is outside the " + std::to_string(n) + "-frame sequence");
    return {lo, hi};
  }

  /// Metrics of predicted frames in `pred_dir` against the reference over
  /// frames [first, last].
  MetricReport evaluate_dir(const fs::path& pred_dir, int first, int last) const {
    auto pred = read_frame_directory(pred_dir);
    auto ref = read_frame_directory(ws_.windows() / "reference");
    if (pred.size() != ref.size())
      throw ValidationError("predicted video has " + std::to_string(pred.size()) + " frames, reference has " +
                            std::to_string(ref.size()));
    const auto [lo, hi] = eval_range(ref.size(), first, last);
    std::vector<IntensityImage> a, b;
    for (std::size_t i = lo; i <= hi; ++i) {
      a.push_back({pred.frames[i], pred.timestamps[i]});
      b.push_back({ref.frames[i], ref.timestamps[i]});
    }
    return evaluate_sequence(a, b, cfg_.equalize);
  }

  /// Mean high-frequency / event similarity over frames [first, last], skipping frame 0.
  double highfreq_similarity_dir(const fs::path& pred_dir, int first, int last) const {
    auto pred = read_frame_directory(pred_dir);
    auto ws = windows();
    if (pred.size() != ws.size()) throw ValidationError("predicted video and voxel archive differ in length");
    const auto [lo, hi] = eval_range(pred.size(), first, last);
    double s = 0.0;
    int count = 0;
    for (std::size_t t = std::max<std::size_t>(lo, 1); t <= hi; ++t, ++count)
      s += highfreq_event_similarity(pred.frames[t], aggregate_voxel(ws.voxels[t]), cfg_.spectral_cutoff);
    return count ? s / count : 0.0;
  }

  MetricReport evaluate() {
    Stopwatch sw;
    RunManifest m = manifest("eval");
    auto r = evaluate_dir(ws_.sample(), cfg_.eval_first, cfg_.eval_last);
    const auto out = ws_.dir("eval");
    fs::remove_all(out);
    fs::create_directories(out);
    write_report(out / "metrics.csv", r);
    m.input("frames", ws_.rel(ws_.sample()));
    m.input("reference", ws_.rel(ws_.windows() / "reference"));
    m.output("metrics", ws_.rel(out / "metrics.csv"));
    m.result("mean_mse", r.mean_mse);
    m.result("mean_ssim", r.mean_ssim);
    m.result("mean_perceptual", r.mean_perceptual);
    m.timing("total", sw.seconds());
    m.write(out);
    return r;
  }

  struct AblationResult {
    std::string row;
    PipelineConfig config;
    std::string segment;
    MetricReport report;
    double highfreq = 0.0;
  };

  std::vector<AblationResult> ablate() {
    Stopwatch sw;
    RunManifest m = manifest("ablate");
    const auto out = ws_.dir("ablate");
    fs::remove_all(out);
    fs::create_directories(out);
    const std::size_t n = windows().size();
    const std::size_t train_n = train_count(n);
    std::vector<AblationResult> results;
    for (const auto& row : ablation_rows()) {
      say("ablate: " + row.name);
      const auto cfg = with_ablation(cfg_, row);
      const auto dir = out / row.name;
      train_diffusion_into(cfg, dir / "train-diffusion");
      Stopwatch ss;
      RunManifest sm = manifest("sample", cfg);
      sample_into(cfg, dir / "train-diffusion" / "denoiser.ckpt", cfg.sample_steps, dir / "sample" / "frames");
      sm.output("frames", ws_.rel(dir / "sample" / "frames"));
      sm.timing("total", ss.seconds());
      sm.write(dir / "sample");

      RunManifest em = manifest("eval", cfg);
      fs::create_directories(dir / "eval");
      auto r = evaluate_dir(dir / "sample" / "frames", cfg.eval_first, cfg.eval_last);
      write_report(dir / "eval" / "metrics.csv", r);
      em.output("metrics", ws_.rel(dir / "eval" / "metrics.csv"));
      results.push_back({row.name, cfg, "eval", r,
                         highfreq_similarity_dir(dir / "sample" / "frames", cfg.eval_first, cfg.eval_last)});
      if (train_n < n) {
        auto h = evaluate_dir(dir / "sample" / "frames", static_cast<int>(train_n), -1);
        write_report(dir / "eval" / "heldout.csv", h);
        em.output("heldout", ws_.rel(dir / "eval" / "heldout.csv"));
        results.push_back({row.name, cfg, "heldout", h,
                           highfreq_similarity_dir(dir / "sample" / "frames", static_cast<int>(train_n), -1)});
      }
      em.write(dir / "eval");
    }
    {
      std::ofstream f(out / "ablation.csv");
      if (!f) throw std::runtime_error("cannot write ablation.csv");
      f << "row,residual,recurrent,cross_att,event,segment,frames,mse,ssim,perceptual,highfreq_event_similarity\n";
      for (const auto& r : results) {
        f << r.row << ',' << r.config.flags.residual << ',' << r.config.flags.recurrent << ','
          << r.config.denoiser.cross_attention << ',' << r.config.flags.event << ',' << r.segment << ','
          << r.report.frame_count() << ',' << detail::format_double(r.report.mean_mse) << ','
          << detail::format_double(r.report.mean_ssim) << ',' << detail::format_double(r.report.mean_perceptual) << ','
          << detail::format_double(r.highfreq) << '\n';
      }
    }
    m.output("table", ws_.rel(out / "ablation.csv"));
    m.timing("total", sw.seconds());
    m.write(out);
    return results;
  }

  /// Spectral panels for every frame of `pred_dir`; returns the per-frame
  /// high-frequency / event similarity.
  std::vector<double> spectra_into(const fs::path& pred_dir, const fs::path& out) const {
    auto pred = read_frame_directory(pred_dir);
    auto ws = windows();
    if (pred.size() != ws.size()) throw ValidationError("predicted video and voxel archive differ in length");
    fs::remove_all(out);
    fs::create_directories(out);
    std::vector<double> sim;
    std::ofstream csv(out / "spectra.csv");
    if (!csv) throw std::runtime_error("cannot write spectra.csv");
    csv << "frame,highfreq_event_similarity\n";
    for (std::size_t t = 0; t < pred.size(); ++t) {
      const auto dir = out / ("frame_" + frame_filename(t).substr(6, 5));
      fs::create_directories(dir);
      const Image agg = aggregate_voxel(ws.voxels[t]);
      const auto [low, high] = split_frequency(pred.frames[t], cfg_.spectral_cutoff);
      export_normalized(dir / "recon.pgm", pred.frames[t]);
      export_normalized(dir / "spectrum.pgm", fft_magnitude_spectrum(pred.frames[t]));
      export_normalized(dir / "low.pgm", low);
      export_normalized(dir / "high.pgm", high);
      export_normalized(dir / "events.pgm", agg);
      sim.push_back(highfreq_event_similarity(pred.frames[t], agg, cfg_.spectral_cutoff));
      csv << t << ',' << detail::format_double(sim.back()) << '\n';
    }
    csv << "mean," << detail::format_double(mean_similarity(sim)) << '\n';
    return sim;
  }

  /// Mean over frames 1..N-1 (frame 0 carries no events).
  static double mean_similarity(const std::vector<double>& sim) {
    if (sim.size() < 2) return 0.0;
    double s = 0.0;
    for (std::size_t i = 1; i < sim.size(); ++i) s += sim[i];
    return s / static_cast<double>(sim.size() - 1);
  }

  std::vector<double> spectra() {
    Stopwatch sw;
    RunManifest m = manifest("spectra");
    const auto out = ws_.dir("spectra");
    auto sim = spectra_into(ws_.sample(), out);
    m.input("frames", ws_.rel(ws_.sample()));
    m.input("voxels", ws_.rel(ws_.windows() / "voxels.vox"));
    m.output("table", ws_.rel(out / "spectra.csv"));
    m.result("mean_highfreq_event_similarity", mean_similarity(sim));
    m.timing("total", sw.seconds());
    m.write(out);
    return sim;
  }

  struct SweepRow {
    int steps = 0;
    MetricReport report;
    double runtime_s = 0.0;
  };

  std::vector<SweepRow> sweep_steps() {
    Stopwatch sw;
    RunManifest m = manifest("sweep-steps");
    if (!fs::exists(ws_.denoiser())) throw MissingArtifactError("checkpoint not found: " + ws_.denoiser().string());
    std::set<int, std::greater<>> steps(cfg_.sweep_steps.begin(), cfg_.sweep_steps.end());
    const auto out = ws_.dir("sweep-steps");
    fs::remove_all(out);
    fs::create_directories(out);
    std::vector<SweepRow> rows;
    for (int k : steps) {
      Stopwatch run;
      const auto dir = out / ("steps_" + std::to_string(k)) / "frames";
      sample_into(cfg_, ws_.denoiser(), k, dir);
      const double runtime = run.seconds();
      rows.push_back({k, evaluate_dir(dir, cfg_.eval_first, cfg_.eval_last), runtime});
      say("sweep-steps: " + std::to_string(k) + " steps in " + detail::format_double(runtime) + " s");
    }
    std::ofstream f(out / "sweep.csv");
    if (!f) throw std::runtime_error("cannot write sweep.csv");
    f << "steps,mse,ssim,perceptual,runtime_s\n";
    for (const auto& r : rows)
      f << r.steps << ',' << detail::format_double(r.report.mean_mse) << ',' << detail::format_double(r.report.mean_ssim)
        << ',' << detail::format_double(r.report.mean_perceptual) << ',' << detail::format_double(r.runtime_s) << '\n';
    m.input("denoiser", ws_.rel(ws_.denoiser()));
    m.output("table", ws_.rel(out / "sweep.csv"));
    m.timing("total", sw.seconds());
    m.write(out);
    return rows;
  }

  /// Runs one named command.
  void run(const std::string& command) {
    if (command == "simulate") simulate();
    else if (command == "voxelize") voxelize();
    else if (command == "train-predictor") train_predictor();
    else if (command == "train-diffusion") train_diffusion();
    else if (command == "sample") sample();
    else if (command == "eval") evaluate();
    else if (command == "ablate") ablate();
    else if (command == "spectra") spectra();
    else if (command == "sweep-steps") sweep_steps();
    else throw ValidationError("unknown command '" + command + "'");
  }

 private:
  RunManifest manifest(const std::string& command) const { return manifest(command, cfg_); }
  RunManifest manifest(const std::string& command, const PipelineConfig& cfg) const {
    RunManifest m;
    m.command = command;
    m.config = cfg;
    return m;
  }

  void say(const std::string& s) const {
    if (log_) *log_ << s << std::endl;
  }

  static std::vector<double> train_predictor_impl(Predictor<Model>& net, const std::vector<PredictorScene>& scenes,
                                                  const PredictorTrainOptions& opts) {
    return tresdiff::train_predictor(net, scenes, opts);
  }

  template <class F>
  static void save_checkpoint(const fs::path& path, F&& write) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    write(out);
  }

  static void write_loss_csv(const fs::path& path, const std::vector<double>& losses) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    f << "iteration,loss\n";
    for (std::size_t i = 0; i < losses.size(); ++i) f << i << ',' << detail::format_double(losses[i]) << '\n';
  }

  static void write_report(const fs::path& path, const MetricReport& r) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    write_metric_csv(f, r);
  }

  PipelineConfig cfg_;
  Workspace ws_;
  std::ostream* log_;
};

/// Maps an exception thrown by a command to its exit status.
inline ExitCode classify_exception(const std::exception& e) {
  if (dynamic_cast<const CheckpointMismatchError*>(&e)) return ExitCode::checkpoint_mismatch;
  if (dynamic_cast<const MissingArtifactError*>(&e)) return ExitCode::missing_artifact;
  if (dynamic_cast<const ValidationError*>(&e) || dynamic_cast<const ParseError*>(&e)) return ExitCode::validation_failure;
  return ExitCode::runtime_failure;
}

}  // namespace tresdiff
