// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance [WORKSPACE] [CRITERION...]
//
// Criteria 6-10 drive the tresdiff CLI inside WORKSPACE (default: a directory
// under the system temp path) and log its output to WORKSPACE/cli.log.
// Listing criterion numbers runs only those. Exit status is 0 only if every
// criterion run passes. The lines are also written to WORKSPACE/report.txt.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "stub_models.hpp"
#include "tresdiff/denoiser.hpp"
#include "tresdiff/diffusion.hpp"
#include "tresdiff/manifest.hpp"
#include "tresdiff/metrics.hpp"
#include "tresdiff/predictor.hpp"
#include "tresdiff/spectral.hpp"
#include "tresdiff/voxel.hpp"

#ifndef TRESDIFF_CLI
#error "TRESDIFF_CLI must name the tresdiff executable"
#endif

using namespace tresdiff;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances and budgets.
constexpr double kConservationTol = 1e-6;
constexpr double kPosteriorTol = 1e-6;
constexpr double kMomentRelTol = 0.02;
constexpr double kOracleSamplerTol = 1e-4;
constexpr double kGradRelTol = 1e-3;
constexpr double kOverfitEpsLoss = 0.1;
constexpr double kOverfitMse = 0.02;
constexpr double kOverfitSsim = 0.7;
constexpr double kSpectralTol = 1e-6;

constexpr double kBudget1 = 5, kBudget2 = 5, kBudget3 = 30, kBudget4 = 10, kBudget5 = 300, kBudget6 = 1800;

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

int failures = 0;
std::vector<int> selected;
std::ofstream report_file;

void run_criterion(int id, const std::string& name, double budget_s, const std::function<Outcome()>& body) {
  if (!selected.empty() && std::find(selected.begin(), selected.end(), id) == selected.end()) return;
  const auto t0 = Clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double s = std::chrono::duration<double>(Clock::now() - t0).count();
  if (budget_s > 0 && s > budget_s) {
    o.pass = false;
    o.detail += "; over the " + detail::format_double(budget_s) + " s budget";
  }
  if (!o.pass) ++failures;
  std::ostringstream line;
  line << "criterion " << id << " " << name << ": " << (o.pass ? "PASS" : "FAIL") << " (" << o.detail << ") ["
       << std::fixed;
  line.precision(2);
  line << s << " s]";
  std::cout << line.str() << std::endl;
  report_file << line.str() << std::endl;
}

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(4);
  s << v;
  return s.str();
}

int cli(const fs::path& ws, const std::string& args) {
  const std::string cmd = std::string("\"") + TRESDIFF_CLI + "\" " + args + " --quiet --out \"" + ws.string() +
                          "\" >> \"" + (ws.parent_path() / "cli.log").string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void cli_ok(const fs::path& ws, const std::string& args) {
  if (const int rc = cli(ws, args); rc != 0) throw std::runtime_error("'tresdiff " + args + "' exited " + std::to_string(rc));
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw std::runtime_error("missing " + p.string());
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) cells.push_back(c);
    rows.push_back(cells);
  }
  return rows;
}

MetricReport read_report(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw std::runtime_error("missing " + p.string());
  return read_metric_csv(in);
}

Image random_image(int h, int w, RngState& rng) {
  Image img(h, w);
  for (double& v : img.pixels) v = rng.uniform();
  return img;
}

// ---------------------------------------------------------------------------

Outcome voxel_conservation() {
  RngState rng(101);
  const SensorGeometry g{64, 64};
  const int bins = 5;
  std::vector<Event> ev;
  double t = 0;
  for (int i = 0; i < 10000; ++i)
    ev.push_back({t += rng.uniform(), static_cast<int>(rng.uniform_int(0, 63)), static_cast<int>(rng.uniform_int(0, 63)),
                  rng.uniform() < 0.5 ? -1 : 1});
  auto w = make_window(ev, g);
  auto v = build_voxel_grid(w, bins);
  const double err = std::abs(v.total() - w.polarity_sum());
  // Locality: an interior event's contribution, isolated by linearity over a window with the same span,
  // touches only its own pixel and at most two adjacent bins.
  const Event first = ev.front(), last = ev.back();
  const auto base = build_voxel_grid(EventWindow{{first, last}, w.t_start, w.t_end, g}, bins);
  std::size_t bad = 0;
  for (std::size_t i = 1; i + 1 < ev.size(); ++i) {
    const Event& e = ev[i];
    const auto with = build_voxel_grid(EventWindow{{first, e, last}, w.t_start, w.t_end, g}, bins);
    std::vector<int> touched;
    double mass = 0;
    for (int b = 0; b < bins; ++b)
      for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x) {
          const double d = with.at(b, y, x) - base.at(b, y, x);
          if (std::abs(d) <= 1e-12) continue;
          if (y != e.y || x != e.x) ++bad;
          touched.push_back(b);
          mass += d;
        }
    if (touched.empty() || touched.size() > 2 || (touched.size() == 2 && touched[1] != touched[0] + 1) ||
        std::abs(mass - e.p) > 1e-12)
      ++bad;
  }
  return {err <= kConservationTol && bad == 0,
          "|sum V - sum p| = " + fmt(err) + ", locality violations = " + std::to_string(bad)};
}

Outcome posterior_identity() {
  const auto s = make_schedule(100, 1e-4, 0.02);
  RngState rng(102);
  double worst = 0;
  for (int i = 0; i < 100; ++i) {
    ResidualImage x0{Image(8, 8)};
    for (double& v : x0.values.pixels) v = 2 * rng.uniform() - 1;
    const int tau = static_cast<int>(rng.uniform_int(1, 100));
    const Image eps = rng.normal_image(8, 8);
    const Image x = diffuse(x0, tau, eps, s);
    const Image a = posterior_mean(x, eps, tau, s), b = analytic_posterior_mean(x, x0, tau, s);
    for (std::size_t k = 0; k < a.size(); ++k) worst = std::max(worst, std::abs(a.pixels[k] - b.pixels[k]));
  }
  ResidualImage x0{random_image(8, 8, rng)};
  const bool collapse = analytic_posterior_mean(rng.normal_image(8, 8), x0, 1, s) == x0.values;
  const bool sigma1 = s.sigma2(1) == 0.0;
  return {worst <= kPosteriorTol && collapse && sigma1,
          "max |diff| = " + fmt(worst) + ", sigma2(1) = 0: " + (sigma1 ? "yes" : "no") +
              ", tau=1 collapse exact: " + (collapse ? "yes" : "no")};
}

Outcome composition_moments() {
  const int T = 100, n = 50000;
  const auto s = make_schedule(T, 1e-4, 0.02);
  RngState rng(103);
  double worst = 0;
  for (int tau : {1, T / 2, T}) {
    Image step(1, n, 1.0);
    for (int t = 1; t <= tau; ++t) step = diffuse_step(step, t, rng.normal_image(1, n), s);
    const Image direct = diffuse(ResidualImage{Image(1, n, 1.0)}, tau, rng.normal_image(1, n), s);
    auto moments = [&](const Image& x) {
      double m = 0, q = 0;
      for (double v : x.pixels) m += v, q += v * v;
      m /= n;
      return std::pair{m, q / n - m * m};
    };
    const auto [ms, vs] = moments(step);
    const auto [md, vd] = moments(direct);
    worst = std::max({worst, std::abs(ms / md - 1), std::abs(vs / vd - 1)});
  }
  return {worst <= kMomentRelTol, "max relative moment gap = " + fmt(worst)};
}

Outcome oracle_sampler() {
  const auto s = make_schedule(100, 1e-4, 0.02);
  RngState rng(104);
  Image target(32, 32);
  for (double& v : target.pixels) v = 2 * rng.uniform() - 1;
  stub::OracleStub model{s, target};
  SamplerOptions o;
  o.zero_noise = true;
  const Image x = reverse_diffusion(model, stub::OracleStub::Frame{}, rng.normal_image(32, 32), s, rng, o);
  double worst = 0;
  for (std::size_t i = 0; i < x.size(); ++i) worst = std::max(worst, std::abs(x.pixels[i] - target.pixels[i]));
  return {worst <= kOracleSamplerTol, "max |x - x0*| = " + fmt(worst)};
}

template <typename T>
nn::Tensor<T> random_tensor(nn::Shape shape, RngState& rng, double scale = 1.0) {
  std::vector<T> v(nn::shape_size(shape));
  for (T& x : v) x = static_cast<T>(scale * rng.normal());
  return nn::Tensor<T>::from(std::move(shape), std::move(v));
}

void perturb_biases(nn::ParameterStore<double>& params, RngState& rng) {
  for (const auto& [name, t0] : params.entries()) {
    nn::Tensor<double> t = t0;
    if (name.ends_with(".bias") || name.ends_with(".beta"))
      for (double& x : t.value()) x = 0.1 * rng.normal();
  }
}

Outcome gradient_checks() {
  RngState rng(105);
  DenoiserConfig dc;
  dc.scales = 2;
  dc.base_channels = 4;
  dc.voxel_bins = 2;
  dc.groupnorm_groups = 2;
  dc.time_embed_dim = 8;
  Denoiser<double> net(dc, 21);
  perturb_biases(net.parameters(), rng);
  auto v0 = random_tensor<double>({2, 8, 8}, rng), v1 = random_tensor<double>({2, 8, 8}, rng);
  auto i0 = random_tensor<double>({1, 8, 8}, rng, 0.3), i1 = random_tensor<double>({1, 8, 8}, rng, 0.3);
  auto x = random_tensor<double>({1, 8, 8}, rng), target = random_tensor<double>({1, 8, 8}, rng);
  auto dloss = [&] {
    auto c0 = net.encode_conditions(v0, i0, {});
    auto c1 = net.encode_conditions(v1, i1, c0.next_state);
    return nn::l1_loss(net.predict_with(x, v1, c1, 4), target, 1e-8);
  };
  const auto d = oracle::check_gradients(net.parameters(), dloss, 1e-4, 1, 1e-8);

  Predictor<double> p(PredictorConfig{.voxel_bins = 2, .channels0 = 3, .channels1 = 4}, 3);
  perturb_biases(p.parameters(), rng);
  auto pv0 = random_tensor<double>({2, 8, 8}, rng), pv1 = random_tensor<double>({2, 8, 8}, rng);
  auto tt = random_tensor<double>({1, 8, 8}, rng, 0.3);
  auto ploss = [&] {
    auto [y0, s0] = p.forward(pv0, {});
    auto [y1, s1] = p.forward(pv1, s0);
    return nn::add(nn::l1_loss(y0, tt, 1e-8), nn::l1_loss(y1, tt, 1e-8));
  };
  const auto q = oracle::check_gradients(p.parameters(), ploss, 1e-4, 1, 1e-8);
  return {d.max_rel_error < kGradRelTol && q.max_rel_error < kGradRelTol,
          "denoiser " + fmt(d.max_rel_error) + " over " + std::to_string(d.checked) + " params, predictor " +
              fmt(q.max_rel_error) + " over " + std::to_string(q.checked)};
}

Outcome overfit(const fs::path& ws) {
  fs::remove_all(ws);
  for (const char* c : {"simulate", "voxelize", "train-predictor", "train-diffusion", "sample"}) cli_ok(ws, c);
  cli_ok(ws, "eval --set eval.equalize=false --set eval.first_frame=0 --set eval.last_frame=15");
  const auto m = read_manifest(ws / "train-diffusion" / kManifestFile);
  const double eps = std::stod(m.get("result.final_eps_loss"));
  const auto r = read_report(ws / "eval" / "metrics.csv");
  return {eps < kOverfitEpsLoss && r.mean_mse < kOverfitMse && r.mean_ssim > kOverfitSsim && !r.equalized,
          "eps-loss " + fmt(eps) + ", MSE " + fmt(r.mean_mse) + ", SSIM " + fmt(r.mean_ssim) + " over " +
              std::to_string(r.frame_count()) + " frames, equalize off"};
}

struct AblationRow {
  double perceptual = 0, highfreq = 0;
};

std::map<std::string, AblationRow> read_ablation(const fs::path& ws, const std::string& segment) {
  const auto rows = read_csv(ws / "ablate" / "ablation.csv");
  if (rows.empty() || rows[0].size() != 11) throw std::runtime_error("ablation.csv has an unexpected header");
  std::map<std::string, AblationRow> out;
  for (std::size_t i = 1; i < rows.size(); ++i)
    if (rows[i].size() == 11 && rows[i][5] == segment) out[rows[i][0]] = {std::stod(rows[i][9]), std::stod(rows[i][10])};
  return out;
}

Outcome ablation(const fs::path& ws) {
  cli_ok(ws, "ablate --equalize 0");
  const auto held = read_ablation(ws, "heldout");
  const auto all = read_ablation(ws, "eval");
  const std::vector<std::string> names = {"full", "no_residual", "no_recurrent", "no_cross_att", "no_event"};
  bool complete = held.size() == names.size() && all.size() == names.size();
  for (const auto& n : names) complete = complete && held.count(n) && all.count(n);
  if (!complete) return {false, "ablation.csv is missing rows"};
  const double full = held.at("full").perceptual, off = held.at("no_event").perceptual;
  return {off > full, "held-out perceptual proxy, equalize off: full " + fmt(full) + ", event off " + fmt(off)};
}

Outcome sweep(const fs::path& ws) {
  cli_ok(ws, "sweep-steps");
  const auto rows = read_csv(ws / "sweep-steps" / "sweep.csv");
  if (rows.size() != 4 || rows[0] != std::vector<std::string>{"steps", "mse", "ssim", "perceptual", "runtime_s"})
    return {false, "sweep.csv does not have a header and three rows"};
  std::vector<int> steps;
  bool finite = true;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    steps.push_back(std::stoi(rows[i][0]));
    for (std::size_t c = 1; c < 5; ++c) finite = finite && std::isfinite(std::stod(rows[i][c]));
  }
  std::ostringstream d;
  d << "steps " << steps[0] << "," << steps[1] << "," << steps[2] << ", SSIM ";
  for (std::size_t i = 1; i < rows.size(); ++i) d << fmt(std::stod(rows[i][2])) << (i + 1 < rows.size() ? "," : "");
  return {steps == std::vector<int>{100, 50, 25} && finite, d.str()};
}

// Workspace contents with wall-clock fields removed.
std::map<std::string, std::string> snapshot(const fs::path& ws) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(ws)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const auto name = e.path().filename().string();
    if (name == kManifestFile || name == "sweep.csv") {
      std::istringstream ss(text);
      std::string line, kept;
      while (std::getline(ss, line)) {
        if (line.starts_with("timing.")) continue;
        if (name == "sweep.csv") line = line.substr(0, line.rfind(','));
        kept += line + '\n';
      }
      text = kept;
    }
    files[fs::relative(e.path(), ws).string()] = std::move(text);
  }
  return files;
}

Outcome determinism(const fs::path& ws) {
  fs::remove_all(ws);
  const std::string small =
      " --set train.predictor_iterations=20 --set train.iterations=6 --set sweep.steps=10,20 --set sample.steps=20";
  const std::vector<std::string> commands = {"simulate", "voxelize", "train-predictor", "train-diffusion", "sample",
                                             "eval",     "spectra",  "sweep-steps",     "ablate"};
  for (const auto& c : commands) cli_ok(ws, c + small);
  const auto before = snapshot(ws);
  for (const auto& c : commands) cli_ok(ws, c + " --manifest \"" + (ws / c / kManifestFile).string() + "\"");
  const auto after = snapshot(ws);
  std::size_t differing = 0;
  std::string first;
  for (const auto& [path, bytes] : before) {
    auto it = after.find(path);
    if (it == after.end() || it->second != bytes) {
      if (!differing) first = path;
      ++differing;
    }
  }
  differing += after.size() > before.size() ? after.size() - before.size() : 0;
  return {differing == 0, std::to_string(before.size()) + " files compared across " + std::to_string(commands.size()) +
                              " commands, " + std::to_string(differing) + " differ" +
                              (first.empty() ? "" : " (first: " + first + ")")};
}

Outcome spectral(const fs::path& ws) {
  RngState rng(110);
  double worst = 0;
  for (int i = 0; i < 50; ++i) {
    const int h = static_cast<int>(rng.uniform_int(4, 40)), w = static_cast<int>(rng.uniform_int(4, 40));
    const Image img = random_image(h, w, rng);
    const auto [low, high] = split_frequency(img, 0.05 + 0.9 * rng.uniform());
    double e = 0, el = 0, eh = 0;
    for (std::size_t k = 0; k < img.size(); ++k) {
      worst = std::max(worst, std::abs(low.pixels[k] + high.pixels[k] - img.pixels[k]));
      e += img.pixels[k] * img.pixels[k], el += low.pixels[k] * low.pixels[k], eh += high.pixels[k] * high.pixels[k];
    }
    worst = std::max(worst, std::abs(el + eh - e));
  }
  cli_ok(ws, "spectra");
  const auto all = read_ablation(ws, "eval");
  if (!all.count("full") || !all.count("no_event")) return {false, "ablation rows missing"};
  const double full = all.at("full").highfreq, off = all.at("no_event").highfreq;
  return {worst <= kSpectralTol && full > off, "identity error " + fmt(worst) + ", high-frequency/event similarity: full " +
                                                   fmt(full) + ", event off " + fmt(off)};
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path root = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "tresdiff-acceptance";
  for (int i = 2; i < argc; ++i) selected.push_back(std::stoi(argv[i]));
  fs::create_directories(root);
  report_file.open(root / "report.txt");
  const fs::path desk = root / "desk", det = root / "determinism";
  run_criterion(1, "voxel-conservation", kBudget1, voxel_conservation);
  run_criterion(2, "posterior-identity", kBudget2, posterior_identity);
  run_criterion(3, "composition-moments", kBudget3, composition_moments);
  run_criterion(4, "oracle-sampler", kBudget4, oracle_sampler);
  run_criterion(5, "gradient-checks", kBudget5, gradient_checks);
  run_criterion(6, "overfit-end-to-end", kBudget6, [&] { return overfit(desk); });
  run_criterion(7, "ablation-harness", 0, [&] { return ablation(desk); });
  run_criterion(8, "step-sweep", 0, [&] { return sweep(desk); });
  run_criterion(9, "determinism", 0, [&] { return determinism(det); });
  run_criterion(10, "spectral", 0, [&] { return spectral(desk); });
  const std::string summary = failures ? std::to_string(failures) + " criteria failed" : "all criteria passed";
  std::cout << summary << std::endl;
  report_file << summary << std::endl;
  return failures ? 1 : 0;
}
