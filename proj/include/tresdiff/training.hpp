#pragma once

// Sequence-level diffusion training: frames are visited in order so the event
// encoder's recurrent state carries across the sequence, with one optimizer
// step per frame.

#include <cmath>
#include <functional>
#include <vector>

#include "tresdiff/denoiser.hpp"
#include "tresdiff/diffusion.hpp"
#include "tresdiff/nn/adam.hpp"
#include "tresdiff/predictor.hpp"

namespace tresdiff {

/// Runs a (frozen) predictor over the whole sequence; element t is the
/// estimate after consuming voxels[0..t].
template <IntensityPredictor P>
std::vector<IntensityImage> predictor_estimates(P& predictor, const std::vector<VoxelGrid>& voxels) {
  std::vector<IntensityImage> out;
  typename P::State st{};
  for (const auto& v : voxels) {
    auto [img, next] = predictor.predict_intensity(v, st);
    img.timestamp = v.t_end;
    out.push_back(std::move(img));
    st = std::move(next);
  }
  return out;
}

struct DiffusionTrainOptions {
  int iterations = 400;
  double learning_rate = 1e-3;
  double final_learning_rate = 1e-4;  ///< cosine decay target
  int batch = 1;
  double grad_clip = 1.0;
  ConditioningFlags flags;
};

inline double cosine_learning_rate(double lr0, double lr1, long long step, long long total) {
  if (total <= 1) return lr0;
  const double pi = std::acos(-1.0);
  const double a = static_cast<double>(step) / static_cast<double>(total - 1);
  return lr1 + 0.5 * (lr0 - lr1) * (1.0 + std::cos(pi * a));
}

/// Trains on frames 1..n-1 of one sequence. `frames[t]` is the ground truth
/// I^t, `estimates[t-1]` the predictor output paired with it. Returns the mean
/// epsilon-loss of every iteration.
template <typename T>
std::vector<double> train_diffusion(Denoiser<T>& net, const std::vector<IntensityImage>& frames,
                                    const std::vector<IntensityImage>& estimates, const std::vector<VoxelGrid>& voxels,
                                    const NoiseSchedule& sched, RngState& rng, const DiffusionTrainOptions& opts,
                                    const std::function<void(int, double)>& on_iteration = {}) {
  require(opts.iterations >= 0 && opts.batch >= 1, "invalid diffusion training options");
  require(frames.size() == voxels.size() && estimates.size() == voxels.size(),
          "train_diffusion: frame, estimate and voxel counts differ");
  require(voxels.size() >= 2, "train_diffusion needs at least two windows");

  DenoiserModel<T> model(net);
  nn::Adam<T> opt(net.parameters(), nn::AdamOptions{.learning_rate = opts.learning_rate, .grad_clip_norm = opts.grad_clip});
  const long long total = static_cast<long long>(opts.iterations) * static_cast<long long>(voxels.size() - 1);
  std::vector<double> losses;
  for (int it = 0; it < opts.iterations; ++it) {
    typename DenoiserModel<T>::State state{};
    double sum = 0.0;
    for (std::size_t t = 1; t < voxels.size(); ++t) {
      opt.set_learning_rate(cosine_learning_rate(opts.learning_rate, opts.final_learning_rate, opt.steps(), total));
      typename DenoiserModel<T>::State next{};
      for (int b = 0; b < opts.batch; ++b) {
        auto r = training_step(frames[t], estimates[t - 1], voxels[t], state, sched, model, rng, opts.flags);
        sum += r.loss;
        if (b == 0) next = std::move(r.next_state);
      }
      opt.step(1.0 / opts.batch);
      state = std::move(next);
    }
    const double mean = sum / static_cast<double>((voxels.size() - 1) * opts.batch);
    losses.push_back(mean);
    if (on_iteration) on_iteration(it, mean);
  }
  return losses;
}

inline double trailing_mean(const std::vector<double>& v, std::size_t window) {
  if (v.empty()) return 0.0;
  const std::size_t n = std::min(window, v.size());
  double s = 0.0;
  for (std::size_t i = v.size() - n; i < v.size(); ++i) s += v[i];
  return s / static_cast<double>(n);
}

}  // namespace tresdiff
