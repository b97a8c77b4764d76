#pragma once

// Forward/reverse diffusion arithmetic over images, the temporal-residual
// target, the per-frame training step and the per-scene sampling loop.
//
// Models plug in through two concepts:
//
//   NoiseModel          begin_frame(voxel, intensity_prev, state, train) -> Frame
//                       predict(frame, x_tau, model_step) -> Image
//                       next_state(frame) -> State
//   TrainableNoiseModel additionally epsilon_loss(frame, x_tau, model_step, eps)
//                       -> double, accumulating parameter gradients
//   IntensityPredictor  predict_intensity(voxel, state) -> (IntensityImage, State)
//
// A Frame caches everything that does not depend on the diffusion step, so the
// reverse loop evaluates the condition encoders once per video frame.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "tresdiff/common.hpp"
#include "tresdiff/rng.hpp"
#include "tresdiff/schedule.hpp"
#include "tresdiff/voxel.hpp"

namespace tresdiff {

// ---------------------------------------------------------------------------
// Arithmetic

inline ResidualImage compute_residual_target(const IntensityImage& current, const IntensityImage& previous_estimate) {
  require_same_shape(current.values, previous_estimate.values, "compute_residual_target");
  ResidualImage r{Image(current.values.height, current.values.width)};
  for (std::size_t i = 0; i < r.values.size(); ++i)
    r.values.pixels[i] = current.values.pixels[i] - previous_estimate.values.pixels[i];
  return r;
}

namespace detail {
inline Image affine2(double a, const Image& x, double b, const Image& y) {
  Image out(x.height, x.width);
  for (std::size_t i = 0; i < out.size(); ++i) out.pixels[i] = a * x.pixels[i] + b * y.pixels[i];
  return out;
}
}  // namespace detail

/// x_tau = sqrt(abar_tau) x0 + sqrt(1 - abar_tau) eps.
inline Image diffuse(const ResidualImage& x0, int tau, const Image& eps, const NoiseSchedule& sched) {
  sched.check_step(tau);
  require_same_shape(x0.values, eps, "diffuse");
  const double ab = sched.alpha_bar(tau);
  return detail::affine2(std::sqrt(ab), x0.values, std::sqrt(1.0 - ab), eps);
}

/// One forward Markov step: x_tau = sqrt(1 - beta_tau) x_{tau-1} + sqrt(beta_tau) eps.
inline Image diffuse_step(const Image& x_prev, int tau, const Image& eps, const NoiseSchedule& sched) {
  sched.check_step(tau);
  require_same_shape(x_prev, eps, "diffuse_step");
  const double b = sched.beta(tau);
  return detail::affine2(std::sqrt(1.0 - b), x_prev, std::sqrt(b), eps);
}

/// mu = (x_tau - beta_tau / sqrt(1 - abar_tau) eps_pred) / sqrt(alpha_tau).
inline Image posterior_mean(const Image& x_tau, const Image& eps_pred, int tau, const NoiseSchedule& sched) {
  sched.check_step(tau);
  require_same_shape(x_tau, eps_pred, "posterior_mean");
  const double inv = 1.0 / std::sqrt(sched.alpha(tau));
  return detail::affine2(inv, x_tau, -inv * sched.beta(tau) / std::sqrt(1.0 - sched.alpha_bar(tau)), eps_pred);
}

/// Mean of q(x_{tau-1} | x_tau, x0).
inline Image analytic_posterior_mean(const Image& x_tau, const ResidualImage& x0, int tau, const NoiseSchedule& sched) {
  sched.check_step(tau);
  require_same_shape(x_tau, x0.values, "analytic_posterior_mean");
  if (tau == 1) return x0.values;  // alpha_bar(0) == 1: the coefficients are exactly (1, 0)
  const double ab = sched.alpha_bar(tau);
  const double ab_prev = sched.alpha_bar(tau - 1);
  const double c0 = std::sqrt(ab_prev) * sched.beta(tau) / (1.0 - ab);
  const double ct = std::sqrt(sched.alpha(tau)) * (1.0 - ab_prev) / (1.0 - ab);
  return detail::affine2(c0, x0.values, ct, x_tau);
}

/// x_{tau-1} = mu + sqrt(sigma2_tau) z.
inline Image sample_step(const Image& x_tau, const Image& eps_pred, int tau, const Image& z, const NoiseSchedule& sched) {
  Image mu = posterior_mean(x_tau, eps_pred, tau, sched);
  require_same_shape(mu, z, "sample_step");
  const double s = std::sqrt(sched.sigma2(tau));
  for (std::size_t i = 0; i < mu.size(); ++i) mu.pixels[i] += s * z.pixels[i];
  return mu;
}

/// The z = 0 branch.
inline Image sample_step(const Image& x_tau, const Image& eps_pred, int tau, const NoiseSchedule& sched) {
  return posterior_mean(x_tau, eps_pred, tau, sched);
}

/// x0 implied by a noise prediction: (x_tau - sqrt(1 - abar) eps) / sqrt(abar).
inline Image predict_x0(const Image& x_tau, const Image& eps_pred, int tau, const NoiseSchedule& sched) {
  sched.check_step(tau);
  require_same_shape(x_tau, eps_pred, "predict_x0");
  const double ab = sched.alpha_bar(tau);
  return detail::affine2(1.0 / std::sqrt(ab), x_tau, -std::sqrt((1.0 - ab) / ab), eps_pred);
}

/// Posterior mean through the implied x0 clamped to [-bound, bound]. Equal to
/// posterior_mean() whenever no pixel is clamped.
inline Image clipped_posterior_mean(const Image& x_tau, const Image& eps_pred, int tau, const NoiseSchedule& sched,
                                    double bound) {
  Image x0 = predict_x0(x_tau, eps_pred, tau, sched);
  for (double& v : x0.pixels) v = std::clamp(v, -bound, bound);
  return analytic_posterior_mean(x_tau, ResidualImage{std::move(x0)}, tau, sched);
}

// ---------------------------------------------------------------------------
// Model interfaces

template <class M>
concept NoiseModel = requires(M& m, const VoxelGrid& v, const IntensityImage& i, const typename M::State& s,
                              const typename M::Frame& f, const Image& x, int tau) {
  { m.begin_frame(v, i, s, true) } -> std::same_as<typename M::Frame>;
  { m.predict(f, x, tau) } -> std::same_as<Image>;
  { m.next_state(f) } -> std::same_as<typename M::State>;
};

template <class M>
concept TrainableNoiseModel = NoiseModel<M> && requires(M& m, const typename M::Frame& f, const Image& x, int tau) {
  { m.epsilon_loss(f, x, tau, x) } -> std::convertible_to<double>;
};

template <class P>
concept IntensityPredictor = requires(P& p, const VoxelGrid& v, const typename P::State& s) {
  { p.predict_intensity(v, s) } -> std::same_as<std::pair<IntensityImage, typename P::State>>;
};

/// The strategy toggles of the ablation grid that act outside the network.
/// Cross attention is a network setting (DenoiserConfig::cross_attention).
struct ConditioningFlags {
  bool residual = true;   ///< diffuse I^t - I~^{t-1}; otherwise diffuse I^t itself
  bool recurrent = true;  ///< carry the event encoder state across frames
  bool event = true;      ///< feed the voxel grid; otherwise a zero grid

  friend bool operator==(const ConditioningFlags&, const ConditioningFlags&) = default;
};

inline void require_voxel_matches(const VoxelGrid& v, const Image& img, const char* what) {
  if (v.height != img.height || v.width != img.width) {
    throw ValidationError(std::string(what) + ": voxel grid and image geometry differ");
  }
}

template <class State>
struct TrainingStepResult {
  double loss = 0.0;
  State next_state;
  int tau = 0;
};

/// One per-frame step of the training loop: draws tau and eps, diffuses the
/// target and accumulates gradients of mean |eps - eps_theta| in the model.
/// Applying the parameter update is left to the caller.
template <TrainableNoiseModel M>
TrainingStepResult<typename M::State> training_step(const IntensityImage& current, const IntensityImage& previous_estimate,
                                                    const VoxelGrid& voxel, const typename M::State& state,
                                                    const NoiseSchedule& sched, M& model, RngState& rng,
                                                    const ConditioningFlags& flags = {}) {
  require_voxel_matches(voxel, current.values, "training_step");
  require_voxel_matches(voxel, previous_estimate.values, "training_step");
  ResidualImage x0 = flags.residual ? compute_residual_target(current, previous_estimate) : ResidualImage{current.values};
  const int tau = static_cast<int>(rng.uniform_int(1, sched.steps()));
  Image eps = rng.normal_image(x0.values.height, x0.values.width);
  Image x_tau = diffuse(x0, tau, eps, sched);

  const VoxelGrid& v_in = flags.event ? voxel : zero_voxel_like(voxel);
  const typename M::State empty{};
  auto frame = model.begin_frame(v_in, previous_estimate, flags.recurrent ? state : empty, true);
  const double loss = model.epsilon_loss(frame, x_tau, sched.model_step(tau), eps);
  return {loss, flags.recurrent ? model.next_state(frame) : empty, tau};
}

// ---------------------------------------------------------------------------
// Sampling

enum class RecurrenceMode {
  always,          ///< accumulate event features over the whole sequence
  never,           ///< empty state every frame
  from_midpoint,   ///< empty until the middle frame, accumulate afterwards
  until_midpoint,  ///< accumulate until the middle frame, empty afterwards
};

struct SamplerOptions {
  ConditioningFlags flags;
  RecurrenceMode recurrence = RecurrenceMode::always;
  /// false: x ~ N(0, I) enters the first update at tau = T-1 and the loop runs
  /// tau = T-1..1. true: tau = T..1.
  bool start_at_final_step = false;
  /// Forces every z to zero (deterministic reverse process; test hook).
  bool zero_noise = false;
  /// Clamp the implied x0 to [-x0_bound, x0_bound] before each update. Off
  /// gives the plain eps-form update.
  bool clip_x0 = false;
  double x0_bound = 1.0;
};

/// The inner reverse loop for one frame, starting from `x`.
template <NoiseModel M>
Image reverse_diffusion(M& model, const typename M::Frame& frame, Image x, const NoiseSchedule& sched, RngState& rng,
                        const SamplerOptions& opts = {}) {
  const int first = opts.start_at_final_step ? sched.steps() : sched.steps() - 1;
  for (int tau = first; tau >= 1; --tau) {
    Image eps = model.predict(frame, x, sched.model_step(tau));
    Image mu = opts.clip_x0 ? clipped_posterior_mean(x, eps, tau, sched, opts.x0_bound) : posterior_mean(x, eps, tau, sched);
    if (tau > 1 && !opts.zero_noise) {
      const Image z = rng.normal_image(x.height, x.width);
      const double s = std::sqrt(sched.sigma2(tau));
      for (std::size_t i = 0; i < mu.size(); ++i) mu.pixels[i] += s * z.pixels[i];
    }
    x = std::move(mu);
  }
  return x;
}

inline bool recurrence_active(RecurrenceMode mode, std::size_t t, std::size_t frames) {
  const std::size_t mid = frames / 2;
  switch (mode) {
    case RecurrenceMode::always: return true;
    case RecurrenceMode::never: return false;
    case RecurrenceMode::from_midpoint: return t >= mid;
    case RecurrenceMode::until_midpoint: return t < mid;
  }
  return true;
}

/// Reconstructs {I~^0, I^1, ..., I^{N-1}} from N voxel grids.
template <IntensityPredictor P, NoiseModel M>
std::vector<IntensityImage> sample_sequence(const std::vector<VoxelGrid>& voxels, P& predictor, M& model,
                                            const NoiseSchedule& sched, RngState& rng, const SamplerOptions& opts = {}) {
  if (voxels.empty()) throw ValidationError("sample_sequence: empty voxel sequence");
  for (const auto& v : voxels) {
    if (v.bins != voxels[0].bins || v.height != voxels[0].height || v.width != voxels[0].width) {
      throw ValidationError("sample_sequence: voxel grids differ in geometry");
    }
  }
  std::vector<IntensityImage> video;
  typename P::State pstate{};
  auto [estimate, ps] = predictor.predict_intensity(voxels[0], pstate);
  pstate = std::move(ps);
  estimate.timestamp = voxels[0].t_end;
  video.push_back(estimate);

  const typename M::State empty{};
  typename M::State state{};
  for (std::size_t t = 1; t < voxels.size(); ++t) {
    const bool carry = opts.flags.recurrent && recurrence_active(opts.recurrence, t, voxels.size());
    const VoxelGrid& v_in = opts.flags.event ? voxels[t] : zero_voxel_like(voxels[t]);
    auto frame = model.begin_frame(v_in, estimate, carry ? state : empty, false);

    Image x = rng.normal_image(voxels[t].height, voxels[t].width);
    Image x0 = reverse_diffusion(model, frame, std::move(x), sched, rng, opts);

    IntensityImage out;
    out.timestamp = voxels[t].t_end;
    if (opts.flags.residual) {
      out.values = x0;
      for (std::size_t i = 0; i < x0.size(); ++i) out.values.pixels[i] += estimate.values.pixels[i];
    } else {
      out.values = std::move(x0);
    }
    out.values = clamp01(std::move(out.values));
    video.push_back(std::move(out));

    state = carry ? model.next_state(frame) : empty;
    auto [next_estimate, next_ps] = predictor.predict_intensity(voxels[t], pstate);
    estimate = std::move(next_estimate);
    estimate.timestamp = voxels[t].t_end;
    pstate = std::move(next_ps);
  }
  return video;
}

}  // namespace tresdiff
