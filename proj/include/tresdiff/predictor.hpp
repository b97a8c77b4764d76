#pragma once

// Initial intensity predictor: a two-scale recurrent encoder-decoder mapping
// a voxel grid to a low-frequency intensity estimate in [0, 1].
//
//   head conv -> ConvLSTM_0 -> stride-2 conv -> ConvLSTM_1
//   upsample -> conv -> [. || h_0] -> fuse conv -> 1x1 conv -> sigmoid

#include <cstdint>
#include <functional>
#include <map>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "tresdiff/common.hpp"
#include "tresdiff/denoiser.hpp"
#include "tresdiff/nn/adam.hpp"
#include "tresdiff/nn/checkpoint.hpp"
#include "tresdiff/nn/layers.hpp"
#include "tresdiff/simulator.hpp"
#include "tresdiff/voxel.hpp"

namespace tresdiff {

struct PredictorConfig {
  int voxel_bins = kDefaultVoxelBins;
  int channels0 = 12;
  int channels1 = 24;

  void validate() const {
    require(voxel_bins >= 1 && channels0 >= 1 && channels1 >= 1, "predictor sizes must be positive");
  }

  std::map<std::string, std::string> echo() const {
    return {{"voxel_bins", std::to_string(voxel_bins)},
            {"channels0", std::to_string(channels0)},
            {"channels1", std::to_string(channels1)}};
  }

  friend bool operator==(const PredictorConfig&, const PredictorConfig&) = default;
};

/// Hidden and cell maps of both scales; empty before the first frame.
template <typename T>
using PredictorStateT = RecurrentState<T>;

inline constexpr const char* kPredictorFormat = "tresdiff-predictor/1";

template <typename T = float>
class Predictor {
 public:
  using State = PredictorStateT<T>;

  Predictor(const Predictor&) = delete;
  Predictor& operator=(const Predictor&) = delete;
  Predictor(Predictor&&) noexcept = default;
  Predictor& operator=(Predictor&&) noexcept = default;

  Predictor(PredictorConfig cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    RngState rng(seed);
    auto& p = params_;
    head_ = nn::Conv2d<T>(p, "head", cfg_.voxel_bins, cfg_.channels0, 3, rng);
    lstm0_ = nn::ConvLstmCell<T>(p, "lstm0", cfg_.channels0, cfg_.channels0, rng);
    down_ = nn::Conv2d<T>(p, "down", cfg_.channels0, cfg_.channels1, 3, rng, true, 2);
    lstm1_ = nn::ConvLstmCell<T>(p, "lstm1", cfg_.channels1, cfg_.channels1, rng);
    up_ = nn::Conv2d<T>(p, "up", cfg_.channels1, cfg_.channels0, 3, rng);
    fuse_ = nn::Conv2d<T>(p, "fuse", 2 * cfg_.channels0, cfg_.channels0, 3, rng);
    out_ = nn::Conv2d<T>(p, "out", cfg_.channels0, 1, 1, rng);
  }

  const PredictorConfig& config() const noexcept { return cfg_; }
  nn::ParameterStore<T>& parameters() noexcept { return params_; }
  const nn::ParameterStore<T>& parameters() const noexcept { return params_; }

  /// Differentiable forward pass. Returns ([1,H,W] estimate, next state).
  std::pair<nn::Tensor<T>, State> forward(const nn::Tensor<T>& voxel, const State& state) const {
    using namespace nn;
    if (voxel.rank() != 3 || voxel.dim(0) != cfg_.voxel_bins) {
      throw ValidationError("predictor expects a " + std::to_string(cfg_.voxel_bins) + "-bin voxel grid");
    }
    if (voxel.dim(1) % 2 != 0 || voxel.dim(2) % 2 != 0) throw ValidationError("predictor needs even image sizes");
    if (!state.empty()) {
      require(state.hidden.size() == 2 && state.cell.size() == 2, "predictor state depth mismatch");
      if (state.hidden[0].dim(1) != voxel.dim(1) || state.hidden[0].dim(2) != voxel.dim(2)) {
        throw ValidationError("predictor state geometry does not match the voxel grid");
      }
    }
    Tensor<T> h0, c0, h1, c1;
    if (!state.empty()) {
      h0 = state.hidden[0], c0 = state.cell[0], h1 = state.hidden[1], c1 = state.cell[1];
    }
    auto x0 = silu(head_(voxel));
    auto [nh0, nc0] = lstm0_(x0, h0, c0);
    auto x1 = silu(down_(nh0));
    auto [nh1, nc1] = lstm1_(x1, h1, c1);
    auto u = silu(up_(upsample2(nh1)));
    auto f = silu(fuse_(concat<T>({u, nh0})));
    auto y = sigmoid(out_(f));
    State next;
    next.hidden = {nh0, nh1};
    next.cell = {nc0, nc1};
    return {y, next};
  }

  std::pair<IntensityImage, State> predict_intensity(const VoxelGrid& voxel, const State& state) const {
    nn::NoGradGuard guard;
    auto [y, next] = forward(voxel_tensor<T>(voxel), state);
    return {IntensityImage{tensor_image(y), voxel.t_end}, std::move(next)};
  }

  void save(std::ostream& out) const { nn::write_checkpoint(out, params_, kPredictorFormat, cfg_.echo()); }

  void load(const nn::CheckpointData& data) {
    if (data.config != cfg_.echo()) throw CheckpointMismatchError("predictor checkpoint config does not match the current config");
    nn::load_into(data, params_, kPredictorFormat);
  }

 private:
  PredictorConfig cfg_;
  nn::ParameterStore<T> params_;
  nn::Conv2d<T> head_, down_, up_, fuse_, out_;
  nn::ConvLstmCell<T> lstm0_, lstm1_;
};

/// A voxel sequence with its ground-truth frames, one frame per grid.
struct PredictorScene {
  std::vector<VoxelGrid> voxels;
  FrameSequence frames;
};

struct PredictorTrainOptions {
  int iterations = 300;
  double learning_rate = 3e-3;
  int truncation = 8;  ///< BPTT chunk length in frames
};

/// Mean L1 over every frame of every scene, without gradients.
template <typename T>
double predictor_l1(const Predictor<T>& net, const std::vector<PredictorScene>& scenes) {
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& s : scenes) {
    typename Predictor<T>::State st;
    for (std::size_t t = 0; t < s.voxels.size(); ++t) {
      auto [img, next] = net.predict_intensity(s.voxels[t], st);
      st = std::move(next);
      const Image& ref = s.frames.frames[t];
      require_same_shape(img.values, ref, "predictor_l1");
      for (std::size_t i = 0; i < ref.size(); ++i) total += std::abs(img.values.pixels[i] - ref.pixels[i]);
      count += ref.size();
    }
  }
  return count ? total / static_cast<double>(count) : 0.0;
}

/// Minimises mean L1 against the ground-truth frames over unrolled sequences.
/// Returns the training loss of every iteration.
template <typename T>
std::vector<double> train_predictor(Predictor<T>& net, const std::vector<PredictorScene>& scenes,
                                    const PredictorTrainOptions& opts,
                                    const std::function<void(int, double)>& on_iteration = {}) {
  require(opts.iterations >= 0 && opts.truncation >= 1, "invalid predictor training options");
  for (const auto& s : scenes) {
    if (s.voxels.size() != s.frames.frames.size()) {
      throw ValidationError("train_predictor: " + std::to_string(s.voxels.size()) + " voxel grids for " +
                            std::to_string(s.frames.frames.size()) + " frames");
    }
  }
  nn::Adam<T> opt(net.parameters(), nn::AdamOptions{.learning_rate = opts.learning_rate, .grad_clip_norm = 1.0});
  std::vector<double> losses;
  for (int it = 0; it < opts.iterations; ++it) {
    double total = 0.0;
    std::size_t chunks = 0;
    for (const auto& s : scenes) {
      typename Predictor<T>::State st;
      for (std::size_t begin = 0; begin < s.voxels.size(); begin += opts.truncation) {
        const std::size_t end = std::min(s.voxels.size(), begin + opts.truncation);
        nn::Tensor<T> loss;
        for (std::size_t t = begin; t < end; ++t) {
          auto [y, next] = net.forward(voxel_tensor<T>(s.voxels[t]), st);
          st = std::move(next);
          auto l = nn::l1_loss(y, image_tensor<T>(s.frames.frames[t]));
          loss = loss.defined() ? nn::add(loss, l) : l;
        }
        loss = nn::scale(loss, T(1) / static_cast<T>(end - begin));
        nn::backward(loss);
        opt.step();
        total += static_cast<double>(loss.item());
        ++chunks;
        st = st.detached();
      }
    }
    const double mean = chunks ? total / static_cast<double>(chunks) : 0.0;
    losses.push_back(mean);
    if (on_iteration) on_iteration(it, mean);
  }
  return losses;
}

}  // namespace tresdiff
