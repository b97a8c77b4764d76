#pragma once

// Triple-path conditional noise predictor.
//
//   intensity path   plain conv blocks over the previous intensity estimate
//   event path       per-scale ConvLSTM over the voxel grid, carrying state
//   noisy path       [x_tau || voxel] through residual blocks; every scale
//                    but the finest adds cross attention whose queries come
//                    from the event path, keys from the intensity path and
//                    values from the noisy path itself
//
// The three deepest feature maps are fused and passed through residual blocks
// with self attention, then decoded with nearest upsampling and skip
// connections from the noisy path. The step embedding enters only the noisy
// path and the decoder, so the recurrent state never depends on x_tau or tau.

#include <cmath>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tresdiff/common.hpp"
#include "tresdiff/nn/checkpoint.hpp"
#include "tresdiff/nn/layers.hpp"
#include "tresdiff/voxel.hpp"

namespace tresdiff {

struct DenoiserConfig {
  int scales = 3;
  int base_channels = 32;
  int voxel_bins = kDefaultVoxelBins;
  int attention_key_dim = 0;  ///< d_k; 0 uses the channel count of each scale
  int groupnorm_groups = 8;
  int time_embed_dim = 64;
  bool cross_attention = true;

  int channels(int scale) const { return base_channels << scale; }
  int key_dim(int scale) const { return attention_key_dim > 0 ? attention_key_dim : channels(scale); }

  void validate() const {
    require(scales >= 2, "denoiser needs at least two scales");
    require(base_channels >= 1 && voxel_bins >= 1 && time_embed_dim >= 2 && time_embed_dim % 2 == 0,
            "denoiser channel, bin and embedding sizes must be positive (embedding even)");
    require(groupnorm_groups >= 1 && base_channels % groupnorm_groups == 0,
            "denoiser channel counts must be divisible by groupnorm_groups");
    require(attention_key_dim >= 0, "attention_key_dim must be non-negative");
  }

  void check_geometry(int h, int w) const {
    const int f = 1 << (scales - 1);
    if (h < f || w < f || h % f != 0 || w % f != 0) {
      throw ValidationError("image size " + std::to_string(h) + "x" + std::to_string(w) + " not divisible by " +
                            std::to_string(f) + " for a " + std::to_string(scales) + "-scale denoiser");
    }
  }

  std::map<std::string, std::string> echo() const {
    return {{"scales", std::to_string(scales)},
            {"base_channels", std::to_string(base_channels)},
            {"voxel_bins", std::to_string(voxel_bins)},
            {"attention_key_dim", std::to_string(attention_key_dim)},
            {"groupnorm_groups", std::to_string(groupnorm_groups)},
            {"time_embed_dim", std::to_string(time_embed_dim)},
            {"cross_attention", cross_attention ? "1" : "0"}};
  }

  friend bool operator==(const DenoiserConfig&, const DenoiserConfig&) = default;
};

template <typename T>
struct FeaturePyramid {
  std::vector<nn::Tensor<T>> levels;

  std::size_t size() const noexcept { return levels.size(); }
  const nn::Tensor<T>& operator[](std::size_t i) const { return levels[i]; }
};

/// Per-scale ConvLSTM hidden and cell maps. Empty means "no state yet".
template <typename T>
struct RecurrentState {
  std::vector<nn::Tensor<T>> hidden;
  std::vector<nn::Tensor<T>> cell;

  bool empty() const noexcept { return hidden.empty(); }

  RecurrentState detached() const {
    RecurrentState s;
    for (const auto& h : hidden) s.hidden.push_back(h.detach());
    for (const auto& c : cell) s.cell.push_back(c.detach());
    return s;
  }

  bool operator==(const RecurrentState& o) const {
    if (hidden.size() != o.hidden.size()) return false;
    for (std::size_t i = 0; i < hidden.size(); ++i)
      if (hidden[i].value() != o.hidden[i].value() || cell[i].value() != o.cell[i].value()) return false;
    return true;
  }
};

template <typename T>
nn::Tensor<T> image_tensor(const Image& img) {
  std::vector<T> v(img.pixels.begin(), img.pixels.end());
  return nn::Tensor<T>::from({1, img.height, img.width}, std::move(v));
}

template <typename T>
nn::Tensor<T> voxel_tensor(const VoxelGrid& grid) {
  std::vector<T> v(grid.values.begin(), grid.values.end());
  return nn::Tensor<T>::from({grid.bins, grid.height, grid.width}, std::move(v));
}

template <typename T>
Image tensor_image(const nn::Tensor<T>& t) {
  require(t.rank() == 3 && t.dim(0) == 1, "expected a single-channel tensor");
  Image img(t.dim(1), t.dim(2));
  for (std::size_t i = 0; i < img.size(); ++i) img.pixels[i] = static_cast<double>(t.value()[i]);
  return img;
}

/// Sinusoidal features of a diffusion step: [sin(tau w_i), cos(tau w_i)] with
/// w_i = 10000^(-i / (dim/2)).
template <typename T>
nn::Tensor<T> sinusoidal_features(int tau, int dim) {
  const int half = dim / 2;
  std::vector<T> v(static_cast<std::size_t>(dim));
  for (int i = 0; i < half; ++i) {
    const double w = std::exp(-std::log(10000.0) * i / half);
    v[i] = static_cast<T>(std::sin(tau * w));
    v[half + i] = static_cast<T>(std::cos(tau * w));
  }
  return nn::Tensor<T>::from({dim}, std::move(v));
}

/// Cross-encoder attention projections for one scale (bias-free 1x1 convs).
template <typename T>
struct CrossAttentionWeights {
  nn::Conv2d<T> query, key, value;
};

/// out = F_noisy + softmax(Q K^T / sqrt(d_k)) V over spatial tokens, with
/// Q from event features, K from intensity features, V from noisy features.
template <typename T>
nn::Tensor<T> cross_attention(const nn::Tensor<T>& f_event, const nn::Tensor<T>& f_intensity,
                              const nn::Tensor<T>& f_noisy, const CrossAttentionWeights<T>& w) {
  using namespace nn;
  require(f_event.rank() == 3 && f_intensity.rank() == 3 && f_noisy.rank() == 3, "cross_attention expects [C,H,W] inputs");
  const int h = f_noisy.dim(1), wd = f_noisy.dim(2);
  if (f_event.dim(1) != h || f_event.dim(2) != wd || f_intensity.dim(1) != h || f_intensity.dim(2) != wd) {
    throw ValidationError("cross_attention: spatial size mismatch between encoder features");
  }
  const int n = h * wd;
  auto q = w.query(f_event);
  auto k = w.key(f_intensity);
  auto v = w.value(f_noisy);
  const int dk = q.dim(0);
  auto scores = scale(matmul(reshape(q, {dk, n}), reshape(k, {dk, n}), true, false), T(1) / std::sqrt(static_cast<T>(dk)));
  auto attn = softmax_rows(scores);  // [query token, key token]
  auto out = matmul(reshape(v, {v.dim(0), n}), attn, false, true);
  return add(f_noisy, reshape(out, f_noisy.shape()));
}

template <typename T>
struct ResBlock {
  nn::GroupNorm<T> norm1, norm2;
  nn::Conv2d<T> conv1, conv2, skip;
  nn::Dense<T> time;
  bool has_skip = false;

  ResBlock() = default;
  ResBlock(nn::ParameterStore<T>& p, const std::string& name, int cin, int cout, int temb, int groups, RngState& rng)
      : norm1(p, name + ".norm1", cin, groups),
        norm2(p, name + ".norm2", cout, groups),
        conv1(p, name + ".conv1", cin, cout, 3, rng),
        conv2(p, name + ".conv2", cout, cout, 3, rng),
        time(p, name + ".time", temb, cout, rng),
        has_skip(cin != cout) {
    if (has_skip) skip = nn::Conv2d<T>(p, name + ".skip", cin, cout, 1, rng);
  }

  nn::Tensor<T> operator()(const nn::Tensor<T>& x, const nn::Tensor<T>& temb) const {
    using namespace nn;
    auto h = conv1(silu(norm1(x)));
    h = add_channel(h, time(silu(temb)));
    h = conv2(silu(norm2(h)));
    return add(has_skip ? skip(x) : x, h);
  }
};

template <typename T>
struct SelfAttentionBlock {
  nn::GroupNorm<T> norm;
  nn::Conv2d<T> query, key, value, out;

  SelfAttentionBlock() = default;
  SelfAttentionBlock(nn::ParameterStore<T>& p, const std::string& name, int c, int groups, RngState& rng)
      : norm(p, name + ".norm", c, groups),
        query(p, name + ".q", c, c, 1, rng, false),
        key(p, name + ".k", c, c, 1, rng, false),
        value(p, name + ".v", c, c, 1, rng, false),
        out(p, name + ".out", c, c, 1, rng) {}

  nn::Tensor<T> operator()(const nn::Tensor<T>& x) const {
    using namespace nn;
    const int c = x.dim(0), n = x.dim(1) * x.dim(2);
    auto h = norm(x);
    auto q = reshape(query(h), {c, n});
    auto k = reshape(key(h), {c, n});
    auto v = reshape(value(h), {c, n});
    auto attn = softmax_rows(scale(matmul(q, k, true, false), T(1) / std::sqrt(static_cast<T>(c))));
    auto a = reshape(matmul(v, attn, false, true), x.shape());
    return add(x, out(a));
  }
};

template <typename T>
struct Conditioning {
  FeaturePyramid<T> event;
  FeaturePyramid<T> intensity;
  RecurrentState<T> next_state;
};

template <typename T>
struct NoisePredictionResult {
  nn::Tensor<T> eps;
  RecurrentState<T> next_state;
};

inline constexpr const char* kDenoiserFormat = "tresdiff-denoiser/1";

template <typename T = float>
class Denoiser {
 public:
  Denoiser(const Denoiser&) = delete;
  Denoiser& operator=(const Denoiser&) = delete;
  Denoiser(Denoiser&&) noexcept = default;
  Denoiser& operator=(Denoiser&&) noexcept = default;

  Denoiser(DenoiserConfig cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    RngState rng(seed);
    const int L = cfg_.scales;
    const int g = cfg_.groupnorm_groups;
    const int temb = cfg_.time_embed_dim;
    auto& p = params_;

    // Intensity encoder.
    for (int l = 0; l < L; ++l) {
      const int cin = l == 0 ? 1 : cfg_.channels(l - 1);
      const std::string n = "intensity." + std::to_string(l);
      int_conv_a_.emplace_back(p, n + ".conv_a", cin, cfg_.channels(l), 3, rng);
      int_conv_b_.emplace_back(p, n + ".conv_b", cfg_.channels(l), cfg_.channels(l), 3, rng);
      if (l + 1 < L) int_down_.emplace_back(p, n + ".down", cfg_.channels(l), cfg_.channels(l), 3, rng, true, 2);
    }

    // Recurrent event encoder.
    event_head_ = nn::Conv2d<T>(p, "event.head", cfg_.voxel_bins, cfg_.channels(0), 3, rng);
    for (int l = 0; l < L; ++l) {
      const std::string n = "event." + std::to_string(l);
      event_lstm_.emplace_back(p, n + ".lstm", cfg_.channels(l), cfg_.channels(l), rng);
      if (l + 1 < L) event_down_.emplace_back(p, n + ".down", cfg_.channels(l), cfg_.channels(l + 1), 3, rng, true, 2);
    }

    // Step embedding.
    time_fc1_ = nn::Dense<T>(p, "time.fc1", temb, temb, rng);
    time_fc2_ = nn::Dense<T>(p, "time.fc2", temb, temb, rng);

    // Noisy residual path.
    noisy_stem_ = nn::Conv2d<T>(p, "noisy.stem", 1 + cfg_.voxel_bins, cfg_.channels(0), 3, rng);
    for (int l = 0; l < L; ++l) {
      const std::string n = "noisy." + std::to_string(l);
      const int cin = l == 0 ? cfg_.channels(0) : cfg_.channels(l - 1);
      if (l > 0) noisy_down_.emplace_back(p, n + ".down", cin, cin, 3, rng, true, 2);
      noisy_block_.emplace_back(p, n + ".res", cin, cfg_.channels(l), temb, g, rng);
      CrossAttentionWeights<T> w;
      if (l > 0) {
        const int c = cfg_.channels(l), dk = cfg_.key_dim(l);
        w.query = nn::Conv2d<T>(p, n + ".xattn.q", c, dk, 1, rng, false);
        w.key = nn::Conv2d<T>(p, n + ".xattn.k", c, dk, 1, rng, false);
        w.value = nn::Conv2d<T>(p, n + ".xattn.v", c, c, 1, rng, false);
      }
      xattn_.push_back(std::move(w));
    }

    // Bottleneck aggregation of all three encoders.
    const int cb = cfg_.channels(L - 1);
    fuse_ = nn::Conv2d<T>(p, "mid.fuse", 3 * cb, cb, 1, rng);
    mid_block1_ = ResBlock<T>(p, "mid.res1", cb, cb, temb, g, rng);
    mid_attn_ = SelfAttentionBlock<T>(p, "mid.attn", cb, g, rng);
    mid_block2_ = ResBlock<T>(p, "mid.res2", cb, cb, temb, g, rng);

    // Decoder with noisy-path skips.
    dec_up_.resize(L - 1);
    dec_block_.resize(L - 1);
    for (int l = L - 2; l >= 0; --l) {
      const std::string n = "decoder." + std::to_string(l);
      dec_up_[l] = nn::Conv2d<T>(p, n + ".up", cfg_.channels(l + 1), cfg_.channels(l), 3, rng);
      dec_block_[l] = ResBlock<T>(p, n + ".res", 2 * cfg_.channels(l), cfg_.channels(l), temb, g, rng);
    }
    out_norm_ = nn::GroupNorm<T>(p, "out.norm", cfg_.channels(0), g);
    out_conv_ = nn::Conv2d<T>(p, "out.conv", cfg_.channels(0), 1, 3, rng);
    // Step-dependent linear path from x_tau to the output; the normalized head
    // cannot carry the image mean. Starts at zero.
    out_skip_ = nn::Dense<T>(p, "out.skip", temb, 1, rng);
    std::fill(out_skip_.weight.value().begin(), out_skip_.weight.value().end(), T(0));
  }

  const DenoiserConfig& config() const noexcept { return cfg_; }
  nn::ParameterStore<T>& parameters() noexcept { return params_; }
  const nn::ParameterStore<T>& parameters() const noexcept { return params_; }

  FeaturePyramid<T> encode_intensity(const nn::Tensor<T>& intensity) const {
    using namespace nn;
    check_input(intensity, 1, "intensity estimate");
    FeaturePyramid<T> out;
    Tensor<T> x = intensity;
    for (int l = 0; l < cfg_.scales; ++l) {
      if (l > 0) x = int_down_[l - 1](x);
      x = silu(int_conv_b_[l](silu(int_conv_a_[l](x))));
      out.levels.push_back(x);
    }
    return out;
  }

  std::pair<FeaturePyramid<T>, RecurrentState<T>> encode_events_recurrent(const nn::Tensor<T>& voxel,
                                                                          const RecurrentState<T>& prev) const {
    using namespace nn;
    check_input(voxel, cfg_.voxel_bins, "voxel grid");
    if (!prev.empty()) {
      require(prev.hidden.size() == static_cast<std::size_t>(cfg_.scales) && prev.cell.size() == prev.hidden.size(),
              "recurrent state depth does not match the denoiser");
    }
    FeaturePyramid<T> feats;
    RecurrentState<T> next;
    Tensor<T> x = silu(event_head_(voxel));
    for (int l = 0; l < cfg_.scales; ++l) {
      if (l > 0) x = silu(event_down_[l - 1](x));
      Tensor<T> h0, c0;
      if (!prev.empty()) {
        h0 = prev.hidden[l];
        c0 = prev.cell[l];
      }
      auto [h, c] = event_lstm_[l](x, h0, c0);
      feats.levels.push_back(h);
      next.hidden.push_back(h);
      next.cell.push_back(c);
      x = h;
    }
    return {feats, next};
  }

  nn::Tensor<T> time_embedding(int tau) const {
    require(tau >= 1, "diffusion step must be at least 1");
    using namespace nn;
    return time_fc2_(silu(time_fc1_(sinusoidal_features<T>(tau, cfg_.time_embed_dim))));
  }

  const CrossAttentionWeights<T>& cross_attention_weights(int scale) const { return xattn_.at(scale); }

  FeaturePyramid<T> encode_noisy_residual(const nn::Tensor<T>& x_tau, const nn::Tensor<T>& voxel,
                                          const FeaturePyramid<T>& f_event, const FeaturePyramid<T>& f_intensity,
                                          const nn::Tensor<T>& temb) const {
    using namespace nn;
    check_input(x_tau, 1, "noisy residual");
    check_input(voxel, cfg_.voxel_bins, "voxel grid");
    require(x_tau.dim(1) == voxel.dim(1) && x_tau.dim(2) == voxel.dim(2), "noisy residual and voxel grid differ in size");
    if (f_event.size() != static_cast<std::size_t>(cfg_.scales) || f_intensity.size() != f_event.size()) {
      throw ValidationError("encoder pyramid depth does not match the denoiser");
    }
    FeaturePyramid<T> out;
    Tensor<T> x = noisy_stem_(concat<T>({x_tau, voxel}));
    for (int l = 0; l < cfg_.scales; ++l) {
      if (l > 0) x = noisy_down_[l - 1](x);
      x = noisy_block_[l](x, temb);
      if (l > 0 && cfg_.cross_attention) x = cross_attention(f_event[l], f_intensity[l], x, xattn_[l]);
      out.levels.push_back(x);
    }
    return out;
  }

  /// Runs the two tau-independent condition encoders.
  Conditioning<T> encode_conditions(const nn::Tensor<T>& voxel, const nn::Tensor<T>& intensity_prev,
                                    const RecurrentState<T>& state) const {
    require(voxel.dim(1) == intensity_prev.dim(1) && voxel.dim(2) == intensity_prev.dim(2),
            "voxel grid and intensity estimate differ in size");
    auto [ev, next] = encode_events_recurrent(voxel, state);
    return Conditioning<T>{std::move(ev), encode_intensity(intensity_prev), std::move(next)};
  }

  /// Noise prediction given precomputed conditions.
  nn::Tensor<T> predict_with(const nn::Tensor<T>& x_tau, const nn::Tensor<T>& voxel, const Conditioning<T>& cond,
                             int tau) const {
    using namespace nn;
    auto temb = time_embedding(tau);
    auto noisy = encode_noisy_residual(x_tau, voxel, cond.event, cond.intensity, temb);
    const int L = cfg_.scales;
    auto d = fuse_(concat<T>({noisy[L - 1], cond.event[L - 1], cond.intensity[L - 1]}));
    d = mid_block1_(d, temb);
    d = mid_attn_(d);
    d = mid_block2_(d, temb);
    for (int l = L - 2; l >= 0; --l) {
      auto u = dec_up_[l](upsample2(d));
      d = dec_block_[l](concat<T>({u, noisy[l]}), temb);
    }
    return add(out_conv_(silu(out_norm_(d))), mul_channel(x_tau, out_skip_(silu(temb))));
  }

  NoisePredictionResult<T> predict_noise(const nn::Tensor<T>& x_tau, const nn::Tensor<T>& voxel,
                                         const nn::Tensor<T>& intensity_prev, const RecurrentState<T>& state,
                                         int tau) const {
    auto cond = encode_conditions(voxel, intensity_prev, state);
    auto eps = predict_with(x_tau, voxel, cond, tau);
    return {eps, std::move(cond.next_state)};
  }

  void save(std::ostream& out) const { nn::write_checkpoint(out, params_, kDenoiserFormat, cfg_.echo()); }

  void load(const nn::CheckpointData& data) {
    if (data.config != cfg_.echo()) throw CheckpointMismatchError("denoiser checkpoint config does not match the current config");
    nn::load_into(data, params_, kDenoiserFormat);
  }

 private:
  void check_input(const nn::Tensor<T>& t, int channels, const char* what) const {
    if (t.rank() != 3 || t.dim(0) != channels) {
      throw ValidationError(std::string("denoiser: ") + what + " must have shape [" + std::to_string(channels) +
                            ",H,W], got " + nn::shape_string(t.shape()));
    }
    cfg_.check_geometry(t.dim(1), t.dim(2));
  }

  DenoiserConfig cfg_;
  nn::ParameterStore<T> params_;

  std::vector<nn::Conv2d<T>> int_conv_a_, int_conv_b_, int_down_;
  nn::Conv2d<T> event_head_;
  std::vector<nn::ConvLstmCell<T>> event_lstm_;
  std::vector<nn::Conv2d<T>> event_down_;
  nn::Dense<T> time_fc1_, time_fc2_;
  nn::Conv2d<T> noisy_stem_;
  std::vector<nn::Conv2d<T>> noisy_down_;
  std::vector<ResBlock<T>> noisy_block_;
  std::vector<CrossAttentionWeights<T>> xattn_;
  nn::Conv2d<T> fuse_;
  ResBlock<T> mid_block1_, mid_block2_;
  SelfAttentionBlock<T> mid_attn_;
  std::vector<nn::Conv2d<T>> dec_up_;
  std::vector<ResBlock<T>> dec_block_;
  nn::GroupNorm<T> out_norm_;
  nn::Dense<T> out_skip_;
  nn::Conv2d<T> out_conv_;
};

/// Image-level view of a Denoiser satisfying TrainableNoiseModel.
template <typename T = float>
class DenoiserModel {
 public:
  using State = RecurrentState<T>;
  struct Frame {
    nn::Tensor<T> voxel;
    Conditioning<T> cond;
  };

  /// `detach_state` truncates backpropagation through time at frame boundaries.
  explicit DenoiserModel(Denoiser<T>& net, bool detach_state = true) : net_(&net), detach_state_(detach_state) {}

  Denoiser<T>& network() { return *net_; }

  Frame begin_frame(const VoxelGrid& voxel, const IntensityImage& intensity_prev, const State& state, bool train) {
    std::optional<nn::NoGradGuard> guard;
    if (!train) guard.emplace();
    require(voxel.height == intensity_prev.values.height && voxel.width == intensity_prev.values.width,
            "voxel grid and intensity estimate differ in size");
    auto v = voxel_tensor<T>(voxel);
    auto cond = net_->encode_conditions(v, image_tensor<T>(intensity_prev.values), state);
    return Frame{std::move(v), std::move(cond)};
  }

  Image predict(const Frame& f, const Image& x_tau, int tau) {
    nn::NoGradGuard guard;
    return tensor_image(net_->predict_with(image_tensor<T>(x_tau), f.voxel, f.cond, tau));
  }

  double epsilon_loss(const Frame& f, const Image& x_tau, int tau, const Image& eps) {
    auto pred = net_->predict_with(image_tensor<T>(x_tau), f.voxel, f.cond, tau);
    auto loss = nn::l1_loss(pred, image_tensor<T>(eps));
    nn::backward(loss);
    return static_cast<double>(loss.item());
  }

  State next_state(const Frame& f) const { return detach_state_ ? f.cond.next_state.detached() : f.cond.next_state; }

 private:
  Denoiser<T>* net_;
  bool detach_state_;
};

}  // namespace tresdiff
