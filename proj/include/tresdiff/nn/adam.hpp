#pragma once

#include <cmath>
#include <vector>

#include "tresdiff/nn/layers.hpp"

namespace tresdiff::nn {

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double grad_clip_norm = 0.0;  ///< global L2 clip, 0 disables
};

template <typename T>
class Adam {
 public:
  Adam(ParameterStore<T>& params, AdamOptions opts = {}) : params_(params), opts_(opts) {
    for (const auto& [_, t] : params.entries()) {
      m_.emplace_back(t.size(), 0.0);
      v_.emplace_back(t.size(), 0.0);
    }
  }

  void set_learning_rate(double lr) { opts_.learning_rate = lr; }
  double learning_rate() const { return opts_.learning_rate; }
  long long steps() const { return step_; }

  /// Applies one update from the accumulated gradients (scaled by grad_scale),
  /// then clears them.
  void step(double grad_scale = 1.0) {
    ++step_;
    const auto& entries = params_.entries();
    double clip = 1.0;
    if (opts_.grad_clip_norm > 0.0) {
      double sq = 0.0;
      for (const auto& [_, t] : entries)
        for (T g : t.grad()) sq += static_cast<double>(g) * g * grad_scale * grad_scale;
      const double norm = std::sqrt(sq);
      if (norm > opts_.grad_clip_norm) clip = opts_.grad_clip_norm / norm;
    }
    const double bc1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(step_));
    for (std::size_t k = 0; k < entries.size(); ++k) {
      Tensor<T> t = entries[k].second;
      auto& val = t.value();
      auto& grad = t.grad();
      auto& m = m_[k];
      auto& v = v_[k];
      for (std::size_t i = 0; i < val.size(); ++i) {
        const double g = static_cast<double>(grad[i]) * grad_scale * clip;
        m[i] = opts_.beta1 * m[i] + (1.0 - opts_.beta1) * g;
        v[i] = opts_.beta2 * v[i] + (1.0 - opts_.beta2) * g * g;
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        val[i] = static_cast<T>(val[i] - opts_.learning_rate * mhat / (std::sqrt(vhat) + opts_.epsilon));
      }
      std::fill(grad.begin(), grad.end(), T(0));
    }
  }

 private:
  ParameterStore<T>& params_;
  AdamOptions opts_;
  std::vector<std::vector<double>> m_, v_;
  long long step_ = 0;
};

}  // namespace tresdiff::nn
