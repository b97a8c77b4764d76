#pragma once

// Named parameter storage and the handful of layer types the networks use.

#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "tresdiff/nn/ops.hpp"
#include "tresdiff/rng.hpp"

namespace tresdiff::nn {

template <typename T>
class ParameterStore {
 public:
  Tensor<T> create(const std::string& name, Shape shape, std::vector<T> init) {
    require(!index_.count(name), "duplicate parameter name " + name);
    auto t = Tensor<T>::from(std::move(shape), std::move(init), true);
    index_[name] = entries_.size();
    entries_.emplace_back(name, t);
    return t;
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  Tensor<T> get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ValidationError("unknown parameter " + name);
    return entries_[it->second].second;
  }

  const std::vector<std::pair<std::string, Tensor<T>>>& entries() const { return entries_; }

  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& [_, t] : entries_) n += t.size();
    return n;
  }

  void zero_grad() {
    for (auto& [_, t] : entries_) t.zero_grad();
  }

  void fill(T v) {
    for (auto& [_, t] : entries_) std::fill(t.value().begin(), t.value().end(), v);
  }

  /// Copies values from another store with identical names and shapes.
  void copy_values_from(const ParameterStore& other) {
    require(other.entries_.size() == entries_.size(), "parameter stores differ in size");
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      require(entries_[i].first == other.entries_[i].first && entries_[i].second.shape() == other.entries_[i].second.shape(),
              "parameter stores differ at " + entries_[i].first);
      entries_[i].second.value() = other.entries_[i].second.value();
    }
  }

 private:
  std::vector<std::pair<std::string, Tensor<T>>> entries_;
  std::map<std::string, std::size_t> index_;
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialisation.
template <typename T>
std::vector<T> fan_in_uniform(std::size_t count, std::size_t fan_in, RngState& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::vector<T> v(count);
  for (T& x : v) x = static_cast<T>((2.0 * rng.uniform() - 1.0) * bound);
  return v;
}

template <typename T>
struct Conv2d {
  Tensor<T> weight;
  Tensor<T> bias;  // may be undefined
  int stride = 1;

  Conv2d() = default;
  Conv2d(ParameterStore<T>& store, const std::string& name, int cin, int cout, int k, RngState& rng,
         bool with_bias = true, int stride_ = 1, bool zero_init = false)
      : stride(stride_) {
    const std::size_t n = static_cast<std::size_t>(cout) * cin * k * k;
    weight = store.create(name + ".weight", {cout, cin, k, k},
                          zero_init ? std::vector<T>(n, T(0)) : fan_in_uniform<T>(n, static_cast<std::size_t>(cin) * k * k, rng));
    if (with_bias) bias = store.create(name + ".bias", {cout}, std::vector<T>(cout, T(0)));
  }

  Tensor<T> operator()(const Tensor<T>& x) const { return conv2d(x, weight, bias, stride); }
  int out_channels() const { return weight.dim(0); }
};

template <typename T>
struct GroupNorm {
  Tensor<T> gamma, beta;
  int groups = 1;

  GroupNorm() = default;
  GroupNorm(ParameterStore<T>& store, const std::string& name, int channels, int groups_)
      : groups(groups_) {
    require(channels % groups == 0, name + ": channel count " + std::to_string(channels) +
                                        " not divisible by " + std::to_string(groups) + " groups");
    gamma = store.create(name + ".gamma", {channels}, std::vector<T>(channels, T(1)));
    beta = store.create(name + ".beta", {channels}, std::vector<T>(channels, T(0)));
  }

  Tensor<T> operator()(const Tensor<T>& x) const { return group_norm(x, gamma, beta, groups); }
};

template <typename T>
struct Dense {
  Tensor<T> weight, bias;

  Dense() = default;
  Dense(ParameterStore<T>& store, const std::string& name, int in, int out, RngState& rng) {
    weight = store.create(name + ".weight", {out, in}, fan_in_uniform<T>(static_cast<std::size_t>(in) * out, in, rng));
    bias = store.create(name + ".bias", {out}, std::vector<T>(out, T(0)));
  }

  Tensor<T> operator()(const Tensor<T>& x) const { return linear(x, weight, bias); }
};

/// Convolutional LSTM cell: one convolution over [input || hidden] yields the
/// input, forget, output and candidate gates.
template <typename T>
struct ConvLstmCell {
  Conv2d<T> gates;
  int hidden = 0;

  ConvLstmCell() = default;
  ConvLstmCell(ParameterStore<T>& store, const std::string& name, int in_channels, int hidden_channels, RngState& rng)
      : gates(store, name + ".gates", in_channels + hidden_channels, 4 * hidden_channels, 3, rng), hidden(hidden_channels) {}

  /// Returns (h, c). Empty prev_h / prev_c mean a zero state.
  std::pair<Tensor<T>, Tensor<T>> operator()(const Tensor<T>& x, const Tensor<T>& prev_h, const Tensor<T>& prev_c) const {
    const Shape state_shape{hidden, x.dim(1), x.dim(2)};
    Tensor<T> h0 = prev_h.defined() ? prev_h : Tensor<T>::zeros(state_shape);
    Tensor<T> c0 = prev_c.defined() ? prev_c : Tensor<T>::zeros(state_shape);
    require(h0.shape() == state_shape && c0.shape() == state_shape, "ConvLSTM state shape mismatch");
    auto z = gates(concat<T>({x, h0}));
    auto i = sigmoid(slice(z, 0, hidden));
    auto f = sigmoid(slice(z, hidden, 2 * hidden));
    auto o = sigmoid(slice(z, 2 * hidden, 3 * hidden));
    auto g = tanh(slice(z, 3 * hidden, 4 * hidden));
    auto c = add(mul(f, c0), mul(i, g));
    auto h = mul(o, tanh(c));
    return {h, c};
  }
};

}  // namespace tresdiff::nn
