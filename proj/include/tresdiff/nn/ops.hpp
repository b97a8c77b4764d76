#pragma once

// Differentiable tensor operations. Image-like tensors are laid out [C, H, W];
// matrices are [rows, cols]. Matrix products go through Eigen.

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <memory>
#include <vector>

#include "tresdiff/nn/tensor.hpp"

namespace tresdiff::nn {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMatrix<T>>;

namespace detail {

inline void require_rank(const Shape& s, std::size_t r, const char* op) {
  if (s.size() != r) throw ValidationError(std::string(op) + ": expected rank " + std::to_string(r) + ", got " + shape_string(s));
}

inline void require_same(const Shape& a, const Shape& b, const char* op) {
  if (a != b) throw ValidationError(std::string(op) + ": shape mismatch " + shape_string(a) + " vs " + shape_string(b));
}

template <typename T>
void accumulate(Node<T>& parent, const std::vector<T>& g) {
  if (!parent.requires_grad) return;
  auto& pg = parent.grad_buffer();
  for (std::size_t i = 0; i < g.size(); ++i) pg[i] += g[i];
}

template <typename T>
void im2col(const T* x, int channels, int h, int w, int k, int stride, int pad, int ho, int wo, T* col) {
  for (int c = 0; c < channels; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        T* row = col + (static_cast<std::size_t>((c * k + ky) * k + kx)) * ho * wo;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride - pad + ky;
          T* dst = row + static_cast<std::size_t>(oy) * wo;
          if (iy < 0 || iy >= h) {
            std::fill(dst, dst + wo, T(0));
            continue;
          }
          const T* src = x + (static_cast<std::size_t>(c) * h + iy) * w;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride - pad + kx;
            dst[ox] = (ix >= 0 && ix < w) ? src[ix] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* col, int channels, int h, int w, int k, int stride, int pad, int ho, int wo, T* x) {
  for (int c = 0; c < channels; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const T* row = col + (static_cast<std::size_t>((c * k + ky) * k + kx)) * ho * wo;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          const T* src = row + static_cast<std::size_t>(oy) * wo;
          T* dst = x + (static_cast<std::size_t>(c) * h + iy) * w;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

template <typename T, typename F, typename D>
Tensor<T> unary(const Tensor<T>& x, F f, D dfdx_given_x_y) {
  std::vector<T> y(x.size());
  const auto& xv = x.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = f(xv[i]);
  return make_result<T>(x.shape(), std::move(y), {x}, [dfdx_given_x_y](Node<T>& self) {
    Node<T>& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& pg = p.grad_buffer();
    for (std::size_t i = 0; i < pg.size(); ++i) pg[i] += self.grad[i] * dfdx_given_x_y(p.value[i], self.value[i]);
  });
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same(a.shape(), b.shape(), "add");
  std::vector<T> y(a.value());
  const auto& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += bv[i];
  return make_result<T>(a.shape(), std::move(y), {a, b}, [](Node<T>& self) {
    detail::accumulate(*self.parents[0], self.grad);
    detail::accumulate(*self.parents[1], self.grad);
  });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same(a.shape(), b.shape(), "sub");
  std::vector<T> y(a.value());
  const auto& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= bv[i];
  return make_result<T>(a.shape(), std::move(y), {a, b}, [](Node<T>& self) {
    detail::accumulate(*self.parents[0], self.grad);
    Node<T>& p = *self.parents[1];
    if (!p.requires_grad) return;
    auto& pg = p.grad_buffer();
    for (std::size_t i = 0; i < pg.size(); ++i) pg[i] -= self.grad[i];
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same(a.shape(), b.shape(), "mul");
  std::vector<T> y(a.size());
  const auto& av = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] * bv[i];
  return make_result<T>(a.shape(), std::move(y), {a, b}, [](Node<T>& self) {
    Node<T>& pa = *self.parents[0];
    Node<T>& pb = *self.parents[1];
    if (pa.requires_grad) {
      auto& g = pa.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb.value[i];
    }
    if (pb.requires_grad) {
      auto& g = pb.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa.value[i];
    }
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T c) {
  std::vector<T> y(x.value());
  for (T& v : y) v *= c;
  return make_result<T>(x.shape(), std::move(y), {x}, [c](Node<T>& self) {
    Node<T>& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += c * self.grad[i];
  });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return detail::unary(
      x, [](T v) { return T(1) / (T(1) + std::exp(-v)); }, [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& x) {
  return detail::unary(
      x, [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Tensor<T> silu(const Tensor<T>& x) {
  return detail::unary(
      x, [](T v) { return v / (T(1) + std::exp(-v)); },
      [](T v, T) {
        const T s = T(1) / (T(1) + std::exp(-v));
        return s * (T(1) + v * (T(1) - s));
      });
}

/// x[C, ...] + v[C] broadcast over trailing dims.
template <typename T>
Tensor<T> add_channel(const Tensor<T>& x, const Tensor<T>& v) {
  require(x.rank() >= 1 && v.rank() == 1 && v.dim(0) == x.dim(0), "add_channel: channel count mismatch");
  const std::size_t c = static_cast<std::size_t>(x.dim(0));
  const std::size_t plane = x.size() / c;
  std::vector<T> y(x.value());
  for (std::size_t ci = 0; ci < c; ++ci)
    for (std::size_t i = 0; i < plane; ++i) y[ci * plane + i] += v.value()[ci];
  return make_result<T>(x.shape(), std::move(y), {x, v}, [c, plane](Node<T>& self) {
    detail::accumulate(*self.parents[0], self.grad);
    Node<T>& pv = *self.parents[1];
    if (!pv.requires_grad) return;
    auto& g = pv.grad_buffer();
    for (std::size_t ci = 0; ci < c; ++ci) {
      T s = 0;
      for (std::size_t i = 0; i < plane; ++i) s += self.grad[ci * plane + i];
      g[ci] += s;
    }
  });
}

/// y[c, ...] = x[c, ...] * v[c].
template <typename T>
Tensor<T> mul_channel(const Tensor<T>& x, const Tensor<T>& v) {
  require(x.rank() >= 1 && v.rank() == 1 && v.dim(0) == x.dim(0), "mul_channel: channel count mismatch");
  const std::size_t c = static_cast<std::size_t>(x.dim(0));
  const std::size_t plane = x.size() / c;
  std::vector<T> y(x.value());
  for (std::size_t ci = 0; ci < c; ++ci)
    for (std::size_t i = 0; i < plane; ++i) y[ci * plane + i] *= v.value()[ci];
  return make_result<T>(x.shape(), std::move(y), {x, v}, [c, plane](Node<T>& self) {
    Node<T>& px = *self.parents[0];
    Node<T>& pv = *self.parents[1];
    if (px.requires_grad) {
      auto& g = px.grad_buffer();
      for (std::size_t ci = 0; ci < c; ++ci)
        for (std::size_t i = 0; i < plane; ++i) g[ci * plane + i] += self.grad[ci * plane + i] * pv.value[ci];
    }
    if (pv.requires_grad) {
      auto& g = pv.grad_buffer();
      for (std::size_t ci = 0; ci < c; ++ci) {
        T s = 0;
        for (std::size_t i = 0; i < plane; ++i) s += self.grad[ci * plane + i] * px.value[ci * plane + i];
        g[ci] += s;
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Shape manipulation

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  require(shape_size(shape) == x.size(), "reshape: element count mismatch");
  return make_result<T>(std::move(shape), x.value(), {x},
                        [](Node<T>& self) { detail::accumulate(*self.parents[0], self.grad); });
}

/// Concatenation along the leading dimension.
template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts) {
  require(!parts.empty(), "concat: no inputs");
  Shape shape = parts[0].shape();
  shape[0] = 0;
  std::vector<T> y;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    Shape ps = p.shape();
    require(ps.size() == shape.size() && std::equal(ps.begin() + 1, ps.end(), shape.begin() + 1),
            "concat: trailing dimensions differ");
    shape[0] += ps[0];
    offsets.push_back(y.size());
    y.insert(y.end(), p.value().begin(), p.value().end());
  }
  return make_result<T>(std::move(shape), std::move(y), parts, [offsets](Node<T>& self) {
    for (std::size_t k = 0; k < self.parents.size(); ++k) {
      Node<T>& p = *self.parents[k];
      if (!p.requires_grad) continue;
      auto& g = p.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[offsets[k] + i];
    }
  });
}

/// Rows [begin, end) of the leading dimension.
template <typename T>
Tensor<T> slice(const Tensor<T>& x, int begin, int end) {
  require(begin >= 0 && begin < end && end <= x.dim(0), "slice: bad range");
  const std::size_t inner = x.size() / static_cast<std::size_t>(x.dim(0));
  Shape shape = x.shape();
  shape[0] = end - begin;
  std::vector<T> y(x.value().begin() + begin * inner, x.value().begin() + end * inner);
  const std::size_t off = begin * inner;
  return make_result<T>(std::move(shape), std::move(y), {x}, [off](Node<T>& self) {
    Node<T>& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.grad_buffer();
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[off + i] += self.grad[i];
  });
}

/// Nearest-neighbour x2 upsampling of [C, H, W].
template <typename T>
Tensor<T> upsample2(const Tensor<T>& x) {
  detail::require_rank(x.shape(), 3, "upsample2");
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  std::vector<T> y(static_cast<std::size_t>(c) * 4 * h * w);
  const auto& xv = x.value();
  for (int ci = 0; ci < c; ++ci)
    for (int yy = 0; yy < 2 * h; ++yy)
      for (int xx = 0; xx < 2 * w; ++xx)
        y[(static_cast<std::size_t>(ci) * 2 * h + yy) * 2 * w + xx] = xv[(static_cast<std::size_t>(ci) * h + yy / 2) * w + xx / 2];
  return make_result<T>({c, 2 * h, 2 * w}, std::move(y), {x}, [c, h, w](Node<T>& self) {
    Node<T>& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.grad_buffer();
    for (int ci = 0; ci < c; ++ci)
      for (int yy = 0; yy < 2 * h; ++yy)
        for (int xx = 0; xx < 2 * w; ++xx)
          g[(static_cast<std::size_t>(ci) * h + yy / 2) * w + xx / 2] += self.grad[(static_cast<std::size_t>(ci) * 2 * h + yy) * 2 * w + xx];
  });
}

// ---------------------------------------------------------------------------
// Linear algebra

/// op(A) * op(B) for rank-2 tensors.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b, bool transpose_a = false, bool transpose_b = false) {
  detail::require_rank(a.shape(), 2, "matmul");
  detail::require_rank(b.shape(), 2, "matmul");
  const int m = transpose_a ? a.dim(1) : a.dim(0);
  const int ka = transpose_a ? a.dim(0) : a.dim(1);
  const int kb = transpose_b ? b.dim(1) : b.dim(0);
  const int n = transpose_b ? b.dim(0) : b.dim(1);
  require(ka == kb, "matmul: inner dimensions differ");
  std::vector<T> y(static_cast<std::size_t>(m) * n);
  ConstMatMap<T> A(a.data(), a.dim(0), a.dim(1));
  ConstMatMap<T> B(b.data(), b.dim(0), b.dim(1));
  MatMap<T> Y(y.data(), m, n);
  if (!transpose_a && !transpose_b) Y.noalias() = A * B;
  else if (transpose_a && !transpose_b) Y.noalias() = A.transpose() * B;
  else if (!transpose_a && transpose_b) Y.noalias() = A * B.transpose();
  else Y.noalias() = A.transpose() * B.transpose();

  return make_result<T>({m, n}, std::move(y), {a, b}, [transpose_a, transpose_b, m, n](Node<T>& self) {
    Node<T>& pa = *self.parents[0];
    Node<T>& pb = *self.parents[1];
    ConstMatMap<T> G(self.grad.data(), m, n);
    ConstMatMap<T> A(pa.value.data(), pa.shape[0], pa.shape[1]);
    ConstMatMap<T> B(pb.value.data(), pb.shape[0], pb.shape[1]);
    if (pa.requires_grad) {
      MatMap<T> dA(pa.grad_buffer().data(), pa.shape[0], pa.shape[1]);
      // Y = opA(A) opB(B); d opA(A) = G opB(B)^T.
      if (!transpose_a) {
        if (!transpose_b) dA.noalias() += G * B.transpose();
        else dA.noalias() += G * B;
      } else {
        if (!transpose_b) dA.noalias() += B * G.transpose();
        else dA.noalias() += B.transpose() * G.transpose();
      }
    }
    if (pb.requires_grad) {
      MatMap<T> dB(pb.grad_buffer().data(), pb.shape[0], pb.shape[1]);
      if (!transpose_b) {
        if (!transpose_a) dB.noalias() += A.transpose() * G;
        else dB.noalias() += A * G;
      } else {
        if (!transpose_a) dB.noalias() += G.transpose() * A;
        else dB.noalias() += G.transpose() * A.transpose();
      }
    }
  });
}

/// Row-wise softmax of a rank-2 tensor.
template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& x) {
  detail::require_rank(x.shape(), 2, "softmax_rows");
  const int m = x.dim(0), n = x.dim(1);
  std::vector<T> y(x.size());
  const auto& xv = x.value();
  for (int r = 0; r < m; ++r) {
    const T* in = xv.data() + static_cast<std::size_t>(r) * n;
    T* out = y.data() + static_cast<std::size_t>(r) * n;
    const T mx = *std::max_element(in, in + n);
    T s = 0;
    for (int j = 0; j < n; ++j) s += (out[j] = std::exp(in[j] - mx));
    for (int j = 0; j < n; ++j) out[j] /= s;
  }
  return make_result<T>(x.shape(), std::move(y), {x}, [m, n](Node<T>& self) {
    Node<T>& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.grad_buffer();
    for (int r = 0; r < m; ++r) {
      const std::size_t off = static_cast<std::size_t>(r) * n;
      T dot = 0;
      for (int j = 0; j < n; ++j) dot += self.grad[off + j] * self.value[off + j];
      for (int j = 0; j < n; ++j) g[off + j] += self.value[off + j] * (self.grad[off + j] - dot);
    }
  });
}

/// W[m, n] x[n] + b[m].
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  detail::require_rank(x.shape(), 1, "linear");
  auto y = matmul(weight, reshape(x, {x.dim(0), 1}));
  return add(reshape(y, {weight.dim(0)}), bias);
}

// ---------------------------------------------------------------------------
// Convolution and normalisation

/// 2-D convolution of x[Cin, H, W] with weight[Cout, Cin, k, k]. `bias` may be
/// an undefined tensor.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, int stride = 1, int pad = -1) {
  detail::require_rank(x.shape(), 3, "conv2d");
  detail::require_rank(weight.shape(), 4, "conv2d weight");
  const int cin = x.dim(0), h = x.dim(1), w = x.dim(2);
  const int cout = weight.dim(0), k = weight.dim(2);
  require(weight.dim(1) == cin, "conv2d: input channels " + std::to_string(cin) + " do not match weight " +
                                    shape_string(weight.shape()));
  require(weight.dim(3) == k, "conv2d: kernel must be square");
  if (pad < 0) pad = k / 2;
  const int ho = (h + 2 * pad - k) / stride + 1;
  const int wo = (w + 2 * pad - k) / stride + 1;
  require(ho >= 1 && wo >= 1, "conv2d: output would be empty");
  const int kk = cin * k * k;
  const int npix = ho * wo;
  const bool direct = (k == 1 && stride == 1 && pad == 0);

  std::shared_ptr<std::vector<T>> col;
  if (!direct) {
    col = std::make_shared<std::vector<T>>(static_cast<std::size_t>(kk) * npix);
    detail::im2col(x.data(), cin, h, w, k, stride, pad, ho, wo, col->data());
  }
  const T* colp = direct ? x.data() : col->data();

  std::vector<T> y(static_cast<std::size_t>(cout) * npix);
  ConstMatMap<T> W(weight.data(), cout, kk);
  ConstMatMap<T> C(colp, kk, npix);
  MatMap<T> Y(y.data(), cout, npix);
  Y.noalias() = W * C;
  const bool has_bias = bias.defined();
  if (has_bias) {
    require(bias.size() == static_cast<std::size_t>(cout), "conv2d: bias size mismatch");
    for (int c = 0; c < cout; ++c) Y.row(c).array() += bias.value()[c];
  }

  std::vector<Tensor<T>> parents{x, weight};
  if (has_bias) parents.push_back(bias);
  if (!grad_enabled()) col.reset();
  return make_result<T>({cout, ho, wo}, std::move(y), std::move(parents),
                        [=](Node<T>& self) {
                          Node<T>& px = *self.parents[0];
                          Node<T>& pw = *self.parents[1];
                          ConstMatMap<T> G(self.grad.data(), cout, npix);
                          const T* cp = direct ? px.value.data() : col->data();
                          ConstMatMap<T> Cm(cp, kk, npix);
                          if (pw.requires_grad) {
                            MatMap<T> dW(pw.grad_buffer().data(), cout, kk);
                            dW.noalias() += G * Cm.transpose();
                          }
                          if (has_bias && self.parents[2]->requires_grad) {
                            auto& gb = self.parents[2]->grad_buffer();
                            for (int c = 0; c < cout; ++c) gb[c] += G.row(c).sum();
                          }
                          if (px.requires_grad) {
                            ConstMatMap<T> Wm(pw.value.data(), cout, kk);
                            if (direct) {
                              MatMap<T> dX(px.grad_buffer().data(), kk, npix);
                              dX.noalias() += Wm.transpose() * G;
                            } else {
                              std::vector<T> dcol(static_cast<std::size_t>(kk) * npix);
                              MatMap<T> dC(dcol.data(), kk, npix);
                              dC.noalias() = Wm.transpose() * G;
                              detail::col2im(dcol.data(), cin, h, w, k, stride, pad, ho, wo, px.grad_buffer().data());
                            }
                          }
                        });
}

/// Group normalisation of x[C, H, W] with per-channel affine gamma/beta.
template <typename T>
Tensor<T> group_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, int groups, T eps = T(1e-5)) {
  detail::require_rank(x.shape(), 3, "group_norm");
  const int c = x.dim(0);
  require(groups >= 1 && c % groups == 0, "group_norm: channels not divisible by groups");
  require(gamma.size() == static_cast<std::size_t>(c) && beta.size() == static_cast<std::size_t>(c),
          "group_norm: affine parameter size mismatch");
  const std::size_t plane = x.size() / c;
  const int cpg = c / groups;
  const std::size_t gsize = plane * cpg;
  std::vector<T> y(x.size());
  auto rstd = std::make_shared<std::vector<T>>(groups);
  auto mean = std::make_shared<std::vector<T>>(groups);
  const auto& xv = x.value();
  for (int g = 0; g < groups; ++g) {
    const T* xs = xv.data() + g * gsize;
    double s = 0, s2 = 0;
    for (std::size_t i = 0; i < gsize; ++i) s += xs[i];
    const double mu = s / gsize;
    for (std::size_t i = 0; i < gsize; ++i) s2 += (xs[i] - mu) * (xs[i] - mu);
    const double var = s2 / gsize;
    (*mean)[g] = static_cast<T>(mu);
    (*rstd)[g] = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
    for (int cc = 0; cc < cpg; ++cc) {
      const int ch = g * cpg + cc;
      const T ga = gamma.value()[ch], be = beta.value()[ch];
      for (std::size_t i = 0; i < plane; ++i) {
        const std::size_t idx = ch * plane + i;
        y[idx] = (xv[idx] - (*mean)[g]) * (*rstd)[g] * ga + be;
      }
    }
  }
  return make_result<T>(x.shape(), std::move(y), {x, gamma, beta}, [=](Node<T>& self) {
    Node<T>& px = *self.parents[0];
    Node<T>& pg = *self.parents[1];
    Node<T>& pb = *self.parents[2];
    const auto& xv = px.value;
    for (int g = 0; g < groups; ++g) {
      const T mu = (*mean)[g], rs = (*rstd)[g];
      double sum_dxhat = 0, sum_dxhat_xhat = 0;
      for (int cc = 0; cc < cpg; ++cc) {
        const int ch = g * cpg + cc;
        const T ga = pg.value[ch];
        double dga = 0, dbe = 0;
        for (std::size_t i = 0; i < plane; ++i) {
          const std::size_t idx = ch * plane + i;
          const T xhat = (xv[idx] - mu) * rs;
          const T dy = self.grad[idx];
          dga += dy * xhat;
          dbe += dy;
          sum_dxhat += dy * ga;
          sum_dxhat_xhat += dy * ga * xhat;
        }
        if (pg.requires_grad) pg.grad_buffer()[ch] += static_cast<T>(dga);
        if (pb.requires_grad) pb.grad_buffer()[ch] += static_cast<T>(dbe);
      }
      if (!px.requires_grad) continue;
      auto& dx = px.grad_buffer();
      const T inv_n = T(1) / static_cast<T>(gsize);
      for (int cc = 0; cc < cpg; ++cc) {
        const int ch = g * cpg + cc;
        const T ga = pg.value[ch];
        for (std::size_t i = 0; i < plane; ++i) {
          const std::size_t idx = ch * plane + i;
          const T xhat = (xv[idx] - mu) * rs;
          const T dxhat = self.grad[idx] * ga;
          dx[idx] += rs * (dxhat - inv_n * static_cast<T>(sum_dxhat) - xhat * inv_n * static_cast<T>(sum_dxhat_xhat));
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Reductions and losses

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T s = 0;
  for (T v : x.value()) s += v;
  return make_result<T>({1}, {s}, {x}, [](Node<T>& self) {
    Node<T>& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.grad_buffer();
    for (T& v : g) v += self.grad[0];
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  return scale(sum(x), T(1) / static_cast<T>(x.size()));
}

/// mean_i phi(pred_i - target_i) with phi(d) = |d| when smoothing == 0 and
/// sqrt(d^2 + s^2) - s otherwise (differentiable at the kink).
template <typename T>
Tensor<T> l1_loss(const Tensor<T>& pred, const Tensor<T>& target, T smoothing = T(0)) {
  detail::require_same(pred.shape(), target.shape(), "l1_loss");
  const std::size_t n = pred.size();
  double acc = 0;
  const auto& pv = pred.value();
  const auto& tv = target.value();
  for (std::size_t i = 0; i < n; ++i) {
    const T d = pv[i] - tv[i];
    acc += smoothing > T(0) ? std::sqrt(d * d + smoothing * smoothing) - smoothing : std::abs(d);
  }
  return make_result<T>({1}, {static_cast<T>(acc / static_cast<double>(n))}, {pred, target},
                        [smoothing, n](Node<T>& self) {
                          Node<T>& pp = *self.parents[0];
                          Node<T>& pt = *self.parents[1];
                          const T scale = self.grad[0] / static_cast<T>(n);
                          for (std::size_t i = 0; i < n; ++i) {
                            const T d = pp.value[i] - pt.value[i];
                            T s;
                            if (smoothing > T(0)) s = d / std::sqrt(d * d + smoothing * smoothing);
                            else s = d > T(0) ? T(1) : (d < T(0) ? T(-1) : T(0));
                            if (pp.requires_grad) pp.grad_buffer()[i] += scale * s;
                            if (pt.requires_grad) pt.grad_buffer()[i] -= scale * s;
                          }
                        });
}

}  // namespace tresdiff::nn
