#pragma once

// Reconstruction metrics and the evaluation protocol: optional per-frame
// histogram equalization of both streams, then MSE, SSIM and a perceptual
// distance per frame.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <istream>
#include <memory>
#include <numbers>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "tresdiff/common.hpp"
#include "tresdiff/events.hpp"

namespace tresdiff {

inline void require_unit_range(const Image& img, const char* what) {
  for (double v : img.pixels) {
    if (!(v >= 0.0 && v <= 1.0)) throw ValidationError(std::string(what) + ": values must lie in [0,1]");
  }
}

/// CDF remap to [0,1]: v -> (cdf(v) - cdf(min)) / (N - cdf(min)). The CDF is
/// taken over exact pixel values, which equals the 256-bin CDF on 8-bit
/// data. A constant image is returned unchanged.
inline IntensityImage histogram_equalize(const IntensityImage& img) {
  const Image& in = img.values;
  require_unit_range(in, "histogram_equalize");
  const std::size_t n = in.size();
  if (n == 0) return img;
  std::vector<double> sorted = in.pixels;
  std::sort(sorted.begin(), sorted.end());
  if (sorted.front() == sorted.back()) return img;
  const double cdf_min = static_cast<double>(std::upper_bound(sorted.begin(), sorted.end(), sorted.front()) - sorted.begin());
  const double denom = static_cast<double>(n) - cdf_min;
  IntensityImage out{Image(in.height, in.width), img.timestamp};
  for (std::size_t i = 0; i < n; ++i) {
    const double cdf = static_cast<double>(std::upper_bound(sorted.begin(), sorted.end(), in.pixels[i]) - sorted.begin());
    out.values.pixels[i] = (cdf - cdf_min) / denom;
  }
  return out;
}

inline double mse(const Image& a, const Image& b) {
  require_same_shape(a, b, "mse");
  if (a.size() == 0) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.pixels[i] - b.pixels[i];
    s += d * d;
  }
  return s / static_cast<double>(a.size());
}

struct SsimOptions {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;
};

namespace detail {

/// Separable Gaussian filter over the valid region.
inline Image gaussian_valid(const Image& img, const std::vector<double>& k) {
  const int r = static_cast<int>(k.size());
  const int ho = img.height - r + 1, wo = img.width - r + 1;
  Image tmp(img.height, wo), out(ho, wo);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < wo; ++x) {
      double s = 0.0;
      for (int i = 0; i < r; ++i) s += k[i] * img.at(y, x + i);
      tmp.at(y, x) = s;
    }
  for (int y = 0; y < ho; ++y)
    for (int x = 0; x < wo; ++x) {
      double s = 0.0;
      for (int i = 0; i < r; ++i) s += k[i] * tmp.at(y + i, x);
      out.at(y, x) = s;
    }
  return out;
}

inline Image pointwise(const Image& a, const Image& b) {
  Image out(a.height, a.width);
  for (std::size_t i = 0; i < a.size(); ++i) out.pixels[i] = a.pixels[i] * b.pixels[i];
  return out;
}

}  // namespace detail

/// Mean local SSIM over every fully-contained Gaussian window.
inline double ssim(const Image& a, const Image& b, const SsimOptions& o = {}) {
  require_same_shape(a, b, "ssim");
  if (a.height < o.window || a.width < o.window) {
    throw ValidationError("ssim: image " + std::to_string(a.height) + "x" + std::to_string(a.width) +
                          " is smaller than the " + std::to_string(o.window) + "x" + std::to_string(o.window) + " window");
  }
  std::vector<double> k(static_cast<std::size_t>(o.window));
  const double c = (o.window - 1) / 2.0;
  double ks = 0.0;
  for (int i = 0; i < o.window; ++i) ks += k[i] = std::exp(-(i - c) * (i - c) / (2.0 * o.sigma * o.sigma));
  for (double& v : k) v /= ks;

  const Image mu_a = detail::gaussian_valid(a, k);
  const Image mu_b = detail::gaussian_valid(b, k);
  const Image aa = detail::gaussian_valid(detail::pointwise(a, a), k);
  const Image bb = detail::gaussian_valid(detail::pointwise(b, b), k);
  const Image ab = detail::gaussian_valid(detail::pointwise(a, b), k);
  const double c1 = std::pow(o.k1 * o.dynamic_range, 2), c2 = std::pow(o.k2 * o.dynamic_range, 2);
  double total = 0.0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double ma = mu_a.pixels[i], mb = mu_b.pixels[i];
    const double va = aa.pixels[i] - ma * ma, vb = bb.pixels[i] - mb * mb, cov = ab.pixels[i] - ma * mb;
    total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
  }
  return total / static_cast<double>(mu_a.size());
}

/// Pluggable perceptual distance; `id()` is written into every report.
class PerceptualMetric {
 public:
  virtual ~PerceptualMetric() = default;
  virtual std::string id() const = 0;
  virtual double operator()(const Image& a, const Image& b) const = 0;
};

/// Stand-in for a learned perceptual distance. At each of `scales` dyadic
/// scales (2x2 mean pooling between scales) central-difference gradients are
/// binned by signed orientation into `bins` magnitude-weighted histograms per
/// `cell` x `cell` block; the score is the mean over scales of the mean L2
/// distance between corresponding block histograms.
class GradientOrientationProxy final : public PerceptualMetric {
 public:
  int scales = 3;
  int cell = 4;
  int bins = 8;

  std::string id() const override { return "grad-orient-proxy"; }

  double operator()(const Image& a, const Image& b) const override {
    require_same_shape(a, b, "perceptual_proxy");
    Image x = a, y = b;
    double total = 0.0;
    int used = 0;
    for (int s = 0; s < scales; ++s) {
      if (x.height < cell || x.width < cell) break;
      const auto ha = histograms(x), hb = histograms(y);
      double d = 0.0;
      for (std::size_t c = 0; c < ha.size(); c += bins) {
        double sq = 0.0;
        for (int k = 0; k < bins; ++k) sq += (ha[c + k] - hb[c + k]) * (ha[c + k] - hb[c + k]);
        d += std::sqrt(sq);
      }
      total += d / static_cast<double>(ha.size() / bins);
      ++used;
      x = pool(x);
      y = pool(y);
    }
    return used ? total / used : 0.0;
  }

 private:
  std::vector<double> histograms(const Image& img) const {
    const int cy = img.height / cell, cx = img.width / cell;
    std::vector<double> h(static_cast<std::size_t>(cy) * cx * bins, 0.0);
    auto px = [&](int yy, int xx) {
      return img.at(std::clamp(yy, 0, img.height - 1), std::clamp(xx, 0, img.width - 1));
    };
    for (int yy = 0; yy < cy * cell; ++yy)
      for (int xx = 0; xx < cx * cell; ++xx) {
        const double gx = 0.5 * (px(yy, xx + 1) - px(yy, xx - 1));
        const double gy = 0.5 * (px(yy + 1, xx) - px(yy - 1, xx));
        const double mag = std::hypot(gx, gy);
        if (mag == 0.0) continue;
        double ang = std::atan2(gy, gx) + std::numbers::pi;  // [0, 2pi]
        int bin = static_cast<int>(ang / (2.0 * std::numbers::pi) * bins);
        bin = std::clamp(bin, 0, bins - 1);
        h[(static_cast<std::size_t>(yy / cell) * cx + xx / cell) * bins + bin] += mag;
      }
    return h;
  }

  static Image pool(const Image& img) {
    Image out(img.height / 2, img.width / 2);
    for (int yy = 0; yy < out.height; ++yy)
      for (int xx = 0; xx < out.width; ++xx)
        out.at(yy, xx) = 0.25 * (img.at(2 * yy, 2 * xx) + img.at(2 * yy, 2 * xx + 1) + img.at(2 * yy + 1, 2 * xx) +
                                 img.at(2 * yy + 1, 2 * xx + 1));
    return out;
  }
};

inline double perceptual_proxy(const Image& a, const Image& b) { return GradientOrientationProxy{}(a, b); }

struct MetricReport {
  std::vector<double> mse, ssim, perceptual;
  double mean_mse = 0.0, mean_ssim = 0.0, mean_perceptual = 0.0;
  bool equalized = true;
  std::string perceptual_id = "grad-orient-proxy";

  std::size_t frame_count() const noexcept { return mse.size(); }

  void update_means() {
    auto avg = [](const std::vector<double>& v) {
      double s = 0.0;
      for (double x : v) s += x;
      return v.empty() ? 0.0 : s / static_cast<double>(v.size());
    };
    mean_mse = avg(mse);
    mean_ssim = avg(ssim);
    mean_perceptual = avg(perceptual);
  }

  friend bool operator==(const MetricReport&, const MetricReport&) = default;
};

inline MetricReport evaluate_sequence(const std::vector<IntensityImage>& pred, const std::vector<IntensityImage>& ref,
                                      bool equalize = true, const PerceptualMetric& perceptual = GradientOrientationProxy{}) {
  if (pred.size() != ref.size()) {
    throw ValidationError("evaluate_sequence: " + std::to_string(pred.size()) + " predicted frames vs " +
                          std::to_string(ref.size()) + " reference frames");
  }
  MetricReport r;
  r.equalized = equalize;
  r.perceptual_id = perceptual.id();
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const Image a = equalize ? histogram_equalize(pred[i]).values : pred[i].values;
    const Image b = equalize ? histogram_equalize(ref[i]).values : ref[i].values;
    r.mse.push_back(mse(a, b));
    r.ssim.push_back(ssim(a, b));
    r.perceptual.push_back(perceptual(a, b));
  }
  r.update_means();
  return r;
}

/// CSV form:
///   # perceptual=<id> equalize=<0|1>
///   frame,mse,ssim,perceptual
///   0,...
///   mean,...
inline void write_metric_csv(std::ostream& out, const MetricReport& r) {
  using detail::format_double;
  out << "# perceptual=" << r.perceptual_id << " equalize=" << (r.equalized ? 1 : 0) << '\n';
  out << "frame,mse,ssim,perceptual\n";
  for (std::size_t i = 0; i < r.frame_count(); ++i)
    out << i << ',' << format_double(r.mse[i]) << ',' << format_double(r.ssim[i]) << ',' << format_double(r.perceptual[i])
        << '\n';
  out << "mean," << format_double(r.mean_mse) << ',' << format_double(r.mean_ssim) << ','
      << format_double(r.mean_perceptual) << '\n';
}

inline MetricReport read_metric_csv(std::istream& in) {
  MetricReport r;
  std::string line;
  std::size_t lineno = 0;
  bool header = false, means = false;
  while (std::getline(in, line)) {
    ++lineno;
    const auto t = detail::trim(line);
    if (t.empty()) continue;
    if (t.front() == '#') {
      std::istringstream s{std::string(t.substr(1))};
      std::string kv;
      while (s >> kv) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ParseError("malformed report tag", lineno);
        const std::string k = kv.substr(0, eq), v = kv.substr(eq + 1);
        if (k == "perceptual") r.perceptual_id = v;
        else if (k == "equalize") r.equalized = v == "1";
        else throw ParseError("unknown report tag " + k, lineno);
      }
      continue;
    }
    if (!header) {
      if (t != "frame,mse,ssim,perceptual") throw ParseError("unexpected report header", lineno);
      header = true;
      continue;
    }
    std::vector<std::string_view> f;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= t.size(); ++i)
      if (i == t.size() || t[i] == ',') {
        f.push_back(t.substr(start, i - start));
        start = i + 1;
      }
    if (f.size() != 4) throw ParseError("expected 4 fields", lineno);
    double m = 0, s = 0, p = 0;
    if (!detail::parse_number(f[1], m) || !detail::parse_number(f[2], s) || !detail::parse_number(f[3], p))
      throw ParseError("malformed metric value", lineno);
    if (f[0] == "mean") {
      r.mean_mse = m, r.mean_ssim = s, r.mean_perceptual = p;
      means = true;
    } else {
      std::size_t idx = 0;
      if (!detail::parse_number(f[0], idx) || idx != r.mse.size()) throw ParseError("frame rows out of order", lineno);
      r.mse.push_back(m), r.ssim.push_back(s), r.perceptual.push_back(p);
    }
  }
  if (!header || !means) throw ParseError("incomplete metric report");
  return r;
}

/// Fixed-width table for terminal output.
inline std::string format_metric_table(const MetricReport& r) {
  std::string out;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-6s %12s %12s %12s   (perceptual: %s, equalize: %s)\n", "frame", "mse", "ssim",
                "perceptual", r.perceptual_id.c_str(), r.equalized ? "on" : "off");
  out += buf;
  for (std::size_t i = 0; i < r.frame_count(); ++i) {
    std::snprintf(buf, sizeof buf, "%-6zu %12.6f %12.6f %12.6f\n", i, r.mse[i], r.ssim[i], r.perceptual[i]);
    out += buf;
  }
  std::snprintf(buf, sizeof buf, "%-6s %12.6f %12.6f %12.6f\n", "mean", r.mean_mse, r.mean_ssim, r.mean_perceptual);
  out += buf;
  return out;
}

}  // namespace tresdiff
