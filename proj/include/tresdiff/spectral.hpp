#pragma once

// Frequency-domain diagnostics: centered log-magnitude spectra, an ideal
// radial low/high band split, and the correlation between an image's high
// band and the event image.

#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>
#include <utility>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "tresdiff/common.hpp"
#include "tresdiff/events.hpp"
#include "tresdiff/frames_io.hpp"

namespace tresdiff {

inline constexpr double kDefaultFrequencyCutoff = 0.125;

namespace detail {

using Spectrum2 = std::vector<std::complex<double>>;

/// 2-D DFT (inverse when `inverse`, including the 1/(HW) scale) by rows then columns.
inline Spectrum2 fft2(Spectrum2 data, int h, int w, bool inverse) {
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> in, out;
  in.resize(static_cast<std::size_t>(w));
  for (int y = 0; y < h; ++y) {
    std::copy_n(data.begin() + static_cast<std::ptrdiff_t>(y) * w, w, in.begin());
    inverse ? fft.inv(out, in) : fft.fwd(out, in);
    std::copy(out.begin(), out.end(), data.begin() + static_cast<std::ptrdiff_t>(y) * w);
  }
  in.resize(static_cast<std::size_t>(h));
  for (int x = 0; x < w; ++x) {
    for (int y = 0; y < h; ++y) in[y] = data[static_cast<std::size_t>(y) * w + x];
    inverse ? fft.inv(out, in) : fft.fwd(out, in);
    for (int y = 0; y < h; ++y) data[static_cast<std::size_t>(y) * w + x] = out[y];
  }
  return data;
}

inline Spectrum2 fft2(const Image& img) {
  return fft2(Spectrum2(img.pixels.begin(), img.pixels.end()), img.height, img.width, false);
}

inline int signed_frequency(int k, int n) { return k <= n / 2 ? k : k - n; }

}  // namespace detail

/// Centered log(1 + |F|); the zero frequency sits at (H/2, W/2).
inline Image fft_magnitude_spectrum(const Image& img) {
  const auto f = detail::fft2(img);
  Image out(img.height, img.width);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const int sy = (y + img.height / 2) % img.height, sx = (x + img.width / 2) % img.width;
      out.at(sy, sx) = std::log1p(std::abs(f[static_cast<std::size_t>(y) * img.width + x]));
    }
  return out;
}

/// Radial frequency normalised so the highest representable frequency (the
/// spectrum corner) is 1.
inline double normalized_radius(int ky, int kx, int h, int w) {
  const double fy = detail::signed_frequency(ky, h) / (h / 2.0 > 0 ? h / 2.0 : 1.0);
  const double fx = detail::signed_frequency(kx, w) / (w / 2.0 > 0 ? w / 2.0 : 1.0);
  return std::sqrt((fy * fy + fx * fx) / 2.0);
}

/// Ideal radial mask: radius <= cutoff goes to the low band, the rest to the high band.
inline std::pair<Image, Image> split_frequency(const Image& img, double cutoff = kDefaultFrequencyCutoff) {
  if (!(cutoff > 0.0 && cutoff < 1.0)) throw ValidationError("split_frequency: cutoff must lie in (0,1)");
  const int h = img.height, w = img.width;
  const auto f = detail::fft2(img);
  detail::Spectrum2 lo(f.size()), hi(f.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      (normalized_radius(y, x, h, w) <= cutoff ? lo : hi)[i] = f[i];
    }
  lo = detail::fft2(std::move(lo), h, w, true);
  hi = detail::fft2(std::move(hi), h, w, true);
  Image low(h, w), high(h, w);
  for (std::size_t i = 0; i < f.size(); ++i) {
    low.pixels[i] = lo[i].real();
    high.pixels[i] = hi[i].real();
  }
  return {low, high};
}

/// Zero-mean normalised cross-correlation; 0 when either input is constant.
inline double normalized_cross_correlation(const Image& a, const Image& b) {
  require_same_shape(a, b, "normalized_cross_correlation");
  auto constant = [](const Image& img) {
    return std::all_of(img.pixels.begin(), img.pixels.end(), [&](double v) { return v == img.pixels.front(); });
  };
  if (a.size() == 0 || constant(a) || constant(b)) return 0.0;
  const double ma = mean_value(a), mb = mean_value(b);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a.pixels[i] - ma, db = b.pixels[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa <= 0.0 || sbb <= 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

/// NCC between |high band of recon| and |voxel_agg|.
inline double highfreq_event_similarity(const Image& recon, const Image& voxel_agg, double cutoff = kDefaultFrequencyCutoff) {
  require_same_shape(recon, voxel_agg, "highfreq_event_similarity");
  Image high = split_frequency(recon, cutoff).second;
  Image ev = voxel_agg;
  for (double& v : high.pixels) v = std::abs(v);
  for (double& v : ev.pixels) v = std::abs(v);
  return normalized_cross_correlation(high, ev);
}

struct NormalizationBounds {
  double min = 0.0;
  double max = 0.0;
};

/// Writes `img` min-max normalised to 8 bits at `path` (PGM) and the bounds to
/// `path` + ".norm.txt". A constant image maps to 0.
inline NormalizationBounds export_normalized(const std::filesystem::path& path, const Image& img) {
  NormalizationBounds b;
  if (img.size()) {
    const auto [lo, hi] = std::minmax_element(img.pixels.begin(), img.pixels.end());
    b = {*lo, *hi};
  }
  Image scaled(img.height, img.width);
  const double range = b.max - b.min;
  if (range > 0.0)
    for (std::size_t i = 0; i < img.size(); ++i) scaled.pixels[i] = (img.pixels[i] - b.min) / range;
  write_pgm(path, scaled);
  std::ofstream side(path.string() + ".norm.txt");
  if (!side) throw std::runtime_error("cannot write " + path.string() + ".norm.txt");
  side << "min=" << detail::format_double(b.min) << "\nmax=" << detail::format_double(b.max) << '\n';
  return b;
}

}  // namespace tresdiff
