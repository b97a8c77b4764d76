#pragma once

// Shared error types and the dense single-channel image used across modules.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace tresdiff {

/// Invalid arguments, configuration values or shapes.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A checkpoint whose format tag, dtype, tensors or config echo disagree with
/// the model it is loaded into.
class CheckpointMismatchError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Malformed input text; carries the 1-based line number when known.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// A required input file or upstream artifact does not exist.
class MissingArtifactError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw ValidationError(msg);
}

/// Row-major H x W image of doubles.
struct Image {
  int height = 0;
  int width = 0;
  std::vector<double> pixels;

  Image() = default;
  Image(int h, int w, double fill = 0.0) : height(h), width(w), pixels(static_cast<std::size_t>(h) * w, fill) {
    require(h >= 0 && w >= 0, "image dimensions must be non-negative");
  }

  std::size_t size() const noexcept { return pixels.size(); }
  double& at(int y, int x) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  double at(int y, int x) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
  bool same_shape(const Image& o) const noexcept { return height == o.height && width == o.width; }

  friend bool operator==(const Image&, const Image&) = default;
};

inline void require_same_shape(const Image& a, const Image& b, const char* what) {
  if (!a.same_shape(b)) {
    throw ValidationError(std::string(what) + ": shape mismatch (" + std::to_string(a.height) + "x" +
                          std::to_string(a.width) + " vs " + std::to_string(b.height) + "x" +
                          std::to_string(b.width) + ")");
  }
}

/// Intensity frame with values in [0,1].
struct IntensityImage {
  Image values;
  double timestamp = 0.0;

  friend bool operator==(const IntensityImage&, const IntensityImage&) = default;
};

/// Temporal-domain residual between a frame and the previous intensity estimate.
struct ResidualImage {
  Image values;
};

inline Image clamp01(Image img) {
  for (double& v : img.pixels) v = std::clamp(v, 0.0, 1.0);
  return img;
}

inline bool all_finite(const Image& img) {
  return std::all_of(img.pixels.begin(), img.pixels.end(), [](double v) { return std::isfinite(v); });
}

inline double mean_value(const Image& img) {
  if (img.pixels.empty()) return 0.0;
  double s = 0.0;
  for (double v : img.pixels) s += v;
  return s / static_cast<double>(img.pixels.size());
}

}  // namespace tresdiff
