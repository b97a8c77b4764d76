#pragma once

// Small synthetic scenes for desk runs. Objects are rendered with exact
// area coverage so sub-pixel motion produces smooth intensity changes, and
// every frame is quantized to 8 bits so it survives a PGM round trip.
//
// The motion changes direction two thirds of the way through the sequence;
// the tail is used as a held-out segment.

#include <algorithm>
#include <cmath>

#include "tresdiff/common.hpp"
#include "tresdiff/simulator.hpp"

namespace tresdiff {

struct SceneSpec {
  int width = 32;
  int height = 32;
  int frames = 24;
  double frame_interval = 0.04;
};

namespace scene_detail {

// Overlap of [a0, a1) with the unit cell [c, c+1).
inline double overlap(double a0, double a1, int c) { return std::max(0.0, std::min(a1, c + 1.0) - std::max(a0, double(c))); }

inline double quantize8(double v) { return std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0; }

inline Image background(int h, int w) {
  Image img(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) img.at(y, x) = 0.22 + 0.12 * x / std::max(1, w - 1) + 0.06 * y / std::max(1, h - 1);
  return img;
}

inline void paint_rect(Image& img, double x0, double y0, double x1, double y1, double value) {
  for (int y = std::max(0, int(std::floor(y0))); y < std::min(img.height, int(std::ceil(y1))); ++y) {
    const double cy = overlap(y0, y1, y);
    for (int x = std::max(0, int(std::floor(x0))); x < std::min(img.width, int(std::ceil(x1))); ++x) {
      const double c = cy * overlap(x0, x1, x);
      img.at(y, x) = (1.0 - c) * img.at(y, x) + c * value;
    }
  }
}

// Piecewise-linear position: velocity v1 until `turn`, then v2.
inline double path(int k, int turn, double start, double v1, double v2) {
  return k <= turn ? start + v1 * k : start + v1 * turn + v2 * (k - turn);
}

}  // namespace scene_detail

inline int scene_turn_frame(int frames) { return std::max(1, (2 * frames) / 3); }

inline FrameSequence moving_square_scene(const SceneSpec& s) {
  using namespace scene_detail;
  require(s.frames >= 2 && s.width >= 8 && s.height >= 8, "scene needs at least 2 frames of 8x8");
  FrameSequence seq;
  seq.geometry = {s.width, s.height};
  const int turn = scene_turn_frame(s.frames);
  const double side = 0.3 * std::min(s.width, s.height);
  const double span_x = s.width - side - 2.0, span_y = s.height - side - 2.0;
  for (int k = 0; k < s.frames; ++k) {
    Image img = background(s.height, s.width);
    const double x = path(k, turn, 1.0, 0.6 * span_x / turn, -0.3 * span_x / std::max(1, s.frames - 1 - turn));
    const double y = path(k, turn, 1.0, 0.25 * span_y / turn, 0.7 * span_y / std::max(1, s.frames - 1 - turn));
    paint_rect(img, x, y, x + side, y + side, 0.85);
    for (double& v : img.pixels) v = quantize8(v);
    seq.frames.push_back(std::move(img));
    seq.timestamps.push_back(k * s.frame_interval);
  }
  return seq;
}

inline FrameSequence moving_bar_scene(const SceneSpec& s) {
  using namespace scene_detail;
  require(s.frames >= 2 && s.width >= 8 && s.height >= 8, "scene needs at least 2 frames of 8x8");
  FrameSequence seq;
  seq.geometry = {s.width, s.height};
  const int turn = scene_turn_frame(s.frames);
  const double bar = 0.15 * s.width;
  const double span = s.width - bar - 2.0;
  for (int k = 0; k < s.frames; ++k) {
    Image img = background(s.height, s.width);
    const double x = path(k, turn, 1.0, span / turn, -0.5 * span / std::max(1, s.frames - 1 - turn));
    paint_rect(img, x, 0.0, x + bar, s.height, 0.9);
    for (double& v : img.pixels) v = quantize8(v);
    seq.frames.push_back(std::move(img));
    seq.timestamps.push_back(k * s.frame_interval);
  }
  return seq;
}

/// A translating sinusoidal texture; exercises high spatial frequencies.
inline FrameSequence texture_scene(const SceneSpec& s) {
  using namespace scene_detail;
  require(s.frames >= 2 && s.width >= 8 && s.height >= 8, "scene needs at least 2 frames of 8x8");
  FrameSequence seq;
  seq.geometry = {s.width, s.height};
  const int turn = scene_turn_frame(s.frames);
  const double pi = std::acos(-1.0);
  for (int k = 0; k < s.frames; ++k) {
    Image img(s.height, s.width);
    const double dx = path(k, turn, 0.0, 0.75, -0.5), dy = path(k, turn, 0.0, 0.0, 0.75);
    for (int y = 0; y < s.height; ++y)
      for (int x = 0; x < s.width; ++x) {
        const double u = x - dx, v = y - dy;
        img.at(y, x) = quantize8(0.5 + 0.2 * std::sin(2 * pi * u / 8.0) + 0.15 * std::sin(2 * pi * (u + v) / 5.0));
      }
    seq.frames.push_back(std::move(img));
    seq.timestamps.push_back(k * s.frame_interval);
  }
  return seq;
}

}  // namespace tresdiff
