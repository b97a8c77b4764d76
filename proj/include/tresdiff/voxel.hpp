#pragma once

// Temporal voxel grid: each event spreads its polarity over the two nearest of
// B temporal bins at its pixel with linear (tent) weights.

#include <cmath>
#include <cstddef>
#include <vector>

#include "tresdiff/common.hpp"
#include "tresdiff/events.hpp"

namespace tresdiff {

inline constexpr int kDefaultVoxelBins = 5;

struct VoxelGrid {
  int bins = 0;
  int height = 0;
  int width = 0;
  std::vector<double> values;  ///< [bins][height][width]

  // Provenance of the source window.
  double t_start = 0.0;
  double t_end = 0.0;
  std::size_t event_count = 0;

  VoxelGrid() = default;
  VoxelGrid(int b, int h, int w) : bins(b), height(h), width(w), values(static_cast<std::size_t>(b) * h * w, 0.0) {}

  double& at(int b, int y, int x) { return values[(static_cast<std::size_t>(b) * height + y) * width + x]; }
  double at(int b, int y, int x) const { return values[(static_cast<std::size_t>(b) * height + y) * width + x]; }
  std::size_t plane_size() const noexcept { return static_cast<std::size_t>(height) * width; }

  double total() const {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
  }

  friend bool operator==(const VoxelGrid&, const VoxelGrid&) = default;
};

inline VoxelGrid zero_voxel_like(const VoxelGrid& v) {
  VoxelGrid z(v.bins, v.height, v.width);
  z.t_start = v.t_start;
  z.t_end = v.t_end;
  return z;
}

inline VoxelGrid build_voxel_grid(const EventWindow& window, int bins = kDefaultVoxelBins) {
  if (bins < 1) throw ValidationError("voxel grid needs at least one temporal bin");
  window.geometry.validate();
  VoxelGrid grid(bins, window.geometry.height, window.geometry.width);
  grid.t_start = window.t_start;
  grid.t_end = window.t_end;
  grid.event_count = window.events.size();
  if (window.events.empty()) return grid;

  const double t_first = window.events.front().t;
  const double span = window.events.back().t - t_first;
  for (const auto& e : window.events) {
    validate_event(e, window.geometry);
    // Degenerate windows put all mass in bin 0.
    const double pos = span > 0.0 ? (e.t - t_first) / span * (bins - 1) : 0.0;
    const int lo = static_cast<int>(std::floor(pos));
    const double frac = pos - lo;
    if (lo >= 0 && lo < bins) grid.at(lo, e.y, e.x) += e.p * (1.0 - frac);
    if (frac > 0.0 && lo + 1 < bins) grid.at(lo + 1, e.y, e.x) += e.p * frac;
  }
  return grid;
}

/// Sum over temporal bins.
inline Image aggregate_voxel(const VoxelGrid& grid) {
  Image out(grid.height, grid.width);
  for (int b = 0; b < grid.bins; ++b)
    for (std::size_t i = 0; i < grid.plane_size(); ++i) out.pixels[i] += grid.values[b * grid.plane_size() + i];
  return out;
}

}  // namespace tresdiff
