#pragma once

// Per-interval voxelization with reference frames, and the VOX1 archive.
//
// Window 0 is an empty grid at the first frame time (there are no events
// before it). Each later frame interval (t[k-1], t[k]] becomes one window, or
// several when it exceeds the density cap; every window gets a reference
// frame linearly interpolated at its end time.
//
// VOX1 archive:
//   VOX1 <count> <bins> <height> <width>
//   grid <t_start> <t_end> <event_count>
//   <bins*height*width little-endian float64>
//   ...

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "tresdiff/common.hpp"
#include "tresdiff/events.hpp"
#include "tresdiff/frames_io.hpp"
#include "tresdiff/simulator.hpp"
#include "tresdiff/voxel.hpp"

namespace tresdiff {

struct WindowedSequence {
  std::vector<VoxelGrid> voxels;
  FrameSequence reference;  ///< one frame per voxel window

  std::size_t size() const noexcept { return voxels.size(); }
};

inline Image interpolate_frame(const FrameSequence& seq, double t) {
  require(!seq.frames.empty(), "interpolate_frame: empty sequence");
  const auto& ts = seq.timestamps;
  if (t <= ts.front()) return seq.frames.front();
  if (t >= ts.back()) return seq.frames.back();
  const auto k = static_cast<std::size_t>(std::upper_bound(ts.begin(), ts.end(), t) - ts.begin());
  if (ts[k - 1] == t) return seq.frames[k - 1];
  const double a = (t - ts[k - 1]) / (ts[k] - ts[k - 1]);
  Image out = seq.frames[k - 1];
  for (std::size_t i = 0; i < out.size(); ++i) out.pixels[i] = (1.0 - a) * out.pixels[i] + a * seq.frames[k].pixels[i];
  return out;
}

inline WindowedSequence build_windows(const EventWindow& events, const FrameSequence& frames, int bins,
                                      double max_density) {
  frames.validate();
  require(frames.size() >= 1, "build_windows: no frames");
  require(events.geometry == frames.geometry, "event and frame geometries differ");
  require(is_time_sorted(events.events), "events are not sorted by time");

  WindowedSequence out;
  out.reference.geometry = frames.geometry;
  auto push = [&](EventWindow w, double t_start, double t_end) {
    w.geometry = frames.geometry;
    w.t_start = t_start;
    w.t_end = t_end;
    out.voxels.push_back(build_voxel_grid(w, bins));
    out.reference.frames.push_back(interpolate_frame(frames, t_end));
    out.reference.timestamps.push_back(t_end);
  };

  push(EventWindow{}, frames.timestamps.front(), frames.timestamps.front());
  for (std::size_t k = 1; k < frames.size(); ++k) {
    const double t0 = frames.timestamps[k - 1], t1 = frames.timestamps[k];
    auto slice = slice_by_time(events.events, t0, t1);
    auto parts = segment_by_density(slice, frames.geometry, max_density);
    if (parts.empty()) {
      push(EventWindow{}, t0, t1);
      continue;
    }
    double start = t0;
    for (std::size_t j = 0; j < parts.size(); ++j) {
      double end = t1;
      if (j + 1 < parts.size()) {
        end = parts[j].events.back().t;
        // Non-final ends stay strictly inside (start, t1).
        if (end <= start || end >= t1) end = start + (t1 - start) / static_cast<double>(parts.size() - j);
      }
      push(std::move(parts[j]), start, end);
      start = end;
    }
  }
  return out;
}

inline constexpr const char* kVoxelArchiveTag = "VOX1";

inline void write_voxel_archive(std::ostream& out, const std::vector<VoxelGrid>& grids) {
  static_assert(std::endian::native == std::endian::little, "VOX1 payloads are written little-endian");
  require(!grids.empty(), "voxel archive needs at least one grid");
  const auto& g0 = grids.front();
  out << kVoxelArchiveTag << ' ' << grids.size() << ' ' << g0.bins << ' ' << g0.height << ' ' << g0.width << '\n';
  for (const auto& g : grids) {
    require(g.bins == g0.bins && g.height == g0.height && g.width == g0.width, "voxel archive grids differ in shape");
    out << "grid " << detail::format_double(g.t_start) << ' ' << detail::format_double(g.t_end) << ' ' << g.event_count
        << '\n';
    out.write(reinterpret_cast<const char*>(g.values.data()), static_cast<std::streamsize>(g.values.size() * sizeof(double)));
    out << '\n';
  }
}

inline std::vector<VoxelGrid> read_voxel_archive(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("voxel archive is empty", 1);
  std::istringstream hs(line);
  std::string tag;
  std::size_t count = 0;
  int b = 0, h = 0, w = 0;
  if (!(hs >> tag >> count >> b >> h >> w) || tag != kVoxelArchiveTag || b < 1 || h < 1 || w < 1)
    throw ParseError("expected header 'VOX1 <count> <bins> <height> <width>'", 1);
  std::vector<VoxelGrid> grids;
  for (std::size_t i = 0; i < count; ++i) {
    if (!std::getline(in, line)) throw ParseError("voxel archive truncated at grid " + std::to_string(i));
    std::istringstream gs(line);
    std::string word, ts, te;
    VoxelGrid g(b, h, w);
    if (!(gs >> word >> ts >> te >> g.event_count) || word != "grid" || !detail::parse_number(ts, g.t_start) ||
        !detail::parse_number(te, g.t_end))
      throw ParseError("malformed grid header " + std::to_string(i));
    const auto bytes = static_cast<std::streamsize>(g.values.size() * sizeof(double));
    in.read(reinterpret_cast<char*>(g.values.data()), bytes);
    if (in.gcount() != bytes || in.get() != '\n') throw ParseError("voxel archive payload truncated at grid " + std::to_string(i));
    grids.push_back(std::move(g));
  }
  return grids;
}

inline void save_windowed(const std::filesystem::path& dir, const WindowedSequence& ws) {
  std::filesystem::create_directories(dir);
  std::ofstream out(dir / "voxels.vox", std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + (dir / "voxels.vox").string());
  write_voxel_archive(out, ws.voxels);
  write_frame_directory(dir / "reference", ws.reference);
}

inline WindowedSequence load_windowed(const std::filesystem::path& dir) {
  std::ifstream in(dir / "voxels.vox", std::ios::binary);
  if (!in) throw MissingArtifactError("voxel archive not found: " + (dir / "voxels.vox").string());
  WindowedSequence ws;
  ws.voxels = read_voxel_archive(in);
  ws.reference = read_frame_directory(dir / "reference");
  require(ws.reference.size() == ws.voxels.size(), "voxel archive and reference frame counts differ");
  return ws;
}

}  // namespace tresdiff
