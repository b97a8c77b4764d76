#pragma once

// Event stream primitives: the Event record, sensor geometry, time windows,
// the EVT1 text format, and density-bounded segmentation.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "tresdiff/common.hpp"

namespace tresdiff {

struct SensorGeometry {
  int width = 0;
  int height = 0;

  std::size_t pixel_count() const noexcept { return static_cast<std::size_t>(width) * height; }
  bool contains(int x, int y) const noexcept { return x >= 0 && x < width && y >= 0 && y < height; }
  void validate() const {
    require(width >= 1 && height >= 1, "sensor geometry must be at least 1x1");
  }
  friend bool operator==(const SensorGeometry&, const SensorGeometry&) = default;
};

struct Event {
  double t = 0.0;
  int x = 0;
  int y = 0;
  int p = 1;  ///< +1 or -1

  friend bool operator==(const Event&, const Event&) = default;
};

struct EventWindow {
  std::vector<Event> events;
  double t_start = 0.0;
  double t_end = 0.0;
  SensorGeometry geometry;

  double density() const noexcept {
    return static_cast<double>(events.size()) / static_cast<double>(geometry.pixel_count());
  }
  int polarity_sum() const noexcept {
    int s = 0;
    for (const auto& e : events) s += e.p;
    return s;
  }
};

inline constexpr double kDefaultMaxDensity = 0.25;

inline void validate_event(const Event& e, const SensorGeometry& g) {
  if (!g.contains(e.x, e.y)) {
    throw ValidationError("event coordinate (" + std::to_string(e.x) + "," + std::to_string(e.y) +
                          ") outside " + std::to_string(g.width) + "x" + std::to_string(g.height) + " sensor");
  }
  if (e.p != 1 && e.p != -1) throw ValidationError("event polarity must be +1 or -1");
  if (!(e.t >= 0.0) || !std::isfinite(e.t)) throw ValidationError("event timestamp must be finite and non-negative");
}

inline bool is_time_sorted(std::span<const Event> events) {
  return std::is_sorted(events.begin(), events.end(), [](const Event& a, const Event& b) { return a.t < b.t; });
}

/// Window spanning exactly its events' time range.
inline EventWindow make_window(std::vector<Event> events, const SensorGeometry& g) {
  EventWindow w;
  w.geometry = g;
  if (!events.empty()) {
    w.t_start = events.front().t;
    w.t_end = events.back().t;
  }
  w.events = std::move(events);
  return w;
}

// ---------------------------------------------------------------------------
// EVT1 text format
//
//   EVT1 <W> <H>
//   <t> <x> <y> <p>
//   ...
//
// t is rendered with the shortest decimal that round-trips to the same double,
// x and y are base-10 integers and p is "1" or "-1". Blank lines are ignored.

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
    std::size_t j = i;
    while (j < s.size() && s[j] != ' ' && s[j] != '\t') ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

template <typename N>
bool parse_number(std::string_view tok, N& out) {
  if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), out);
  return ec == std::errc() && ptr == tok.data() + tok.size();
}

inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace detail

/// Reads an EVT1 stream. When `expected` has non-zero dimensions the header
/// must agree with it.
inline EventWindow parse_events(std::istream& in, const SensorGeometry& expected = {}) {
  std::string line;
  std::size_t lineno = 0;
  SensorGeometry g;
  bool have_header = false;
  while (!have_header && std::getline(in, line)) {
    ++lineno;
    auto s = detail::trim(line);
    if (s.empty()) continue;
    auto tok = detail::split_ws(s);
    if (tok.size() != 3 || tok[0] != "EVT1" || !detail::parse_number(tok[1], g.width) ||
        !detail::parse_number(tok[2], g.height)) {
      throw ParseError("expected header 'EVT1 <W> <H>'", lineno);
    }
    if (g.width < 1 || g.height < 1) throw ParseError("sensor geometry must be at least 1x1", lineno);
    have_header = true;
  }
  if (!have_header) throw ParseError("missing EVT1 header");
  if (expected.width != 0 && expected.height != 0 && !(expected == g)) {
    throw ValidationError("EVT1 header geometry does not match the configured sensor");
  }

  std::vector<Event> events;
  while (std::getline(in, line)) {
    ++lineno;
    auto s = detail::trim(line);
    if (s.empty()) continue;
    auto tok = detail::split_ws(s);
    Event e;
    if (tok.size() != 4 || !detail::parse_number(tok[0], e.t) || !detail::parse_number(tok[1], e.x) ||
        !detail::parse_number(tok[2], e.y) || !detail::parse_number(tok[3], e.p) || (e.p != 1 && e.p != -1) ||
        !std::isfinite(e.t) || e.t < 0.0) {
      throw ParseError("malformed event record '" + std::string(s) + "'", lineno);
    }
    if (!g.contains(e.x, e.y)) {
      throw ValidationError("line " + std::to_string(lineno) + ": coordinate out of range (" + std::to_string(e.x) +
                            "," + std::to_string(e.y) + ")");
    }
    if (!events.empty() && e.t < events.back().t) {
      throw ParseError("non-monotone timestamp", lineno);
    }
    events.push_back(e);
  }
  return make_window(std::move(events), g);
}

inline EventWindow parse_events(std::string_view text, const SensorGeometry& expected = {}) {
  std::istringstream in{std::string(text)};
  return parse_events(in, expected);
}

inline void write_events(std::ostream& out, const SensorGeometry& g, std::span<const Event> events) {
  out << "EVT1 " << g.width << ' ' << g.height << '\n';
  for (const auto& e : events) {
    out << detail::format_double(e.t) << ' ' << e.x << ' ' << e.y << ' ' << (e.p > 0 ? "1" : "-1") << '\n';
  }
}

inline std::string serialize_events(const EventWindow& w) {
  std::ostringstream out;
  write_events(out, w.geometry, w.events);
  return out.str();
}

// ---------------------------------------------------------------------------
// Segmentation

/// Largest event count n with n / (W*H) <= max_density.
inline std::size_t density_capacity(const SensorGeometry& g, double max_density) {
  const double pixels = static_cast<double>(g.pixel_count());
  auto n = static_cast<std::size_t>(std::floor(max_density * pixels));
  while (static_cast<double>(n + 1) / pixels <= max_density) ++n;
  while (n > 0 && static_cast<double>(n) / pixels > max_density) --n;
  return n;
}

/// Greedy left-to-right cut into windows whose density does not exceed
/// `max_density`. The windows partition the input in order.
inline std::vector<EventWindow> segment_by_density(std::span<const Event> events, const SensorGeometry& g,
                                                   double max_density = kDefaultMaxDensity) {
  g.validate();
  require(max_density > 0.0, "max_density must be positive");
  if (!is_time_sorted(events)) throw ValidationError("segment_by_density: events are not sorted by time");
  const std::size_t cap = density_capacity(g, max_density);
  require(cap >= 1 || events.empty(), "max_density admits no events on this sensor");

  std::vector<EventWindow> out;
  for (std::size_t i = 0; i < events.size(); i += cap) {
    const std::size_t n = std::min(cap, events.size() - i);
    out.push_back(make_window(std::vector<Event>(events.begin() + i, events.begin() + i + n), g));
  }
  return out;
}

/// Events with t0 < t <= t1, matching the simulator's per-interval stamping.
inline std::vector<Event> slice_by_time(std::span<const Event> events, double t0, double t1) {
  auto after = [](double t, const Event& e) { return t < e.t; };
  auto lo = std::upper_bound(events.begin(), events.end(), t0, after);
  auto hi = std::upper_bound(events.begin(), events.end(), t1, after);
  if (hi < lo) hi = lo;
  return {lo, hi};
}

}  // namespace tresdiff
