#pragma once

// Threshold event simulator over a sampled frame sequence.
//
// Every pixel keeps a log-intensity reference. When the new frame's log
// intensity moves past the reference by at least one contrast threshold, one
// event per whole threshold is emitted and the reference advances by that many
// thresholds. Events are stamped where the crossing level falls on the line
// between the two frames' log intensities, so they are ordered within a pixel
// and lie in (t_prev, t_next].

#include <algorithm>
#include <cmath>
#include <vector>

#include "tresdiff/common.hpp"
#include "tresdiff/events.hpp"

namespace tresdiff {

struct SimulatorConfig {
  double phi_pos = 0.2;
  double phi_neg = -0.2;
  double epsilon_log = 1e-3;

  void validate() const {
    require(phi_pos > 0.0 && phi_neg < 0.0, "simulator thresholds must satisfy phi_pos > 0 > phi_neg");
    require(epsilon_log > 0.0, "epsilon_log must be positive");
  }
  friend bool operator==(const SimulatorConfig&, const SimulatorConfig&) = default;
};

struct FrameSequence {
  std::vector<Image> frames;
  std::vector<double> timestamps;
  SensorGeometry geometry;

  std::size_t size() const noexcept { return frames.size(); }

  void validate() const {
    geometry.validate();
    require(frames.size() == timestamps.size(), "frame and timestamp counts differ");
    for (std::size_t i = 0; i < frames.size(); ++i) {
      require(frames[i].height == geometry.height && frames[i].width == geometry.width,
              "frame " + std::to_string(i) + " does not match the sensor geometry");
      for (double v : frames[i].pixels) require(v >= 0.0 && v <= 1.0, "frame values must lie in [0,1]");
      if (i > 0) require(timestamps[i] > timestamps[i - 1], "frame timestamps must be strictly increasing");
    }
  }
};

inline EventWindow simulate_events(const FrameSequence& seq, const SimulatorConfig& cfg) {
  cfg.validate();
  if (seq.size() < 2) throw ValidationError("simulate_events needs at least two frames");
  seq.validate();

  const auto& g = seq.geometry;
  const std::size_t n = g.pixel_count();
  auto to_log = [&](const Image& f) {
    std::vector<double> l(n);
    for (std::size_t i = 0; i < n; ++i) l[i] = std::log(f.pixels[i] + cfg.epsilon_log);
    return l;
  };

  std::vector<double> reference = to_log(seq.frames[0]);
  std::vector<double> last = reference;
  std::vector<Event> events;

  // Guards floor() against ratios like 0.6/0.2 landing just under an integer.
  constexpr double kRatioSlack = 1e-9;

  for (std::size_t k = 1; k < seq.size(); ++k) {
    const double t0 = seq.timestamps[k - 1];
    const double dt = seq.timestamps[k] - t0;
    std::vector<double> current = to_log(seq.frames[k]);
    std::vector<Event> step;
    for (int y = 0; y < g.height; ++y) {
      for (int x = 0; x < g.width; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * g.width + x;
        const double delta = current[i] - reference[i];
        int polarity = 0;
        double phi = 0.0;
        if (delta >= cfg.phi_pos) {
          polarity = 1;
          phi = cfg.phi_pos;
        } else if (delta <= cfg.phi_neg) {
          polarity = -1;
          phi = cfg.phi_neg;
        }
        if (polarity == 0) continue;

        const auto count = static_cast<int>(std::floor(delta / phi + kRatioSlack));
        const double span = current[i] - last[i];
        for (int j = 1; j <= count; ++j) {
          const double level = reference[i] + j * phi;
          double frac = span != 0.0 ? (level - last[i]) / span : 1.0;
          frac = std::clamp(frac, 0.0, 1.0);
          double t = t0 + frac * dt;
          if (t <= t0) t = std::nextafter(t0, seq.timestamps[k]);
          step.push_back(Event{t, x, y, polarity});
        }
        reference[i] += count * phi;
      }
    }
    std::stable_sort(step.begin(), step.end(), [](const Event& a, const Event& b) { return a.t < b.t; });
    events.insert(events.end(), step.begin(), step.end());
    last = std::move(current);
  }

  EventWindow w;
  w.geometry = g;
  w.t_start = seq.timestamps.front();
  w.t_end = seq.timestamps.back();
  w.events = std::move(events);
  return w;
}

}  // namespace tresdiff
