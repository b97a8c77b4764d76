#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <sstream>

#include "tresdiff/events.hpp"
#include "tresdiff/frames_io.hpp"
#include "tresdiff/rng.hpp"
#include "tresdiff/simulator.hpp"
#include "tresdiff/voxel.hpp"

using namespace tresdiff;

namespace {

// Brute-force log-domain walk: step the reference one threshold at a time.
int count_crossings(double from, double to, double phi_pos, double phi_neg, double eps) {
  double ref = std::log(from + eps);
  const double target = std::log(to + eps);
  int n = 0;
  while (target - ref >= phi_pos - 1e-12) ref += phi_pos, ++n;
  while (target - ref <= phi_neg + 1e-12) ref += phi_neg, --n;
  return n;
}

FrameSequence two_frames(double a, double b) {
  FrameSequence s;
  s.geometry = {4, 4};
  s.frames = {Image(4, 4, 0.3), Image(4, 4, 0.3)};
  s.frames[0].at(2, 1) = a;
  s.frames[1].at(2, 1) = b;
  s.timestamps = {0.0, 1.0};
  return s;
}

}  // namespace

TEST(Evt1, EmptyBodyGivesEmptyWindow) {
  auto w = parse_events("EVT1 10 10\n");
  EXPECT_TRUE(w.events.empty());
  EXPECT_EQ(w.geometry, (SensorGeometry{10, 10}));
}

TEST(Evt1, SingleRecord) {
  auto w = parse_events("EVT1 10 10\n0.5 3 2 1\n");
  ASSERT_EQ(w.events.size(), 1u);
  EXPECT_EQ(w.events[0], (Event{0.5, 3, 2, 1}));
}

TEST(Evt1, RejectsOutOfRangeCoordinate) {
  EXPECT_THROW(parse_events("EVT1 10 10\n0.5 11 2 1\n"), ValidationError);
}

TEST(Evt1, MalformedLineReportsLineNumber) {
  try {
    parse_events("EVT1 10 10\n0.1 1 1 1\n0.2 1 x 1\n");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
  EXPECT_THROW(parse_events("EVT1 10 10\n0.1 1 1 0\n"), ParseError);
  EXPECT_THROW(parse_events("EVT2 10 10\n"), ParseError);
}

TEST(Evt1, RejectsNonMonotoneTimestamps) {
  EXPECT_THROW(parse_events("EVT1 10 10\n0.2 1 1 1\n0.1 1 1 1\n"), ParseError);
}

TEST(Evt1, RoundTripIsBitExact) {
  RngState rng(7);
  std::vector<Event> ev;
  double t = 0.0;
  for (int i = 0; i < 500; ++i) {
    t += rng.uniform() * 1e-3;
    ev.push_back({t, static_cast<int>(rng.uniform_int(0, 31)), static_cast<int>(rng.uniform_int(0, 23)),
                  rng.uniform() < 0.5 ? -1 : 1});
  }
  auto w = make_window(ev, {32, 24});
  const std::string text = serialize_events(w);
  auto back = parse_events(text);
  EXPECT_EQ(back.events, ev);
  EXPECT_EQ(serialize_events(back), text);
}

TEST(Simulator, Ln2RiseGivesThreePositiveEvents) {
  SimulatorConfig cfg;
  auto w = simulate_events(two_frames(0.5, 1.0), cfg);
  const int oracle = count_crossings(0.5, 1.0, cfg.phi_pos, cfg.phi_neg, cfg.epsilon_log);
  EXPECT_EQ(oracle, 3);
  ASSERT_EQ(static_cast<int>(w.events.size()), oracle);
  for (const auto& e : w.events) {
    EXPECT_EQ(e.p, 1);
    EXPECT_EQ(e.x, 1);
    EXPECT_EQ(e.y, 2);
    EXPECT_GT(e.t, 0.0);
    EXPECT_LE(e.t, 1.0);
  }
}

TEST(Simulator, Ln2FallGivesThreeNegativeEvents) {
  SimulatorConfig cfg;
  auto w = simulate_events(two_frames(1.0, 0.5), cfg);
  EXPECT_EQ(count_crossings(1.0, 0.5, cfg.phi_pos, cfg.phi_neg, cfg.epsilon_log), -3);
  ASSERT_EQ(w.events.size(), 3u);
  for (const auto& e : w.events) EXPECT_EQ(e.p, -1);
}

TEST(Simulator, ConstantSequenceIsSilent) {
  FrameSequence s;
  s.geometry = {5, 3};
  s.frames.assign(4, Image(3, 5, 0.4));
  s.timestamps = {0, 1, 2, 3};
  EXPECT_TRUE(simulate_events(s, {}).events.empty());
}

TEST(Simulator, NeedsTwoFrames) {
  FrameSequence s;
  s.geometry = {2, 2};
  s.frames = {Image(2, 2)};
  s.timestamps = {0};
  EXPECT_THROW(simulate_events(s, {}), ValidationError);
}

TEST(Simulator, QuantizationBoundAndOracleAgreement) {
  RngState rng(11);
  FrameSequence s;
  s.geometry = {8, 8};
  for (int f = 0; f < 6; ++f) {
    Image img(8, 8);
    for (double& v : img.pixels) v = rng.uniform();
    s.frames.push_back(img);
    s.timestamps.push_back(0.1 * f);
  }
  SimulatorConfig cfg;
  auto w = simulate_events(s, cfg);
  EXPECT_TRUE(is_time_sorted(w.events));
  std::vector<int> net(64, 0);
  for (const auto& e : w.events) net[e.y * 8 + e.x] += e.p;
  for (int i = 0; i < 64; ++i) {
    const double dl = std::log(s.frames.back().pixels[i] + cfg.epsilon_log) - std::log(s.frames[0].pixels[i] + cfg.epsilon_log);
    EXPECT_LE(std::abs(net[i] * cfg.phi_pos - dl), std::max(cfg.phi_pos, -cfg.phi_neg) + 1e-9);
    // Oracle: replay the walk frame by frame.
    double ref = std::log(s.frames[0].pixels[i] + cfg.epsilon_log);
    int n = 0;
    for (std::size_t f = 1; f < s.frames.size(); ++f) {
      const double target = std::log(s.frames[f].pixels[i] + cfg.epsilon_log);
      while (target - ref >= cfg.phi_pos - 1e-9) ref += cfg.phi_pos, ++n;
      while (target - ref <= cfg.phi_neg + 1e-9) ref += cfg.phi_neg, --n;
    }
    EXPECT_EQ(net[i], n) << "pixel " << i;
  }
}

TEST(Segmentation, CapSplitsThirtyIntoTwentyFiveAndFive) {
  std::vector<Event> ev;
  for (int i = 0; i < 30; ++i) ev.push_back({0.01 * i, i % 10, i / 10, 1});
  auto ws = segment_by_density(ev, {10, 10}, 0.25);
  ASSERT_EQ(ws.size(), 2u);
  EXPECT_EQ(ws[0].events.size(), 25u);
  EXPECT_EQ(ws[1].events.size(), 5u);
}

TEST(Segmentation, UnderCapAndEmpty) {
  std::vector<Event> ev;
  for (int i = 0; i < 10; ++i) ev.push_back({0.01 * i, i, 0, -1});
  EXPECT_EQ(segment_by_density(ev, {10, 10}).size(), 1u);
  EXPECT_TRUE(segment_by_density({}, {10, 10}).empty());
}

TEST(Segmentation, RejectsUnsorted) {
  std::vector<Event> ev{{0.2, 0, 0, 1}, {0.1, 0, 0, 1}};
  EXPECT_THROW(segment_by_density(ev, {4, 4}), ValidationError);
}

TEST(Segmentation, PartitionsInputAndRespectsBound) {
  RngState rng(5);
  std::vector<Event> ev;
  double t = 0;
  for (int i = 0; i < 1234; ++i) ev.push_back({t += rng.uniform(), static_cast<int>(rng.uniform_int(0, 9)), 0, 1});
  const SensorGeometry g{10, 7};
  auto ws = segment_by_density(ev, g, 0.3);
  std::vector<Event> joined;
  for (const auto& w : ws) {
    EXPECT_LE(w.density(), 0.3);
    EXPECT_FALSE(w.events.empty());
    joined.insert(joined.end(), w.events.begin(), w.events.end());
  }
  EXPECT_EQ(joined, ev);
}

TEST(Voxel, TentKernelSplitsPointEightPointTwo) {
  EventWindow w;
  w.geometry = {3, 3};
  w.events = {{0.0, 0, 0, 1}, {0.3, 1, 1, 1}, {1.0, 2, 2, -1}};
  auto v = build_voxel_grid(w, 5);
  EXPECT_NEAR(v.at(1, 1, 1), 0.8, 1e-12);
  EXPECT_NEAR(v.at(2, 1, 1), 0.2, 1e-12);
  for (int b : {0, 3, 4}) EXPECT_EQ(v.at(b, 1, 1), 0.0);
  EXPECT_EQ(v.at(0, 0, 0), 1.0);
  EXPECT_EQ(v.at(4, 2, 2), -1.0);
  auto agg = aggregate_voxel(v);
  EXPECT_NEAR(agg.at(1, 1), 1.0, 1e-12);
}

TEST(Voxel, EmptyDegenerateAndInvalidBins) {
  EventWindow w;
  w.geometry = {2, 2};
  auto v = build_voxel_grid(w, 5);
  for (double x : v.values) EXPECT_EQ(x, 0.0);
  w.events = {{0.7, 1, 0, 1}, {0.7, 1, 0, -1}, {0.7, 0, 1, 1}};
  v = build_voxel_grid(w, 4);
  EXPECT_EQ(v.at(0, 1, 0), 1.0);
  EXPECT_EQ(aggregate_voxel(v).at(0, 1), 0.0);
  EXPECT_THROW(build_voxel_grid(w, 0), ValidationError);
}

TEST(Voxel, ConservationAndLocality) {
  RngState rng(3);
  const SensorGeometry g{16, 12};
  std::vector<Event> ev;
  double t = 0;
  for (int i = 0; i < 400; ++i)
    ev.push_back({t += rng.uniform(), static_cast<int>(rng.uniform_int(0, 15)), static_cast<int>(rng.uniform_int(0, 11)),
                  rng.uniform() < 0.4 ? -1 : 1});
  auto w = make_window(ev, g);
  auto v = build_voxel_grid(w, 5);
  EXPECT_NEAR(v.total(), w.polarity_sum(), 1e-9);
  for (const auto& e : ev) {
    auto single = build_voxel_grid(EventWindow{{e}, w.t_start, w.t_end, g}, 5);
    int nonzero = 0;
    for (double x : single.values) nonzero += x != 0.0;
    EXPECT_GE(nonzero, 1);
    EXPECT_LE(nonzero, 2);
  }
}

TEST(FramesIo, DirectoryRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "tresdiff_frames_io";
  std::filesystem::remove_all(dir);
  FrameSequence s;
  s.geometry = {7, 5};
  for (int f = 0; f < 3; ++f) {
    Image img(5, 7);
    for (std::size_t i = 0; i < img.size(); ++i) img.pixels[i] = static_cast<double>((i * 37 + f * 11) % 256) / 255.0;
    s.frames.push_back(img);
    s.timestamps.push_back(0.125 * f + 1.0 / 3.0);
  }
  write_frame_directory(dir, s);
  auto back = read_frame_directory(dir);
  EXPECT_EQ(back.timestamps, s.timestamps);
  ASSERT_EQ(back.frames.size(), 3u);
  for (int f = 0; f < 3; ++f)
    for (std::size_t i = 0; i < s.frames[f].size(); ++i) EXPECT_NEAR(back.frames[f].pixels[i], s.frames[f].pixels[i], 1e-12);
  EXPECT_THROW(read_frame_directory(dir / "missing"), MissingArtifactError);
  std::filesystem::remove_all(dir);
}
