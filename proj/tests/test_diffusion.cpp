#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "tresdiff/diffusion.hpp"
#include "tresdiff/schedule.hpp"
#include "stub_models.hpp"

using namespace tresdiff;
using namespace tresdiff::stub;

namespace {

Image scalar(double v) { return Image(1, 1, v); }

NoiseSchedule two_step() { return NoiseSchedule::from_betas({0.1, 0.1}); }

}  // namespace

TEST(Schedule, SingleStep) {
  auto s = make_schedule(1, 0.1, 0.1);
  EXPECT_DOUBLE_EQ(s.alpha_bar(1), 0.9);
  EXPECT_EQ(s.sigma2(1), 0.0);
}

TEST(Schedule, TwoStepPosteriorVariance) {
  auto s = make_schedule(2, 0.1, 0.1);
  EXPECT_NEAR(s.alpha_bar(2), 0.81, 1e-15);
  EXPECT_NEAR(s.sigma2(2), 0.1 * 0.1 / 0.19, 1e-15);
  EXPECT_NEAR(s.sigma2(2), 0.05263, 1e-5);
}

TEST(Schedule, LongScheduleReachesNoise) {
  auto s = make_schedule(2000, 1e-4, 0.02);
  EXPECT_LT(s.alpha_bar(2000), 1e-4);
  double prod = 1.0;
  for (int t = 1; t <= 2000; ++t) {
    prod *= 1.0 - s.beta(t);
    EXPECT_NEAR(s.alpha_bar(t), prod, 1e-12 * prod);
    if (t > 1) EXPECT_LT(s.alpha_bar(t), s.alpha_bar(t - 1));
    EXPECT_GE(s.sigma2(t), 0.0);
  }
}

TEST(Schedule, RejectsBadParameters) {
  EXPECT_THROW(make_schedule(0, 1e-4, 0.02), ValidationError);
  EXPECT_THROW(make_schedule(10, 0.0, 0.02), ValidationError);
  EXPECT_THROW(make_schedule(10, 0.03, 0.02), ValidationError);
  EXPECT_THROW(make_schedule(10, 1e-4, 1.0), ValidationError);
  EXPECT_THROW(make_schedule(10, 1e-4, 0.02).beta(11), ValidationError);
}

TEST(Schedule, CsvRoundTripIsExact) {
  for (const auto& s : {make_schedule(100, 1e-3, 0.2), strided_schedule(make_schedule(100, 1e-3, 0.2), 25)}) {
    std::stringstream ss;
    write_schedule_csv(ss, s);
    auto back = read_schedule_csv(ss);
    EXPECT_EQ(back, s);
  }
}

TEST(Schedule, StridedKeepsAlphaBarAndModelSteps) {
  auto full = make_schedule(100, 1e-3, 0.2);
  auto sub = strided_schedule(full, 25);
  ASSERT_EQ(sub.steps(), 25);
  for (int i = 1; i <= 25; ++i) {
    EXPECT_EQ(sub.model_step(i), 4 * i);
    EXPECT_NEAR(sub.alpha_bar(i), full.alpha_bar(4 * i), 1e-14);
  }
  EXPECT_EQ(sub.sigma2(1), 0.0);
  EXPECT_EQ(strided_schedule(full, 100), full);
}

TEST(Residual, Examples) {
  IntensityImage a{Image(2, 2, 1.0)}, b{Image(2, 2, 0.25)};
  for (double v : compute_residual_target(a, b).values.pixels) EXPECT_EQ(v, 0.75);
  for (double v : compute_residual_target(a, a).values.pixels) EXPECT_EQ(v, 0.0);
  IntensityImage c{Image(2, 2)}, d{Image(2, 2)};
  for (int i = 0; i < 4; ++i) c.values.pixels[i] = (i + i / 2) % 2, d.values.pixels[i] = 1 - c.values.pixels[i];
  auto r = compute_residual_target(c, d);
  for (int i = 0; i < 4; ++i) EXPECT_EQ(std::abs(r.values.pixels[i]), 1.0);
  EXPECT_THROW(compute_residual_target(a, IntensityImage{Image(3, 2)}), ValidationError);
}

TEST(Diffuse, HandValues) {
  auto s = two_step();
  EXPECT_NEAR(diffuse(ResidualImage{scalar(1.0)}, 2, scalar(0.5), s).pixels[0], 0.9 + std::sqrt(0.19) * 0.5, 1e-15);
  EXPECT_NEAR(diffuse(ResidualImage{scalar(1.0)}, 2, scalar(0.5), s).pixels[0], 1.1179, 1e-4);
  EXPECT_NEAR(diffuse(ResidualImage{scalar(0.7)}, 1, scalar(0.0), s).pixels[0], std::sqrt(0.9) * 0.7, 1e-15);
  EXPECT_NEAR(diffuse(ResidualImage{scalar(0.0)}, 2, scalar(1.0), s).pixels[0], std::sqrt(0.19), 1e-15);
  EXPECT_THROW(diffuse(ResidualImage{scalar(0.0)}, 3, scalar(1.0), s), ValidationError);
  EXPECT_THROW(diffuse(ResidualImage{scalar(0.0)}, 0, scalar(1.0), s), ValidationError);
}

TEST(DiffuseStep, HandValues) {
  auto s = NoiseSchedule::from_betas({0.19});
  EXPECT_NEAR(diffuse_step(scalar(1.0), 1, scalar(0.0), s).pixels[0], 0.9, 1e-15);
  auto tiny = NoiseSchedule::from_betas({1e-300});
  EXPECT_EQ(diffuse_step(scalar(0.37), 1, scalar(0.0), tiny).pixels[0], 0.37);
}

TEST(PosteriorMean, HandValues) {
  auto s = two_step();
  const double mu = posterior_mean(scalar(1.0), scalar(0.5), 2, s).pixels[0];
  EXPECT_NEAR(mu, (1.0 / std::sqrt(0.9)) * (1.0 - 0.1 / std::sqrt(0.19) * 0.5), 1e-15);
  EXPECT_NEAR(mu, 0.9332, 1e-4);
  EXPECT_EQ(posterior_mean(scalar(0.0), scalar(0.0), 2, s).pixels[0], 0.0);
}

TEST(AnalyticPosteriorMean, HandValuesAndCollapse) {
  auto s = two_step();
  const double xt = 0.9 + std::sqrt(0.19) * 0.5;
  const double mu = analytic_posterior_mean(scalar(xt), ResidualImage{scalar(1.0)}, 2, s).pixels[0];
  EXPECT_NEAR(mu, 1.0574, 2e-4);  // exact value 1.05750
  EXPECT_NEAR(mu, posterior_mean(scalar(xt), scalar(0.5), 2, s).pixels[0], 1e-12);
  EXPECT_EQ(analytic_posterior_mean(scalar(0.0), ResidualImage{scalar(0.0)}, 2, s).pixels[0], 0.0);
  auto big = make_schedule(100, 1e-3, 0.2);
  EXPECT_EQ(analytic_posterior_mean(scalar(-3.0), ResidualImage{scalar(0.42)}, 1, big).pixels[0], 0.42);
}

TEST(SampleStep, HandValues) {
  auto s = two_step();
  const double mu = posterior_mean(scalar(1.0), scalar(0.5), 2, s).pixels[0];
  EXPECT_NEAR(sample_step(scalar(1.0), scalar(0.5), 2, scalar(1.0), s).pixels[0], mu + std::sqrt(0.1 * 0.1 / 0.19), 1e-15);
  EXPECT_NEAR(sample_step(scalar(1.0), scalar(0.5), 2, scalar(1.0), s).pixels[0], 1.1626, 1e-4);
  EXPECT_EQ(sample_step(scalar(1.0), scalar(0.5), 2, scalar(0.0), s).pixels[0], mu);
  EXPECT_EQ(sample_step(scalar(1.0), scalar(0.5), 1, scalar(5.0), s).pixels[0],
            posterior_mean(scalar(1.0), scalar(0.5), 1, s).pixels[0]);
}

TEST(Linearity, DiffuseAndPosteriorMeanAreAffine) {
  auto s = make_schedule(50, 1e-3, 0.2);
  RngState rng(1);
  Image x = rng.normal_image(4, 4), e = rng.normal_image(4, 4);
  const double c = -2.5;
  Image xc = x, ec = e;
  for (auto& v : xc.pixels) v *= c;
  for (auto& v : ec.pixels) v *= c;
  auto a = diffuse(ResidualImage{x}, 17, e, s), b = diffuse(ResidualImage{xc}, 17, ec, s);
  auto m = posterior_mean(x, e, 17, s), mc = posterior_mean(xc, ec, 17, s);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_NEAR(b.pixels[i], c * a.pixels[i], 1e-12);
    EXPECT_NEAR(mc.pixels[i], c * m.pixels[i], 1e-12);
  }
}

TEST(PosteriorIdentity, RandomPairs) {
  auto s = make_schedule(100, 1e-4, 0.02);
  RngState rng(99);
  for (int k = 0; k < 50; ++k) {
    const int tau = static_cast<int>(rng.uniform_int(1, 100));
    ResidualImage x0{rng.normal_image(3, 5)};
    Image eps = rng.normal_image(3, 5);
    Image xt = diffuse(x0, tau, eps, s);
    auto a = posterior_mean(xt, eps, tau, s), b = analytic_posterior_mean(xt, x0, tau, s);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a.pixels[i], b.pixels[i], 1e-6);
  }
}

TEST(Composition, StepwiseMomentsMatchDirect) {
  auto s = make_schedule(20, 1e-3, 0.2);
  RngState rng(5);
  const int n = 20000;
  for (int tau : {1, 10, 20}) {
    double sum = 0, sq = 0;
    for (int i = 0; i < n; ++i) {
      Image x = scalar(1.0);
      for (int t = 1; t <= tau; ++t) x = diffuse_step(x, t, scalar(rng.normal()), s);
      sum += x.pixels[0];
      sq += x.pixels[0] * x.pixels[0];
    }
    const double mean = sum / n, var = sq / n - mean * mean;
    EXPECT_NEAR(mean / std::sqrt(s.alpha_bar(tau)), 1.0, 0.03) << tau;
    EXPECT_NEAR(var / (1.0 - s.alpha_bar(tau)), 1.0, 0.04) << tau;
  }
}

TEST(TrainingStep, PerfectStubGivesZeroLoss) {
  auto s = make_schedule(100, 1e-3, 0.2);
  EpsilonStub model{EpsilonStub::Mode::exact};
  RngState rng(2);
  IntensityImage cur{Image(8, 8, 0.6)}, prev{Image(8, 8, 0.4)};
  VoxelGrid v(5, 8, 8);
  auto r = training_step(cur, prev, v, 0, s, model, rng);
  EXPECT_EQ(r.loss, 0.0);
  EXPECT_GE(r.tau, 1);
  EXPECT_LE(r.tau, 100);
  EXPECT_EQ(r.next_state, 1);
}

TEST(TrainingStep, ZeroStubGivesHalfNormalMean) {
  auto s = make_schedule(100, 1e-3, 0.2);
  EpsilonStub model{EpsilonStub::Mode::zero};
  RngState rng(3);
  IntensityImage cur{Image(256, 256, 0.6)}, prev{Image(256, 256, 0.4)};
  VoxelGrid v(5, 256, 256);
  auto r = training_step(cur, prev, v, 0, s, model, rng);
  EXPECT_NEAR(r.loss, std::sqrt(2.0 / std::numbers::pi), 0.02 * 0.7979);
}

TEST(TrainingStep, DeterministicAndGeometryChecked) {
  auto s = make_schedule(100, 1e-3, 0.2);
  EpsilonStub model{EpsilonStub::Mode::half};
  IntensityImage cur{Image(6, 6, 0.6)}, prev{Image(6, 6, 0.4)};
  VoxelGrid v(5, 6, 6);
  RngState r1(8), r2(8);
  auto a = training_step(cur, prev, v, 0, s, model, r1);
  auto b = training_step(cur, prev, v, 0, s, model, r2);
  EXPECT_EQ(a.loss, b.loss);
  EXPECT_EQ(a.tau, b.tau);
  EXPECT_THROW(training_step(cur, prev, VoxelGrid(5, 6, 4), 0, s, model, r1), ValidationError);
}

TEST(TrainingStep, AblationFlagsReachTheModel) {
  auto s = make_schedule(100, 1e-3, 0.2);
  EpsilonStub model{EpsilonStub::Mode::exact};
  IntensityImage cur{Image(4, 4, 0.6)}, prev{Image(4, 4, 0.4)};
  VoxelGrid v(5, 4, 4);
  v.values.assign(v.values.size(), 1.0);
  RngState rng(1);
  training_step(cur, prev, v, 7, s, model, rng, ConditioningFlags{.event = false});
  EXPECT_EQ(model.last_voxel_total, 0.0);
  EXPECT_EQ(model.last_state, 7);
  auto r = training_step(cur, prev, v, 7, s, model, rng, ConditioningFlags{.recurrent = false});
  EXPECT_EQ(model.last_voxel_total, 80.0);
  EXPECT_EQ(model.last_state, 0);
  EXPECT_EQ(r.next_state, 0);
}

TEST(ReverseDiffusion, OracleRecoversTarget) {
  auto s = make_schedule(100, 1e-3, 0.2);
  RngState rng(4);
  Image target = rng.normal_image(4, 4);
  OracleStub model{s, target};
  for (bool from_final : {false, true}) {
    SamplerOptions o;
    o.zero_noise = true;
    o.start_at_final_step = from_final;
    Image x = reverse_diffusion(model, OracleStub::Frame{}, rng.normal_image(4, 4), s, rng, o);
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(x.pixels[i], target.pixels[i], 1e-10);
  }
}

TEST(ReverseDiffusion, LoopCountFollowsStartFlag) {
  auto s = make_schedule(10, 1e-3, 0.2);
  RngState rng(4);
  EpsilonStub model{EpsilonStub::Mode::zero};
  reverse_diffusion(model, EpsilonStub::Frame{}, Image(2, 2), s, rng);
  EXPECT_EQ(model.steps_seen, (std::vector<int>{9, 8, 7, 6, 5, 4, 3, 2, 1}));
  model.steps_seen.clear();
  reverse_diffusion(model, EpsilonStub::Frame{}, Image(2, 2), s, rng, SamplerOptions{.start_at_final_step = true});
  EXPECT_EQ(model.steps_seen.front(), 10);
  model.steps_seen.clear();
  reverse_diffusion(model, EpsilonStub::Frame{}, Image(2, 2), strided_schedule(s, 5), rng);
  EXPECT_EQ(model.steps_seen, (std::vector<int>{8, 6, 4, 2}));
}

TEST(SampleSequence, SingleFrameReturnsPredictorOutput) {
  auto s = make_schedule(10, 1e-3, 0.2);
  RngState rng(1);
  ConstantPredictor p{0.3};
  EpsilonStub model{EpsilonStub::Mode::zero};
  auto video = sample_sequence(std::vector<VoxelGrid>{VoxelGrid(5, 4, 4)}, p, model, s, rng);
  ASSERT_EQ(video.size(), 1u);
  for (double v : video[0].values.pixels) EXPECT_EQ(v, 0.3);
  EXPECT_TRUE(model.steps_seen.empty());
}

TEST(SampleSequence, RejectsEmptyAndMismatched) {
  auto s = make_schedule(10, 1e-3, 0.2);
  RngState rng(1);
  ConstantPredictor p{0.3};
  EpsilonStub model{EpsilonStub::Mode::zero};
  EXPECT_THROW(sample_sequence({}, p, model, s, rng), ValidationError);
  EXPECT_THROW(sample_sequence({VoxelGrid(5, 4, 4), VoxelGrid(5, 4, 6)}, p, model, s, rng), ValidationError);
}

TEST(SampleSequence, OracleResidualIsAddedAndClamped) {
  auto s = make_schedule(50, 1e-3, 0.2);
  Image residual(4, 4, 0.2);
  residual.at(0, 0) = 0.9;
  OracleStub model{s, residual};
  ConstantPredictor p{0.3};
  RngState rng(2);
  std::vector<VoxelGrid> v(3, VoxelGrid(5, 4, 4));
  auto video = sample_sequence(v, p, model, s, rng, SamplerOptions{.zero_noise = true});
  ASSERT_EQ(video.size(), 3u);
  for (std::size_t t = 1; t < 3; ++t) {
    EXPECT_NEAR(video[t].values.at(1, 1), 0.5, 1e-9);
    EXPECT_EQ(video[t].values.at(0, 0), 1.0);
  }
}

TEST(SampleSequence, DeterministicForFixedSeed) {
  auto s = make_schedule(20, 1e-3, 0.2);
  EpsilonStub model{EpsilonStub::Mode::half};
  ConstantPredictor p{0.5};
  std::vector<VoxelGrid> v(4, VoxelGrid(5, 3, 3));
  RngState a(77), b(77);
  EXPECT_EQ(sample_sequence(v, p, model, s, a), sample_sequence(v, p, model, s, b));
}

TEST(SampleSequence, RecurrenceModes) {
  auto s = make_schedule(3, 1e-3, 0.2);
  ConstantPredictor p{0.5};
  std::vector<VoxelGrid> v(7, VoxelGrid(5, 2, 2));
  auto states_for = [&](RecurrenceMode mode, bool recurrent = true) {
    EpsilonStub model{EpsilonStub::Mode::zero};
    RngState rng(1);
    SamplerOptions o;
    o.recurrence = mode;
    o.flags.recurrent = recurrent;
    sample_sequence(v, p, model, s, rng, o);
    return model.states_seen;
  };
  // Frames 1..6, midpoint 3. The stub's state counts consecutive carried frames.
  EXPECT_EQ(states_for(RecurrenceMode::always), (std::vector<int>{0, 1, 2, 3, 4, 5}));
  EXPECT_EQ(states_for(RecurrenceMode::never), (std::vector<int>{0, 0, 0, 0, 0, 0}));
  EXPECT_EQ(states_for(RecurrenceMode::from_midpoint), (std::vector<int>{0, 0, 0, 1, 2, 3}));
  EXPECT_EQ(states_for(RecurrenceMode::until_midpoint), (std::vector<int>{0, 1, 0, 0, 0, 0}));
  EXPECT_EQ(states_for(RecurrenceMode::always, false), (std::vector<int>{0, 0, 0, 0, 0, 0}));
}
