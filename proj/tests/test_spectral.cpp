#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>
#include <set>

#include "tresdiff/frames_io.hpp"
#include "tresdiff/rng.hpp"
#include "tresdiff/spectral.hpp"

using namespace tresdiff;

namespace {

const double kPi = std::acos(-1.0);

// Direct O(N^4) DFT.
std::vector<std::complex<double>> dft2(const Image& img) {
  const int h = img.height, w = img.width;
  std::vector<std::complex<double>> out(static_cast<std::size_t>(h) * w);
  for (int ky = 0; ky < h; ++ky)
    for (int kx = 0; kx < w; ++kx) {
      std::complex<double> s = 0;
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) s += img.at(y, x) * std::polar(1.0, -2 * kPi * (double(ky) * y / h + double(kx) * x / w));
      out[static_cast<std::size_t>(ky) * w + kx] = s;
    }
  return out;
}

Image random_image(int h, int w, RngState& rng) {
  Image img(h, w);
  for (double& v : img.pixels) v = rng.uniform();
  return img;
}

double energy(const Image& a) {
  double s = 0;
  for (double v : a.pixels) s += v * v;
  return s;
}

}  // namespace

TEST(Fft, MatchesDirectDft) {
  RngState rng(1);
  Image img = random_image(6, 10, rng);
  auto fast = detail::fft2(img);
  auto slow = dft2(img);
  ASSERT_EQ(fast.size(), slow.size());
  for (std::size_t i = 0; i < slow.size(); ++i) EXPECT_LT(std::abs(fast[i] - slow[i]), 1e-9);
}

TEST(Spectrum, DcAtCentreForConstant) {
  Image c(8, 8, 0.5);
  auto s = fft_magnitude_spectrum(c);
  EXPECT_NEAR(s.at(4, 4), std::log1p(32.0), 1e-12);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x)
      if (y != 4 || x != 4) EXPECT_NEAR(s.at(y, x), 0.0, 1e-12);
}

TEST(Spectrum, SinusoidPeaksAtPlusMinusFrequency) {
  Image img(16, 16);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) img.at(y, x) = 0.5 + 0.25 * std::cos(2 * kPi * 3 * x / 16.0);
  auto s = fft_magnitude_spectrum(img);
  std::vector<std::pair<double, int>> vals;
  for (int i = 0; i < 256; ++i) vals.push_back({s.pixels[i], i});
  std::sort(vals.rbegin(), vals.rend());
  // DC first, then the symmetric pair at kx = +-3.
  EXPECT_EQ(vals[0].second, 8 * 16 + 8);
  std::set<int> pair{vals[1].second, vals[2].second};
  EXPECT_EQ(pair, (std::set<int>{8 * 16 + 5, 8 * 16 + 11}));
  EXPECT_NEAR(vals[1].first, vals[2].first, 1e-9);
}

TEST(Spectrum, CircularShiftInvariant) {
  RngState rng(2);
  Image a = random_image(8, 12, rng), b(8, 12);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 12; ++x) b.at((y + 3) % 8, (x + 5) % 12) = a.at(y, x);
  auto sa = fft_magnitude_spectrum(a), sb = fft_magnitude_spectrum(b);
  for (std::size_t i = 0; i < sa.size(); ++i) EXPECT_NEAR(sa.pixels[i], sb.pixels[i], 1e-9);
}

TEST(SplitFrequency, ComplementaryOrthogonalParseval) {
  RngState rng(3);
  Image img = random_image(16, 16, rng);
  auto [low, high] = split_frequency(img, 0.3);
  double e_low = energy(low), e_high = energy(high), cross = 0;
  for (std::size_t i = 0; i < img.size(); ++i) {
    EXPECT_NEAR(low.pixels[i] + high.pixels[i], img.pixels[i], 1e-12);
    cross += low.pixels[i] * high.pixels[i];
  }
  EXPECT_NEAR(e_low + e_high, energy(img), 1e-9);
  EXPECT_NEAR(cross, 0.0, 1e-9);
  // Spectral-domain energy agrees with the direct DFT.
  double freq_energy = 0;
  for (auto c : dft2(img)) freq_energy += std::norm(c);
  EXPECT_NEAR(freq_energy / img.size(), energy(img), 1e-9);
}

TEST(SplitFrequency, CutoffNearOneLeavesOnlyTheCornerBin) {
  RngState rng(4);
  Image img = random_image(16, 16, rng);
  auto [low, high] = split_frequency(img, 0.999999);
  // The (Nyquist, Nyquist) bin sits at radius exactly 1.
  const auto corner = dft2(img)[8 * 16 + 8];
  EXPECT_NEAR(energy(high), std::norm(corner) / img.size(), 1e-9);
  Image smooth(16, 16);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) smooth.at(y, x) = 0.5 + 0.3 * std::sin(2 * kPi * (x + 2 * y) / 16.0);
  EXPECT_LT(energy(split_frequency(smooth, 0.999999).second), 1e-20);
  EXPECT_THROW(split_frequency(img, 0.0), ValidationError);
  EXPECT_THROW(split_frequency(img, 1.0), ValidationError);
}

TEST(Ncc, IdentityNegationAffineAndConstant) {
  RngState rng(5);
  Image a = random_image(12, 12, rng), neg = a, aff = a;
  for (double& v : neg.pixels) v = -v;
  for (double& v : aff.pixels) v = 3 * v + 2;
  EXPECT_NEAR(normalized_cross_correlation(a, a), 1.0, 1e-12);
  EXPECT_NEAR(normalized_cross_correlation(a, neg), -1.0, 1e-12);
  EXPECT_NEAR(normalized_cross_correlation(a, aff), 1.0, 1e-12);
  EXPECT_EQ(normalized_cross_correlation(a, Image(12, 12, 0.4)), 0.0);
}

TEST(Ncc, IndependentNoiseNearZero) {
  RngState rng(6);
  double sum = 0, sq = 0;
  const int trials = 200;
  for (int i = 0; i < trials; ++i) {
    Image a(32, 32), b(32, 32);
    for (double& v : a.pixels) v = rng.normal();
    for (double& v : b.pixels) v = rng.normal();
    const double r = normalized_cross_correlation(a, b);
    sum += r, sq += r * r;
  }
  // Var(r) ~ 1/N for N = 1024 pixels.
  EXPECT_LT(std::abs(sum / trials), 4.0 / std::sqrt(1024.0 * trials));
  EXPECT_NEAR(sq / trials, 1.0 / 1024, 0.3 / 1024);
}

TEST(HighFreqSimilarity, EdgesMatchEventsBetterThanNoise) {
  Image img(32, 32, 0.2), ev(32, 32, 0.0);
  for (int y = 8; y < 24; ++y)
    for (int x = 8; x < 24; ++x) img.at(y, x) = 0.8;
  for (int y = 8; y < 24; ++y) ev.at(y, 8) = 1.0, ev.at(y, 23) = -1.0;
  for (int x = 8; x < 24; ++x) ev.at(8, x) = 1.0, ev.at(23, x) = -1.0;
  RngState rng(7);
  Image noise(32, 32);
  for (double& v : noise.pixels) v = rng.normal();
  const double edges = std::abs(highfreq_event_similarity(img, ev));
  EXPECT_GT(edges, std::abs(highfreq_event_similarity(noise, ev)));
  EXPECT_GE(edges, 0.0);
  EXPECT_LE(edges, 1.0);
}

TEST(Export, SidecarBoundsAndScaling) {
  const auto dir = std::filesystem::temp_directory_path() / "tresdiff_spectral_export";
  std::filesystem::create_directories(dir);
  Image img(2, 2);
  img.pixels = {-1.0, 0.0, 1.0, 3.0};
  auto b = export_normalized(dir / "p.pgm", img);
  EXPECT_EQ(b.min, -1.0);
  EXPECT_EQ(b.max, 3.0);
  auto back = read_pgm(dir / "p.pgm");
  EXPECT_NEAR(back.pixels[0], 0.0, 1e-12);
  EXPECT_NEAR(back.pixels[3], 1.0, 1e-12);
  EXPECT_NEAR(back.pixels[1], std::round(0.25 * 255) / 255, 1e-12);
  std::ifstream side(dir / "p.pgm.norm.txt");
  std::string l1, l2;
  std::getline(side, l1);
  std::getline(side, l2);
  EXPECT_EQ(l1, "min=-1");
  EXPECT_EQ(l2, "max=3");
  std::filesystem::remove_all(dir);
}
