#pragma once

// Noise schedule tables for forward and reverse diffusion.
//
// Step indices are 1-based (tau = 1..T) with alpha_bar(0) == 1, which makes
// the posterior variance at tau = 1 exactly zero.

#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "tresdiff/common.hpp"
#include "tresdiff/events.hpp"

namespace tresdiff {

enum class ScheduleKind { linear };

class NoiseSchedule {
 public:
  NoiseSchedule() = default;

  /// Builds every derived table from betas. `model_steps[i]` is the step index
  /// the noise model sees for schedule step i+1 (identity unless strided).
  static NoiseSchedule from_betas(std::vector<double> betas, std::vector<int> model_steps = {}) {
    require(!betas.empty(), "noise schedule needs at least one step");
    NoiseSchedule s;
    s.beta_ = std::move(betas);
    const std::size_t n = s.beta_.size();
    if (model_steps.empty()) {
      model_steps.resize(n);
      for (std::size_t i = 0; i < n; ++i) model_steps[i] = static_cast<int>(i + 1);
    }
    require(model_steps.size() == n, "model step table length mismatch");
    s.model_steps_ = std::move(model_steps);
    s.alpha_.resize(n);
    s.alpha_bar_.resize(n);
    s.sigma2_.resize(n);
    double prod = 1.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double b = s.beta_[i];
      require(b > 0.0 && b < 1.0, "schedule betas must lie in (0,1)");
      s.alpha_[i] = 1.0 - b;
      const double prev = prod;
      prod *= s.alpha_[i];
      s.alpha_bar_[i] = prod;
      s.sigma2_[i] = (1.0 - prev) / (1.0 - prod) * b;
    }
    return s;
  }

  int steps() const noexcept { return static_cast<int>(beta_.size()); }

  double beta(int tau) const { return beta_[index(tau)]; }
  double alpha(int tau) const { return alpha_[index(tau)]; }
  double alpha_bar(int tau) const { return tau == 0 ? 1.0 : alpha_bar_[index(tau)]; }
  double sigma2(int tau) const { return sigma2_[index(tau)]; }
  int model_step(int tau) const { return model_steps_[index(tau)]; }

  const std::vector<double>& betas() const noexcept { return beta_; }
  const std::vector<double>& alphas() const noexcept { return alpha_; }
  const std::vector<double>& alpha_bars() const noexcept { return alpha_bar_; }
  const std::vector<double>& sigma2s() const noexcept { return sigma2_; }
  const std::vector<int>& model_steps() const noexcept { return model_steps_; }

  void check_step(int tau) const {
    if (tau < 1 || tau > steps()) {
      throw ValidationError("diffusion step " + std::to_string(tau) + " outside [1, " + std::to_string(steps()) + "]");
    }
  }

  friend bool operator==(const NoiseSchedule&, const NoiseSchedule&) = default;

 private:
  std::size_t index(int tau) const {
    check_step(tau);
    return static_cast<std::size_t>(tau - 1);
  }

  std::vector<double> beta_, alpha_, alpha_bar_, sigma2_;
  std::vector<int> model_steps_;
};

inline NoiseSchedule make_schedule(int steps, double beta_start, double beta_end,
                                   ScheduleKind kind = ScheduleKind::linear) {
  require(steps >= 1, "schedule step count must be at least 1");
  require(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0,
          "schedule requires 0 < beta_start <= beta_end < 1");
  std::vector<double> betas(static_cast<std::size_t>(steps));
  switch (kind) {
    case ScheduleKind::linear:
      for (int i = 0; i < steps; ++i) {
        betas[i] = steps == 1 ? beta_start : beta_start + (beta_end - beta_start) * i / (steps - 1);
      }
      break;
  }
  return NoiseSchedule::from_betas(std::move(betas));
}

/// Reduced-step schedule keeping `count` evenly strided steps of `full`
/// (always including the last). alpha_bar values are inherited and betas and
/// variances are recomputed over the kept sub-sequence.
inline NoiseSchedule strided_schedule(const NoiseSchedule& full, int count) {
  const int n = full.steps();
  require(count >= 1 && count <= n, "inference step count must lie in [1, T]");
  if (count == n) return full;
  std::vector<double> betas;
  std::vector<int> model_steps;
  double prev_bar = 1.0;
  int prev_tau = 0;
  for (int i = 1; i <= count; ++i) {
    const int tau = static_cast<int>((static_cast<long long>(i) * n) / count);
    require(tau > prev_tau, "strided schedule produced repeated steps");
    const double bar = full.alpha_bar(tau);
    betas.push_back(1.0 - bar / prev_bar);
    model_steps.push_back(full.model_step(tau));
    prev_bar = bar;
    prev_tau = tau;
  }
  return NoiseSchedule::from_betas(std::move(betas), std::move(model_steps));
}

// CSV table: tau,beta,alpha,alpha_bar,sigma2 with 17 significant digits.
// tau is the model-facing step index of each row.

inline void write_schedule_csv(std::ostream& out, const NoiseSchedule& s) {
  out << "tau,beta,alpha,alpha_bar,sigma2\n";
  char buf[160];
  for (int tau = 1; tau <= s.steps(); ++tau) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%.17g\n", s.model_step(tau), s.beta(tau), s.alpha(tau),
                  s.alpha_bar(tau), s.sigma2(tau));
    out << buf;
  }
}

inline NoiseSchedule read_schedule_csv(std::istream& in) {
  std::string line;
  std::size_t lineno = 1;
  if (!std::getline(in, line) || detail::trim(line) != "tau,beta,alpha,alpha_bar,sigma2") {
    throw ParseError("schedule CSV: unexpected header", 1);
  }
  std::vector<double> betas;
  std::vector<int> steps;
  while (std::getline(in, line)) {
    ++lineno;
    auto s = detail::trim(line);
    if (s.empty()) continue;
    std::vector<std::string_view> cols;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= s.size(); ++i) {
      if (i == s.size() || s[i] == ',') {
        cols.push_back(s.substr(start, i - start));
        start = i + 1;
      }
    }
    int tau = 0;
    double b = 0.0;
    if (cols.size() != 5 || !detail::parse_number(cols[0], tau) || !detail::parse_number(cols[1], b)) {
      throw ParseError("schedule CSV: malformed row", lineno);
    }
    steps.push_back(tau);
    betas.push_back(b);
  }
  return NoiseSchedule::from_betas(std::move(betas), std::move(steps));
}

}  // namespace tresdiff
