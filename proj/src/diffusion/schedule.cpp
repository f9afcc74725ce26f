// SPDX-License-Identifier: Apache-2.0
#include "rinv/diffusion/schedule.hpp"

#include <cmath>
#include <string>

#include "rinv/errors.hpp"

namespace rinv::diffusion {

NoiseSchedule::NoiseSchedule(std::vector<double> betas) : beta_(std::move(betas)) {
  if (beta_.empty()) throw ConfigError("schedule.T must be >= 1");
  double prod = 1.0;
  double prev = 0.0;
  for (double b : beta_) {
    if (!(b > 0.0 && b < 1.0)) throw ConfigError("schedule betas must lie in (0, 1)");
    if (b < prev) throw ConfigError("schedule betas must be non-decreasing");
    prev = b;
    prod *= 1.0 - b;
    alpha_bar_.push_back(prod);
  }
}

double NoiseSchedule::sigma(int t) const { return std::sqrt(beta(t)); }

NoiseSchedule make_schedule(int T, double beta_min, double beta_max) {
  if (T < 1) throw ConfigError("schedule.T must be >= 1, got " + std::to_string(T));
  if (!(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0)) {
    throw ConfigError("schedule requires 0 < beta_min <= beta_max < 1");
  }
  std::vector<double> betas(T);
  for (int i = 0; i < T; ++i) {
    const double frac = T == 1 ? 0.0 : static_cast<double>(i) / (T - 1);
    betas[i] = beta_min + frac * (beta_max - beta_min);
  }
  return NoiseSchedule(std::move(betas));
}

NoiseSchedule default_schedule(int T) {
  const double scale = 1000.0 / T;
  return make_schedule(T, 1e-4 * scale, 0.02 * scale);
}

}  // namespace rinv::diffusion
