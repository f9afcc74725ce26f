// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

namespace rinv::diffusion {

/// Variance schedule indexed by step t in [1, T]. Level t = 0 is the clean
/// latent with alpha_bar = 1.
class NoiseSchedule {
 public:
  explicit NoiseSchedule(std::vector<double> betas);

  int T() const { return static_cast<int>(beta_.size()); }
  double beta(int t) const { return beta_.at(t - 1); }
  double alpha(int t) const { return 1.0 - beta(t); }
  double alpha_bar(int t) const { return t == 0 ? 1.0 : alpha_bar_.at(t - 1); }
  /// Ancestral sampling std sqrt(beta_t); the deterministic sampler uses 0.
  double sigma(int t) const;
  const std::vector<double>& betas() const { return beta_; }

  double beta_min() const { return beta_.front(); }
  double beta_max() const { return beta_.back(); }

 private:
  std::vector<double> beta_;
  std::vector<double> alpha_bar_;
};

/// Linearly spaced betas from beta_min to beta_max over T steps.
NoiseSchedule make_schedule(int T, double beta_min, double beta_max);

/// Desk-scale default: T = 200 with betas 5e-4 .. 0.1 (the common 1e-4 .. 0.02
/// thousand-step range rescaled by 1000 / T), which reaches alpha_bar_T < 0.05.
NoiseSchedule default_schedule(int T = 200);

}  // namespace rinv::diffusion
