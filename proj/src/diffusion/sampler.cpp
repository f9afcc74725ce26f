// SPDX-License-Identifier: Apache-2.0
#include "rinv/diffusion/sampler.hpp"

#include <cmath>
#include <string>

#include "rinv/errors.hpp"

namespace rinv::diffusion {
namespace {

void check_step(int t, const NoiseSchedule& sched) {
  if (t < 1 || t > sched.T()) {
    throw ConfigError("diffusion step " + std::to_string(t) + " outside [1, " + std::to_string(sched.T()) + "]");
  }
}

}  // namespace

Latent gaussian_like(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Latent z(rows, cols);
  for (Eigen::Index k = 0; k < z.size(); ++k) z.data()[k] = normal(rng);
  return z;
}

Latent forward_diffuse(const Latent& z0, int t, const Latent& eta, const NoiseSchedule& sched) {
  if (t != 0) check_step(t, sched);
  if (z0.rows() != eta.rows() || z0.cols() != eta.cols()) throw ConfigError("forward_diffuse: shape mismatch");
  const double ab = sched.alpha_bar(t);
  return std::sqrt(ab) * z0 + std::sqrt(1.0 - ab) * eta;
}

Latent tweedie_z0(const Latent& z, const Latent& eps, int t, const NoiseSchedule& sched) {
  if (t == 0) return z;
  check_step(t, sched);
  const double ab = sched.alpha_bar(t);
  return (z - std::sqrt(1.0 - ab) * eps) / std::sqrt(ab);
}

Latent tweedie_z0(const Latent& z, int t, const NoisePredictor& denoiser, const NoiseSchedule& sched) {
  if (t == 0) return z;
  return tweedie_z0(z, denoiser.predict(z, t), t, sched);
}

Latent reverse_mean(const Latent& z, const Latent& eps, int t, int t_prev, const NoiseSchedule& sched,
                    SamplerMode mode) {
  check_step(t, sched);
  if (t_prev < 0 || t_prev >= t) throw ConfigError("reverse step needs 0 <= t_prev < t");
  if (mode == SamplerMode::kAncestral) {
    if (t_prev != t - 1) throw ConfigError("ancestral sampling cannot skip steps");
    return (z - sched.beta(t) / std::sqrt(1.0 - sched.alpha_bar(t)) * eps) / std::sqrt(sched.alpha(t));
  }
  const double ab_prev = sched.alpha_bar(t_prev);
  return std::sqrt(ab_prev) * tweedie_z0(z, eps, t, sched) + std::sqrt(1.0 - ab_prev) * eps;
}

Latent reverse_step(const Latent& z, int t, const NoisePredictor& denoiser, const NoiseSchedule& sched,
                    SamplerMode mode, const Latent& noise) {
  check_step(t, sched);
  Latent out = reverse_mean(z, denoiser.predict(z, t), t, t - 1, sched, mode);
  if (mode == SamplerMode::kAncestral && t > 1) out += sched.sigma(t) * noise;
  return out;
}

std::vector<int> step_levels(const NoiseSchedule& sched, int n_steps, SamplerMode mode) {
  const int T = sched.T();
  if (n_steps <= 0) n_steps = T;
  if (n_steps > T) throw ConfigError("sampler steps exceed schedule length");
  if (n_steps < T && mode == SamplerMode::kAncestral) {
    throw ConfigError("ancestral sampling requires steps == T; use ddim to stride");
  }
  std::vector<int> levels;
  levels.reserve(n_steps);
  for (int k = 0; k < n_steps; ++k) {
    // Evenly spaced, always starting at T and ending at a level >= 1.
    levels.push_back(T - static_cast<int>(static_cast<long long>(k) * T / n_steps));
  }
  return levels;
}

grid::SceneMask decode_to_mask(const Latent& z, const Codec& codec, const grid::PolarGrid& grid) {
  Eigen::MatrixXd x = ((codec.decode(z).array() + 1.0) * 0.5).cwiseMax(0.0).cwiseMin(1.0);
  if (x.rows() != grid.n_az || x.cols() != grid.n_rng) throw ConfigError("decoded latent does not match grid");
  return {grid, std::move(x)};
}

Latent encode_mask(const grid::SceneMask& mask, const Codec& codec) {
  return codec.encode((2.0 * mask.values.array() - 1.0).matrix());
}

grid::SceneMask sample_unconditional(const NoisePredictor& denoiser, const NoiseSchedule& sched, const Codec& codec,
                                     const grid::PolarGrid& grid, std::uint64_t seed, SamplerMode mode,
                                     int n_steps) {
  codec.check_shape(grid.n_az, grid.n_rng);
  std::mt19937_64 rng(seed);
  Latent z = gaussian_like(codec.latent_rows(grid.n_az), codec.latent_cols(grid.n_rng), rng);
  const std::vector<int> levels = step_levels(sched, n_steps, mode);
  for (std::size_t k = 0; k < levels.size(); ++k) {
    const int t = levels[k];
    const int t_prev = k + 1 < levels.size() ? levels[k + 1] : 0;
    if (mode == SamplerMode::kAncestral) {
      const Latent noise = t > 1 ? gaussian_like(z.rows(), z.cols(), rng) : Latent();
      z = reverse_step(z, t, denoiser, sched, mode, noise);
    } else {
      z = reverse_mean(z, denoiser.predict(z, t), t, t_prev, sched, mode);
    }
  }
  return decode_to_mask(z, codec, grid);
}

std::uint64_t item_seed(std::uint64_t seed, std::uint64_t index) {
  // splitmix64 finalizer
  std::uint64_t x = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

double denoise_loss(const NoisePredictor& denoiser, std::span<const Latent> z0_batch, const NoiseSchedule& sched,
                    std::span<const std::uint64_t> item_seeds) {
  if (z0_batch.empty()) throw ConfigError("denoise_loss: empty batch");
  if (item_seeds.size() != z0_batch.size()) throw ConfigError("denoise_loss: one seed per item required");
  double total = 0.0;
  for (std::size_t i = 0; i < z0_batch.size(); ++i) {
    std::mt19937_64 rng(item_seeds[i]);
    std::uniform_int_distribution<int> pick(1, sched.T());
    const int t = pick(rng);
    const Latent eps = gaussian_like(z0_batch[i].rows(), z0_batch[i].cols(), rng);
    const Latent zt = forward_diffuse(z0_batch[i], t, eps, sched);
    total += (eps - denoiser.predict(zt, t)).squaredNorm() / static_cast<double>(eps.size());
  }
  return total / static_cast<double>(z0_batch.size());
}

double denoise_loss(const NoisePredictor& denoiser, std::span<const Latent> z0_batch, const NoiseSchedule& sched,
                    std::uint64_t seed) {
  std::vector<std::uint64_t> seeds(z0_batch.size());
  for (std::size_t i = 0; i < seeds.size(); ++i) seeds[i] = item_seed(seed, i);
  return denoise_loss(denoiser, z0_batch, sched, seeds);
}

}  // namespace rinv::diffusion
