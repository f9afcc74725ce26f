// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <span>

#include <Eigen/Core>

#include "rinv/diffusion/codec.hpp"
#include "rinv/diffusion/denoiser.hpp"
#include "rinv/diffusion/schedule.hpp"
#include "rinv/grid.hpp"

namespace rinv::diffusion {

using Latent = Eigen::MatrixXd;

enum class SamplerMode { kAncestral, kDdim };

/// Standard normal matrix drawn in storage order from rng.
Latent gaussian_like(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng);

/// z_t = sqrt(abar_t) z0 + sqrt(1 - abar_t) eta. t = 0 returns z0.
Latent forward_diffuse(const Latent& z0, int t, const Latent& eta, const NoiseSchedule& sched);

/// Clean-latent estimate (z - sqrt(1 - abar_t) eps) / sqrt(abar_t).
Latent tweedie_z0(const Latent& z, const Latent& eps, int t, const NoiseSchedule& sched);
Latent tweedie_z0(const Latent& z, int t, const NoisePredictor& denoiser, const NoiseSchedule& sched);

/// Deterministic part of one reverse step from level t to level t_prev < t.
/// Ancestral (t_prev = t - 1 only): (z - beta_t / sqrt(1 - abar_t) eps) / sqrt(alpha_t).
/// DDIM: sqrt(abar_prev) z0_hat + sqrt(1 - abar_prev) eps.
Latent reverse_mean(const Latent& z, const Latent& eps, int t, int t_prev, const NoiseSchedule& sched,
                    SamplerMode mode);

/// One reverse step t -> t - 1. Ancestral adds sigma_t * noise except at t = 1;
/// noise is ignored in DDIM mode.
Latent reverse_step(const Latent& z, int t, const NoisePredictor& denoiser, const NoiseSchedule& sched,
                    SamplerMode mode, const Latent& noise);

/// Descending step levels T = t_0 > ... > t_{n-1} >= 1 visited by a sampler
/// with n_steps steps; n_steps < T requires DDIM.
std::vector<int> step_levels(const NoiseSchedule& sched, int n_steps, SamplerMode mode);

/// Mask in [0, 1] from a latent in [-1, 1]: clamp((D(z) + 1) / 2, 0, 1).
grid::SceneMask decode_to_mask(const Latent& z, const Codec& codec, const grid::PolarGrid& grid);

/// Latent of a binary mask: E(2 m - 1).
Latent encode_mask(const grid::SceneMask& mask, const Codec& codec);

/// Draws z_T ~ N(0, I) and runs the reverse chain down to level 0.
grid::SceneMask sample_unconditional(const NoisePredictor& denoiser, const NoiseSchedule& sched, const Codec& codec,
                                     const grid::PolarGrid& grid, std::uint64_t seed, SamplerMode mode,
                                     int n_steps = 0);

/// Denoising objective: mean over items and elements of (eps - eps_hat(z_t, t))^2.
/// Item i draws t and eps from its own seed, so the loss is invariant to
/// batch order when seeds travel with their items.
double denoise_loss(const NoisePredictor& denoiser, std::span<const Latent> z0_batch, const NoiseSchedule& sched,
                    std::span<const std::uint64_t> item_seeds);
double denoise_loss(const NoisePredictor& denoiser, std::span<const Latent> z0_batch, const NoiseSchedule& sched,
                    std::uint64_t seed);

/// Per-item seed derived from a base seed and the item index.
std::uint64_t item_seed(std::uint64_t seed, std::uint64_t index);

}  // namespace rinv::diffusion
