// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "rinv/diffusion/codec.hpp"
#include "rinv/diffusion/denoiser.hpp"
#include "rinv/diffusion/schedule.hpp"
#include "rinv/grid.hpp"

namespace rinv::diffusion {

struct TrainConfig {
  int epochs = 30;
  int batch = 16;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  /// Defaults to Architecture::for_latent of the codec's latent shape.
  std::optional<Architecture> arch;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
};

struct TrainResult {
  Denoiser denoiser;
  /// Mean per-element loss of each epoch.
  std::vector<double> epoch_loss;
};

/// Fits eps_delta to the noise added by forward_diffuse, using Adam over
/// shuffled minibatches of encoded scenes rescaled to {-1, +1}. Throws
/// NumericalError if the loss stops being finite. Deterministic given seed.
TrainResult train_denoiser(std::span<const grid::SceneMask> scenes, const Codec& codec, const NoiseSchedule& sched,
                           const TrainConfig& cfg,
                           const std::function<void(int epoch, double loss)>& on_epoch = {});

}  // namespace rinv::diffusion
