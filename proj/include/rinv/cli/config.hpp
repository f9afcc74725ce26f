// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rinv/diffusion/codec.hpp"
#include "rinv/diffusion/denoiser.hpp"
#include "rinv/diffusion/schedule.hpp"
#include "rinv/diffusion/train.hpp"
#include "rinv/grid.hpp"
#include "rinv/io.hpp"
#include "rinv/radar.hpp"
#include "rinv/solvers.hpp"

namespace rinv::cli {

enum class OperatorGain {
  kUnit,  ///< B / N: a lone target responds with magnitude 1
  kRaw,   ///< B with diagonal N
};

struct ArraySettings {
  std::string preset = "3t4r";
  std::optional<int> n_antennas;  ///< overrides the preset when set
  double spacing_over_lambda = 0.5;
  OperatorGain gain = OperatorGain::kUnit;
};

struct DenoiserSettings {
  std::optional<diffusion::ArchKind> kind;  ///< unset: U-Net when the latent allows it
  std::array<int, 3> widths{8, 16, 32};
  int hidden = 1024;
  int temb_dim = 32;
  diffusion::OutputParam output = diffusion::OutputParam::kEps;
};

struct ScheduleSettings {
  int T = 200;
  double beta_min = 5e-4;
  double beta_max = 0.1;
  diffusion::CodecKind codec = diffusion::CodecKind::kIdentity;
  DenoiserSettings denoiser;
  int epochs = 30;
  int batch = 16;
  double lr = 1e-3;
};

struct SweepSettings {
  std::vector<double> zeta{0.0, 1e-4, 1e-3, 1e-2};
  std::vector<int> K{5, 10, 20};
  std::vector<double> gamma{1.0};
};

struct IoSettings {
  double threshold = solvers::kPointThreshold;  ///< mask value above which a cell becomes a point
  double gt_threshold = 0.5;                    ///< same for ground-truth scenes
  io::RenderMode render_mode = io::RenderMode::kGray;
};

struct RunConfig {
  grid::PolarGrid grid;
  grid::SceneSpec scene;
  ArraySettings array;
  double noise_sigma = 0.01;
  ScheduleSettings schedule;
  solvers::PosteriorConfig posterior;
  SweepSettings sweep;
  solvers::RegConfig regularized;
  solvers::CfarConfig cfar;
  IoSettings io;

  radar::AntennaArray make_array() const;
  /// Imaging operator for the configured grid, array and gain.
  radar::ImagingOperator make_operator() const;
  diffusion::NoiseSchedule make_schedule() const;
  diffusion::Codec make_codec() const;
  diffusion::Architecture make_architecture() const;
  diffusion::TrainConfig make_train_config(std::uint64_t seed) const;
};

/// Parses a JSON document. Missing keys keep their defaults; unknown keys,
/// type errors and out-of-range values are collected and reported together
/// in a single ConfigError.
RunConfig parse_config(std::string_view json_text);
RunConfig load_config(const std::filesystem::path& path);

/// Pretty-printed JSON listing every field; parse_config(config_json(c)) == c.
std::string config_json(const RunConfig& c);

}  // namespace rinv::cli
