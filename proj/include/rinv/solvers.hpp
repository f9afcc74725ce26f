// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "rinv/diffusion/codec.hpp"
#include "rinv/diffusion/denoiser.hpp"
#include "rinv/diffusion/sampler.hpp"
#include "rinv/diffusion/schedule.hpp"
#include "rinv/grid.hpp"
#include "rinv/metrics.hpp"
#include "rinv/radar.hpp"

namespace rinv::solvers {

/// Threshold applied to enhanced masks before extracting points.
inline constexpr double kPointThreshold = 0.01;

enum class GradMode { kExact, kPassthrough };

/// How the measurement step is scaled at level t.
enum class StepScale {
  kAlphaBar,  ///< zeta * abar_t: zeta is a step on the clean-latent estimate
  kNone,      ///< zeta as is
};

struct PosteriorConfig {
  double zeta = 1e-3;  ///< measurement step size
  double gamma = 1.0;  ///< measurement scale
  int K = 20;          ///< measurement updates per reverse step
  /// Unset couples the diffusion coefficient to the step variance, making the
  /// prior update the plain sampler step.
  std::optional<double> lambda_diff;
  int T_steps = 0;  ///< 0 = every level of the schedule
  diffusion::SamplerMode mode = diffusion::SamplerMode::kDdim;
  GradMode grad_mode = GradMode::kExact;
  StepScale step_scale = StepScale::kAlphaBar;
  double early_stop_frac = 1.0;
  double eps_mag = 1e-6;
  std::uint64_t seed = 0;
  bool record_inner = false;  ///< keep the fidelity of every inner update in the trace
};

void validate(const PosteriorConfig& cfg);

struct TraceRow {
  int step = 0;       ///< 1-based count of completed reverse steps
  int level = 0;      ///< diffusion level of the state after this step
  double fidelity = 0.0;
  double cd = -1.0;   ///< negative when no ground truth was supplied or the estimate was empty
  std::vector<double> inner_fidelity;
};

struct PosteriorResult {
  grid::SceneMask mask;
  std::vector<TraceRow> trace;
};

/// Diffusion posterior sampling: a prior reverse step followed by K
/// measurement-gradient updates of the state through the clean-latent
/// estimate, its decoding and the fidelity ||gamma Y - A(x0)||^2. `op` is the
/// operator the fidelity is measured with; Y must be a magnitude heatmap.
/// With gt set, the trace records the CD of each step's clean estimate.
PosteriorResult posterior_sample(const radar::Heatmap& y, const radar::ImagingOperator& op,
                                 const diffusion::NoisePredictor& denoiser, const diffusion::Codec& codec,
                                 const diffusion::NoiseSchedule& sched, const PosteriorConfig& cfg,
                                 const grid::PointSet* gt = nullptr);

enum class RegNorm { kL1, kL2 };

/// Starting point of the regularized solver. x = 0 is a stationary point of
/// the magnitude fidelity, so zero initialization never leaves the origin.
enum class RegInit {
  kHeatmap,  ///< the measured magnitudes clamped to [0, 1]
  kUniform,  ///< uniform [0, 1) drawn from the seed
  kZero,
};

struct RegConfig {
  RegNorm norm = RegNorm::kL1;
  double reg_weight = 0.1;
  double step_size = 1e-3;
  int iters = 2000;
  double eps_mag = 1e-6;
  RegInit init = RegInit::kHeatmap;
  std::uint64_t seed = 0;  ///< used by RegInit::kUniform
};

void validate(const RegConfig& cfg);

/// Projected (proximal) gradient descent on ||Y - |B x|||^2 + reg_weight R(x)
/// over x in [0, 1] for raw matrices. Throws NumericalError on divergence.
Eigen::MatrixXd solve_regularized(const Eigen::MatrixXd& y_magnitude, const Eigen::MatrixXcd& B,
                                  const RegConfig& cfg);

grid::SceneMask solve_regularized(const radar::Heatmap& y, const radar::ImagingOperator& op, const RegConfig& cfg);

struct CfarConfig {
  int guard_az = 2;
  int guard_rng = 2;
  int train_az = 8;
  int train_rng = 8;
  double threshold_factor = 3.0;
};

void validate(const CfarConfig& cfg);

/// Cell-averaging CFAR. Guard and training sizes are half-widths; the noise
/// estimate averages the training ring clipped at the borders.
grid::SceneMask cfar_detect(const radar::Heatmap& y, const CfarConfig& cfg);

struct VarianceRow {
  std::string method;
  std::uint64_t seed = 0;
  double final_cd = 0.0;
};

struct VarianceReport {
  std::vector<VarianceRow> rows;
  /// Per-step mean and std of the posterior CD trace across seeds.
  std::vector<double> step_mean_cd;
  std::vector<double> step_std_cd;
  std::vector<std::vector<TraceRow>> traces;

  /// Mean and (population) std of final_cd for one method.
  std::pair<double, double> summary(const std::string& method) const;
};

/// Repeats inference with seeds 0..n_seeds-1 for the posterior sampler and
/// each listed regularized configuration (their seed is overridden).
VarianceReport run_variance_study(const radar::Heatmap& y, const radar::ImagingOperator& op,
                                  const diffusion::NoisePredictor& denoiser, const diffusion::Codec& codec,
                                  const diffusion::NoiseSchedule& sched, const PosteriorConfig& cfg, int n_seeds,
                                  const grid::PointSet& gt, const std::vector<RegConfig>& regularized = {});

struct SweepRow {
  double zeta = 0.0;
  int K = 0;
  double gamma = 0.0;
  double mean_cd = 0.0;
  int n_empty = 0;  ///< frames whose output had no points (mean_cd is then +inf)
};

struct SweepReport {
  std::vector<SweepRow> rows;
  std::size_t argmin = 0;
};

/// Mean CD over the scene set for every (zeta, K, gamma) combination.
SweepReport run_sweep(const std::vector<radar::Heatmap>& y_set, const radar::ImagingOperator& op,
                      const diffusion::NoisePredictor& denoiser, const diffusion::Codec& codec,
                      const diffusion::NoiseSchedule& sched, const PosteriorConfig& base,
                      const std::vector<double>& zeta_grid, const std::vector<int>& K_grid,
                      const std::vector<double>& gamma_grid, const std::vector<grid::PointSet>& gt_set,
                      int threads = 1);

/// CD of a mask against ground truth after thresholding; nullopt when empty.
std::optional<double> chamfer_vs(const grid::SceneMask& mask, const grid::PointSet& gt,
                                 double threshold = kPointThreshold);

}  // namespace rinv::solvers
