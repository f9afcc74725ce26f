// SPDX-License-Identifier: Apache-2.0
#include "rinv/solvers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "rinv/errors.hpp"
#include "rinv/parallel.hpp"

namespace rinv::solvers {
namespace {

using diffusion::Latent;

void require_magnitude(const radar::Heatmap& y, const char* who) {
  if (y.mode != radar::HeatmapMode::kMagnitude) throw ConfigError(std::string(who) + ": expected a magnitude heatmap");
}

void require_grid(const radar::Heatmap& y, const radar::ImagingOperator& op, const char* who) {
  if (!(y.grid == op.grid)) throw ConfigError(std::string(who) + ": heatmap grid does not match operator grid");
}

// Collects every violated condition and throws them as one error.
class Problems {
 public:
  void expect(bool ok, const char* message) {
    if (ok) return;
    if (!text_.empty()) text_ += "; ";
    text_ += message;
  }
  void raise() const {
    if (!text_.empty()) throw ConfigError(text_);
  }

 private:
  std::string text_;
};

/// Unclamped image-space estimate (D(z) + 1) / 2 used inside the fidelity.
Eigen::MatrixXd to_image(const Latent& z0, const diffusion::Codec& codec) {
  return ((codec.decode(z0).array() + 1.0) * 0.5).matrix();
}

}  // namespace

void validate(const PosteriorConfig& cfg) {
  Problems p;
  p.expect(cfg.zeta >= 0.0, "posterior.zeta must be >= 0");
  p.expect(cfg.gamma > 0.0, "posterior.gamma must be > 0");
  p.expect(cfg.K >= 0, "posterior.K must be >= 0");
  p.expect(!cfg.lambda_diff || *cfg.lambda_diff >= 0.0, "posterior.lambda_diff must be >= 0");
  p.expect(cfg.T_steps >= 0, "posterior.T_steps must be >= 0");
  p.expect(cfg.early_stop_frac > 0.0 && cfg.early_stop_frac <= 1.0, "posterior.early_stop_frac must be in (0, 1]");
  p.expect(cfg.eps_mag > 0.0, "posterior.eps_mag must be > 0");
  p.raise();
}

std::optional<double> chamfer_vs(const grid::SceneMask& mask, const grid::PointSet& gt, double threshold) {
  const grid::PointSet pred = grid::mask_to_points(mask, threshold);
  if (pred.empty() || gt.empty()) return std::nullopt;
  return metrics::compute_metrics(pred, gt).cd;
}

PosteriorResult posterior_sample(const radar::Heatmap& y, const radar::ImagingOperator& op,
                                 const diffusion::NoisePredictor& denoiser, const diffusion::Codec& codec,
                                 const diffusion::NoiseSchedule& sched, const PosteriorConfig& cfg,
                                 const grid::PointSet* gt) {
  validate(cfg);
  if (!denoiser.ready()) throw ConfigError("posterior_sample: denoiser is untrained");
  require_magnitude(y, "posterior_sample");
  require_grid(y, op, "posterior_sample");
  const grid::PolarGrid& g = y.grid;
  codec.check_shape(g.n_az, g.n_rng);

  const std::vector<int> levels = diffusion::step_levels(sched, cfg.T_steps, cfg.mode);
  const auto n_run = static_cast<std::size_t>(std::ceil(cfg.early_stop_frac * static_cast<double>(levels.size())));
  const radar::FidelityTerm fidelity{op.B, radar::FidelityMode::kMagnitude, cfg.gamma, cfg.eps_mag};

  // Same draw order as sample_unconditional, so a vacuous measurement loop
  // reproduces the unconditional sample bit for bit.
  std::mt19937_64 rng(cfg.seed);
  Latent z = diffusion::gaussian_like(codec.latent_rows(g.n_az), codec.latent_cols(g.n_rng), rng);

  PosteriorResult result;
  int level = levels.front();
  for (std::size_t s = 0; s < n_run; ++s) {
    const int t = levels[s];
    const int t_prev = s + 1 < levels.size() ? levels[s + 1] : 0;
    const bool ancestral = cfg.mode == diffusion::SamplerMode::kAncestral;
    const Latent noise = ancestral && t > 1 ? diffusion::gaussian_like(z.rows(), z.cols(), rng) : Latent();

    // Prior update toward the predicted mean.
    Latent z_hat = diffusion::reverse_mean(z, denoiser.predict(z, t), t, t_prev, sched, cfg.mode);
    if (cfg.lambda_diff) {
      const double step_var = 1.0 - sched.alpha_bar(t) / sched.alpha_bar(t_prev);
      z_hat = z + (*cfg.lambda_diff / step_var) * (z_hat - z);
    }
    if (ancestral && t > 1) z_hat += sched.sigma(t) * noise;

    // Measurement updates: descend ||gamma Y - A(D(z0_bar(z_hat)))||^2 in z_hat.
    TraceRow row;
    const double ab = sched.alpha_bar(t);
    const double step = cfg.step_scale == StepScale::kAlphaBar ? cfg.zeta * ab : cfg.zeta;
    if (cfg.zeta > 0.0) {
      for (int k = 0; k < cfg.K; ++k) {
        Latent eps;
        std::unique_ptr<diffusion::Linearization> lin;
        if (cfg.grad_mode == GradMode::kExact) {
          lin = denoiser.linearize(z_hat, t, eps);
        } else {
          eps = denoiser.predict(z_hat, t);
        }
        const Latent z0_bar = diffusion::tweedie_z0(z_hat, eps, t, sched);
        Eigen::MatrixXd grad_x;
        const double f = fidelity.value_and_gradient(to_image(z0_bar, codec), y.magnitude, grad_x);
        if (cfg.record_inner) row.inner_fidelity.push_back(f);
        const Latent grad_z0 = 0.5 * codec.decode_adjoint(grad_x);
        Latent grad_z = grad_z0;
        if (lin) grad_z -= std::sqrt(1.0 - ab) * lin->vjp(grad_z0);
        grad_z /= std::sqrt(ab);
        z_hat -= step * grad_z;
      }
    }
    z = std::move(z_hat);
    level = t_prev;
    if (!z.allFinite()) {
      throw NumericalError("posterior state is not finite after step " + std::to_string(s + 1) + " (t=" +
                           std::to_string(t) + ")");
    }

    if (gt != nullptr) {
      const grid::SceneMask est = diffusion::decode_to_mask(diffusion::tweedie_z0(z, level, denoiser, sched), codec, g);
      row.fidelity = fidelity.value(est.values, y.magnitude);
      row.cd = chamfer_vs(est, *gt).value_or(-1.0);
    } else if (!row.inner_fidelity.empty()) {
      row.fidelity = row.inner_fidelity.back();
    }
    row.step = static_cast<int>(s + 1);
    row.level = level;
    result.trace.push_back(std::move(row));
  }

  const Latent z0 = level == 0 ? z : diffusion::tweedie_z0(z, level, denoiser, sched);
  result.mask = diffusion::decode_to_mask(z0, codec, g);
  return result;
}

void validate(const RegConfig& cfg) {
  Problems p;
  p.expect(cfg.reg_weight >= 0.0, "regularized.reg_weight must be >= 0");
  p.expect(cfg.step_size > 0.0, "regularized.step_size must be > 0");
  p.expect(cfg.iters >= 0, "regularized.iters must be >= 0");
  p.expect(cfg.eps_mag > 0.0, "regularized.eps_mag must be > 0");
  p.raise();
}

Eigen::MatrixXd solve_regularized(const Eigen::MatrixXd& y_magnitude, const Eigen::MatrixXcd& B,
                                  const RegConfig& cfg) {
  validate(cfg);
  if (B.rows() != y_magnitude.rows() || B.cols() != B.rows()) throw ConfigError("solve_regularized: shape mismatch");
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(B.cols(), y_magnitude.cols());
  if (cfg.init == RegInit::kHeatmap) {
    x = y_magnitude.cwiseMax(0.0).cwiseMin(1.0);
  } else if (cfg.init == RegInit::kUniform) {
    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (Eigen::Index k = 0; k < x.size(); ++k) x.data()[k] = unit(rng);
  }
  const radar::FidelityTerm fidelity{B, radar::FidelityMode::kMagnitude, 1.0, cfg.eps_mag};
  const double s = cfg.step_size;
  const double lam = cfg.reg_weight;
  Eigen::MatrixXd grad;
  double first = -1.0;
  for (int it = 0; it < cfg.iters; ++it) {
    const double f = fidelity.value_and_gradient(x, y_magnitude, grad);
    if (first < 0.0) first = f;
    if (!std::isfinite(f) || !grad.allFinite() || f > 1e6 * (first + 1.0)) {
      throw NumericalError("regularized solver diverged at iteration " + std::to_string(it));
    }
    if (cfg.norm == RegNorm::kL2) {
      x = (x - s * (grad + 2.0 * lam * x)).cwiseMax(0.0).cwiseMin(1.0);
    } else {
      // Soft threshold followed by projection onto [0, 1].
      x = ((x - s * grad).array() - s * lam).cwiseMax(0.0).cwiseMin(1.0).matrix();
    }
  }
  return x;
}

grid::SceneMask solve_regularized(const radar::Heatmap& y, const radar::ImagingOperator& op, const RegConfig& cfg) {
  require_magnitude(y, "solve_regularized");
  require_grid(y, op, "solve_regularized");
  return {y.grid, solve_regularized(y.magnitude, op.B, cfg)};
}

void validate(const CfarConfig& cfg) {
  Problems p;
  p.expect(cfg.guard_az >= 0 && cfg.guard_rng >= 0, "cfar.guard must be >= 0");
  p.expect(cfg.train_az > cfg.guard_az && cfg.train_rng > cfg.guard_rng,
           "cfar.train must exceed cfar.guard in both dimensions");
  p.expect(cfg.threshold_factor > 1.0, "cfar.threshold_factor must be > 1");
  p.raise();
}

grid::SceneMask cfar_detect(const radar::Heatmap& y, const CfarConfig& cfg) {
  validate(cfg);
  require_magnitude(y, "cfar_detect");
  const Eigen::MatrixXd& v = y.magnitude;
  const auto rows = static_cast<int>(v.rows());
  const auto cols = static_cast<int>(v.cols());
  if (2 * cfg.train_az + 1 > rows || 2 * cfg.train_rng + 1 > cols) {
    throw ConfigError("cfar training window larger than the grid");
  }
  // Summed-area table with a zero border.
  Eigen::MatrixXd sat = Eigen::MatrixXd::Zero(rows + 1, cols + 1);
  for (int j = 0; j < cols; ++j) {
    for (int i = 0; i < rows; ++i) sat(i + 1, j + 1) = v(i, j) + sat(i, j + 1) + sat(i + 1, j) - sat(i, j);
  }
  struct Box {
    double sum;
    int count;
  };
  auto box = [&](int i, int j, int ha, int hr) {
    const int i0 = std::max(0, i - ha);
    const int i1 = std::min(rows, i + ha + 1);
    const int j0 = std::max(0, j - hr);
    const int j1 = std::min(cols, j + hr + 1);
    return Box{sat(i1, j1) - sat(i0, j1) - sat(i1, j0) + sat(i0, j0), (i1 - i0) * (j1 - j0)};
  };
  grid::SceneMask out = grid::SceneMask::zeros(y.grid);
  for (int j = 0; j < cols; ++j) {
    for (int i = 0; i < rows; ++i) {
      const Box outer = box(i, j, cfg.train_az, cfg.train_rng);
      const Box inner = box(i, j, cfg.guard_az, cfg.guard_rng);
      const int count = outer.count - inner.count;
      if (count <= 0) continue;
      const double noise = (outer.sum - inner.sum) / count;
      if (v(i, j) > cfg.threshold_factor * noise) out.values(i, j) = 1.0;
    }
  }
  return out;
}

std::pair<double, double> VarianceReport::summary(const std::string& method) const {
  double sum = 0.0;
  double sum2 = 0.0;
  int n = 0;
  for (const auto& r : rows) {
    if (r.method != method) continue;
    sum += r.final_cd;
    sum2 += r.final_cd * r.final_cd;
    ++n;
  }
  if (n == 0) return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
  const double mean = sum / n;
  return {mean, std::sqrt(std::max(0.0, sum2 / n - mean * mean))};
}

VarianceReport run_variance_study(const radar::Heatmap& y, const radar::ImagingOperator& op,
                                  const diffusion::NoisePredictor& denoiser, const diffusion::Codec& codec,
                                  const diffusion::NoiseSchedule& sched, const PosteriorConfig& cfg, int n_seeds,
                                  const grid::PointSet& gt, const std::vector<RegConfig>& regularized) {
  if (n_seeds < 2) throw ConfigError("variance study needs n_seeds >= 2");
  constexpr double kEmpty = std::numeric_limits<double>::infinity();
  VarianceReport report;
  for (int seed = 0; seed < n_seeds; ++seed) {
    PosteriorConfig c = cfg;
    c.seed = static_cast<std::uint64_t>(seed);
    PosteriorResult r = posterior_sample(y, op, denoiser, codec, sched, c, &gt);
    report.rows.push_back({"posterior", c.seed, chamfer_vs(r.mask, gt).value_or(kEmpty)});
    report.traces.push_back(std::move(r.trace));
  }
  for (const RegConfig& base : regularized) {
    const std::string name = base.norm == RegNorm::kL1 ? "l1" : "l2";
    for (int seed = 0; seed < n_seeds; ++seed) {
      RegConfig c = base;
      c.seed = static_cast<std::uint64_t>(seed);
      report.rows.push_back({name, c.seed, chamfer_vs(solve_regularized(y, op, c), gt).value_or(kEmpty)});
    }
  }
  const std::size_t steps = report.traces.front().size();
  for (std::size_t s = 0; s < steps; ++s) {
    double sum = 0.0;
    double sum2 = 0.0;
    for (const auto& tr : report.traces) {
      sum += tr[s].cd;
      sum2 += tr[s].cd * tr[s].cd;
    }
    const double mean = sum / n_seeds;
    report.step_mean_cd.push_back(mean);
    report.step_std_cd.push_back(std::sqrt(std::max(0.0, sum2 / n_seeds - mean * mean)));
  }
  return report;
}

SweepReport run_sweep(const std::vector<radar::Heatmap>& y_set, const radar::ImagingOperator& op,
                      const diffusion::NoisePredictor& denoiser, const diffusion::Codec& codec,
                      const diffusion::NoiseSchedule& sched, const PosteriorConfig& base,
                      const std::vector<double>& zeta_grid, const std::vector<int>& K_grid,
                      const std::vector<double>& gamma_grid, const std::vector<grid::PointSet>& gt_set, int threads) {
  if (zeta_grid.empty() || K_grid.empty() || gamma_grid.empty()) throw ConfigError("sweep grids must be nonempty");
  if (y_set.empty() || y_set.size() != gt_set.size()) throw ConfigError("sweep needs one ground truth per heatmap");
  SweepReport report;
  for (double zeta : zeta_grid) {
    for (int K : K_grid) {
      for (double gamma : gamma_grid) report.rows.push_back({zeta, K, gamma, 0.0, 0});
    }
  }
  const std::size_t n_frames = y_set.size();
  std::vector<double> cd(report.rows.size() * n_frames, 0.0);
  parallel_for(cd.size(), threads, [&](std::size_t idx) {
    const SweepRow& row = report.rows[idx / n_frames];
    const std::size_t f = idx % n_frames;
    PosteriorConfig c = base;
    c.zeta = row.zeta;
    c.K = row.K;
    c.gamma = row.gamma;
    const PosteriorResult r = posterior_sample(y_set[f], op, denoiser, codec, sched, c);
    cd[idx] = chamfer_vs(r.mask, gt_set[f]).value_or(std::numeric_limits<double>::infinity());
  });
  for (std::size_t r = 0; r < report.rows.size(); ++r) {
    double sum = 0.0;
    for (std::size_t f = 0; f < n_frames; ++f) {
      const double v = cd[r * n_frames + f];
      if (std::isinf(v)) ++report.rows[r].n_empty;
      sum += v;
    }
    report.rows[r].mean_cd = sum / static_cast<double>(n_frames);
    if (report.rows[r].mean_cd < report.rows[report.argmin].mean_cd) report.argmin = r;
  }
  return report;
}

}  // namespace rinv::solvers
