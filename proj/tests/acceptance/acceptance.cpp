// SPDX-License-Identifier: Apache-2.0
// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 when any fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "helpers.hpp"
#include "rinv/cli/commands.hpp"
#include "rinv/cli/config.hpp"
#include "rinv/diffusion/train.hpp"
#include "rinv/errors.hpp"
#include "rinv/io.hpp"
#include "rinv/metrics.hpp"
#include "rinv/runtime.hpp"
#include "rinv/solvers.hpp"

using namespace rinv;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances.
constexpr double kAdjointTol = 1e-10;
constexpr double kAdjointSeconds = 10.0;
constexpr double kGradTol = 1e-4;
constexpr double kGradStep = 1e-5;
constexpr double kGradSeconds = 30.0;
constexpr double kSuperpositionTol = 1e-12;
constexpr double kLossRatio = 0.5;
constexpr double kTrainHours = 2.0;
constexpr double kCfarSlack = 1.05;
constexpr double kEvalHours = 2.0;
constexpr double kSweepGain = 0.8;
constexpr double kEarlyFrac = 0.4;
constexpr double kEarlyTol = 0.3;
constexpr double kMetricsTol = 1e-12;
constexpr double kTweedieTol = 1e-12;
constexpr double kHandTol = 1e-9;

constexpr int kTrainScenes = 512;
constexpr int kHeldOut = 20;
constexpr int kVarianceSeeds = 5;
constexpr int kSweepScenes = 4;
constexpr std::uint64_t kTrainSeed = 0;
constexpr std::uint64_t kHeldOutSeed = 7001;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v, int prec = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", prec, v);
  return buf;
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

class Suite {
 public:
  explicit Suite(std::set<std::string> only) : only_(std::move(only)) {}

  bool wanted(const std::string& id) const { return only_.empty() || only_.count(id) != 0; }

  void run(const std::string& id, const std::string& title, const std::function<Outcome()>& body) {
    if (!wanted(id)) return;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = body();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const std::string line = (o.pass ? "PASS " : "FAIL ") + id + " " + title + ": " + o.detail + " [" +
                             fmt(seconds_since(t0), 3) + " s]";
    std::cout << line << std::endl;
    lines_.push_back(line);
    failed_ += o.pass ? 0 : 1;
  }

  void note(const std::string& text) {
    std::cout << "INFO " << text << std::endl;
    lines_.push_back("INFO " + text);
  }

  int failed() const { return failed_; }
  const std::vector<std::string>& lines() const { return lines_; }

 private:
  std::set<std::string> only_;
  std::vector<std::string> lines_;
  int failed_ = 0;
};

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double cd_or_inf(const grid::SceneMask& mask, const grid::PointSet& gt) {
  return solvers::chamfer_vs(mask, gt).value_or(std::numeric_limits<double>::infinity());
}

std::complex<double> inner(const Eigen::MatrixXcd& a, const Eigen::MatrixXcd& b) {
  return (a.array() * b.array().conjugate()).sum();
}

radar::Heatmap magnitude_heatmap(const grid::PolarGrid& g, Eigen::MatrixXd values) {
  return {g, radar::HeatmapMode::kMagnitude, {}, std::move(values)};
}

radar::Heatmap complex_heatmap(const grid::PolarGrid& g, Eigen::MatrixXcd values) {
  return {g, radar::HeatmapMode::kComplex, std::move(values), {}};
}

grid::SceneMask make_scene(const cli::RunConfig& c, std::uint64_t corpus_seed, std::size_t index) {
  grid::SceneSpec spec = c.scene;
  spec.seed = cli::scene_seed(corpus_seed, index);
  return grid::generate_scene(spec, c.grid);
}

// Noise predictor returning a fixed tensor, for exact algebra checks.
class ConstantEps final : public diffusion::NoisePredictor {
 public:
  explicit ConstantEps(Eigen::MatrixXd eps) : eps_(std::move(eps)) {}
  Eigen::MatrixXd predict(const Eigen::MatrixXd&, int) const override { return eps_; }
  std::unique_ptr<diffusion::Linearization> linearize(const Eigen::MatrixXd& z, int t,
                                                      Eigen::MatrixXd& eps) const override {
    eps = predict(z, t);
    return nullptr;
  }

 private:
  Eigen::MatrixXd eps_;
};

// ---------------------------------------------------------------------------

Outcome ac1_adjoint() {
  const auto t0 = Clock::now();
  const grid::PolarGrid g;
  const radar::ImagingOperator op = radar::build_imaging_matrix(g, radar::make_array(12));
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    const Eigen::MatrixXd x = testing::random_matrix(g.n_az, g.n_rng, 100 + k);
    const Eigen::MatrixXcd y = testing::random_complex(g.n_az, g.n_rng, 300 + k);
    const Eigen::MatrixXcd ax = radar::apply(op.B, x);
    const Eigen::MatrixXcd ahy = radar::apply_adjoint(op.B, y);
    const double err = std::abs(inner(ax, y) - inner(x.cast<std::complex<double>>(), ahy)) / (ax.norm() * y.norm());
    worst = std::max(worst, err);
  }
  const double secs = seconds_since(t0);
  return {worst <= kAdjointTol && secs < kAdjointSeconds,
          "max rel = " + fmt(worst) + " (<= " + fmt(kAdjointTol) + "), " + fmt(secs, 3) + " s (< 10)"};
}

Outcome ac2_gradients() {
  const auto t0 = Clock::now();
  const grid::PolarGrid g = grid::make_grid(16, 24, -90, 90, 103);
  const radar::ImagingOperator op = radar::build_imaging_matrix(g, radar::make_array(12));
  const Eigen::MatrixXd x = testing::random_matrix(16, 24, 11, 0.0, 1.0);
  const radar::Heatmap yc = complex_heatmap(g, testing::random_complex(16, 24, 12) * 5.0);
  const radar::Heatmap ym = magnitude_heatmap(g, testing::random_matrix(16, 24, 13, 0.0, 5.0));
  std::mt19937_64 rng(14);
  std::uniform_int_distribution<int> pick(0, 16 * 24 - 1);
  double worst[2] = {0.0, 0.0};
  for (int m = 0; m < 2; ++m) {
    const radar::Heatmap& y = m == 0 ? yc : ym;
    const radar::FidelityMode mode = m == 0 ? radar::FidelityMode::kComplex : radar::FidelityMode::kMagnitude;
    const Eigen::MatrixXd grad = radar::fidelity_gradient({g, x}, y, 0.7, op, mode);
    for (int k = 0; k < 50; ++k) {
      const int idx = pick(rng);
      Eigen::MatrixXd xp = x;
      Eigen::MatrixXd xm = x;
      xp.data()[idx] += kGradStep;
      xm.data()[idx] -= kGradStep;
      const double fd = (radar::fidelity_value({g, xp}, y, 0.7, op, mode) -
                         radar::fidelity_value({g, xm}, y, 0.7, op, mode)) /
                        (2 * kGradStep);
      const double an = grad.data()[idx];
      const double denom = std::max({std::abs(fd), std::abs(an), 1e-300});
      worst[m] = std::max(worst[m], std::abs(fd - an) / denom);
    }
  }
  const double secs = seconds_since(t0);
  return {worst[0] <= kGradTol && worst[1] <= kGradTol && secs < kGradSeconds,
          "max rel complex = " + fmt(worst[0]) + ", magnitude = " + fmt(worst[1]) + " (<= " + fmt(kGradTol) + ")"};
}

Outcome ac3_linearity() {
  const grid::PolarGrid g;
  const radar::ImagingOperator op = radar::build_imaging_matrix(g, radar::make_array(12));
  const Eigen::MatrixXcd zero = radar::apply(op.B, Eigen::MatrixXd::Zero(g.n_az, g.n_rng));
  const bool exact_zero = (zero.array() == std::complex<double>(0.0, 0.0)).all();
  double worst = 0.0;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> coef(-2.0, 2.0);
  for (int k = 0; k < 20; ++k) {
    const Eigen::MatrixXd x = testing::random_matrix(g.n_az, g.n_rng, 500 + k);
    const Eigen::MatrixXd y = testing::random_matrix(g.n_az, g.n_rng, 600 + k);
    const double a = coef(rng);
    const double b = coef(rng);
    const Eigen::MatrixXcd lhs = radar::apply(op.B, a * x + b * y);
    const Eigen::MatrixXcd rhs = a * radar::apply(op.B, x) + b * radar::apply(op.B, y);
    worst = std::max(worst, (lhs - rhs).cwiseAbs().maxCoeff() / lhs.cwiseAbs().maxCoeff());
  }
  return {exact_zero && worst <= kSuperpositionTol,
          std::string("A(0) == 0 ") + (exact_zero ? "exactly" : "NOT exactly") + ", superposition max rel = " +
              fmt(worst) + " (<= " + fmt(kSuperpositionTol) + ")"};
}

Outcome ac4_rayleigh() {
  const grid::PolarGrid g = grid::make_grid(512, 2, -90, 90, 10);
  const int i1 = 242;
  const int i2 = 269;
  const double dcos = std::sin(g.az_center_deg(i2) * std::numbers::pi / 180) -
                      std::sin(g.az_center_deg(i1) * std::numbers::pi / 180);
  grid::SceneMask m = grid::SceneMask::zeros(g);
  m.values(i1, 0) = 1.0;
  m.values(i2, 0) = 1.0;
  auto peaks = [&](int n) {
    const radar::Heatmap h = radar::forward_measure(m, radar::build_imaging_matrix(g, radar::make_array(n)), 0.0, 1);
    return testing::count_peaks(h.complex_values.col(0).cwiseAbs(), 1.0 / std::sqrt(2.0));
  };
  const int p192 = peaks(192);
  const int p4 = peaks(4);
  std::vector<double> widths;
  bool decreasing = true;
  for (int n : {4, 12, 86, 192}) {
    const radar::ImagingOperator op = radar::build_imaging_matrix(g, radar::make_array(n));
    widths.push_back(testing::half_power_width_deg(op.B.col(256).cwiseAbs(), g));
    if (widths.size() > 1 && !(widths.back() < widths[widths.size() - 2])) decreasing = false;
  }
  std::string w;
  for (double v : widths) w += (w.empty() ? "" : "/") + fmt(v, 3);
  return {p192 == 2 && p4 == 1 && decreasing && std::abs(dcos - 1.0 / 6.0) < 0.01,
          "dcos = " + fmt(dcos, 4) + ", peaks N=192: " + std::to_string(p192) + ", N=4: " + std::to_string(p4) +
              ", half-power widths (deg) N=4/12/86/192: " + w};
}

// ---------------------------------------------------------------------------

struct Prior {
  std::optional<diffusion::Denoiser> denoiser;
  std::vector<double> losses;
  double seconds = 0.0;
  std::string error;
};

Prior train_prior(const cli::RunConfig& c, const fs::path& workdir, bool reuse) {
  Prior p;
  const fs::path ckpt = workdir / "prior.ckpt";
  const fs::path loss_csv = workdir / "loss.csv";
  if (reuse && fs::exists(ckpt) && fs::exists(loss_csv)) {
    p.denoiser.emplace(diffusion::Denoiser::load(ckpt));
    std::istringstream in(io::read_file(loss_csv));
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) p.losses.push_back(std::stod(line.substr(line.find(',') + 1)));
    std::cout << "INFO reusing " << ckpt.string() << std::endl;
    return p;
  }
  std::vector<grid::SceneMask> scenes;
  scenes.reserve(kTrainScenes);
  for (int k = 0; k < kTrainScenes; ++k) scenes.push_back(make_scene(c, kTrainSeed, k));
  const auto t0 = Clock::now();
  try {
    diffusion::TrainResult r = diffusion::train_denoiser(
        scenes, c.make_codec(), c.make_schedule(), c.make_train_config(kTrainSeed), [&](int epoch, double loss) {
          std::cout << "INFO epoch " << epoch << " loss " << fmt(loss, 6) << " " << fmt(seconds_since(t0), 4) << " s"
                    << std::endl;
        });
    p.losses = r.epoch_loss;
    p.denoiser.emplace(std::move(r.denoiser));
  } catch (const std::exception& e) {
    p.error = e.what();
  }
  p.seconds = seconds_since(t0);
  if (p.denoiser) {
    p.denoiser->save(ckpt);
    std::string csv = "epoch,mean_loss\n";
    for (std::size_t e = 0; e < p.losses.size(); ++e) csv += std::to_string(e + 1) + "," + io::format_double(p.losses[e]) + "\n";
    io::write_file_atomic(loss_csv, csv);
  }
  return p;
}

Outcome ac5_training(const Prior& p) {
  if (!p.error.empty()) return {false, "training failed: " + p.error};
  if (p.losses.empty()) return {false, "no epochs recorded"};
  const bool finite = std::all_of(p.losses.begin(), p.losses.end(), [](double v) { return std::isfinite(v); });
  const double ratio = p.losses.back() / p.losses.front();
  std::string detail = "first = " + fmt(p.losses.front()) + ", final = " + fmt(p.losses.back()) +
                       ", ratio = " + fmt(ratio) + " (< " + fmt(kLossRatio) + "), epochs = " +
                       std::to_string(p.losses.size()) + (finite ? ", finite" : ", NON-FINITE");
  const bool fresh = p.seconds > 0.0;
  if (fresh) detail += ", " + fmt(p.seconds / 60.0, 3) + " min";
  const bool in_time = !fresh || p.seconds <= kTrainHours * 3600.0;
  return {finite && ratio < kLossRatio && in_time && p.losses.size() == 30, detail};
}

Outcome ac6_degeneracy(const cli::RunConfig& c, const diffusion::Denoiser& den) {
  const radar::ImagingOperator op = c.make_operator();
  const radar::Heatmap y1 = cli::simulate_heatmap(make_scene(c, kHeldOutSeed, 0), op, c.noise_sigma, 1);
  const radar::Heatmap y2 = cli::simulate_heatmap(make_scene(c, kHeldOutSeed, 1), op, c.noise_sigma, 2);
  bool ok = !(y1.magnitude == y2.magnitude);
  std::string detail;
  for (int variant = 0; variant < 2; ++variant) {
    solvers::PosteriorConfig pc = c.posterior;
    pc.mode = diffusion::SamplerMode::kDdim;
    pc.seed = 42;
    if (variant == 0) pc.K = 0;
    else pc.zeta = 0.0;
    const auto a = solvers::posterior_sample(y1, op, den, den.codec(), den.schedule(), pc);
    const auto b = solvers::posterior_sample(y2, op, den, den.codec(), den.schedule(), pc);
    const bool same = a.mask.values == b.mask.values;
    ok = ok && same;
    detail += std::string(variant == 0 ? "K = 0: " : ", zeta = 0: ") + (same ? "identical" : "DIFFERENT");
  }
  return {ok, detail};
}

struct HeldOutRun {
  std::vector<double> post, l1, l2, cfar;
  std::vector<double> early, full;  // trace CD at ceil(0.4 n) and at n steps
  double seconds = 0.0;
};

HeldOutRun run_held_out(const cli::RunConfig& c, const diffusion::Denoiser& den) {
  HeldOutRun r;
  const auto t0 = Clock::now();
  const radar::ImagingOperator op = c.make_operator();
  for (int k = 0; k < kHeldOut; ++k) {
    const grid::SceneMask scene = make_scene(c, kHeldOutSeed, k);
    const grid::PointSet gt = grid::mask_to_points(scene, c.io.gt_threshold);
    const radar::Heatmap y = cli::simulate_heatmap(scene, op, c.noise_sigma, cli::scene_seed(kHeldOutSeed + 1, k));

    solvers::PosteriorConfig pc = c.posterior;
    pc.seed = k;
    const solvers::PosteriorResult post = solvers::posterior_sample(y, op, den, den.codec(), den.schedule(), pc, &gt);
    r.post.push_back(cd_or_inf(post.mask, gt));
    const std::size_t n = post.trace.size();
    const std::size_t e = static_cast<std::size_t>(std::ceil(kEarlyFrac * static_cast<double>(n)));
    auto trace_cd = [&](std::size_t step) {
      const double v = post.trace[step - 1].cd;
      return v < 0 ? std::numeric_limits<double>::infinity() : v;
    };
    r.early.push_back(trace_cd(e));
    r.full.push_back(trace_cd(n));

    for (solvers::RegNorm norm : {solvers::RegNorm::kL1, solvers::RegNorm::kL2}) {
      solvers::RegConfig rc = c.regularized;
      rc.norm = norm;
      rc.seed = k;
      (norm == solvers::RegNorm::kL1 ? r.l1 : r.l2).push_back(cd_or_inf(solvers::solve_regularized(y, op, rc), gt));
    }
    r.cfar.push_back(cd_or_inf(solvers::cfar_detect(y, c.cfar), gt));
    std::cout << "INFO scene " << k << " cd posterior " << fmt(r.post.back()) << " l1 " << fmt(r.l1.back()) << " l2 "
              << fmt(r.l2.back()) << " cfar " << fmt(r.cfar.back()) << " (trace " << fmt(r.early.back()) << " @" << e
              << ", " << fmt(r.full.back()) << " @" << n << ")" << std::endl;
  }
  r.seconds = seconds_since(t0);
  return r;
}

Outcome ac7_ordering(const HeldOutRun& r, Suite& suite) {
  const double mp = median(r.post);
  const double m1 = median(r.l1);
  const double m2 = median(r.l2);
  const double mc = median(r.cfar);
  suite.note("AC-7 posterior vs CFAR: median " + fmt(mp) + " vs " + fmt(mc) + ", expectation posterior <= " +
             fmt(kCfarSlack) + " x CFAR " + (mp <= kCfarSlack * mc ? "met" : "not met"));
  const bool in_time = r.seconds <= kEvalHours * 3600.0;
  return {mp < m1 && mp < m2 && in_time,
          "median CD posterior = " + fmt(mp) + ", L1 = " + fmt(m1) + ", L2 = " + fmt(m2) + ", CFAR = " + fmt(mc) +
              " over " + std::to_string(r.post.size()) + " scenes, " + fmt(r.seconds / 60.0, 3) + " min"};
}

Outcome ac10_early_stop(const HeldOutRun& r) {
  const double me = median(r.early);
  const double mf = median(r.full);
  const double rel = std::abs(me - mf) / mf;
  return {std::isfinite(rel) && rel <= kEarlyTol, "median trace CD at " + fmt(kEarlyFrac, 2) + " of the steps = " +
                                                      fmt(me) + ", at full = " + fmt(mf) + ", rel diff = " + fmt(rel) +
                                                      " (<= " + fmt(kEarlyTol) + ")"};
}

Outcome ac8_variance(const cli::RunConfig& c, const diffusion::Denoiser& den) {
  const radar::ImagingOperator op = c.make_operator();
  const grid::SceneMask scene = make_scene(c, kHeldOutSeed, 0);
  const grid::PointSet gt = grid::mask_to_points(scene, c.io.gt_threshold);
  const radar::Heatmap y = cli::simulate_heatmap(scene, op, c.noise_sigma, cli::scene_seed(kHeldOutSeed + 1, 0));
  std::vector<solvers::RegConfig> reg(2, c.regularized);
  reg[0].norm = solvers::RegNorm::kL1;
  reg[1].norm = solvers::RegNorm::kL2;
  for (auto& rc : reg) rc.init = solvers::RegInit::kUniform;
  const solvers::VarianceReport rep =
      solvers::run_variance_study(y, op, den, den.codec(), den.schedule(), c.posterior, kVarianceSeeds, gt, reg);
  const auto [mp, sp] = rep.summary("posterior");
  const auto [m1, s1] = rep.summary("l1");
  const auto [m2, s2] = rep.summary("l2");
  return {sp < s1 && sp < s2, "std (mean) of final CD posterior = " + fmt(sp) + " (" + fmt(mp) + "), L1 = " + fmt(s1) +
                                  " (" + fmt(m1) + "), L2 = " + fmt(s2) + " (" + fmt(m2) + ")"};
}

Outcome ac9_sweep(const cli::RunConfig& c, const diffusion::Denoiser& den, const fs::path& workdir) {
  const radar::ImagingOperator op = c.make_operator();
  std::vector<radar::Heatmap> ys;
  std::vector<grid::PointSet> gts;
  for (int k = 0; k < kSweepScenes; ++k) {
    const grid::SceneMask scene = make_scene(c, kHeldOutSeed, k);
    ys.push_back(cli::simulate_heatmap(scene, op, c.noise_sigma, cli::scene_seed(kHeldOutSeed + 1, k)));
    gts.push_back(grid::mask_to_points(scene, c.io.gt_threshold));
  }
  const std::vector<double> zetas{0.0, 1e-4, 1e-3, 1e-2};
  const std::vector<int> ks{5, 10, 20};
  const solvers::SweepReport rep =
      solvers::run_sweep(ys, op, den, den.codec(), den.schedule(), c.posterior, zetas, ks, {1.0}, gts);
  std::string csv = "zeta,K,gamma,mean_cd,argmin\n";
  double cd_zero = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < rep.rows.size(); ++i) {
    const auto& row = rep.rows[i];
    csv += io::format_double(row.zeta) + "," + std::to_string(row.K) + "," + io::format_double(row.gamma) + "," +
           io::format_double(row.mean_cd) + "," + (i == rep.argmin ? "1" : "0") + "\n";
    if (row.zeta == 0.0) cd_zero = std::min(cd_zero, row.mean_cd);
  }
  io::write_file_atomic(workdir / "sweep.csv", csv);
  const auto& best = rep.rows[rep.argmin];
  return {best.zeta > 0.0 && best.mean_cd <= kSweepGain * cd_zero,
          "argmin zeta = " + fmt(best.zeta) + ", K = " + std::to_string(best.K) + ", mean CD = " + fmt(best.mean_cd) +
              ", CD at zeta = 0: " + fmt(cd_zero) + " (need <= " + fmt(kSweepGain) + " x)"};
}

// ---------------------------------------------------------------------------

Outcome ac11_metrics() {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-50.0, 50.0);
  auto cloud = [&](int n) {
    grid::PointSet s(n);
    for (auto& p : s) p = {u(rng), u(rng)};
    return s;
  };
  const grid::PointSet a = cloud(1000);
  const grid::PointSet b = cloud(1000);
  const metrics::MetricsReport m = metrics::compute_metrics(a, b);
  const double ab = metrics::directed_mean_nn_brute(a, b);
  const double ba = metrics::directed_mean_nn_brute(b, a);
  const double err = std::max({std::abs(m.cd - (ab + ba)), std::abs(m.ucd - ab), std::abs(m.umhd - ba),
                               std::abs(m.mhd - std::max(ab, ba))});
  const metrics::MetricsReport same = metrics::compute_metrics(a, a);
  const metrics::MetricsReport hand = metrics::compute_metrics({{0.0, 0.0}}, {{3.0, 4.0}});
  const bool hand_ok = same.cd == 0.0 && same.mhd == 0.0 && hand.ucd == 5.0 && hand.cd == 10.0;
  return {err <= kMetricsTol && hand_ok, "max abs diff vs brute force = " + fmt(err) + " (<= " + fmt(kMetricsTol) +
                                             "), hand cases " + (hand_ok ? "exact" : "WRONG")};
}

Outcome ac12_diffusion() {
  using namespace diffusion;
  auto scalar = [](double v) { return Eigen::MatrixXd::Constant(1, 1, v); };
  const NoiseSchedule s = default_schedule();
  const Eigen::MatrixXd z0 = testing::random_matrix(6, 9, 1);
  const Eigen::MatrixXd eta = testing::random_matrix(6, 9, 2);
  const ConstantEps stub(eta);
  double tweedie = 0.0;
  for (int t : {1, 17, 100, 150}) {
    tweedie = std::max(tweedie, (tweedie_z0(forward_diffuse(z0, t, eta, s), t, stub, s) - z0).cwiseAbs().maxCoeff());
  }

  double hand = 0.0;
  const NoiseSchedule q({0.5, 0.5});
  hand = std::max(hand, std::abs(forward_diffuse(scalar(1.0), 2, scalar(0.0), q)(0) - 0.5));
  hand = std::max(hand, std::abs(forward_diffuse(scalar(0.7), 0, scalar(5.0), s)(0) - 0.7));
  hand = std::max(hand, std::abs(tweedie_z0(scalar(1.0), scalar(0.5), 2, q)(0) - 1.1339745962155614));
  const double before = 0.5 / 0.99;
  std::vector<double> betas(69, 1.0 - std::pow(before, 1.0 / 69.0));
  betas.push_back(0.01);
  const NoiseSchedule h(betas);
  const ConstantEps small(scalar(0.2));
  const double step = reverse_step(scalar(1.0), 70, small, h, SamplerMode::kAncestral, scalar(0.0))(0);
  hand = std::max(hand, std::abs(step - (1.0 - 0.01 * 0.2 / std::sqrt(0.5)) / std::sqrt(0.99)));

  const grid::PolarGrid g = grid::make_grid(8, 12, -90, 90, 10);
  const ConstantEps flat(Eigen::MatrixXd::Constant(8, 12, 0.1));
  const bool bitwise = sample_unconditional(flat, s, Codec(), g, 9, SamplerMode::kDdim).values ==
                       sample_unconditional(flat, s, Codec(), g, 9, SamplerMode::kDdim).values;
  return {tweedie <= kTweedieTol && hand <= kHandTol && bitwise,
          "Tweedie max err = " + fmt(tweedie) + " (<= " + fmt(kTweedieTol) + "), hand cases max err = " + fmt(hand) +
              " (<= " + fmt(kHandTol) + "), ddim " + (bitwise ? "bitwise deterministic" : "NOT deterministic")};
}

Outcome ac13_formats(const cli::RunConfig& c, const diffusion::Denoiser* den, const fs::path& workdir) {
  std::vector<std::string> bad;
  const grid::SceneMask scene = make_scene(c, kHeldOutSeed, 3);
  const fs::path gpath = workdir / "fmt.grid";
  io::write_grid(gpath, scene);
  const std::string gbytes = io::read_file(gpath);
  if (io::encode_grid(io::read_grid(gpath)) != gbytes || !(io::read_grid(gpath).values == scene.values)) bad.push_back("grid");

  const radar::Heatmap cplx = radar::forward_measure(scene, c.make_operator(), c.noise_sigma, 4);
  const fs::path hpath = workdir / "fmt.hm";
  io::write_heatmap(hpath, cplx);
  const radar::Heatmap back = io::read_heatmap(hpath);
  const Eigen::MatrixXcd stored = cplx.complex_values.cast<std::complex<float>>().cast<std::complex<double>>();
  if (io::encode_complex(back) != io::read_file(hpath) || !(back.complex_values == stored)) bad.push_back("complex");

  if (den != nullptr) {
    const std::string bytes = den->encode();
    if (diffusion::Denoiser::decode(bytes).encode() != bytes) bad.push_back("checkpoint");
  } else {
    bad.push_back("checkpoint (no prior)");
  }

  const grid::PointSet pts = grid::mask_to_points(scene, 0.5);
  if (io::encode_points(io::decode_points(io::encode_points(pts))) != io::encode_points(pts)) bad.push_back("points");

  const std::string pgm = io::encode_pgm(scene, io::RenderMode::kGray);
  const fs::path ppath = workdir / "fmt.pgm";
  io::write_file_atomic(ppath, pgm);
  const std::string header = "P5\n" + std::to_string(c.grid.n_rng) + " " + std::to_string(c.grid.n_az) + "\n255\n";
  if (io::read_file(ppath) != pgm || !pgm.starts_with(header) ||
      pgm.size() != header.size() + static_cast<std::size_t>(c.grid.n_az * c.grid.n_rng)) {
    bad.push_back("pgm");
  }
  std::string detail = bad.empty() ? "grid, complex heatmap, checkpoint, points, pgm byte-exact" : "mismatch:";
  for (const auto& b : bad) detail += " " + b;
  return {bad.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
  configure_allocator();
  CLI::App app{"Acceptance suite"};
  fs::path workdir = fs::temp_directory_path() / "rinv_acceptance";
  std::vector<std::string> only;
  bool reuse = false;
  app.add_option("--workdir", workdir, "Directory for artifacts");
  app.add_option("--only", only, "Run only these criteria (e.g. AC-1 AC-7)");
  app.add_flag("--reuse", reuse, "Reuse prior.ckpt and loss.csv from the workdir");
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(workdir);

  Suite suite(std::set<std::string>(only.begin(), only.end()));
  const cli::RunConfig c = cli::parse_config("{}");

  suite.run("AC-1", "operator adjointness", ac1_adjoint);
  suite.run("AC-2", "fidelity gradients", ac2_gradients);
  suite.run("AC-3", "linearity and zero", ac3_linearity);
  suite.run("AC-4", "Rayleigh degradation", ac4_rayleigh);

  const std::vector<std::string> learned{"AC-5", "AC-6", "AC-7", "AC-8", "AC-9", "AC-10", "AC-13"};
  const bool need_prior =
      std::any_of(learned.begin(), learned.end(), [&](const std::string& id) { return suite.wanted(id); });
  Prior prior;
  if (need_prior) prior = train_prior(c, workdir, reuse);
  const diffusion::Denoiser* den = prior.denoiser ? &*prior.denoiser : nullptr;
  auto with_prior = [&](const std::function<Outcome()>& body) {
    return [&, body]() -> Outcome {
      if (den == nullptr) return {false, "no trained prior: " + prior.error};
      return body();
    };
  };

  suite.run("AC-5", "prior training", [&] { return ac5_training(prior); });
  suite.run("AC-6", "sampler degeneracy", with_prior([&] { return ac6_degeneracy(c, *den); }));
  std::optional<HeldOutRun> held;
  if (den != nullptr && (suite.wanted("AC-7") || suite.wanted("AC-10"))) {
    try {
      held = run_held_out(c, *den);
    } catch (const std::exception& e) {
      std::cout << "INFO held-out run failed: " << e.what() << std::endl;
    }
  }
  auto with_held = [&](const std::function<Outcome()>& body) {
    return [&, body]() -> Outcome {
      if (!held) return {false, "held-out run unavailable"};
      return body();
    };
  };
  suite.run("AC-7", "enhancement ordering", with_held([&] { return ac7_ordering(*held, suite); }));
  suite.run("AC-8", "variance", with_prior([&] { return ac8_variance(c, *den); }));
  suite.run("AC-9", "hyperparameter sweep", with_prior([&] { return ac9_sweep(c, *den, workdir); }));
  suite.run("AC-10", "early stop", with_held([&] { return ac10_early_stop(*held); }));
  suite.run("AC-11", "metrics oracle", ac11_metrics);
  suite.run("AC-12", "diffusion algebra", ac12_diffusion);
  suite.run("AC-13", "formats", [&] { return ac13_formats(c, den, workdir); });

  std::string summary;
  for (const auto& line : suite.lines()) summary += line + "\n";
  io::write_file_atomic(workdir / "acceptance.txt", summary);
  std::cout << (suite.failed() == 0 ? "ALL PASS" : std::to_string(suite.failed()) + " FAILED") << std::endl;
  return suite.failed() == 0 ? 0 : 1;
}
