// SPDX-License-Identifier: Apache-2.0
#include "rinv/cli/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ostream>
#include <sstream>

#include "rinv/diffusion/sampler.hpp"
#include "rinv/errors.hpp"
#include "rinv/io.hpp"
#include "rinv/metrics.hpp"

namespace rinv::cli {
namespace {

std::string scene_name(std::size_t i, const char* ext) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "scene_%04zu.%s", i, ext);
  return buf;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

void require_file(const fs::path& p, const char* what) {
  if (!fs::is_regular_file(p)) throw IoError(std::string(what) + " not found: " + p.string());
}

std::string trace_csv(const std::vector<solvers::TraceRow>& trace) {
  std::string out = "step,fidelity,cd\n";
  for (const auto& r : trace) {
    out += std::to_string(r.step) + "," + io::format_double(r.fidelity) + "," + io::format_double(r.cd) + "\n";
  }
  return out;
}

radar::Heatmap as_magnitude(radar::Heatmap hm) {
  return hm.mode == radar::HeatmapMode::kComplex ? radar::to_magnitude(hm, true) : hm;
}

/// Operator on the heatmap's own grid with the configured array and gain.
radar::ImagingOperator operator_for(const RunConfig& c, const grid::PolarGrid& grid) {
  RunConfig local = c;
  local.grid = grid;
  return local.make_operator();
}

diffusion::Denoiser load_denoiser(const fs::path& path, const grid::PolarGrid& grid) {
  require_file(path, "checkpoint");
  diffusion::Denoiser d = diffusion::Denoiser::load(path);
  const diffusion::Architecture& a = d.network().architecture();
  const diffusion::Codec& codec = d.codec();
  codec.check_shape(grid.n_az, grid.n_rng);
  if (a.h != codec.latent_rows(grid.n_az) || a.w != codec.latent_cols(grid.n_rng)) {
    throw ConfigError("checkpoint latent " + std::to_string(a.h) + "x" + std::to_string(a.w) +
                      " does not match a " + std::to_string(grid.n_az) + "x" + std::to_string(grid.n_rng) +
                      " grid with codec " + std::string(diffusion::codec_name(codec.kind())));
  }
  return d;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

std::uint64_t scene_seed(std::uint64_t seed, std::size_t index) { return diffusion::item_seed(seed, index); }

radar::Heatmap simulate_heatmap(const grid::SceneMask& scene, const radar::ImagingOperator& op, double noise_sigma,
                                std::uint64_t noise_seed) {
  return radar::to_magnitude(radar::forward_measure(scene, op, noise_sigma, noise_seed), true);
}

std::vector<fs::path> list_scenes(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("scene directory not found: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".grid") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

void cmd_gen_scenes(const Globals& g, int n, const fs::path& out_dir, bool with_points, std::ostream& log) {
  if (n < 0) throw ConfigError("gen-scenes: count must be >= 0");
  ensure_dir(out_dir);
  std::string manifest = "file,seed\n";
  for (int i = 0; i < n; ++i) {
    grid::SceneSpec spec = g.config.scene;
    spec.seed = scene_seed(g.seed, static_cast<std::size_t>(i));
    const grid::SceneMask mask = grid::generate_scene(spec, g.config.grid);
    const std::string name = scene_name(static_cast<std::size_t>(i), "grid");
    io::write_grid(out_dir / name, mask);
    if (with_points) {
      io::write_points(out_dir / scene_name(static_cast<std::size_t>(i), "csv"),
                       grid::mask_to_points(mask, g.config.io.gt_threshold));
    }
    manifest += name + "," + std::to_string(spec.seed) + "\n";
  }
  io::write_file_atomic(out_dir / "manifest.csv", manifest);
  log << "wrote " << n << " scenes to " << out_dir.string() << "\n";
}

void cmd_simulate(const Globals& g, const SimulateOptions& opt, std::ostream& log) {
  require_file(opt.scene, "scene");
  const grid::SceneMask scene = io::read_grid(opt.scene);
  RunConfig c = g.config;
  c.grid = scene.grid;
  if (opt.array) {
    c.array.preset = *opt.array;
    c.array.n_antennas.reset();
  }
  const radar::ImagingOperator op = c.make_operator();
  const radar::Heatmap hm = radar::forward_measure(scene, op, c.noise_sigma, g.seed);
  if (opt.complex) {
    io::write_heatmap(opt.out, hm);
  } else {
    io::write_heatmap(opt.out, radar::to_magnitude(hm, true));
  }
  log << "simulated " << opt.scene.string() << " with N=" << op.array.n_antennas << " -> " << opt.out.string()
      << "\n";
}

void cmd_train(const Globals& g, const fs::path& scenes_dir, const fs::path& out_checkpoint, const fs::path& loss_csv,
               std::ostream& log) {
  const std::vector<fs::path> files = list_scenes(scenes_dir);
  if (files.empty()) throw ConfigError("train: no *.grid scenes in " + scenes_dir.string());
  std::vector<grid::SceneMask> scenes;
  scenes.reserve(files.size());
  for (const auto& f : files) {
    scenes.push_back(io::read_grid(f));
    if (!(scenes.back().grid == scenes.front().grid)) throw ConfigError("train: scenes use different grids: " + f.string());
  }
  RunConfig c = g.config;
  c.grid = scenes.front().grid;
  const auto t0 = std::chrono::steady_clock::now();
  const diffusion::TrainResult r =
      diffusion::train_denoiser(scenes, c.make_codec(), c.make_schedule(), c.make_train_config(g.seed),
                                [&](int epoch, double loss) {
                                  log << "epoch " << epoch << " mean_loss " << io::format_double(loss) << " ("
                                      << seconds_since(t0) << " s)\n";
                                  log.flush();
                                });
  r.denoiser.save(out_checkpoint);
  std::string csv = "epoch,mean_loss\n";
  for (std::size_t e = 0; e < r.epoch_loss.size(); ++e) {
    csv += std::to_string(e + 1) + "," + io::format_double(r.epoch_loss[e]) + "\n";
  }
  io::write_file_atomic(loss_csv, csv);
  log << "trained on " << scenes.size() << " scenes -> " << out_checkpoint.string() << "\n";
}

Method parse_method(const std::string& name) {
  if (name == "posterior") return Method::kPosterior;
  if (name == "l1") return Method::kL1;
  if (name == "l2") return Method::kL2;
  if (name == "cfar") return Method::kCfar;
  throw ConfigError("unknown method '" + name + "' (expected posterior, l1, l2 or cfar)");
}

void cmd_enhance(const Globals& g, const EnhanceOptions& opt, std::ostream& log) {
  if (opt.method == Method::kPosterior && !opt.checkpoint) throw ConfigError("enhance: method posterior needs --checkpoint");
  if (opt.method != Method::kPosterior && opt.checkpoint) {
    throw ConfigError("enhance: --checkpoint only applies to method posterior");
  }
  if (opt.trace_csv && opt.method != Method::kPosterior) throw ConfigError("enhance: --trace only applies to method posterior");
  require_file(opt.heatmap, "heatmap");
  const radar::Heatmap y = as_magnitude(io::read_heatmap(opt.heatmap));
  const RunConfig& c = g.config;

  const auto t0 = std::chrono::steady_clock::now();
  grid::SceneMask mask;
  const char* name = "cfar";
  switch (opt.method) {
    case Method::kPosterior: {
      name = "posterior";
      const diffusion::Denoiser den = load_denoiser(*opt.checkpoint, y.grid);
      solvers::PosteriorConfig pc = c.posterior;
      pc.seed = g.seed;
      const solvers::PosteriorResult r =
          solvers::posterior_sample(y, operator_for(c, y.grid), den, den.codec(), den.schedule(), pc);
      mask = r.mask;
      if (opt.trace_csv) io::write_file_atomic(*opt.trace_csv, trace_csv(r.trace));
      break;
    }
    case Method::kL1:
    case Method::kL2: {
      name = opt.method == Method::kL1 ? "l1" : "l2";
      solvers::RegConfig rc = c.regularized;
      rc.norm = opt.method == Method::kL1 ? solvers::RegNorm::kL1 : solvers::RegNorm::kL2;
      rc.seed = g.seed;
      mask = solvers::solve_regularized(y, operator_for(c, y.grid), rc);
      break;
    }
    case Method::kCfar:
      mask = solvers::cfar_detect(y, c.cfar);
      break;
  }
  const double elapsed = seconds_since(t0);
  const grid::PointSet points = grid::mask_to_points(mask, c.io.threshold);
  io::write_grid(opt.out_mask, mask);
  io::write_points(opt.out_points, points);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f", elapsed);
  log << "enhance method=" << name << " points=" << points.size() << " elapsed_s=" << buf << "\n";
}

void cmd_eval(const std::vector<fs::path>& pred, const std::vector<fs::path>& gt, const fs::path& out_csv,
              std::ostream& log) {
  if (pred.size() != gt.size()) throw ConfigError("eval: need one ground-truth file per prediction");
  std::string csv;
  if (fs::exists(out_csv)) {
    csv = io::read_file(out_csv);
    if (!csv.empty() && csv.back() != '\n') csv += '\n';
  }
  if (csv.empty()) csv = "frame,cd,ucd,mhd,umhd,n_pred,n_gt\n";
  for (std::size_t i = 0; i < pred.size(); ++i) {
    require_file(pred[i], "prediction");
    require_file(gt[i], "ground truth");
    const metrics::MetricsReport m = metrics::compute_metrics(io::read_points(pred[i]), io::read_points(gt[i]));
    csv += pred[i].stem().string() + "," + io::format_double(m.cd) + "," + io::format_double(m.ucd) + "," +
           io::format_double(m.mhd) + "," + io::format_double(m.umhd) + "," + std::to_string(m.n_pred) + "," +
           std::to_string(m.n_gt) + "\n";
    log << pred[i].stem().string() << " cd=" << io::format_double(m.cd) << "\n";
  }
  io::write_file_atomic(out_csv, csv);
}

void cmd_sweep(const Globals& g, const SweepOptions& opt, std::ostream& log) {
  std::vector<fs::path> files = list_scenes(opt.scenes_dir);
  if (opt.max_scenes > 0 && files.size() > static_cast<std::size_t>(opt.max_scenes)) files.resize(opt.max_scenes);
  if (files.empty()) throw ConfigError("sweep: no *.grid scenes in " + opt.scenes_dir.string());
  const grid::PolarGrid grid = io::read_grid(files.front()).grid;
  const radar::ImagingOperator op = operator_for(g.config, grid);
  std::vector<radar::Heatmap> ys;
  std::vector<grid::PointSet> gts;
  for (std::size_t k = 0; k < files.size(); ++k) {
    const grid::SceneMask scene = io::read_grid(files[k]);
    if (!(scene.grid == grid)) throw ConfigError("sweep: scenes use different grids: " + files[k].string());
    ys.push_back(simulate_heatmap(scene, op, g.config.noise_sigma, scene_seed(g.seed, k)));
    gts.push_back(grid::mask_to_points(scene, g.config.io.gt_threshold));
  }
  const diffusion::Denoiser den = load_denoiser(opt.checkpoint, grid);
  solvers::PosteriorConfig base = g.config.posterior;
  base.seed = g.seed;
  const SweepSettings& s = g.config.sweep;
  const solvers::SweepReport rep =
      solvers::run_sweep(ys, op, den, den.codec(), den.schedule(), base, s.zeta, s.K, s.gamma, gts, g.threads);
  std::string csv = "zeta,K,gamma,mean_cd,argmin\n";
  for (std::size_t r = 0; r < rep.rows.size(); ++r) {
    const solvers::SweepRow& row = rep.rows[r];
    csv += io::format_double(row.zeta) + "," + std::to_string(row.K) + "," + io::format_double(row.gamma) + "," +
           io::format_double(row.mean_cd) + "," + (r == rep.argmin ? "1" : "0") + "\n";
  }
  io::write_file_atomic(opt.out_csv, csv);
  const solvers::SweepRow& best = rep.rows[rep.argmin];
  log << "sweep over " << files.size() << " scenes: best zeta=" << io::format_double(best.zeta) << " K=" << best.K
      << " gamma=" << io::format_double(best.gamma) << " mean_cd=" << io::format_double(best.mean_cd) << "\n";
}

void cmd_variance(const Globals& g, const VarianceOptions& opt, std::ostream& log) {
  require_file(opt.scene, "scene");
  const grid::SceneMask scene = io::read_grid(opt.scene);
  const radar::ImagingOperator op = operator_for(g.config, scene.grid);
  const radar::Heatmap y = simulate_heatmap(scene, op, g.config.noise_sigma, g.seed);
  const grid::PointSet gt = grid::mask_to_points(scene, g.config.io.gt_threshold);
  const diffusion::Denoiser den = load_denoiser(opt.checkpoint, scene.grid);

  std::vector<solvers::RegConfig> reg(2, g.config.regularized);
  reg[0].norm = solvers::RegNorm::kL1;
  reg[1].norm = solvers::RegNorm::kL2;
  if (!opt.fixed_init) {
    for (auto& r : reg) r.init = solvers::RegInit::kUniform;
  }
  const solvers::VarianceReport rep = solvers::run_variance_study(y, op, den, den.codec(), den.schedule(),
                                                                  g.config.posterior, opt.n_seeds, gt, reg);
  std::string csv = "method,seed,final_cd\n";
  for (const auto& r : rep.rows) csv += r.method + "," + std::to_string(r.seed) + "," + io::format_double(r.final_cd) + "\n";
  io::write_file_atomic(opt.out_csv, csv);
  if (opt.trace_dir) {
    ensure_dir(*opt.trace_dir);
    for (std::size_t s = 0; s < rep.traces.size(); ++s) {
      io::write_file_atomic(*opt.trace_dir / ("trace_seed" + std::to_string(s) + ".csv"), trace_csv(rep.traces[s]));
    }
  }
  for (const char* m : {"posterior", "l1", "l2"}) {
    const auto [mean, std] = rep.summary(m);
    log << m << ": mean_cd=" << io::format_double(mean) << " std_cd=" << io::format_double(std) << "\n";
  }
}

void cmd_render(const Globals& g, const fs::path& grid_file, const fs::path& out_image,
                std::optional<io::RenderMode> mode, std::ostream& log) {
  require_file(grid_file, "grid file");
  const radar::Heatmap hm = io::read_heatmap(grid_file);
  const grid::SceneMask mask = hm.mode == radar::HeatmapMode::kComplex
                                   ? grid::SceneMask{hm.grid, radar::to_magnitude(hm, false).magnitude}
                                   : grid::SceneMask{hm.grid, hm.magnitude};
  io::write_file_atomic(out_image, io::encode_pgm(mask, mode.value_or(g.config.io.render_mode)));
  log << "rendered " << grid_file.string() << " -> " << out_image.string() << "\n";
}

}  // namespace rinv::cli
