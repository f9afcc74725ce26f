// SPDX-License-Identifier: Apache-2.0
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "rinv/cli/commands.hpp"
#include "rinv/errors.hpp"
#include "rinv/runtime.hpp"

namespace {

using namespace rinv::cli;

int threads_from_env() {
  const char* env = std::getenv("RINV_THREADS");
  if (env == nullptr || *env == '\0') return 1;
  try {
    std::size_t used = 0;
    const int n = std::stoi(env, &used);
    if (used != std::string(env).size() || n < 1) throw std::invalid_argument(env);
    return n;
  } catch (const std::exception&) {
    throw rinv::ConfigError(std::string("RINV_THREADS must be a positive integer, got '") + env + "'");
  }
}

}  // namespace

int main(int argc, char** argv) {
  rinv::configure_allocator();
  CLI::App app{"Radar point enhancement with a diffusion prior"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "rinv 0.1.0");

  std::string config_path;
  std::uint64_t seed = 0;
  std::optional<int> threads;
  bool print_config = false;
  app.add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "Seed for scene generation, noise, training and sampling");
  app.add_option("--threads", threads, "Worker threads for sweeps (default: RINV_THREADS or 1)")
      ->check(CLI::PositiveNumber);
  app.add_flag("--print-config", print_config, "Print the effective configuration and exit");

  auto* gen = app.add_subcommand("gen-scenes", "Generate synthetic scenes");
  int n_scenes = 0;
  std::string out_dir;
  bool with_points = false;
  gen->add_option("-n,--count", n_scenes, "Number of scenes")->required()->check(CLI::NonNegativeNumber);
  gen->add_option("-o,--out", out_dir, "Output directory")->required();
  gen->add_flag("--points", with_points, "Also write a point CSV per scene");

  auto* sim = app.add_subcommand("simulate", "Render a radar heatmap from a scene");
  SimulateOptions sim_opt;
  std::string sim_scene, sim_out, sim_array;
  sim->add_option("scene", sim_scene, "Scene grid file")->required();
  sim->add_option("-o,--out", sim_out, "Output heatmap")->required();
  sim->add_option("--array", sim_array, "Array preset: 1t4r, 3t4r, cascade, ideal12t16r");
  sim->add_flag("--complex", sim_opt.complex, "Write the complex measurement");

  auto* train = app.add_subcommand("train", "Train the diffusion prior");
  std::string train_dir, train_ckpt, train_loss;
  train->add_option("scenes", train_dir, "Directory of scene grids")->required();
  train->add_option("-o,--out", train_ckpt, "Output checkpoint")->required();
  train->add_option("--loss-csv", train_loss, "Loss trace CSV (default: <out>.loss.csv)");

  auto* enh = app.add_subcommand("enhance", "Recover a point cloud from a heatmap");
  std::string enh_hm, enh_ckpt, enh_method = "posterior", enh_mask, enh_points, enh_trace;
  enh->add_option("heatmap", enh_hm, "Heatmap file")->required();
  enh->add_option("--checkpoint", enh_ckpt, "Denoiser checkpoint (posterior only)");
  enh->add_option("-m,--method", enh_method, "posterior, l1, l2 or cfar")
      ->check(CLI::IsMember({"posterior", "l1", "l2", "cfar"}));
  enh->add_option("--out-mask", enh_mask, "Output mask grid")->required();
  enh->add_option("--out-points", enh_points, "Output point CSV")->required();
  enh->add_option("--trace", enh_trace, "Per-step trace CSV (posterior only)");

  auto* ev = app.add_subcommand("eval", "Score predicted points against ground truth");
  std::vector<std::string> ev_pred, ev_gt;
  std::string ev_out;
  ev->add_option("--pred", ev_pred, "Predicted point CSVs")->required();
  ev->add_option("--gt", ev_gt, "Ground-truth point CSVs, one per prediction")->required();
  ev->add_option("-o,--out", ev_out, "Metrics CSV (rows are appended)")->required();

  auto* sw = app.add_subcommand("sweep", "Posterior hyperparameter sweep");
  SweepOptions sw_opt;
  std::string sw_dir, sw_ckpt, sw_out;
  sw->add_option("scenes", sw_dir, "Directory of scene grids")->required();
  sw->add_option("--checkpoint", sw_ckpt, "Denoiser checkpoint")->required();
  sw->add_option("-o,--out", sw_out, "Output CSV")->required();
  sw->add_option("--max-scenes", sw_opt.max_scenes, "Use at most this many scenes")->check(CLI::NonNegativeNumber);

  auto* var = app.add_subcommand("variance", "Repeat inference across seeds");
  VarianceOptions var_opt;
  std::string var_scene, var_ckpt, var_out, var_traces;
  var->add_option("scene", var_scene, "Scene grid file")->required();
  var->add_option("--checkpoint", var_ckpt, "Denoiser checkpoint")->required();
  var->add_option("--seeds", var_opt.n_seeds, "Number of seeds")->check(CLI::Range(2, 1000000));
  var->add_option("-o,--out", var_out, "Output CSV")->required();
  var->add_option("--trace-dir", var_traces, "Directory for per-seed trace CSVs");
  var->add_flag("--fixed-init", var_opt.fixed_init, "Keep the configured regularized-solver initialization");

  auto* ren = app.add_subcommand("render", "Render a grid file as a PGM image");
  std::string ren_in, ren_out, ren_mode;
  ren->add_option("grid", ren_in, "Grid or heatmap file")->required();
  ren->add_option("-o,--out", ren_out, "Output PGM")->required();
  ren->add_option("--mode", ren_mode, "gray or log")->check(CLI::IsMember({"gray", "log"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    Globals g;
    if (!config_path.empty()) g.config = load_config(config_path);
    g.seed = seed;
    g.threads = threads ? *threads : threads_from_env();
    if (print_config) {
      std::cout << config_json(g.config);
      return 0;
    }
    std::ostream& log = std::cout;

    if (*gen) {
      cmd_gen_scenes(g, n_scenes, out_dir, with_points, log);
    } else if (*sim) {
      sim_opt.scene = sim_scene;
      sim_opt.out = sim_out;
      if (!sim_array.empty()) sim_opt.array = sim_array;
      cmd_simulate(g, sim_opt, log);
    } else if (*train) {
      cmd_train(g, train_dir, train_ckpt, train_loss.empty() ? train_ckpt + ".loss.csv" : train_loss, log);
    } else if (*enh) {
      EnhanceOptions opt;
      opt.heatmap = enh_hm;
      if (!enh_ckpt.empty()) opt.checkpoint = enh_ckpt;
      opt.method = parse_method(enh_method);
      opt.out_mask = enh_mask;
      opt.out_points = enh_points;
      if (!enh_trace.empty()) opt.trace_csv = enh_trace;
      cmd_enhance(g, opt, log);
    } else if (*ev) {
      cmd_eval({ev_pred.begin(), ev_pred.end()}, {ev_gt.begin(), ev_gt.end()}, ev_out, log);
    } else if (*sw) {
      sw_opt.scenes_dir = sw_dir;
      sw_opt.checkpoint = sw_ckpt;
      sw_opt.out_csv = sw_out;
      cmd_sweep(g, sw_opt, log);
    } else if (*var) {
      var_opt.scene = var_scene;
      var_opt.checkpoint = var_ckpt;
      var_opt.out_csv = var_out;
      if (!var_traces.empty()) var_opt.trace_dir = var_traces;
      cmd_variance(g, var_opt, log);
    } else if (*ren) {
      std::optional<rinv::io::RenderMode> mode;
      if (ren_mode == "gray") mode = rinv::io::RenderMode::kGray;
      if (ren_mode == "log") mode = rinv::io::RenderMode::kLog;
      cmd_render(g, ren_in, ren_out, mode, log);
    }
    return 0;
  } catch (const rinv::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const rinv::IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return 3;
  } catch (const rinv::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
