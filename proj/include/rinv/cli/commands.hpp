// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "rinv/cli/config.hpp"

namespace rinv::cli {

namespace fs = std::filesystem;

/// Settings shared by every command.
struct Globals {
  RunConfig config;
  std::uint64_t seed = 0;
  int threads = 1;
};

/// Seed of scene `index` in a corpus generated from `seed`.
std::uint64_t scene_seed(std::uint64_t seed, std::size_t index);

/// Writes scene_%04d.grid files and manifest.csv (`file,seed`). With
/// `with_points`, each scene also gets a scene_%04d.csv point list.
void cmd_gen_scenes(const Globals& g, int n, const fs::path& out_dir, bool with_points, std::ostream& log);

struct SimulateOptions {
  fs::path scene;
  fs::path out;
  std::optional<std::string> array;  ///< preset name overriding the config
  bool complex = false;              ///< write the raw complex measurement instead
};

/// Forward model plus noise, normalized magnitude unless `complex`.
void cmd_simulate(const Globals& g, const SimulateOptions& opt, std::ostream& log);

/// Trains on every *.grid in scenes_dir; writes the checkpoint and an
/// `epoch,mean_loss` CSV.
void cmd_train(const Globals& g, const fs::path& scenes_dir, const fs::path& out_checkpoint, const fs::path& loss_csv,
               std::ostream& log);

enum class Method { kPosterior, kL1, kL2, kCfar };
Method parse_method(const std::string& name);

struct EnhanceOptions {
  fs::path heatmap;
  std::optional<fs::path> checkpoint;
  Method method = Method::kPosterior;
  fs::path out_mask;
  fs::path out_points;
  std::optional<fs::path> trace_csv;  ///< posterior only
};

void cmd_enhance(const Globals& g, const EnhanceOptions& opt, std::ostream& log);

/// Appends one `frame,cd,ucd,mhd,umhd,n_pred,n_gt` row per (pred, gt) pair,
/// writing the header when the file is new.
void cmd_eval(const std::vector<fs::path>& pred, const std::vector<fs::path>& gt, const fs::path& out_csv,
              std::ostream& log);

struct SweepOptions {
  fs::path scenes_dir;
  fs::path checkpoint;
  fs::path out_csv;
  int max_scenes = 0;  ///< 0 = all
};

/// Writes `zeta,K,gamma,mean_cd,argmin` with argmin = 1 on the best row.
void cmd_sweep(const Globals& g, const SweepOptions& opt, std::ostream& log);

struct VarianceOptions {
  fs::path scene;
  fs::path checkpoint;
  int n_seeds = 5;
  fs::path out_csv;
  std::optional<fs::path> trace_dir;  ///< per-seed `step,fidelity,cd` files
  bool fixed_init = false;            ///< keep the configured init instead of uniform random
};

/// Writes `method,seed,final_cd` rows for posterior, l1 and l2.
void cmd_variance(const Globals& g, const VarianceOptions& opt, std::ostream& log);

void cmd_render(const Globals& g, const fs::path& grid_file, const fs::path& out_image,
                std::optional<io::RenderMode> mode, std::ostream& log);

/// Noisy normalized magnitude heatmap of a scene with a given noise seed.
radar::Heatmap simulate_heatmap(const grid::SceneMask& scene, const radar::ImagingOperator& op, double noise_sigma,
                                std::uint64_t noise_seed);

/// Sorted *.grid files of a directory.
std::vector<fs::path> list_scenes(const fs::path& dir);

}  // namespace rinv::cli
