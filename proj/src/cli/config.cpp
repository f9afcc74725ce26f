// SPDX-License-Identifier: Apache-2.0
#include "rinv/cli/config.hpp"

#include <functional>
#include <set>
#include <sstream>

#include <json.hpp>

#include "rinv/errors.hpp"

namespace rinv::cli {
namespace {

using nlohmann::json;

/// Walks a JSON object, recording every problem instead of stopping at the first.
class Reader {
 public:
  Reader(std::vector<std::string>& errors, std::string path) : errors_(errors), path_(std::move(path)) {}

  /// Opens a section; returns false if `key` is absent or not an object.
  bool section(const json& parent, const std::string& key, const std::vector<std::string>& allowed,
               const std::function<void(Reader&, const json&)>& body) {
    if (!parent.contains(key)) return false;
    const json& node = parent.at(key);
    Reader child(errors_, join(key));
    if (!node.is_object()) {
      child.fail("expected an object");
      return false;
    }
    child.check_keys(node, allowed);
    body(child, node);
    return true;
  }

  void check_keys(const json& node, const std::vector<std::string>& allowed) {
    const std::set<std::string> known(allowed.begin(), allowed.end());
    for (const auto& [k, v] : node.items()) {
      if (!known.contains(k)) errors_.push_back(join(k) + ": unknown key");
    }
  }

  template <typename T>
  void get(const json& node, const std::string& key, T& out) {
    if (!node.contains(key)) return;
    try {
      const json& v = node.at(key);
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw std::invalid_argument("expected a boolean");
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) throw std::invalid_argument("expected an integer");
        if constexpr (std::is_unsigned_v<T>) {
          if (v.is_number_integer() && !v.is_number_unsigned()) throw std::invalid_argument("expected a nonnegative integer");
        }
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) throw std::invalid_argument("expected a number");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw std::invalid_argument("expected a string");
      }
      out = v.get<T>();
    } catch (const std::exception& e) {
      errors_.push_back(join(key) + ": " + e.what());
    }
  }

  template <typename T>
  void get_optional(const json& node, const std::string& key, std::optional<T>& out) {
    if (!node.contains(key) || node.at(key).is_null()) return;
    T value{};
    const std::size_t before = errors_.size();
    get(node, key, value);
    if (errors_.size() == before) out = value;
  }

  template <typename T>
  void get_list(const json& node, const std::string& key, std::vector<T>& out) {
    if (!node.contains(key)) return;
    const json& v = node.at(key);
    if (!v.is_array()) {
      errors_.push_back(join(key) + ": expected an array");
      return;
    }
    std::vector<T> values;
    const std::size_t before = errors_.size();
    for (std::size_t i = 0; i < v.size(); ++i) {
      T item{};
      Reader(errors_, join(key)).get(json{{std::to_string(i), v[i]}}, std::to_string(i), item);
      values.push_back(item);
    }
    if (errors_.size() == before) out = std::move(values);
  }

  /// A pair of integers written as [az, rng].
  void get_pair(const json& node, const std::string& key, int& first, int& second) {
    std::vector<int> v;
    get_list(node, key, v);
    if (!node.contains(key)) return;
    if (v.size() != 2) {
      if (node.at(key).is_array()) errors_.push_back(join(key) + ": expected [az, rng]");
      return;
    }
    first = v[0];
    second = v[1];
  }

  /// A string mapped through `parse`; parse errors are recorded under the key.
  template <typename T, typename Parse>
  void get_enum(const json& node, const std::string& key, T& out, Parse parse) {
    std::string name;
    const std::size_t before = errors_.size();
    get(node, key, name);
    if (!node.contains(key) || errors_.size() != before) return;
    try {
      out = parse(name);
    } catch (const std::exception& e) {
      errors_.push_back(join(key) + ": " + e.what());
    }
  }

  void fail(const std::string& message) { errors_.push_back(path_ + ": " + message); }

  /// Runs a validator and records its message under this section.
  template <typename Fn>
  void check(Fn&& fn) {
    try {
      fn();
    } catch (const ConfigError& e) {
      errors_.push_back(e.what());
    }
  }

 private:
  std::string join(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  std::vector<std::string>& errors_;
  std::string path_;
};

template <typename T>
T lookup(const std::string& name, std::initializer_list<std::pair<const char*, T>> table) {
  std::string options;
  for (const auto& [k, v] : table) {
    if (name == k) return v;
    options += options.empty() ? k : std::string(", ") + k;
  }
  throw ConfigError("unknown value '" + name + "' (expected one of: " + options + ")");
}

void read_grid(Reader& r, const json& node, RunConfig& c) {
  r.get(node, "n_az", c.grid.n_az);
  r.get(node, "n_rng", c.grid.n_rng);
  r.get(node, "az_min_deg", c.grid.az_min_deg);
  r.get(node, "az_max_deg", c.grid.az_max_deg);
  r.get(node, "rng_max_m", c.grid.rng_max_m);
  r.section(node, "scene",
            {"n_walls", "n_point_targets", "wall_length_min_m", "wall_length_max_m", "clutter_density"},
            [&](Reader& s, const json& n) {
              s.get(n, "n_walls", c.scene.n_walls);
              s.get(n, "n_point_targets", c.scene.n_point_targets);
              s.get(n, "wall_length_min_m", c.scene.wall_length_range_m.first);
              s.get(n, "wall_length_max_m", c.scene.wall_length_range_m.second);
              s.get(n, "clutter_density", c.scene.clutter_density);
            });
}

void read_array(Reader& r, const json& node, RunConfig& c) {
  r.get(node, "preset", c.array.preset);
  r.get_optional(node, "n_antennas", c.array.n_antennas);
  r.get(node, "spacing_over_lambda", c.array.spacing_over_lambda);
  r.get_enum(node, "gain", c.array.gain, [](const std::string& s) {
    return lookup<OperatorGain>(s, {{"unit", OperatorGain::kUnit}, {"raw", OperatorGain::kRaw}});
  });
}

void read_schedule(Reader& r, const json& node, RunConfig& c) {
  ScheduleSettings& s = c.schedule;
  r.get(node, "T", s.T);
  r.get(node, "beta_min", s.beta_min);
  r.get(node, "beta_max", s.beta_max);
  r.get_enum(node, "codec", s.codec, [](const std::string& v) { return diffusion::parse_codec(v); });
  r.section(node, "denoiser", {"kind", "widths", "hidden", "temb_dim", "output"}, [&](Reader& d, const json& n) {
    std::optional<std::string> kind;
    d.get_optional(n, "kind", kind);
    if (kind) {
      d.check([&] {
        s.denoiser.kind = lookup<diffusion::ArchKind>(
            *kind, {{"unet", diffusion::ArchKind::kUNet}, {"mlp", diffusion::ArchKind::kMlp}});
      });
    }
    std::vector<int> widths;
    d.get_list(n, "widths", widths);
    if (n.contains("widths")) {
      if (widths.size() == 3) {
        s.denoiser.widths = {widths[0], widths[1], widths[2]};
      } else if (n.at("widths").is_array()) {
        d.fail("widths: expected three channel counts");
      }
    }
    d.get(n, "hidden", s.denoiser.hidden);
    d.get_enum(n, "output", s.denoiser.output, [](const std::string& v) {
      return lookup<diffusion::OutputParam>(v, {{"eps", diffusion::OutputParam::kEps}, {"x0", diffusion::OutputParam::kX0}});
    });
    d.get(n, "temb_dim", s.denoiser.temb_dim);
  });
  r.section(node, "train", {"epochs", "batch", "lr"}, [&](Reader& t, const json& n) {
    t.get(n, "epochs", s.epochs);
    t.get(n, "batch", s.batch);
    t.get(n, "lr", s.lr);
  });
}

void read_posterior(Reader& r, const json& node, RunConfig& c) {
  solvers::PosteriorConfig& p = c.posterior;
  r.get(node, "zeta", p.zeta);
  r.get(node, "gamma", p.gamma);
  r.get(node, "K", p.K);
  r.get_optional(node, "lambda_diff", p.lambda_diff);
  r.get(node, "T_steps", p.T_steps);
  r.get_enum(node, "mode", p.mode, [](const std::string& s) {
    return lookup<diffusion::SamplerMode>(s,
                                          {{"ddim", diffusion::SamplerMode::kDdim},
                                           {"ancestral", diffusion::SamplerMode::kAncestral}});
  });
  r.get_enum(node, "grad_mode", p.grad_mode, [](const std::string& s) {
    return lookup<solvers::GradMode>(s,
                                     {{"exact", solvers::GradMode::kExact},
                                      {"passthrough", solvers::GradMode::kPassthrough}});
  });
  r.get_enum(node, "step_scale", p.step_scale, [](const std::string& s) {
    return lookup<solvers::StepScale>(s,
                                      {{"alpha_bar", solvers::StepScale::kAlphaBar},
                                       {"none", solvers::StepScale::kNone}});
  });
  r.get(node, "early_stop_frac", p.early_stop_frac);
  r.get(node, "eps_mag", p.eps_mag);
  r.section(node, "sweep", {"zeta", "K", "gamma"}, [&](Reader& s, const json& n) {
    s.get_list(n, "zeta", c.sweep.zeta);
    s.get_list(n, "K", c.sweep.K);
    s.get_list(n, "gamma", c.sweep.gamma);
  });
}

void read_regularized(Reader& r, const json& node, RunConfig& c) {
  r.get(node, "reg_weight", c.regularized.reg_weight);
  r.get(node, "step_size", c.regularized.step_size);
  r.get(node, "iters", c.regularized.iters);
  r.get(node, "eps_mag", c.regularized.eps_mag);
  r.get_enum(node, "init", c.regularized.init, [](const std::string& s) {
    return lookup<solvers::RegInit>(s,
                                    {{"heatmap", solvers::RegInit::kHeatmap},
                                     {"uniform", solvers::RegInit::kUniform},
                                     {"zero", solvers::RegInit::kZero}});
  });
}

void read_cfar(Reader& r, const json& node, RunConfig& c) {
  r.get_pair(node, "guard", c.cfar.guard_az, c.cfar.guard_rng);
  r.get_pair(node, "train", c.cfar.train_az, c.cfar.train_rng);
  r.get(node, "threshold_factor", c.cfar.threshold_factor);
}

void read_io(Reader& r, const json& node, RunConfig& c) {
  r.get(node, "threshold", c.io.threshold);
  r.get(node, "gt_threshold", c.io.gt_threshold);
  r.get_enum(node, "render_mode", c.io.render_mode, [](const std::string& s) {
    return lookup<io::RenderMode>(s, {{"gray", io::RenderMode::kGray}, {"log", io::RenderMode::kLog}});
  });
}

void validate(const RunConfig& c, std::vector<std::string>& errors) {
  Reader r(errors, "");
  r.check([&] { (void)grid::make_grid(c.grid.n_az, c.grid.n_rng, c.grid.az_min_deg, c.grid.az_max_deg, c.grid.rng_max_m); });
  r.check([&] { grid::validate(c.scene); });
  r.check([&] { (void)c.make_array(); });
  if (!(c.noise_sigma >= 0.0)) errors.push_back("noise.sigma must be >= 0");
  r.check([&] { (void)c.make_schedule(); });
  r.check([&] { c.make_codec().check_shape(c.grid.n_az, c.grid.n_rng); });
  const DenoiserSettings& d = c.schedule.denoiser;
  for (int w : d.widths) {
    if (w < 1) errors.push_back("schedule.denoiser.widths must be positive");
  }
  if (d.hidden < 1) errors.push_back("schedule.denoiser.hidden must be positive");
  if (d.temb_dim < 2 || d.temb_dim % 2 != 0) errors.push_back("schedule.denoiser.temb_dim must be even and >= 2");
  if (d.kind == diffusion::ArchKind::kUNet) {
    const diffusion::Codec codec = c.make_codec();
    if (!diffusion::Architecture::unet_fits(codec.latent_rows(c.grid.n_az), codec.latent_cols(c.grid.n_rng))) {
      errors.push_back("schedule.denoiser.kind: unet needs latent sides divisible by 4 and at least 8");
    }
  }
  if (c.schedule.epochs < 1) errors.push_back("schedule.train.epochs must be >= 1");
  if (c.schedule.batch < 1) errors.push_back("schedule.train.batch must be >= 1");
  if (!(c.schedule.lr > 0.0)) errors.push_back("schedule.train.lr must be > 0");
  r.check([&] { solvers::validate(c.posterior); });
  if (c.posterior.T_steps > c.schedule.T) errors.push_back("posterior.T_steps must not exceed schedule.T");
  if (c.posterior.T_steps != 0 && c.posterior.T_steps != c.schedule.T &&
      c.posterior.mode == diffusion::SamplerMode::kAncestral) {
    errors.push_back("posterior.T_steps: ancestral sampling visits every level; use mode ddim to stride");
  }
  if (c.sweep.zeta.empty() || c.sweep.K.empty() || c.sweep.gamma.empty()) {
    errors.push_back("posterior.sweep: grids must be nonempty");
  }
  for (double z : c.sweep.zeta) {
    if (!(z >= 0.0)) errors.push_back("posterior.sweep.zeta entries must be >= 0");
  }
  for (int k : c.sweep.K) {
    if (k < 0) errors.push_back("posterior.sweep.K entries must be >= 0");
  }
  for (double g : c.sweep.gamma) {
    if (!(g > 0.0)) errors.push_back("posterior.sweep.gamma entries must be > 0");
  }
  r.check([&] { solvers::validate(c.regularized); });
  r.check([&] { solvers::validate(c.cfar); });
  if (!(c.io.threshold >= 0.0 && c.io.threshold < 1.0)) errors.push_back("io.threshold must be in [0, 1)");
  if (!(c.io.gt_threshold >= 0.0 && c.io.gt_threshold < 1.0)) errors.push_back("io.gt_threshold must be in [0, 1)");
}

}  // namespace

radar::AntennaArray RunConfig::make_array() const {
  const int n = array.n_antennas ? *array.n_antennas : radar::array_preset(array.preset).n_antennas;
  return radar::make_array(n, array.spacing_over_lambda);
}

radar::ImagingOperator RunConfig::make_operator() const {
  radar::ImagingOperator op = radar::build_imaging_matrix(grid, make_array());
  return array.gain == OperatorGain::kUnit ? radar::unit_gain(op) : op;
}

diffusion::NoiseSchedule RunConfig::make_schedule() const {
  return diffusion::make_schedule(schedule.T, schedule.beta_min, schedule.beta_max);
}

diffusion::Codec RunConfig::make_codec() const { return diffusion::Codec(schedule.codec); }

diffusion::Architecture RunConfig::make_architecture() const {
  const diffusion::Codec codec = make_codec();
  diffusion::Architecture a =
      diffusion::Architecture::for_latent(codec.latent_rows(grid.n_az), codec.latent_cols(grid.n_rng));
  if (schedule.denoiser.kind) a.kind = *schedule.denoiser.kind;
  a.widths = schedule.denoiser.widths;
  a.hidden = schedule.denoiser.hidden;
  a.temb_dim = schedule.denoiser.temb_dim;
  a.output = schedule.denoiser.output;
  return a;
}

diffusion::TrainConfig RunConfig::make_train_config(std::uint64_t seed) const {
  diffusion::TrainConfig t;
  t.epochs = schedule.epochs;
  t.batch = schedule.batch;
  t.lr = schedule.lr;
  t.seed = seed;
  t.arch = make_architecture();
  return t;
}

RunConfig parse_config(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("config: top level must be an object");

  RunConfig c;
  std::vector<std::string> errors;
  Reader root(errors, "");
  root.check_keys(doc, {"grid", "array", "noise", "schedule", "posterior", "regularized", "cfar", "io"});
  root.section(doc, "grid", {"n_az", "n_rng", "az_min_deg", "az_max_deg", "rng_max_m", "scene"},
               [&](Reader& r, const json& n) { read_grid(r, n, c); });
  root.section(doc, "array", {"preset", "n_antennas", "spacing_over_lambda", "gain"},
               [&](Reader& r, const json& n) { read_array(r, n, c); });
  root.section(doc, "noise", {"sigma"}, [&](Reader& r, const json& n) { r.get(n, "sigma", c.noise_sigma); });
  root.section(doc, "schedule", {"T", "beta_min", "beta_max", "codec", "denoiser", "train"},
               [&](Reader& r, const json& n) { read_schedule(r, n, c); });
  root.section(doc, "posterior",
               {"zeta", "gamma", "K", "lambda_diff", "T_steps", "mode", "grad_mode", "step_scale", "early_stop_frac", "eps_mag",
                "sweep"},
               [&](Reader& r, const json& n) { read_posterior(r, n, c); });
  root.section(doc, "regularized", {"reg_weight", "step_size", "iters", "eps_mag", "init"},
               [&](Reader& r, const json& n) { read_regularized(r, n, c); });
  root.section(doc, "cfar", {"guard", "train", "threshold_factor"},
               [&](Reader& r, const json& n) { read_cfar(r, n, c); });
  root.section(doc, "io", {"threshold", "gt_threshold", "render_mode"},
               [&](Reader& r, const json& n) { read_io(r, n, c); });

  // Semantic checks only make sense once every field parsed.
  if (errors.empty()) validate(c, errors);
  if (!errors.empty()) {
    std::ostringstream msg;
    msg << "invalid config (" << errors.size() << (errors.size() == 1 ? " problem" : " problems") << "):";
    for (const auto& e : errors) msg << "\n  - " << e;
    throw ConfigError(msg.str());
  }
  return c;
}

RunConfig load_config(const std::filesystem::path& path) { return parse_config(io::read_file(path)); }

std::string config_json(const RunConfig& c) {
  const json kind = c.schedule.denoiser.kind ? json(c.schedule.denoiser.kind == diffusion::ArchKind::kUNet ? "unet" : "mlp")
                                             : json(nullptr);
  const json doc = {
      {"grid",
       {{"n_az", c.grid.n_az},
        {"n_rng", c.grid.n_rng},
        {"az_min_deg", c.grid.az_min_deg},
        {"az_max_deg", c.grid.az_max_deg},
        {"rng_max_m", c.grid.rng_max_m},
        {"scene",
         {{"n_walls", c.scene.n_walls},
          {"n_point_targets", c.scene.n_point_targets},
          {"wall_length_min_m", c.scene.wall_length_range_m.first},
          {"wall_length_max_m", c.scene.wall_length_range_m.second},
          {"clutter_density", c.scene.clutter_density}}}}},
      {"array",
       {{"preset", c.array.preset},
        {"n_antennas", c.array.n_antennas ? json(*c.array.n_antennas) : json(nullptr)},
        {"spacing_over_lambda", c.array.spacing_over_lambda},
        {"gain", c.array.gain == OperatorGain::kUnit ? "unit" : "raw"}}},
      {"noise", {{"sigma", c.noise_sigma}}},
      {"schedule",
       {{"T", c.schedule.T},
        {"beta_min", c.schedule.beta_min},
        {"beta_max", c.schedule.beta_max},
        {"codec", std::string(diffusion::codec_name(c.schedule.codec))},
        {"denoiser",
         {{"kind", kind},
          {"widths", c.schedule.denoiser.widths},
          {"hidden", c.schedule.denoiser.hidden},
          {"temb_dim", c.schedule.denoiser.temb_dim},
          {"output", c.schedule.denoiser.output == diffusion::OutputParam::kX0 ? "x0" : "eps"}}},
        {"train", {{"epochs", c.schedule.epochs}, {"batch", c.schedule.batch}, {"lr", c.schedule.lr}}}}},
      {"posterior",
       {{"zeta", c.posterior.zeta},
        {"gamma", c.posterior.gamma},
        {"K", c.posterior.K},
        {"lambda_diff", c.posterior.lambda_diff ? json(*c.posterior.lambda_diff) : json(nullptr)},
        {"T_steps", c.posterior.T_steps},
        {"mode", c.posterior.mode == diffusion::SamplerMode::kDdim ? "ddim" : "ancestral"},
        {"grad_mode", c.posterior.grad_mode == solvers::GradMode::kExact ? "exact" : "passthrough"},
        {"step_scale", c.posterior.step_scale == solvers::StepScale::kAlphaBar ? "alpha_bar" : "none"},
        {"early_stop_frac", c.posterior.early_stop_frac},
        {"eps_mag", c.posterior.eps_mag},
        {"sweep", {{"zeta", c.sweep.zeta}, {"K", c.sweep.K}, {"gamma", c.sweep.gamma}}}}},
      {"regularized",
       {{"reg_weight", c.regularized.reg_weight},
        {"step_size", c.regularized.step_size},
        {"iters", c.regularized.iters},
        {"eps_mag", c.regularized.eps_mag},
        {"init", c.regularized.init == solvers::RegInit::kHeatmap   ? "heatmap"
                 : c.regularized.init == solvers::RegInit::kUniform ? "uniform"
                                                                    : "zero"}}},
      {"cfar",
       {{"guard", {c.cfar.guard_az, c.cfar.guard_rng}},
        {"train", {c.cfar.train_az, c.cfar.train_rng}},
        {"threshold_factor", c.cfar.threshold_factor}}},
      {"io", {{"threshold", c.io.threshold}, {"gt_threshold", c.io.gt_threshold}, {"render_mode", c.io.render_mode == io::RenderMode::kGray ? "gray" : "log"}}},
  };
  return doc.dump(2) + "\n";
}

}  // namespace rinv::cli
