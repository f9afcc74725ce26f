// SPDX-License-Identifier: Apache-2.0
#include "rinv/grid.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <string>

#include "rinv/errors.hpp"

namespace rinv::grid {
namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

}  // namespace

PolarGrid make_grid(int n_az, int n_rng, double az_min_deg, double az_max_deg, double rng_max_m) {
  if (n_az < 2) throw ConfigError("grid.n_az must be >= 2, got " + std::to_string(n_az));
  if (n_rng < 2) throw ConfigError("grid.n_rng must be >= 2, got " + std::to_string(n_rng));
  if (!(az_min_deg < az_max_deg)) {
    throw ConfigError("grid.az_min_deg must be < grid.az_max_deg");
  }
  if (!(rng_max_m > 0.0)) throw ConfigError("grid.rng_max_m must be > 0");
  return PolarGrid{n_az, n_rng, az_min_deg, az_max_deg, rng_max_m};
}

void validate(const SceneSpec& spec) {
  if (spec.n_walls < 0) throw ConfigError("scene.n_walls must be >= 0");
  if (spec.n_point_targets < 0) throw ConfigError("scene.n_point_targets must be >= 0");
  auto [lo, hi] = spec.wall_length_range_m;
  if (!(lo >= 0.0 && lo <= hi)) throw ConfigError("scene.wall_length_range_m must be ordered and >= 0");
  if (!(spec.clutter_density >= 0.0 && spec.clutter_density < 1.0)) {
    throw ConfigError("scene.clutter_density must be in [0, 1)");
  }
}

Point polar_to_cartesian(double az_deg, double rng_m) {
  const double phi = az_deg * kDegToRad;
  return {rng_m * std::sin(phi), rng_m * std::cos(phi)};
}

double cell_half_diagonal(const PolarGrid& g, int, int j) {
  const double dr = g.rng_step_m();
  const double arc = g.rng_center_m(j) * g.az_step_deg() * kDegToRad;
  return 0.5 * std::hypot(dr, arc);
}

double point_segment_distance(Point p, Point a, Point b) {
  const double ux = b.px_m - a.px_m;
  const double uy = b.py_m - a.py_m;
  const double len2 = ux * ux + uy * uy;
  double s = 0.0;
  if (len2 > 0.0) {
    s = ((p.px_m - a.px_m) * ux + (p.py_m - a.py_m) * uy) / len2;
    s = std::clamp(s, 0.0, 1.0);
  }
  return std::hypot(p.px_m - (a.px_m + s * ux), p.py_m - (a.py_m + s * uy));
}

void rasterize_segment(SceneMask& mask, Point a, Point b) {
  const PolarGrid& g = mask.grid;
  // Only range bins whose centers can be within reach of the segment.
  const double reach = cell_half_diagonal(g, 0, g.n_rng - 1);
  const double d_near = point_segment_distance({0.0, 0.0}, a, b) - reach;
  const double d_far = std::max(std::hypot(a.px_m, a.py_m), std::hypot(b.px_m, b.py_m)) + reach;
  const double dr = g.rng_step_m();
  const int j_lo = std::max(0, static_cast<int>(std::floor(d_near / dr - 0.5)));
  const int j_hi = std::min(g.n_rng - 1, static_cast<int>(std::ceil(d_far / dr - 0.5)));
  for (int j = j_lo; j <= j_hi; ++j) {
    for (int i = 0; i < g.n_az; ++i) {
      if (point_segment_distance(cell_center(g, i, j), a, b) <= cell_half_diagonal(g, i, j)) {
        mask.values(i, j) = 1.0;
      }
    }
  }
}

SceneMask generate_scene(const SceneSpec& spec, const PolarGrid& grid) {
  validate(spec);
  SceneMask mask = SceneMask::zeros(grid);
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const double az_span = grid.az_max_deg - grid.az_min_deg;
  for (int w = 0; w < spec.n_walls; ++w) {
    // Midpoint inside the inner part of the field of view.
    const double az = grid.az_min_deg + az_span * (0.1 + 0.8 * unit(rng));
    const double r = grid.rng_max_m * (0.05 + 0.8 * unit(rng));
    const double heading = std::numbers::pi * unit(rng);
    const auto [lo, hi] = spec.wall_length_range_m;
    const double half = 0.5 * (lo + (hi - lo) * unit(rng));
    const Point mid = polar_to_cartesian(az, r);
    const double hx = half * std::cos(heading);
    const double hy = half * std::sin(heading);
    rasterize_segment(mask, {mid.px_m - hx, mid.py_m - hy}, {mid.px_m + hx, mid.py_m + hy});
  }

  std::uniform_int_distribution<int> pick_az(0, grid.n_az - 1);
  std::uniform_int_distribution<int> pick_rng(0, grid.n_rng - 1);
  for (int p = 0; p < spec.n_point_targets; ++p) {
    const int i = pick_az(rng);
    const int j = pick_rng(rng);
    mask.values(i, j) = 1.0;
  }

  const auto n_clutter = static_cast<std::size_t>(std::llround(spec.clutter_density * grid.size()));
  if (n_clutter > 0) {
    std::vector<std::size_t> cells(grid.size());
    std::iota(cells.begin(), cells.end(), std::size_t{0});
    std::shuffle(cells.begin(), cells.end(), rng);
    for (std::size_t c = 0; c < n_clutter; ++c) mask.values.data()[cells[c]] = 1.0;
  }
  return mask;
}

PointSet mask_to_points(const SceneMask& mask, double threshold) {
  const PolarGrid& g = mask.grid;
  PointSet out;
  for (int i = 0; i < g.n_az; ++i) {
    for (int j = 0; j < g.n_rng; ++j) {
      if (mask.values(i, j) > threshold) out.push_back(cell_center(g, i, j));
    }
  }
  return out;
}

bool locate(const PolarGrid& grid, Point p, int& az_index, int& rng_index) {
  const double az = std::atan2(p.px_m, p.py_m) / kDegToRad;
  const double r = std::hypot(p.px_m, p.py_m);
  const double fi = std::floor((az - grid.az_min_deg) / grid.az_step_deg());
  const double fj = std::floor(r / grid.rng_step_m());
  if (!(fi >= 0 && fi < grid.n_az && fj >= 0 && fj < grid.n_rng)) return false;
  az_index = static_cast<int>(fi);
  rng_index = static_cast<int>(fj);
  return true;
}

Rasterized points_to_mask(const PointSet& points, const PolarGrid& grid) {
  Rasterized out{SceneMask::zeros(grid), 0};
  for (const Point& p : points) {
    int i = 0;
    int j = 0;
    if (locate(grid, p, i, j)) {
      out.mask.values(i, j) = 1.0;
    } else {
      ++out.dropped;
    }
  }
  return out;
}

SceneMask downsample_mask(const SceneMask& mask, int factor) {
  const PolarGrid& g = mask.grid;
  if (factor < 1 || g.n_az % factor != 0 || g.n_rng % factor != 0) {
    throw ConfigError("downsample factor " + std::to_string(factor) + " does not divide grid " +
                      std::to_string(g.n_az) + "x" + std::to_string(g.n_rng));
  }
  PolarGrid coarse = g;
  coarse.n_az /= factor;
  coarse.n_rng /= factor;
  SceneMask out = SceneMask::zeros(coarse);
  const double inv = 1.0 / (factor * factor);
  for (int j = 0; j < coarse.n_rng; ++j) {
    for (int i = 0; i < coarse.n_az; ++i) {
      out.values(i, j) = mask.values.block(i * factor, j * factor, factor, factor).sum() * inv;
    }
  }
  return out;
}

}  // namespace rinv::grid
