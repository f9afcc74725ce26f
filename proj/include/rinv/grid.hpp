// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace rinv::grid {

/// Polar bird's-eye-view sensing space. Azimuth phi is measured from the
/// forward axis; range starts at 0.
struct PolarGrid {
  int n_az = 64;
  int n_rng = 96;
  double az_min_deg = -90.0;
  double az_max_deg = 90.0;
  double rng_max_m = 103.0;

  double az_step_deg() const { return (az_max_deg - az_min_deg) / n_az; }
  double rng_step_m() const { return rng_max_m / n_rng; }
  double az_center_deg(int i) const { return az_min_deg + (i + 0.5) * az_step_deg(); }
  double rng_center_m(int j) const { return (j + 0.5) * rng_step_m(); }
  std::size_t size() const { return static_cast<std::size_t>(n_az) * n_rng; }

  bool operator==(const PolarGrid&) const = default;
};

/// Validating constructor. Throws ConfigError naming the offending field.
PolarGrid make_grid(int n_az, int n_rng, double az_min_deg, double az_max_deg, double rng_max_m);

/// Occupancy per polar cell, rows = azimuth bins, columns = range bins.
struct SceneMask {
  PolarGrid grid;
  Eigen::MatrixXd values;

  static SceneMask zeros(const PolarGrid& g) { return {g, Eigen::MatrixXd::Zero(g.n_az, g.n_rng)}; }
};

struct Point {
  double px_m = 0.0;
  double py_m = 0.0;

  bool operator==(const Point&) const = default;
};

/// Cartesian points, px = r sin(phi), py = r cos(phi).
using PointSet = std::vector<Point>;

struct SceneSpec {
  std::uint64_t seed = 0;
  int n_walls = 3;
  int n_point_targets = 4;
  std::pair<double, double> wall_length_range_m{4.0, 20.0};
  double clutter_density = 0.0;
};

void validate(const SceneSpec& spec);

/// Cartesian point of a polar coordinate (degrees, meters).
Point polar_to_cartesian(double az_deg, double rng_m);

/// Center of cell (i, j) in Cartesian coordinates.
inline Point cell_center(const PolarGrid& g, int i, int j) {
  return polar_to_cartesian(g.az_center_deg(i), g.rng_center_m(j));
}

/// Half the diagonal of cell (i, j): sqrt(dr^2 + (r dphi)^2) / 2.
double cell_half_diagonal(const PolarGrid& g, int i, int j);

/// Euclidean distance from p to the segment [a, b].
double point_segment_distance(Point p, Point a, Point b);

/// Marks every cell whose center lies within half a cell diagonal of [a, b].
void rasterize_segment(SceneMask& mask, Point a, Point b);

/// Synthetic LiDAR-like binary scene. Pure function of (spec, grid).
SceneMask generate_scene(const SceneSpec& spec, const PolarGrid& grid);

/// One point per cell above threshold, azimuth-major order.
PointSet mask_to_points(const SceneMask& mask, double threshold);

struct Rasterized {
  SceneMask mask;
  std::size_t dropped = 0;
};

/// Cell containing each point; points outside the grid are dropped and counted.
Rasterized points_to_mask(const PointSet& points, const PolarGrid& grid);

/// Cell indices (az, rng) of a Cartesian point, or false when outside the grid.
bool locate(const PolarGrid& grid, Point p, int& az_index, int& rng_index);

/// Block average over factor x factor blocks, same physical extents.
SceneMask downsample_mask(const SceneMask& mask, int factor);

}  // namespace rinv::grid
