// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>

#include "rinv/grid.hpp"

namespace rinv::metrics {

/// Point-set similarity in meters. cd = ucd + umhd, mhd = max(ucd, umhd).
struct MetricsReport {
  double cd = 0.0;
  double ucd = 0.0;
  double mhd = 0.0;
  double umhd = 0.0;
  std::size_t n_pred = 0;
  std::size_t n_gt = 0;
};

/// Mean over a in `from` of the distance to its nearest neighbor in `to`.
/// Throws NumericalError when either set is empty.
double directed_mean_nn(const grid::PointSet& from, const grid::PointSet& to);

/// Quadratic double-loop reference for directed_mean_nn.
double directed_mean_nn_brute(const grid::PointSet& from, const grid::PointSet& to);

MetricsReport compute_metrics(const grid::PointSet& pred, const grid::PointSet& gt);

}  // namespace rinv::metrics
