// SPDX-License-Identifier: Apache-2.0
#include "rinv/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "rinv/errors.hpp"

namespace rinv::metrics {
namespace {

void require_nonempty(const grid::PointSet& from, const grid::PointSet& to) {
  if (from.empty() || to.empty()) {
    throw NumericalError("metric undefined: empty point set (n_from=" + std::to_string(from.size()) +
                         ", n_to=" + std::to_string(to.size()) + ")");
  }
}

}  // namespace

double directed_mean_nn_brute(const grid::PointSet& from, const grid::PointSet& to) {
  require_nonempty(from, to);
  double total = 0.0;
  for (const auto& a : from) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& b : to) best = std::min(best, std::hypot(a.px_m - b.px_m, a.py_m - b.py_m));
    total += best;
  }
  return total / static_cast<double>(from.size());
}

double directed_mean_nn(const grid::PointSet& from, const grid::PointSet& to) {
  require_nonempty(from, to);
  // Sweep over targets sorted by px; stop once the px gap alone exceeds the best.
  std::vector<grid::Point> sorted(to.begin(), to.end());
  std::sort(sorted.begin(), sorted.end(), [](const auto& l, const auto& r) { return l.px_m < r.px_m; });
  double total = 0.0;
  for (const auto& a : from) {
    const auto start = std::lower_bound(sorted.begin(), sorted.end(), a.px_m,
                                        [](const grid::Point& p, double x) { return p.px_m < x; });
    double best2 = std::numeric_limits<double>::infinity();
    for (auto it = start; it != sorted.end(); ++it) {
      const double dx = it->px_m - a.px_m;
      if (dx * dx > best2) break;
      const double dy = it->py_m - a.py_m;
      best2 = std::min(best2, dx * dx + dy * dy);
    }
    for (auto it = start; it != sorted.begin();) {
      --it;
      const double dx = a.px_m - it->px_m;
      if (dx * dx > best2) break;
      const double dy = it->py_m - a.py_m;
      best2 = std::min(best2, dx * dx + dy * dy);
    }
    total += std::sqrt(best2);
  }
  return total / static_cast<double>(from.size());
}

MetricsReport compute_metrics(const grid::PointSet& pred, const grid::PointSet& gt) {
  MetricsReport r;
  r.n_pred = pred.size();
  r.n_gt = gt.size();
  const double d_pg = directed_mean_nn(pred, gt);
  const double d_gp = directed_mean_nn(gt, pred);
  r.ucd = d_pg;
  r.umhd = d_gp;
  r.cd = d_pg + d_gp;
  r.mhd = std::max(d_pg, d_gp);
  return r;
}

}  // namespace rinv::metrics
