// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <cmath>
#include <random>

#include <Eigen/Core>

#include "rinv/grid.hpp"

namespace testing {

inline Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed, double lo = -1.0,
                                     double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = u(rng);
  return m;
}

inline Eigen::MatrixXcd random_complex(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  const Eigen::MatrixXd re = random_matrix(rows, cols, seed);
  const Eigen::MatrixXd im = random_matrix(rows, cols, seed + 1000003);
  Eigen::MatrixXcd m(rows, cols);
  m.real() = re;
  m.imag() = im;
  return m;
}

inline rinv::grid::SceneMask random_mask(const rinv::grid::PolarGrid& g, std::uint64_t seed, double density = 0.05) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution on(density);
  rinv::grid::SceneMask m = rinv::grid::SceneMask::zeros(g);
  for (Eigen::Index k = 0; k < m.values.size(); ++k) m.values.data()[k] = on(rng) ? 1.0 : 0.0;
  return m;
}

}  // namespace testing

namespace testing {

/// Half-power (-3 dB) width in degrees of a magnitude profile around its
/// peak, interpolating the crossings linearly between bin centers.
inline double half_power_width_deg(const Eigen::VectorXd& mag, const rinv::grid::PolarGrid& g) {
  Eigen::Index peak = 0;
  const double top = mag.maxCoeff(&peak);
  const double level = top / std::sqrt(2.0);
  auto crossing = [&](int dir) {
    Eigen::Index i = peak;
    while (i + dir >= 0 && i + dir < mag.size() && mag(i + dir) >= level) i += dir;
    if (i + dir < 0 || i + dir >= mag.size()) return g.az_center_deg(static_cast<int>(i));
    const double a = mag(i);
    const double b = mag(i + dir);
    const double frac = (a - level) / (a - b);
    return g.az_center_deg(static_cast<int>(i)) + dir * frac * g.az_step_deg();
  };
  return crossing(+1) - crossing(-1);
}

/// Local maxima (a flat top counts once) whose value is at least `rel` times
/// the global maximum.
inline int count_peaks(const Eigen::VectorXd& mag, double rel) {
  const double floor_level = rel * mag.maxCoeff();
  int n = 0;
  Eigen::Index i = 0;
  while (i < mag.size()) {
    Eigen::Index end = i;
    while (end + 1 < mag.size() && mag(end + 1) == mag(i)) ++end;
    const bool left = i == 0 || mag(i) > mag(i - 1);
    const bool right = end + 1 == mag.size() || mag(i) > mag(end + 1);
    if (left && right && mag(i) >= floor_level) ++n;
    i = end + 1;
  }
  return n;
}

}  // namespace testing
