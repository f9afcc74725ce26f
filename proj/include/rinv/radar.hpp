// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <complex>
#include <cstdint>
#include <string>
#include <string_view>

#include <Eigen/Core>

#include "rinv/grid.hpp"

namespace rinv::radar {

using cdouble = std::complex<double>;

/// Uniform linear array. Only the element spacing in wavelengths enters the
/// phase model; amplitude is normalized to 1.
struct AntennaArray {
  int n_antennas = 12;
  double spacing_over_lambda = 0.5;
};

/// Validates N >= 2 and 0 < d/lambda <= 0.5.
AntennaArray make_array(int n_antennas, double spacing_over_lambda = 0.5);

/// Named presets: 1t4r (4), 3t4r (12), cascade (86), ideal12t16r (192).
AntennaArray array_preset(std::string_view name);

/// Array-axis angle theta of a forward-referenced azimuth phi: theta = 90 - phi.
inline double array_angle_deg(double az_deg) { return 90.0 - az_deg; }

/// Entry k = exp(-j 2 pi k (d/lambda) cos(theta)).
Eigen::VectorXcd steering_vector(double theta_deg, const AntennaArray& array);

/// N x n_az matrix of steering responses at the azimuth bin centers.
struct SteeringTensor {
  AntennaArray array;
  grid::PolarGrid grid;
  Eigen::MatrixXcd S;
};

SteeringTensor make_steering(const grid::PolarGrid& grid, const AntennaArray& array);

/// Per-range-column imaging operator Y[:, r] = B x[:, r], with B = G^H S the
/// matched-filter bank applied to the array response. Immutable once built.
struct ImagingOperator {
  grid::PolarGrid grid;
  AntennaArray array;
  Eigen::MatrixXcd B;
};

/// B[a, i] = sum_k conj(G[k, a]) S[k, i]; B[a, a] = N. Accepts N >= 1.
ImagingOperator build_imaging_matrix(const grid::PolarGrid& grid, const AntennaArray& array);

/// Reference construction by explicit triple loop.
Eigen::MatrixXcd imaging_matrix_direct(const grid::PolarGrid& grid, const AntennaArray& array);

/// The same operator scaled by 1/N so that a matched isolated target has unit
/// response. Used by the enhancement solvers against normalized heatmaps.
ImagingOperator unit_gain(const ImagingOperator& op);

enum class HeatmapMode { kComplex, kMagnitude };

/// Range-azimuth measurement. Exactly one of the value matrices is populated,
/// selected by mode.
struct Heatmap {
  grid::PolarGrid grid;
  HeatmapMode mode = HeatmapMode::kMagnitude;
  Eigen::MatrixXcd complex_values;
  Eigen::MatrixXd magnitude;
};

/// B X for a real scene matrix (n_az x n_rng).
Eigen::MatrixXcd apply(const Eigen::MatrixXcd& B, const Eigen::MatrixXd& x);

/// B^H Y.
Eigen::MatrixXcd apply_adjoint(const Eigen::MatrixXcd& B, const Eigen::MatrixXcd& y);

/// Y = A(x) + H with circular Gaussian H, per-component std noise_sigma/sqrt(2).
Heatmap forward_measure(const grid::SceneMask& mask, const ImagingOperator& op, double noise_sigma,
                        std::uint64_t seed);

/// Entrywise modulus; optionally divided by the maximum when it is positive.
Heatmap to_magnitude(const Heatmap& hm, bool normalize);

Eigen::MatrixXcd adjoint_apply(const Heatmap& hm, const ImagingOperator& op);

enum class FidelityMode { kComplex, kMagnitude };

/// Objective ||gamma Y - A(x)||^2 and its gradient in x, for raw matrices.
/// In magnitude mode the modulus is smoothed: m = sqrt(|Bx|^2 + eps^2).
struct FidelityTerm {
  const Eigen::MatrixXcd& B;
  FidelityMode mode;
  double gamma = 1.0;
  double eps_mag = 1e-6;

  double value(const Eigen::MatrixXd& x, const Eigen::MatrixXcd& y_complex) const;
  double value(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y_magnitude) const;
  Eigen::MatrixXd gradient(const Eigen::MatrixXd& x, const Eigen::MatrixXcd& y_complex) const;
  Eigen::MatrixXd gradient(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y_magnitude) const;
  /// Value and gradient in one pass (magnitude mode).
  double value_and_gradient(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y_magnitude,
                            Eigen::MatrixXd& grad) const;
};

/// Grid-checked gradient of ||gamma Y - A(x)||^2. The heatmap mode must match
/// the fidelity mode.
Eigen::MatrixXd fidelity_gradient(const grid::SceneMask& mask, const Heatmap& y, double gamma,
                                  const ImagingOperator& op, FidelityMode mode, double eps_mag = 1e-6);

double fidelity_value(const grid::SceneMask& mask, const Heatmap& y, double gamma, const ImagingOperator& op,
                      FidelityMode mode, double eps_mag = 1e-6);

}  // namespace rinv::radar
