// SPDX-License-Identifier: Apache-2.0
#include "rinv/radar.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "rinv/errors.hpp"

namespace rinv::radar {
namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

cdouble phase(int k, double spacing_over_lambda, double cos_theta) {
  const double arg = -2.0 * std::numbers::pi * k * spacing_over_lambda * cos_theta;
  return {std::cos(arg), std::sin(arg)};
}

void require_grid(const grid::PolarGrid& a, const grid::PolarGrid& b, const char* what) {
  if (!(a == b)) throw ConfigError(std::string(what) + ": grid mismatch");
}

}  // namespace

AntennaArray make_array(int n_antennas, double spacing_over_lambda) {
  if (n_antennas < 2) throw ConfigError("array.n_antennas must be >= 2, got " + std::to_string(n_antennas));
  if (!(spacing_over_lambda > 0.0 && spacing_over_lambda <= 0.5)) {
    throw ConfigError("array.spacing_over_lambda must be in (0, 0.5]");
  }
  return {n_antennas, spacing_over_lambda};
}

AntennaArray array_preset(std::string_view name) {
  if (name == "1t4r") return make_array(4);
  if (name == "3t4r") return make_array(12);
  if (name == "cascade") return make_array(86);
  if (name == "ideal12t16r") return make_array(192);
  throw ConfigError("unknown array preset '" + std::string(name) + "'");
}

Eigen::VectorXcd steering_vector(double theta_deg, const AntennaArray& array) {
  const double c = std::cos(theta_deg * kDegToRad);
  Eigen::VectorXcd s(array.n_antennas);
  s(0) = 1.0;
  for (int k = 1; k < array.n_antennas; ++k) s(k) = phase(k, array.spacing_over_lambda, c);
  return s;
}

SteeringTensor make_steering(const grid::PolarGrid& grid, const AntennaArray& array) {
  SteeringTensor st{array, grid, Eigen::MatrixXcd(array.n_antennas, grid.n_az)};
  for (int i = 0; i < grid.n_az; ++i) {
    st.S.col(i) = steering_vector(array_angle_deg(grid.az_center_deg(i)), array);
  }
  return st;
}

ImagingOperator build_imaging_matrix(const grid::PolarGrid& grid, const AntennaArray& array) {
  // The matched-filter bank samples the same angles as the scene grid, so G = S.
  const SteeringTensor st = make_steering(grid, array);
  ImagingOperator op{grid, array, st.S.adjoint() * st.S};
  op.B.diagonal().setConstant(static_cast<double>(array.n_antennas));
  return op;
}

Eigen::MatrixXcd imaging_matrix_direct(const grid::PolarGrid& grid, const AntennaArray& array) {
  const int n = grid.n_az;
  Eigen::MatrixXcd B = Eigen::MatrixXcd::Zero(n, n);
  for (int a = 0; a < n; ++a) {
    const double ca = std::cos(array_angle_deg(grid.az_center_deg(a)) * kDegToRad);
    for (int i = 0; i < n; ++i) {
      const double ci = std::cos(array_angle_deg(grid.az_center_deg(i)) * kDegToRad);
      cdouble acc = 0.0;
      for (int k = 0; k < array.n_antennas; ++k) {
        acc += std::conj(phase(k, array.spacing_over_lambda, ca)) * phase(k, array.spacing_over_lambda, ci);
      }
      B(a, i) = acc;
    }
  }
  return B;
}

ImagingOperator unit_gain(const ImagingOperator& op) {
  ImagingOperator out = op;
  out.B /= static_cast<double>(op.array.n_antennas);
  return out;
}

Eigen::MatrixXcd apply(const Eigen::MatrixXcd& B, const Eigen::MatrixXd& x) {
  Eigen::MatrixXcd y(B.rows(), x.cols());
  y.real() = B.real() * x;
  y.imag() = B.imag() * x;
  return y;
}

Eigen::MatrixXcd apply_adjoint(const Eigen::MatrixXcd& B, const Eigen::MatrixXcd& y) { return B.adjoint() * y; }

Heatmap forward_measure(const grid::SceneMask& mask, const ImagingOperator& op, double noise_sigma,
                        std::uint64_t seed) {
  require_grid(mask.grid, op.grid, "forward_measure");
  Heatmap hm{mask.grid, HeatmapMode::kComplex, apply(op.B, mask.values), {}};
  if (noise_sigma > 0.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, noise_sigma / std::numbers::sqrt2);
    for (Eigen::Index k = 0; k < hm.complex_values.size(); ++k) {
      const double re = normal(rng);
      const double im = normal(rng);
      hm.complex_values.data()[k] += cdouble(re, im);
    }
  }
  return hm;
}

Heatmap to_magnitude(const Heatmap& hm, bool normalize) {
  if (hm.mode != HeatmapMode::kComplex) throw ConfigError("to_magnitude: expected a complex heatmap");
  Heatmap out{hm.grid, HeatmapMode::kMagnitude, {}, hm.complex_values.cwiseAbs()};
  if (normalize) {
    const double peak = out.magnitude.size() > 0 ? out.magnitude.maxCoeff() : 0.0;
    if (peak > 0.0) out.magnitude /= peak;
  }
  return out;
}

Eigen::MatrixXcd adjoint_apply(const Heatmap& hm, const ImagingOperator& op) {
  require_grid(hm.grid, op.grid, "adjoint_apply");
  if (hm.mode != HeatmapMode::kComplex) throw ConfigError("adjoint_apply: expected a complex heatmap");
  return apply_adjoint(op.B, hm.complex_values);
}

double FidelityTerm::value(const Eigen::MatrixXd& x, const Eigen::MatrixXcd& y_complex) const {
  return (gamma * y_complex - apply(B, x)).squaredNorm();
}

double FidelityTerm::value(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y_magnitude) const {
  const Eigen::MatrixXcd bx = apply(B, x);
  const Eigen::ArrayXXd m = (bx.cwiseAbs2().array() + eps_mag * eps_mag).sqrt();
  return (gamma * y_magnitude.array() - m).square().sum();
}

Eigen::MatrixXd FidelityTerm::gradient(const Eigen::MatrixXd& x, const Eigen::MatrixXcd& y_complex) const {
  const Eigen::MatrixXcd r = apply(B, x) - gamma * y_complex;
  return 2.0 * apply_adjoint(B, r).real();
}

Eigen::MatrixXd FidelityTerm::gradient(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y_magnitude) const {
  Eigen::MatrixXd g;
  value_and_gradient(x, y_magnitude, g);
  return g;
}

double FidelityTerm::value_and_gradient(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y_magnitude,
                                        Eigen::MatrixXd& grad) const {
  const Eigen::MatrixXcd bx = apply(B, x);
  const Eigen::ArrayXXd m = (bx.cwiseAbs2().array() + eps_mag * eps_mag).sqrt();
  const Eigen::ArrayXXd resid = gamma * y_magnitude.array() - m;
  // d m / d(Bx) direction, weighted by the residual.
  const Eigen::ArrayXXd w = resid / m;
  Eigen::MatrixXcd weighted(bx.rows(), bx.cols());
  weighted.real() = (bx.real().array() * w).matrix();
  weighted.imag() = (bx.imag().array() * w).matrix();
  grad = -2.0 * apply_adjoint(B, weighted).real();
  return resid.square().sum();
}

namespace {

void check_fidelity_args(const grid::SceneMask& mask, const Heatmap& y, const ImagingOperator& op,
                         FidelityMode mode, double eps_mag) {
  require_grid(mask.grid, op.grid, "fidelity_gradient");
  require_grid(y.grid, op.grid, "fidelity_gradient");
  const bool complex_y = y.mode == HeatmapMode::kComplex;
  if (complex_y != (mode == FidelityMode::kComplex)) {
    throw ConfigError("fidelity_gradient: heatmap mode does not match fidelity mode");
  }
  if (mode == FidelityMode::kMagnitude && !(eps_mag > 0.0)) {
    throw ConfigError("fidelity_gradient: eps_mag must be > 0 in magnitude mode");
  }
}

}  // namespace

Eigen::MatrixXd fidelity_gradient(const grid::SceneMask& mask, const Heatmap& y, double gamma,
                                  const ImagingOperator& op, FidelityMode mode, double eps_mag) {
  check_fidelity_args(mask, y, op, mode, eps_mag);
  const FidelityTerm term{op.B, mode, gamma, eps_mag};
  return mode == FidelityMode::kComplex ? term.gradient(mask.values, y.complex_values)
                                        : term.gradient(mask.values, y.magnitude);
}

double fidelity_value(const grid::SceneMask& mask, const Heatmap& y, double gamma, const ImagingOperator& op,
                      FidelityMode mode, double eps_mag) {
  check_fidelity_args(mask, y, op, mode, eps_mag);
  const FidelityTerm term{op.B, mode, gamma, eps_mag};
  return mode == FidelityMode::kComplex ? term.value(mask.values, y.complex_values)
                                        : term.value(mask.values, y.magnitude);
}

}  // namespace rinv::radar
