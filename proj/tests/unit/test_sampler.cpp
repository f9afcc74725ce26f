// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "rinv/diffusion/sampler.hpp"
#include "rinv/errors.hpp"

using namespace rinv;
using namespace rinv::diffusion;

namespace {

class ConstantEps final : public NoisePredictor {
 public:
  explicit ConstantEps(Eigen::MatrixXd eps) : eps_(std::move(eps)) {}
  Eigen::MatrixXd predict(const Eigen::MatrixXd&, int) const override { return eps_; }
  std::unique_ptr<Linearization> linearize(const Eigen::MatrixXd& z, int t, Eigen::MatrixXd& eps) const override {
    eps = predict(z, t);
    return nullptr;
  }

 private:
  Eigen::MatrixXd eps_;
};

// eps = c * z, a smooth stub with a non-trivial dependence on the state.
class ScaledEps final : public NoisePredictor {
 public:
  explicit ScaledEps(double c) : c_(c) {}
  Eigen::MatrixXd predict(const Eigen::MatrixXd& z, int) const override { return c_ * z; }
  std::unique_ptr<Linearization> linearize(const Eigen::MatrixXd& z, int t, Eigen::MatrixXd& eps) const override {
    eps = predict(z, t);
    return nullptr;
  }

 private:
  double c_;
};

Eigen::MatrixXd scalar(double v) { return Eigen::MatrixXd::Constant(1, 1, v); }

// betas of 0.01 at step t with alpha_bar_t = 0.5: 69 equal smaller steps first.
NoiseSchedule hand_schedule() {
  const double before = 0.5 / 0.99;
  const double b = 1.0 - std::pow(before, 1.0 / 69.0);
  std::vector<double> betas(69, b);
  betas.push_back(0.01);
  return NoiseSchedule(betas);
}

}  // namespace

TEST_CASE("forward_diffuse hand cases") {
  const NoiseSchedule s = make_schedule(2, 0.1, 0.2);
  CHECK(forward_diffuse(scalar(0.7), 0, scalar(5.0), s)(0) == 0.7);

  // alpha_bar = 0.25 at t = 2 of (0.5, 0.5).
  const NoiseSchedule q({0.5, 0.5});
  CHECK(forward_diffuse(scalar(1.0), 2, scalar(0.0), q)(0) == doctest::Approx(0.5).epsilon(1e-15));

  // alpha_bar = 0.19 = 0.95 * 0.2 needs a decreasing beta; use 0.1 * 1.9 instead.
  const NoiseSchedule r({0.05, 0.8});
  REQUIRE(r.alpha_bar(2) == doctest::Approx(0.19).epsilon(1e-15));
  CHECK(std::abs(forward_diffuse(scalar(0.0), 2, scalar(2.0), r)(0) - 1.8) < 1e-12);
}

TEST_CASE("tweedie hand cases") {
  const NoiseSchedule q({0.5, 0.5});
  CHECK(std::abs(tweedie_z0(scalar(1.0), scalar(0.5), 2, q)(0) - (1.0 - 0.5 * std::sqrt(0.75)) / 0.5) < 1e-12);
  CHECK(std::abs(tweedie_z0(scalar(1.0), scalar(0.5), 2, q)(0) - 1.1339745962155614) < 1e-12);
  CHECK(tweedie_z0(scalar(0.3), scalar(0.0), 2, q)(0) == doctest::Approx(0.6));
}

TEST_CASE("tweedie inverts forward_diffuse with a perfect stub") {
  const NoiseSchedule s = default_schedule();
  const Eigen::MatrixXd z0 = testing::random_matrix(6, 9, 1);
  const Eigen::MatrixXd eta = testing::random_matrix(6, 9, 2);
  const ConstantEps stub(eta);
  for (int t : {1, 17, 100, 200}) {
    const Eigen::MatrixXd zt = forward_diffuse(z0, t, eta, s);
    const double tol = t == 200 ? 1e-9 : 1e-12;
    CHECK((tweedie_z0(zt, t, stub, s) - z0).cwiseAbs().maxCoeff() < tol);
  }
}

TEST_CASE("ancestral reverse mean hand value") {
  const NoiseSchedule s = hand_schedule();
  REQUIRE(s.alpha(70) == doctest::Approx(0.99).epsilon(1e-15));
  REQUIRE(std::abs(s.alpha_bar(70) - 0.5) < 1e-13);
  const double got = reverse_mean(scalar(1.0), scalar(0.2), 70, 69, s, SamplerMode::kAncestral)(0);
  CHECK(std::abs(got - (1.0 - 0.01 * 0.2 / std::sqrt(0.5)) / std::sqrt(0.99)) < 1e-9);
  CHECK(std::abs(got - 1.0021951390411372) < 1e-9);

  const ConstantEps stub(scalar(0.2));
  CHECK(reverse_step(scalar(1.0), 70, stub, s, SamplerMode::kAncestral, scalar(0.0))(0) == got);
  const double noisy = reverse_step(scalar(1.0), 70, stub, s, SamplerMode::kAncestral, scalar(1.0))(0);
  CHECK(noisy == doctest::Approx(got + std::sqrt(0.01)));
}

TEST_CASE("ancestral step omits noise at t = 1") {
  const NoiseSchedule s = default_schedule();
  const ConstantEps stub(scalar(0.1));
  const double a = reverse_step(scalar(0.4), 1, stub, s, SamplerMode::kAncestral, scalar(0.0))(0);
  const double b = reverse_step(scalar(0.4), 1, stub, s, SamplerMode::kAncestral, scalar(3.0))(0);
  CHECK(a == b);
}

TEST_CASE("ddim is exact for a perfect stub") {
  const NoiseSchedule s = default_schedule();
  const Eigen::MatrixXd z0 = testing::random_matrix(4, 4, 3);
  const Eigen::MatrixXd eta = testing::random_matrix(4, 4, 4);
  const ConstantEps stub(eta);
  for (auto [t, tp] : {std::pair{200, 199}, {120, 60}, {5, 0}}) {
    const Eigen::MatrixXd zt = forward_diffuse(z0, t, eta, s);
    const Eigen::MatrixXd expect = forward_diffuse(z0, tp, eta, s);
    const Eigen::MatrixXd got = reverse_mean(zt, stub.predict(zt, t), t, tp, s, SamplerMode::kDdim);
    CHECK((got - expect).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((reverse_step(zt, t, stub, s, SamplerMode::kDdim, eta) - forward_diffuse(z0, t - 1, eta, s))
              .cwiseAbs()
              .maxCoeff() < 1e-9);
  }
}

TEST_CASE("step levels") {
  const NoiseSchedule s = make_schedule(10, 0.01, 0.2);
  CHECK(step_levels(s, 0, SamplerMode::kAncestral) == std::vector<int>{10, 9, 8, 7, 6, 5, 4, 3, 2, 1});
  CHECK(step_levels(s, 4, SamplerMode::kDdim) == std::vector<int>{10, 8, 5, 3});
  CHECK(step_levels(s, 1, SamplerMode::kDdim) == std::vector<int>{10});
  CHECK_THROWS_AS(step_levels(s, 4, SamplerMode::kAncestral), ConfigError);
  CHECK_THROWS_AS(step_levels(s, 11, SamplerMode::kDdim), ConfigError);
}

TEST_CASE("mask encode and decode") {
  const grid::PolarGrid g = grid::make_grid(4, 6, -90, 90, 10);
  const grid::SceneMask m = testing::random_mask(g, 5, 0.4);
  const Latent z = encode_mask(m, Codec());
  CHECK(((z.array() == 1.0) || (z.array() == -1.0)).all());
  CHECK(decode_to_mask(z, Codec(), g).values == m.values);
  const grid::SceneMask clamped = decode_to_mask(Latent::Constant(4, 6, 3.0), Codec(), g);
  CHECK((clamped.values.array() == 1.0).all());
  CHECK_THROWS_AS(decode_to_mask(Latent::Zero(2, 6), Codec(), g), ConfigError);
}

TEST_CASE("unconditional sampling determinism") {
  const grid::PolarGrid g = grid::make_grid(8, 12, -90, 90, 10);
  const NoiseSchedule s = make_schedule(30, 1e-3, 0.3);
  const ScaledEps stub(0.3);
  for (SamplerMode mode : {SamplerMode::kDdim, SamplerMode::kAncestral}) {
    const grid::SceneMask a = sample_unconditional(stub, s, Codec(), g, 11, mode);
    const grid::SceneMask b = sample_unconditional(stub, s, Codec(), g, 11, mode);
    CHECK(a.values == b.values);
    CHECK(sample_unconditional(stub, s, Codec(), g, 12, mode).values != a.values);
  }
  const grid::SceneMask strided = sample_unconditional(stub, s, Codec(CodecKind::kPool2), g, 3, SamplerMode::kDdim, 7);
  CHECK(strided.grid == g);
}

TEST_CASE("denoise loss") {
  const NoiseSchedule s = default_schedule();
  std::vector<Latent> batch = {testing::random_matrix(4, 5, 1), testing::random_matrix(4, 5, 2)};
  const ScaledEps stub(0.0);
  // A zero predictor leaves the loss at the mean squared noise.
  const double l = denoise_loss(stub, batch, s, 7);
  CHECK(l > 0.5);
  CHECK(l < 1.6);
  CHECK(denoise_loss(stub, batch, s, 7) == l);

  // Reordering items together with their seeds leaves the loss unchanged.
  const std::uint64_t seeds[] = {item_seed(7, 0), item_seed(7, 1)};
  const std::uint64_t swapped_seeds[] = {seeds[1], seeds[0]};
  std::vector<Latent> swapped = {batch[1], batch[0]};
  CHECK(denoise_loss(stub, swapped, s, swapped_seeds) == doctest::Approx(l).epsilon(1e-15));
  CHECK_THROWS_AS(denoise_loss(stub, std::span<const Latent>{}, s, 7), ConfigError);
  CHECK(item_seed(1, 0) != item_seed(1, 1));
}

TEST_CASE("gaussian_like moments") {
  std::mt19937_64 rng(5);
  const Latent z = gaussian_like(200, 100, rng);
  CHECK(std::abs(z.mean()) < 0.01);
  CHECK(std::abs(z.squaredNorm() / z.size() - 1.0) < 0.03);
}
