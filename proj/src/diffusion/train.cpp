// SPDX-License-Identifier: Apache-2.0
#include "rinv/diffusion/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "rinv/diffusion/sampler.hpp"
#include "rinv/errors.hpp"

namespace rinv::diffusion {
namespace {

class Adam {
 public:
  Adam(const Network& net, const TrainConfig& cfg) : cfg_(cfg), m_(net.zero_gradients()), v_(net.zero_gradients()) {}

  void step(Network& net, const Network::Gradients& grads) {
    ++k_;
    const double c1 = 1.0 - std::pow(cfg_.adam_beta1, k_);
    const double c2 = 1.0 - std::pow(cfg_.adam_beta2, k_);
    const auto b1 = static_cast<float>(cfg_.adam_beta1);
    const auto b2 = static_cast<float>(cfg_.adam_beta2);
    const auto lr = static_cast<float>(cfg_.lr * std::sqrt(c2) / c1);
    const auto eps = static_cast<float>(cfg_.adam_eps * std::sqrt(c2));
    auto params = net.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = b1 * m_[i] + (1.0f - b1) * grads[i];
      v_[i] = b2 * v_[i] + (1.0f - b2) * grads[i].cwiseAbs2();
      params[i].second->array() -= lr * m_[i].array() / (v_[i].array().sqrt() + eps);
    }
  }

 private:
  const TrainConfig& cfg_;
  Network::Gradients m_;
  Network::Gradients v_;
  int k_ = 0;
};

}  // namespace

TrainResult train_denoiser(std::span<const grid::SceneMask> scenes, const Codec& codec, const NoiseSchedule& sched,
                           const TrainConfig& cfg, const std::function<void(int, double)>& on_epoch) {
  if (scenes.empty()) throw ConfigError("train_denoiser: empty scene corpus");
  if (cfg.epochs < 1 || cfg.batch < 1 || !(cfg.lr > 0.0)) {
    throw ConfigError("train_denoiser: epochs, batch and lr must be positive");
  }
  const grid::PolarGrid& g = scenes.front().grid;
  codec.check_shape(g.n_az, g.n_rng);
  const int h = codec.latent_rows(g.n_az);
  const int w = codec.latent_cols(g.n_rng);
  const int P = h * w;

  std::vector<Latent> latents;
  latents.reserve(scenes.size());
  for (const auto& s : scenes) {
    if (!(s.grid == g)) throw ConfigError("train_denoiser: scenes must share one grid");
    latents.push_back(encode_mask(s, codec));
  }

  const Architecture arch = cfg.arch.value_or(Architecture::for_latent(h, w));
  if (arch.h != h || arch.w != w) throw ConfigError("train_denoiser: architecture does not match latent shape");
  Denoiser den(make_network(arch, cfg.seed), sched, codec);
  Network& net = den.network();
  Adam adam(net, cfg);

  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<int> pick_t(1, sched.T());
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::size_t> order(latents.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainResult result{std::move(den), {}};
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_sum = 0.0;
    std::size_t epoch_items = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
      const auto n = static_cast<int>(std::min<std::size_t>(cfg.batch, order.size() - start));
      nn::Mat z(P, n);
      nn::Mat target(P, n);
      std::vector<float> steps(n);
      std::vector<OutputMap> maps(n);
      for (int b = 0; b < n; ++b) {
        const int t = pick_t(rng);
        Latent eps(h, w);
        for (Eigen::Index k = 0; k < eps.size(); ++k) eps.data()[k] = normal(rng);
        const Latent zt = forward_diffuse(latents[order[start + b]], t, eps, sched);
        z.col(b) = Eigen::Map<const Eigen::VectorXd>(zt.data(), P).cast<float>();
        target.col(b) = Eigen::Map<const Eigen::VectorXd>(eps.data(), P).cast<float>();
        steps[b] = static_cast<float>(t);
        maps[b] = output_map(arch.output, sched.alpha_bar(t));
      }
      std::unique_ptr<Network::Tape> tape;
      nn::Mat diff = net.forward(z, steps, &tape);
      for (int b = 0; b < n; ++b) {
        diff.col(b) = static_cast<float>(maps[b].b) * diff.col(b) + static_cast<float>(maps[b].a) * z.col(b);
      }
      diff -= target;
      const double numel = static_cast<double>(P) * n;
      const double loss = diff.cast<double>().squaredNorm() / numel;
      if (!std::isfinite(loss)) {
        throw NumericalError("training loss is not finite at epoch " + std::to_string(epoch + 1));
      }
      Network::Gradients grads = net.zero_gradients();
      nn::Mat grad_out = static_cast<float>(2.0 / numel) * diff;
      for (int b = 0; b < n; ++b) grad_out.col(b) *= static_cast<float>(maps[b].b);
      net.backward(*tape, grad_out, &grads);
      adam.step(net, grads);
      epoch_sum += loss * n;
      epoch_items += n;
    }
    const double mean = epoch_sum / static_cast<double>(epoch_items);
    result.epoch_loss.push_back(mean);
    if (on_epoch) on_epoch(epoch + 1, mean);
  }
  result.denoiser.mark_trained();
  return result;
}

}  // namespace rinv::diffusion
