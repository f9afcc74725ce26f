// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "rinv/diffusion/codec.hpp"
#include "rinv/diffusion/nn.hpp"
#include "rinv/diffusion/schedule.hpp"

namespace rinv::diffusion {

/// Noise prediction at a single latent, linearized for vector-Jacobian products.
class Linearization {
 public:
  virtual ~Linearization() = default;
  /// J^T v where J = d eps / d z at the linearization point.
  virtual Eigen::MatrixXd vjp(const Eigen::MatrixXd& v) const = 0;
};

/// eps(z, t): predicted noise of a latent at diffusion step t.
class NoisePredictor {
 public:
  virtual ~NoisePredictor() = default;
  virtual Eigen::MatrixXd predict(const Eigen::MatrixXd& z, int t) const = 0;
  /// Writes eps(z, t) into eps and returns the linearization at z.
  virtual std::unique_ptr<Linearization> linearize(const Eigen::MatrixXd& z, int t, Eigen::MatrixXd& eps) const = 0;
  /// False for a network that has neither been trained nor loaded.
  virtual bool ready() const { return true; }
};

enum class ArchKind { kUNet, kMlp };

/// What the raw network output F stands for. kEps: F is the noise itself.
/// kX0: F is a clean-latent estimate and eps = (z - sqrt(abar) F) / sqrt(1 - abar).
enum class OutputParam { kEps, kX0 };

/// eps = a z + b F at a given alpha_bar.
struct OutputMap {
  double a = 0.0;
  double b = 1.0;
};
OutputMap output_map(OutputParam param, double alpha_bar);

struct Architecture {
  ArchKind kind = ArchKind::kUNet;
  int h = 64;  ///< latent rows (azimuth)
  int w = 96;  ///< latent columns (range)
  std::array<int, 3> widths{8, 16, 32};
  int hidden = 1024;  ///< MLP only
  int temb_dim = 32;
  OutputParam output = OutputParam::kEps;

  /// The encoder-decoder needs both sides divisible by 4 and at least 8.
  static bool unet_fits(int h, int w) { return h % 4 == 0 && w % 4 == 0 && h >= 8 && w >= 8; }
  /// U-Net when it fits the latent, the MLP otherwise.
  static Architecture for_latent(int h, int w);
};

std::string describe(const Architecture& arch);
Architecture parse_architecture(std::string_view text);

/// Batched trainable network: latents are (h w) x n matrices, one column each.
class Network {
 public:
  struct Tape {
    virtual ~Tape() = default;
  };
  using Gradients = std::vector<nn::Mat>;

  virtual ~Network() = default;
  virtual const Architecture& architecture() const = 0;
  virtual nn::Mat forward(const nn::Mat& z, std::span<const float> steps, std::unique_ptr<Tape>* tape) const = 0;
  /// dL/dz for dL/d(output) = grad. Accumulates into grads when non-null.
  virtual nn::Mat backward(const Tape& tape, const nn::Mat& grad, Gradients* grads) const = 0;
  /// Parameters in a fixed order; names are unique.
  virtual std::vector<std::pair<std::string, nn::Mat*>> parameters() = 0;
  std::vector<std::pair<std::string, const nn::Mat*>> parameters() const;
  Gradients zero_gradients() const;
  std::size_t parameter_count() const;
};

std::unique_ptr<Network> make_network(const Architecture& arch, std::uint64_t seed);

/// A trained noise predictor together with the schedule and codec it was
/// trained with.
class Denoiser final : public NoisePredictor {
 public:
  Denoiser(std::unique_ptr<Network> net, NoiseSchedule schedule, Codec codec);

  Eigen::MatrixXd predict(const Eigen::MatrixXd& z, int t) const override;
  std::unique_ptr<Linearization> linearize(const Eigen::MatrixXd& z, int t, Eigen::MatrixXd& eps) const override;
  bool ready() const override { return trained_; }

  void mark_trained() { trained_ = true; }
  Network& network() { return *net_; }
  const Network& network() const { return *net_; }
  const NoiseSchedule& schedule() const { return schedule_; }
  const Codec& codec() const { return codec_; }

  /// RINVDNZ 1 checkpoint bytes.
  std::string encode() const;
  static Denoiser decode(std::string_view bytes);
  void save(const std::filesystem::path& path) const;
  static Denoiser load(const std::filesystem::path& path);

 private:
  std::unique_ptr<Network> net_;
  NoiseSchedule schedule_;
  Codec codec_;
  bool trained_ = false;
};

}  // namespace rinv::diffusion
