// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string_view>

#include <Eigen/Core>

namespace rinv::diffusion {

enum class CodecKind { kIdentity, kPool2 };

CodecKind parse_codec(std::string_view name);
std::string_view codec_name(CodecKind kind);

/// Fixed linear encoder/decoder between mask space and the latent space the
/// prior lives in. pool2 encodes by 2x2 block averaging and decodes by
/// replicating each latent value over its block, so encode(decode(z)) = z.
class Codec {
 public:
  explicit Codec(CodecKind kind = CodecKind::kIdentity) : kind_(kind) {}

  CodecKind kind() const { return kind_; }
  int factor() const { return kind_ == CodecKind::kPool2 ? 2 : 1; }
  int latent_rows(int data_rows) const { return data_rows / factor(); }
  int latent_cols(int data_cols) const { return data_cols / factor(); }
  /// Throws ConfigError when the data shape is not divisible by the factor.
  void check_shape(int data_rows, int data_cols) const;

  Eigen::MatrixXd encode(const Eigen::MatrixXd& x) const;
  Eigen::MatrixXd decode(const Eigen::MatrixXd& z) const;
  Eigen::MatrixXd encode_adjoint(const Eigen::MatrixXd& z) const;
  Eigen::MatrixXd decode_adjoint(const Eigen::MatrixXd& x) const;

 private:
  CodecKind kind_;
};

}  // namespace rinv::diffusion
