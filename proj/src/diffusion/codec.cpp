// SPDX-License-Identifier: Apache-2.0
#include "rinv/diffusion/codec.hpp"

#include <string>

#include "rinv/errors.hpp"

namespace rinv::diffusion {
namespace {

Eigen::MatrixXd block_sum(const Eigen::MatrixXd& x) {
  Eigen::MatrixXd out(x.rows() / 2, x.cols() / 2);
  for (Eigen::Index j = 0; j < out.cols(); ++j) {
    for (Eigen::Index i = 0; i < out.rows(); ++i) out(i, j) = x.block<2, 2>(2 * i, 2 * j).sum();
  }
  return out;
}

Eigen::MatrixXd replicate(const Eigen::MatrixXd& z) {
  Eigen::MatrixXd out(2 * z.rows(), 2 * z.cols());
  for (Eigen::Index j = 0; j < z.cols(); ++j) {
    for (Eigen::Index i = 0; i < z.rows(); ++i) out.block<2, 2>(2 * i, 2 * j).setConstant(z(i, j));
  }
  return out;
}

}  // namespace

CodecKind parse_codec(std::string_view name) {
  if (name == "identity") return CodecKind::kIdentity;
  if (name == "pool2") return CodecKind::kPool2;
  throw ConfigError("unknown codec '" + std::string(name) + "'");
}

std::string_view codec_name(CodecKind kind) { return kind == CodecKind::kPool2 ? "pool2" : "identity"; }

void Codec::check_shape(int data_rows, int data_cols) const {
  if (data_rows % factor() != 0 || data_cols % factor() != 0) {
    throw ConfigError("codec " + std::string(codec_name(kind_)) + " needs grid dimensions divisible by " +
                      std::to_string(factor()));
  }
}

Eigen::MatrixXd Codec::encode(const Eigen::MatrixXd& x) const {
  if (kind_ == CodecKind::kIdentity) return x;
  check_shape(static_cast<int>(x.rows()), static_cast<int>(x.cols()));
  return 0.25 * block_sum(x);
}

Eigen::MatrixXd Codec::decode(const Eigen::MatrixXd& z) const {
  if (kind_ == CodecKind::kIdentity) return z;
  return replicate(z);
}

Eigen::MatrixXd Codec::encode_adjoint(const Eigen::MatrixXd& z) const {
  if (kind_ == CodecKind::kIdentity) return z;
  return 0.25 * replicate(z);
}

Eigen::MatrixXd Codec::decode_adjoint(const Eigen::MatrixXd& x) const {
  if (kind_ == CodecKind::kIdentity) return x;
  check_shape(static_cast<int>(x.rows()), static_cast<int>(x.cols()));
  return block_sum(x);
}

}  // namespace rinv::diffusion
