// SPDX-License-Identifier: Apache-2.0
#pragma once

// Minimal float32 building blocks with hand-written backward passes.
//
// Feature maps are stored as (n * h * w) x channels column-major matrices:
// every channel is one contiguous plane holding all n images back to back,
// and each image is flattened column-major (row index fastest).

#include <cstdint>
#include <random>
#include <span>

#include <Eigen/Core>

namespace rinv::diffusion::nn {

using Mat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic>;

struct ImageShape {
  int n = 1;
  int h = 0;
  int w = 0;

  int pixels() const { return h * w; }
  Eigen::Index rows() const { return static_cast<Eigen::Index>(n) * h * w; }
  ImageShape half() const { return {n, h / 2, w / 2}; }
};

/// (n h w) x (9 C) patch matrix for a 3x3 kernel with zero padding. Column
/// tap * C + c holds channel c shifted by tap (dy, dx) in row-major tap order.
Mat im2col3x3(const Mat& x, ImageShape s);

/// Adjoint of im2col3x3: scatters patch gradients back onto the input planes.
Mat col2im3x3(const Mat& cols, ImageShape s, int channels);

Mat avg_pool2(const Mat& x, ImageShape s);
Mat avg_pool2_backward(const Mat& grad, ImageShape s_in);
Mat upsample2(const Mat& x, ImageShape s_small);
Mat upsample2_backward(const Mat& grad, ImageShape s_small);

/// x * sigmoid(x).
Mat silu(const Mat& pre);
Mat silu_backward(const Mat& pre, const Mat& grad);

/// Adds row b of per_item (n x C) to every pixel of image b.
void add_item_bias(Mat& x, const Mat& per_item, ImageShape s);
/// Per-image, per-channel sums of grad: the backward of add_item_bias.
Mat item_bias_backward(const Mat& grad, ImageShape s);

/// n x dim sinusoidal embedding of the (float) diffusion step.
Mat timestep_embedding(std::span<const float> steps, int dim);

/// y = x W + b with W stored (in x out).
struct Dense {
  Mat weight;
  Mat bias;

  Dense() = default;
  Dense(int in, int out, std::mt19937_64& rng, float gain = 1.0f);
  Mat forward(const Mat& x) const;
  /// Returns dL/dx; accumulates parameter gradients when gw/gb are non-null.
  Mat backward(const Mat& x, const Mat& grad, Mat* gw, Mat* gb) const;
};

/// 3x3 same-padding convolution, weight stored (9 Cin x Cout).
struct Conv3x3 {
  Mat weight;
  Mat bias;
  int in_channels = 0;

  Conv3x3() = default;
  Conv3x3(int in, int out, std::mt19937_64& rng, float gain = 1.0f);
  /// Stores the patch matrix in cols for the backward pass.
  Mat forward(const Mat& x, ImageShape s, Mat& cols) const;
  Mat backward(const Mat& cols, const Mat& grad, ImageShape s, Mat* gw, Mat* gb) const;
};

}  // namespace rinv::diffusion::nn
