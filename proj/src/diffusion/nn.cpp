// SPDX-License-Identifier: Apache-2.0
#include "rinv/diffusion/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace rinv::diffusion::nn {
namespace {

struct Run {
  int lo;
  int hi;
};

// Valid destination indices along one axis for a shift of d.
Run valid(int extent, int d) { return {std::max(0, -d), std::min(extent, extent - d)}; }

Mat normal_init(int rows, int cols, float stddev, std::mt19937_64& rng) {
  std::normal_distribution<float> dist(0.0f, stddev);
  Mat m(rows, cols);
  for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = dist(rng);
  return m;
}

}  // namespace

Mat im2col3x3(const Mat& x, ImageShape s) {
  const auto C = static_cast<int>(x.cols());
  const int P = s.pixels();
  Mat cols(s.rows(), 9 * C);
  for (int tap = 0; tap < 9; ++tap) {
    const int dy = tap / 3 - 1;
    const int dx = tap % 3 - 1;
    const Run ri = valid(s.h, dy);
    const Run rj = valid(s.w, dx);
    const auto len = static_cast<std::size_t>(std::max(0, ri.hi - ri.lo));
    for (int c = 0; c < C; ++c) {
      const float* src = x.col(c).data();
      float* dst = cols.col(tap * C + c).data();
      for (int b = 0; b < s.n; ++b) {
        const std::size_t base = static_cast<std::size_t>(b) * P;
        for (int j = 0; j < s.w; ++j) {
          float* out = dst + base + static_cast<std::size_t>(j) * s.h;
          if (j < rj.lo || j >= rj.hi) {
            std::fill(out, out + s.h, 0.0f);
            continue;
          }
          std::fill(out, out + ri.lo, 0.0f);
          std::memcpy(out + ri.lo, src + base + (j + dx) * s.h + ri.lo + dy, len * sizeof(float));
          std::fill(out + ri.hi, out + s.h, 0.0f);
        }
      }
    }
  }
  return cols;
}

Mat col2im3x3(const Mat& cols, ImageShape s, int channels) {
  const int P = s.pixels();
  Mat x = Mat::Zero(s.rows(), channels);
  for (int tap = 0; tap < 9; ++tap) {
    const int dy = tap / 3 - 1;
    const int dx = tap % 3 - 1;
    const Run ri = valid(s.h, dy);
    const Run rj = valid(s.w, dx);
    for (int c = 0; c < channels; ++c) {
      const float* src = cols.col(tap * channels + c).data();
      float* dst = x.col(c).data();
      for (int b = 0; b < s.n; ++b) {
        const std::size_t base = static_cast<std::size_t>(b) * P;
        for (int j = rj.lo; j < rj.hi; ++j) {
          const float* in = src + base + j * s.h;
          float* out = dst + base + (j + dx) * s.h + dy;
          for (int i = ri.lo; i < ri.hi; ++i) out[i] += in[i];
        }
      }
    }
  }
  return x;
}

Mat avg_pool2(const Mat& x, ImageShape s) {
  const ImageShape o = s.half();
  Mat y(o.rows(), x.cols());
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    const float* src = x.col(c).data();
    float* dst = y.col(c).data();
    for (int b = 0; b < s.n; ++b) {
      const float* in = src + static_cast<std::size_t>(b) * s.pixels();
      float* out = dst + static_cast<std::size_t>(b) * o.pixels();
      for (int j = 0; j < o.w; ++j) {
        const float* c0 = in + (2 * j) * s.h;
        const float* c1 = c0 + s.h;
        for (int i = 0; i < o.h; ++i) {
          out[j * o.h + i] = 0.25f * (c0[2 * i] + c0[2 * i + 1] + c1[2 * i] + c1[2 * i + 1]);
        }
      }
    }
  }
  return y;
}

Mat upsample2(const Mat& x, ImageShape s_small) {
  const ImageShape s{s_small.n, 2 * s_small.h, 2 * s_small.w};
  Mat y(s.rows(), x.cols());
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    const float* src = x.col(c).data();
    float* dst = y.col(c).data();
    for (int b = 0; b < s.n; ++b) {
      const float* in = src + static_cast<std::size_t>(b) * s_small.pixels();
      float* out = dst + static_cast<std::size_t>(b) * s.pixels();
      for (int j = 0; j < s.w; ++j) {
        const float* col = in + (j / 2) * s_small.h;
        float* o = out + j * s.h;
        for (int i = 0; i < s.h; ++i) o[i] = col[i / 2];
      }
    }
  }
  return y;
}

Mat avg_pool2_backward(const Mat& grad, ImageShape s_in) { return 0.25f * upsample2(grad, s_in.half()); }

Mat upsample2_backward(const Mat& grad, ImageShape s_small) {
  return 4.0f * avg_pool2(grad, {s_small.n, 2 * s_small.h, 2 * s_small.w});
}

Mat silu(const Mat& pre) { return pre.array() / (1.0f + (-pre.array()).exp()); }

Mat silu_backward(const Mat& pre, const Mat& grad) {
  const auto sig = 1.0f / (1.0f + (-pre.array()).exp());
  return grad.array() * sig * (1.0f + pre.array() * (1.0f - sig));
}

void add_item_bias(Mat& x, const Mat& per_item, ImageShape s) {
  const int P = s.pixels();
  for (int b = 0; b < s.n; ++b) {
    x.middleRows(static_cast<Eigen::Index>(b) * P, P).rowwise() += per_item.row(b);
  }
}

Mat item_bias_backward(const Mat& grad, ImageShape s) {
  const int P = s.pixels();
  Mat out(s.n, grad.cols());
  for (int b = 0; b < s.n; ++b) out.row(b) = grad.middleRows(static_cast<Eigen::Index>(b) * P, P).colwise().sum();
  return out;
}

Mat timestep_embedding(std::span<const float> steps, int dim) {
  const int half = dim / 2;
  Mat e(static_cast<Eigen::Index>(steps.size()), dim);
  for (std::size_t b = 0; b < steps.size(); ++b) {
    for (int k = 0; k < half; ++k) {
      const double freq = std::exp(-std::log(10000.0) * k / half);
      const double arg = steps[b] * freq;
      e(static_cast<Eigen::Index>(b), k) = static_cast<float>(std::sin(arg));
      e(static_cast<Eigen::Index>(b), k + half) = static_cast<float>(std::cos(arg));
    }
  }
  return e;
}

Dense::Dense(int in, int out, std::mt19937_64& rng, float gain)
    : weight(normal_init(in, out, gain / std::sqrt(static_cast<float>(in)), rng)), bias(Mat::Zero(1, out)) {}

Mat Dense::forward(const Mat& x) const {
  Mat y = x * weight;
  y.rowwise() += bias.row(0);
  return y;
}

Mat Dense::backward(const Mat& x, const Mat& grad, Mat* gw, Mat* gb) const {
  if (gw != nullptr) gw->noalias() += x.transpose() * grad;
  if (gb != nullptr) *gb += grad.colwise().sum();
  return grad * weight.transpose();
}

Conv3x3::Conv3x3(int in, int out, std::mt19937_64& rng, float gain)
    : weight(normal_init(9 * in, out, gain / std::sqrt(9.0f * in), rng)), bias(Mat::Zero(1, out)), in_channels(in) {}

Mat Conv3x3::forward(const Mat& x, ImageShape s, Mat& cols) const {
  cols = im2col3x3(x, s);
  Mat y = cols * weight;
  y.rowwise() += bias.row(0);
  return y;
}

Mat Conv3x3::backward(const Mat& cols, const Mat& grad, ImageShape s, Mat* gw, Mat* gb) const {
  if (gw != nullptr) gw->noalias() += cols.transpose() * grad;
  if (gb != nullptr) *gb += grad.colwise().sum();
  const Mat gcols = grad * weight.transpose();
  return col2im3x3(gcols, s, in_channels);
}

}  // namespace rinv::diffusion::nn
