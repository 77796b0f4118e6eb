// Layer kernels with explicit backward passes: convolution, 2x2 max pooling,
// batch normalization, the voting readout and the MSE loss.
#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "sdsnn/error.hpp"
#include "sdsnn/tensor.hpp"

namespace sdsnn {

enum class Mode { train, eval };

// ---------------------------------------------------------------------------
// Convolution (cross-correlation, no kernel flip)
// ---------------------------------------------------------------------------

inline std::size_t conv_out_dim(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad) {
  if (in + 2 * pad < k) throw DimensionError("kernel " + std::to_string(k) + " larger than padded input");
  return (in + 2 * pad - k) / stride + 1;
}

inline Tensor conv2d_forward(const Tensor& input, const Tensor& weight, std::span<const double> bias,
                             std::size_t stride, std::size_t padding) {
  require_rank4(input, "conv2d_forward input");
  require_rank4(weight, "conv2d_forward weight");
  if (stride < 1) throw ArgumentError("conv2d stride must be >= 1");
  if (input.dim(1) != weight.dim(1))
    throw DimensionError("conv2d input " + shape_str(input.shape()) + " vs weight " + shape_str(weight.shape()));
  if (bias.size() != weight.dim(0))
    throw DimensionError("conv2d bias length " + std::to_string(bias.size()) + " vs weight " +
                         shape_str(weight.shape()));

  const std::size_t N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  const std::size_t O = weight.dim(0), KH = weight.dim(2), KW = weight.dim(3);
  const std::size_t OH = conv_out_dim(H, KH, stride, padding), OW = conv_out_dim(W, KW, stride, padding);
  const auto pad = static_cast<std::ptrdiff_t>(padding);
  const auto st = static_cast<std::ptrdiff_t>(stride);

  Tensor out({N, O, OH, OW});
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t o = 0; o < O; ++o) {
      double* dst = &out.at(n, o, 0, 0);
      for (std::size_t i = 0; i < OH * OW; ++i) dst[i] = bias[o];
      for (std::size_t c = 0; c < C; ++c) {
        const double* src = &input.at(n, c, 0, 0);
        for (std::size_t kh = 0; kh < KH; ++kh) {
          for (std::size_t kw = 0; kw < KW; ++kw) {
            const double w = weight.at(o, c, kh, kw);
            if (w == 0.0) continue;
            for (std::size_t oh = 0; oh < OH; ++oh) {
              const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh) * st - pad + static_cast<std::ptrdiff_t>(kh);
              if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(H)) continue;
              const double* row = src + static_cast<std::size_t>(ih) * W;
              double* orow = dst + oh * OW;
              for (std::size_t ow = 0; ow < OW; ++ow) {
                const std::ptrdiff_t iw =
                    static_cast<std::ptrdiff_t>(ow) * st - pad + static_cast<std::ptrdiff_t>(kw);
                if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(W)) continue;
                orow[ow] += w * row[iw];
              }
            }
          }
        }
      }
    }
  }
  return out;
}

struct Conv2dGrads {
  Tensor input;
  Tensor weight;
  std::vector<double> bias;
};

/// `input` is the tensor saved by the matching forward call.
inline Conv2dGrads conv2d_backward(const Tensor& grad_out, const Tensor& input, const Tensor& weight,
                                   std::size_t stride, std::size_t padding) {
  if (input.empty()) throw StateError("conv2d_backward without saved forward input");
  require_rank4(grad_out, "conv2d_backward grad_out");
  const std::size_t N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  const std::size_t O = weight.dim(0), KH = weight.dim(2), KW = weight.dim(3);
  const std::size_t OH = conv_out_dim(H, KH, stride, padding), OW = conv_out_dim(W, KW, stride, padding);
  if (grad_out.shape() != Shape{N, O, OH, OW})
    throw DimensionError("conv2d_backward grad_out " + shape_str(grad_out.shape()) + " vs forward output " +
                         shape_str({N, O, OH, OW}));
  const auto pad = static_cast<std::ptrdiff_t>(padding);
  const auto st = static_cast<std::ptrdiff_t>(stride);

  Conv2dGrads g{Tensor::zeros_like(input), Tensor::zeros_like(weight), std::vector<double>(O, 0.0)};
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t o = 0; o < O; ++o) {
      const double* gout = &grad_out.at(n, o, 0, 0);
      double bsum = 0.0;
      for (std::size_t i = 0; i < OH * OW; ++i) bsum += gout[i];
      g.bias[o] += bsum;
      for (std::size_t c = 0; c < C; ++c) {
        const double* src = &input.at(n, c, 0, 0);
        double* gsrc = &g.input.at(n, c, 0, 0);
        for (std::size_t kh = 0; kh < KH; ++kh) {
          for (std::size_t kw = 0; kw < KW; ++kw) {
            const double w = weight.at(o, c, kh, kw);
            double wacc = 0.0;
            for (std::size_t oh = 0; oh < OH; ++oh) {
              const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh) * st - pad + static_cast<std::ptrdiff_t>(kh);
              if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(H)) continue;
              const std::size_t roff = static_cast<std::size_t>(ih) * W;
              const double* grow = gout + oh * OW;
              for (std::size_t ow = 0; ow < OW; ++ow) {
                const std::ptrdiff_t iw =
                    static_cast<std::ptrdiff_t>(ow) * st - pad + static_cast<std::ptrdiff_t>(kw);
                if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(W)) continue;
                const double go = grow[ow];
                wacc += go * src[roff + static_cast<std::size_t>(iw)];
                gsrc[roff + static_cast<std::size_t>(iw)] += go * w;
              }
            }
            g.weight.at(o, c, kh, kw) += wacc;
          }
        }
      }
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// 2x2 / stride-2 max pooling
// ---------------------------------------------------------------------------

struct PoolResult {
  Tensor output;
  /// Flat index into the input tensor of each output's winner.
  std::vector<std::size_t> argmax;
  Shape input_shape;
};

inline PoolResult maxpool2x2_forward(const Tensor& input) {
  require_rank4(input, "maxpool2x2_forward");
  const std::size_t N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  if (H % 2 != 0 || W % 2 != 0)
    throw DimensionError("maxpool2x2 needs even spatial dims, got " + shape_str(input.shape()));
  PoolResult r{Tensor({N, C, H / 2, W / 2}), {}, input.shape()};
  r.argmax.resize(r.output.size());
  std::size_t k = 0;
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t h = 0; h < H; h += 2)
        for (std::size_t w = 0; w < W; w += 2, ++k) {
          std::size_t best = input.offset(n, c, h, w);
          for (std::size_t dh = 0; dh < 2; ++dh)
            for (std::size_t dw = 0; dw < 2; ++dw) {
              const std::size_t idx = input.offset(n, c, h + dh, w + dw);
              if (input[idx] > input[best]) best = idx;
            }
          r.output[k] = input[best];
          r.argmax[k] = best;
        }
  return r;
}

inline Tensor maxpool2x2_backward(const Tensor& grad_out, const std::vector<std::size_t>& argmax,
                                  const Shape& input_shape) {
  if (argmax.size() != grad_out.size())
    throw StateError("maxpool2x2_backward: " + std::to_string(argmax.size()) + " indices for " +
                     std::to_string(grad_out.size()) + " gradients");
  Tensor g(input_shape);
  for (std::size_t k = 0; k < argmax.size(); ++k) {
    if (argmax[k] >= g.size()) throw StateError("maxpool2x2_backward: index out of bounds");
    g[argmax[k]] += grad_out[k];
  }
  return g;
}

// ---------------------------------------------------------------------------
// Batch normalization over (N, H, W) per channel
// ---------------------------------------------------------------------------

struct BatchNormStats {
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double momentum = 0.1;
  double eps = 1e-5;

  explicit BatchNormStats(std::size_t channels = 0)
      : running_mean(channels, 0.0), running_var(channels, 1.0) {}
};

/// What the train-mode forward pass leaves behind for backward.
struct BatchNormCache {
  Mode mode = Mode::eval;
  Tensor normalized;
  std::vector<double> inv_std;
};

inline Tensor batchnorm_forward(const Tensor& input, std::span<const double> gamma, std::span<const double> beta,
                                BatchNormStats& stats, Mode mode, BatchNormCache* cache = nullptr) {
  require_rank4(input, "batchnorm_forward");
  const std::size_t N = input.dim(0), C = input.dim(1), HW = input.dim(2) * input.dim(3);
  if (gamma.size() != C || beta.size() != C || stats.running_mean.size() != C)
    throw DimensionError("batchnorm channel count " + std::to_string(C) + " vs gamma " +
                         std::to_string(gamma.size()) + ", beta " + std::to_string(beta.size()));
  if (!(stats.eps > 0.0)) throw ArgumentError("batchnorm eps must be > 0");

  Tensor out(input.shape());
  Tensor normalized;
  std::vector<double> inv_std(C);
  if (mode == Mode::train) normalized = Tensor(input.shape());
  const double M = static_cast<double>(N * HW);

  for (std::size_t c = 0; c < C; ++c) {
    double mean, var;
    if (mode == Mode::train) {
      double s = 0.0;
      for (std::size_t n = 0; n < N; ++n) {
        const double* p = &input.at(n, c, 0, 0);
        for (std::size_t i = 0; i < HW; ++i) s += p[i];
      }
      mean = s / M;
      double ss = 0.0;
      for (std::size_t n = 0; n < N; ++n) {
        const double* p = &input.at(n, c, 0, 0);
        for (std::size_t i = 0; i < HW; ++i) ss += (p[i] - mean) * (p[i] - mean);
      }
      var = ss / M;
      const double unbiased = M > 1.0 ? ss / (M - 1.0) : var;
      stats.running_mean[c] = (1.0 - stats.momentum) * stats.running_mean[c] + stats.momentum * mean;
      stats.running_var[c] = (1.0 - stats.momentum) * stats.running_var[c] + stats.momentum * unbiased;
    } else {
      mean = stats.running_mean[c];
      var = stats.running_var[c];
    }
    const double is = 1.0 / std::sqrt(var + stats.eps);
    inv_std[c] = is;
    for (std::size_t n = 0; n < N; ++n) {
      const std::size_t base = input.offset(n, c, 0, 0);
      for (std::size_t i = 0; i < HW; ++i) {
        const double xh = (input[base + i] - mean) * is;
        if (mode == Mode::train) normalized[base + i] = xh;
        out[base + i] = gamma[c] * xh + beta[c];
      }
    }
  }
  if (cache) {
    cache->mode = mode;
    cache->normalized = std::move(normalized);
    cache->inv_std = std::move(inv_std);
  }
  return out;
}

struct BatchNormGrads {
  Tensor input;
  std::vector<double> gamma;
  std::vector<double> beta;
};

inline BatchNormGrads batchnorm_backward(const Tensor& grad_out, std::span<const double> gamma,
                                         const BatchNormCache& cache) {
  if (cache.mode != Mode::train) throw StateError("batchnorm_backward needs a train-mode forward context");
  Tensor::require_same_shape(grad_out, cache.normalized, "batchnorm_backward");
  const std::size_t N = grad_out.dim(0), C = grad_out.dim(1), HW = grad_out.dim(2) * grad_out.dim(3);
  const double M = static_cast<double>(N * HW);
  BatchNormGrads g{Tensor(grad_out.shape()), std::vector<double>(C, 0.0), std::vector<double>(C, 0.0)};
  for (std::size_t c = 0; c < C; ++c) {
    double sum_dy = 0.0, sum_dy_xh = 0.0;
    for (std::size_t n = 0; n < N; ++n) {
      const std::size_t base = grad_out.offset(n, c, 0, 0);
      for (std::size_t i = 0; i < HW; ++i) {
        sum_dy += grad_out[base + i];
        sum_dy_xh += grad_out[base + i] * cache.normalized[base + i];
      }
    }
    g.beta[c] = sum_dy;
    g.gamma[c] = sum_dy_xh;
    const double k = gamma[c] * cache.inv_std[c] / M;
    for (std::size_t n = 0; n < N; ++n) {
      const std::size_t base = grad_out.offset(n, c, 0, 0);
      for (std::size_t i = 0; i < HW; ++i)
        g.input[base + i] = k * (M * grad_out[base + i] - sum_dy - cache.normalized[base + i] * sum_dy_xh);
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Voting readout: spatial mean, then mean over contiguous channel groups
// ---------------------------------------------------------------------------

inline Tensor voting_forward(const Tensor& input, std::size_t num_classes) {
  require_rank4(input, "voting_forward");
  const std::size_t N = input.dim(0), C = input.dim(1), HW = input.dim(2) * input.dim(3);
  if (num_classes == 0 || C % num_classes != 0)
    throw ConfigError("voting: " + std::to_string(C) + " channels not divisible into " +
                      std::to_string(num_classes) + " classes");
  const std::size_t G = C / num_classes;
  Tensor out({N, num_classes});
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t k = 0; k < num_classes; ++k) {
      double s = 0.0;
      for (std::size_t c = k * G; c < (k + 1) * G; ++c) {
        const double* p = &input.at(n, c, 0, 0);
        for (std::size_t i = 0; i < HW; ++i) s += p[i];
      }
      out[n * num_classes + k] = s / static_cast<double>(G * HW);
    }
  return out;
}

inline Tensor voting_backward(const Tensor& grad_out, const Shape& input_shape) {
  if (input_shape.size() != 4 || grad_out.rank() != 2 || grad_out.dim(0) != input_shape[0] ||
      input_shape[1] % grad_out.dim(1) != 0)
    throw DimensionError("voting_backward grad " + shape_str(grad_out.shape()) + " vs input " +
                         shape_str(input_shape));
  const std::size_t N = input_shape[0], C = input_shape[1], HW = input_shape[2] * input_shape[3];
  const std::size_t K = grad_out.dim(1), G = C / K;
  const double scale = 1.0 / static_cast<double>(G * HW);
  Tensor g(input_shape);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c) {
      const double v = grad_out[n * K + c / G] * scale;
      double* p = &g.at(n, c, 0, 0);
      for (std::size_t i = 0; i < HW; ++i) p[i] = v;
    }
  return g;
}

// ---------------------------------------------------------------------------
// Mean squared error against one-hot targets
// ---------------------------------------------------------------------------

struct LossResult {
  double loss = 0.0;
  Tensor grad;
};

inline LossResult mse_loss(const Tensor& pred, const Tensor& target) {
  Tensor::require_same_shape(pred, target, "mse_loss");
  const double n = static_cast<double>(pred.size());
  LossResult r{0.0, Tensor(pred.shape())};
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    r.loss += d * d;
    r.grad[i] = 2.0 * d / n;
  }
  r.loss /= n;
  return r;
}

}  // namespace sdsnn
