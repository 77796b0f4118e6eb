// Shared helpers for the unit and acceptance tests: random tensors, central
// finite differences and one randomized gradient check per layer kernel.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <vector>

#include "sdsnn/ops.hpp"
#include "sdsnn/tensor.hpp"

namespace support {

using sdsnn::Shape;
using sdsnn::Tensor;

inline Tensor random_tensor(const Shape& s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  Tensor t(s);
  for (auto& v : t.vec()) v = d(rng);
  return t;
}

inline std::size_t random_dim(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

/// |a - n| / max(|a|, |n|, 1e-4). The floor keeps entries that are zero up to
/// roundoff from dominating; gradients in these checks are O(0.01..1).
inline double rel_err(double a, double n) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-4});
}

inline double max_rel_err(const std::vector<double>& a, const std::vector<double>& n) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, rel_err(a[i], n[i]));
  return m;
}

/// Central differences of a scalar function with respect to every entry of x.
inline std::vector<double> numeric_grad(const std::function<double()>& f, std::vector<double>& x,
                                        double h = 1e-5) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double fp = f();
    x[i] = keep - h;
    const double fm = f();
    x[i] = keep;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

/// Sum of w * y: projects a tensor output onto a fixed random direction.
inline double dot(const Tensor& w, const Tensor& y) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += w[i] * y[i];
  return s;
}

inline std::vector<double> concat(std::initializer_list<std::vector<double>> parts) {
  std::vector<double> out;
  for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

inline double check_conv(std::mt19937_64& rng) {
  const std::size_t N = random_dim(rng, 1, 2), C = random_dim(rng, 1, 4), O = random_dim(rng, 1, 4);
  const std::size_t H = random_dim(rng, 1, 4), W = random_dim(rng, 1, 4);
  const std::size_t stride = random_dim(rng, 1, 2);
  std::size_t K = 0, pad = 0;
  do {  // redraw until the kernel fits the padded input
    K = random_dim(rng, 1, 3);
    pad = random_dim(rng, 0, 1);
  } while (H + 2 * pad < K || W + 2 * pad < K);
  Tensor x = random_tensor({N, C, H, W}, rng), w = random_tensor({O, C, K, K}, rng);
  std::vector<double> b = random_tensor({O}, rng).vec();
  const Tensor y0 = sdsnn::conv2d_forward(x, w, b, stride, pad);
  const Tensor proj = random_tensor(y0.shape(), rng);
  auto f = [&] { return dot(proj, sdsnn::conv2d_forward(x, w, b, stride, pad)); };
  const auto g = sdsnn::conv2d_backward(proj, x, w, stride, pad);
  const auto nx = numeric_grad(f, x.vec()), nw = numeric_grad(f, w.vec()), nb = numeric_grad(f, b);
  return max_rel_err(concat({g.input.vec(), g.weight.vec(), g.bias}), concat({nx, nw, nb}));
}

/// Inputs are a shuffled set of well-separated values so no window is tied
/// within the difference step.
inline double check_maxpool(std::mt19937_64& rng) {
  const std::size_t N = random_dim(rng, 1, 2), C = random_dim(rng, 1, 4);
  const std::size_t H = 2 * random_dim(rng, 1, 2), W = 2 * random_dim(rng, 1, 2);
  Tensor x({N, C, H, W});
  std::vector<double> vals(x.size());
  std::iota(vals.begin(), vals.end(), 0.0);
  std::shuffle(vals.begin(), vals.end(), rng);
  std::uniform_real_distribution<double> jitter(-0.3, 0.3);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = 0.1 * (vals[i] + jitter(rng));
  const auto fwd = sdsnn::maxpool2x2_forward(x);
  const Tensor proj = random_tensor(fwd.output.shape(), rng);
  auto f = [&] { return dot(proj, sdsnn::maxpool2x2_forward(x).output); };
  const Tensor g = sdsnn::maxpool2x2_backward(proj, fwd.argmax, fwd.input_shape);
  return max_rel_err(g.vec(), numeric_grad(f, x.vec()));
}

inline double check_batchnorm(std::mt19937_64& rng) {
  const std::size_t N = random_dim(rng, 1, 3), C = random_dim(rng, 1, 4);
  std::size_t H = random_dim(rng, 1, 4), W = random_dim(rng, 1, 4);
  if (N * H * W < 2) H = 2;  // a single element per channel has zero variance
  Tensor x = random_tensor({N, C, H, W}, rng, -2.0, 2.0);
  std::vector<double> gamma = random_tensor({C}, rng, 0.5, 1.5).vec(), beta = random_tensor({C}, rng).vec();
  auto run = [&](sdsnn::BatchNormCache* cache) {
    sdsnn::BatchNormStats st(C);
    return sdsnn::batchnorm_forward(x, gamma, beta, st, sdsnn::Mode::train, cache);
  };
  sdsnn::BatchNormCache cache;
  const Tensor y0 = run(&cache);
  const Tensor proj = random_tensor(y0.shape(), rng);
  auto f = [&] { return dot(proj, run(nullptr)); };
  const auto g = sdsnn::batchnorm_backward(proj, gamma, cache);
  const auto nx = numeric_grad(f, x.vec()), ng = numeric_grad(f, gamma), nb = numeric_grad(f, beta);
  return max_rel_err(concat({g.input.vec(), g.gamma, g.beta}), concat({nx, ng, nb}));
}

inline double check_voting(std::mt19937_64& rng) {
  const std::size_t N = random_dim(rng, 1, 3), K = random_dim(rng, 1, 4), G = random_dim(rng, 1, 3);
  const std::size_t H = random_dim(rng, 1, 4), W = random_dim(rng, 1, 4);
  Tensor x = random_tensor({N, K * G, H, W}, rng);
  const Tensor proj = random_tensor({N, K}, rng);
  auto f = [&] { return dot(proj, sdsnn::voting_forward(x, K)); };
  const Tensor g = sdsnn::voting_backward(proj, x.shape());
  return max_rel_err(g.vec(), numeric_grad(f, x.vec()));
}

inline double check_mse(std::mt19937_64& rng) {
  const std::size_t N = random_dim(rng, 1, 4), K = random_dim(rng, 2, 10);
  Tensor pred = random_tensor({N, K}, rng), target({N, K});
  for (std::size_t n = 0; n < N; ++n) target[n * K + random_dim(rng, 0, K - 1)] = 1.0;
  auto f = [&] { return sdsnn::mse_loss(pred, target).loss; };
  const auto r = sdsnn::mse_loss(pred, target);
  return max_rel_err(r.grad.vec(), numeric_grad(f, pred.vec()));
}

}  // namespace support

namespace support {

struct SdTraceStep {
  double u;
  double vth;
  double spike;
};

/// Scalar self-dropping neuron written out directly from its update rule:
///   u_t = g * u_{t-1} - vth_{t-1} * o_{t-1} + x_t,  vth_t = vth0 / t,
///   o_t = min(floor(u_t / vth_t), o_max) if vth_t < u_t (and u_t < u_{t-1} for t > 1).
inline std::vector<SdTraceStep> sd_oracle(const std::vector<double>& xs, double g, double vth0, int o_max) {
  std::vector<SdTraceStep> out;
  double u_last = 0.0, o_last = 0.0, vth_last = vth0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const int t = static_cast<int>(k) + 1;
    const double vth = vth0 / t;
    const double u = g * u_last - vth_last * o_last + xs[k];
    bool fire = vth < u;
    if (t > 1) fire = fire && u < u_last;
    double o = 0.0;
    if (fire) {
      o = std::floor(u / vth);
      if (o > o_max) o = o_max;
    }
    out.push_back({u, vth, o});
    u_last = u;
    o_last = o;
    vth_last = vth;
  }
  return out;
}

}  // namespace support

#include "sdsnn/data.hpp"

namespace support {

/// Two-class 1x4x4 images: class 0 is bright on the left half, class 1 on the
/// right half, with uniform noise.
inline sdsnn::Dataset toy_dataset(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> noise(0.0, 0.3);
  sdsnn::Dataset d{Tensor({n, 1, 4, 4}), {}, 2, "toy"};
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % 2);
    d.labels.push_back(label);
    for (std::size_t h = 0; h < 4; ++h)
      for (std::size_t w = 0; w < 4; ++w) {
        const bool bright = (w < 2) == (label == 0);
        d.images.at(i, 0, h, w) = (bright ? 0.7 : 0.0) + noise(rng);
      }
  }
  return d;
}

}  // namespace support
