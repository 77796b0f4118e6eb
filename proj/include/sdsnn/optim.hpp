// Adam with bias correction and a cosine-annealed learning rate.
#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "sdsnn/error.hpp"
#include "sdsnn/tensor.hpp"

namespace sdsnn {

struct AdamState {
  Tensor m;
  Tensor v;
  long step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  AdamState() = default;
  explicit AdamState(const Shape& shape) : m(shape), v(shape) {}
};

/// One in-place Adam update of `param`. `name` only appears in error messages.
inline void adam_step(Tensor& param, const Tensor& grad, AdamState& state, double lr,
                      const std::string& name = "parameter") {
  Tensor::require_same_shape(param, grad, "adam_step");
  if (state.m.shape() != param.shape()) {
    if (state.step != 0)
      throw DimensionError("adam_step: moments " + shape_str(state.m.shape()) + " vs " + name + " " +
                           shape_str(param.shape()));
    state.m = Tensor(param.shape());
    state.v = Tensor(param.shape());
  }
  if (!(lr >= 0.0)) throw ArgumentError("adam_step: learning rate must be >= 0");
  if (!grad.all_finite()) throw NumericError("non-finite gradient for " + name);

  ++state.step;
  const double b1 = state.beta1, b2 = state.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
    state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
    const double mhat = state.m[i] / c1;
    const double vhat = state.v[i] / c2;
    param[i] -= lr * mhat / (std::sqrt(vhat) + state.epsilon);
  }
}

struct CosineSchedule {
  double base_lr = 1e-3;
  double min_lr = 0.0;
  int period = 1;  // epochs
};

inline double cosine_lr(const CosineSchedule& s, int epoch) {
  if (s.period < 1) throw ArgumentError("cosine schedule period must be >= 1");
  if (s.min_lr > s.base_lr) throw ArgumentError("cosine schedule min_lr exceeds base_lr");
  if (epoch < 0) throw ArgumentError("cosine schedule epoch must be >= 0");
  const double frac = static_cast<double>(std::min(epoch, s.period)) / static_cast<double>(s.period);
  return s.min_lr + 0.5 * (s.base_lr - s.min_lr) * (1.0 + std::cos(std::numbers::pi * frac));
}

}  // namespace sdsnn
