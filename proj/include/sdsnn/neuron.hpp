// IF, LIF and Self-Dropping neuron dynamics plus the rectangular surrogate
// gradient used during backpropagation.
//
// Self-Dropping (SD) neurons integrate
//
//     u_t = gamma * u_{t-1} - vth_{t-1} * o_{t-1} + x_t
//
// and emit an integer spike min(floor(u_t / vth_t), o_max) only when
// vth_t < u_t < u_{t-1}, i.e. once the potential has crossed threshold and
// started to fall. The threshold decays as vth_t = vth0 / t. On the first
// step there is no previous potential, so the plain IF crossing test is used.
#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include "sdsnn/error.hpp"
#include "sdsnn/tensor.hpp"

namespace sdsnn {

enum class NeuronKind { IF, LIF, SD };
enum class ResetMode { hard, soft };

inline const char* to_string(NeuronKind k) {
  switch (k) {
    case NeuronKind::IF: return "IF";
    case NeuronKind::LIF: return "LIF";
    case NeuronKind::SD: return "SD";
  }
  return "?";
}

inline NeuronKind parse_neuron_kind(const std::string& s) {
  if (s == "IF") return NeuronKind::IF;
  if (s == "LIF") return NeuronKind::LIF;
  if (s == "SD") return NeuronKind::SD;
  throw ConfigError("unknown neuron kind '" + s + "' (expected IF, LIF or SD)");
}

struct NeuronConfig {
  NeuronKind kind = NeuronKind::SD;
  double tau = 0.25;  // leak factor; the gamma of the SD update
  double vth0 = 0.5;
  int o_max = 4;
  double surrogate_width = 1.0;
  ResetMode reset = ResetMode::soft;

  void validate() const {
    if (!(tau > 0.0 && tau <= 1.0)) throw ConfigError("neuron tau must lie in (0, 1]");
    if (!(vth0 > 0.0)) throw ConfigError("neuron vth0 must be > 0");
    if (o_max < 1) throw ConfigError("neuron o_max must be >= 1");
    if (!(surrogate_width > 0.0)) throw ConfigError("surrogate width must be > 0");
    if (kind == NeuronKind::SD && reset != ResetMode::soft) throw ConfigError("SD neurons require soft reset");
  }
};

struct SpikingLayerState {
  Tensor u;        // potential at the latest step; pre-reset for SD, post-reset for IF/LIF
  Tensor u_prev;   // potential one step earlier
  Tensor o_prev;   // spikes emitted at the latest step
  Tensor u_fire;   // potential that was compared against the threshold at the latest step
  int t = 0;
  double vth_current = 0.0;  // threshold of the latest step
  double vth_prev = 0.0;     // threshold one step earlier

  explicit SpikingLayerState(double vth0 = 0.5) : vth_current(vth0), vth_prev(vth0) {}
};

inline void reset_state(SpikingLayerState& s, double vth0) {
  s.u.fill(0.0);
  s.u_prev.fill(0.0);
  s.o_prev.fill(0.0);
  s.u_fire.fill(0.0);
  s.t = 0;
  s.vth_current = vth0;
  s.vth_prev = vth0;
}

inline double threshold_decay(double vth0, int t) {
  if (t < 1) throw ArgumentError("threshold_decay: step index must be >= 1, got " + std::to_string(t));
  return vth0 / static_cast<double>(t);
}

namespace detail {

inline void prepare(SpikingLayerState& s, const Tensor& x, const char* where) {
  if (!x.all_finite()) throw NumericError(std::string(where) + ": non-finite input");
  if (s.u.shape() != x.shape()) {
    if (s.t != 0)
      throw DimensionError(std::string(where) + ": input " + shape_str(x.shape()) + " vs state " +
                           shape_str(s.u.shape()));
    s.u = Tensor(x.shape());
    s.u_prev = Tensor(x.shape());
    s.o_prev = Tensor(x.shape());
    s.u_fire = Tensor(x.shape());
  }
}

inline Tensor leaky_step(SpikingLayerState& s, const Tensor& x, double leak, double vth, ResetMode reset) {
  Tensor spike(x.shape());
  s.u_prev = s.u;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double u = leak * s.u[i] + x[i];
    s.u_fire[i] = u;
    const double o = u > vth ? 1.0 : 0.0;
    spike[i] = o;
    s.u[i] = reset == ResetMode::soft ? u - vth * o : u * (1.0 - o);
  }
  s.o_prev = spike;
  ++s.t;
  s.vth_prev = s.vth_current;
  s.vth_current = vth;
  return spike;
}

}  // namespace detail

/// Integrate-and-fire: no leak, binary spikes, soft reset.
inline Tensor if_step(SpikingLayerState& s, const Tensor& x, double vth) {
  detail::prepare(s, x, "if_step");
  return detail::leaky_step(s, x, 1.0, vth, ResetMode::soft);
}

inline Tensor lif_step(SpikingLayerState& s, const Tensor& x, const NeuronConfig& cfg) {
  if (cfg.kind != NeuronKind::LIF) throw ConfigError("lif_step called with a non-LIF neuron config");
  detail::prepare(s, x, "lif_step");
  return detail::leaky_step(s, x, cfg.tau, cfg.vth0, cfg.reset);
}

inline Tensor sd_step(SpikingLayerState& s, const Tensor& x, const NeuronConfig& cfg) {
  if (cfg.kind != NeuronKind::SD) throw ConfigError("sd_step called with a non-SD neuron config");
  detail::prepare(s, x, "sd_step");
  const int t = s.t + 1;
  const double vth = threshold_decay(cfg.vth0, t);
  const double cap = static_cast<double>(cfg.o_max);
  const double reset_vth = s.vth_current;  // threshold the previous spikes fired against

  Tensor spike(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double before = s.u[i];
    const double u = cfg.tau * before - reset_vth * s.o_prev[i] + x[i];
    const bool fires = t == 1 ? u > vth : (u > vth && u < before);
    spike[i] = fires ? std::min(std::floor(u / vth), cap) : 0.0;
    s.u_prev[i] = before;
    s.u[i] = u;
  }
  s.u_fire = s.u;
  s.o_prev = spike;
  s.t = t;
  s.vth_prev = s.vth_current;
  s.vth_current = vth;
  return spike;
}

/// Advance one step with whichever dynamics `cfg.kind` selects.
inline Tensor neuron_step(SpikingLayerState& s, const Tensor& x, const NeuronConfig& cfg) {
  switch (cfg.kind) {
    case NeuronKind::IF: return if_step(s, x, cfg.vth0);
    case NeuronKind::LIF: return lif_step(s, x, cfg);
    case NeuronKind::SD: return sd_step(s, x, cfg);
  }
  throw ConfigError("unknown neuron kind");
}

/// Rectangular surrogate derivative: 1/a inside |u - vth| < a/2, else 0.
inline Tensor surrogate_mask(const Tensor& u, double vth, double a) {
  if (!(a > 0.0)) throw ArgumentError("surrogate width must be > 0");
  Tensor m(u.shape());
  const double half = a / 2.0, h = 1.0 / a;
  for (std::size_t i = 0; i < u.size(); ++i) m[i] = std::abs(u[i] - vth) < half ? h : 0.0;
  return m;
}

}  // namespace sdsnn
