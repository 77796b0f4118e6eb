// Synaptic-operation counting, energy estimation, spike rates and analytic
// training-state memory.
//
// The encoding (first) convolution sees real-valued pixels and is charged as
// dense multiply-accumulates. Every later convolution sees spikes and is
// charged one accumulate per synapse per spike quantum, so an amplitude-k
// spike costs k times its fan-out.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sdsnn/arch.hpp"
#include "sdsnn/error.hpp"
#include "sdsnn/network.hpp"
#include "sdsnn/ops.hpp"
#include "sdsnn/tensor.hpp"

namespace sdsnn {

struct LayerOps {
  std::size_t position = 0;  // token index of the conv layer
  std::uint64_t mac_ops = 0;
  std::uint64_t ac_ops = 0;
  std::uint64_t fan_out = 0;  // synapses driven by one interior input neuron
};

struct OpCount {
  std::vector<LayerOps> layers;

  std::uint64_t total_mac() const {
    std::uint64_t s = 0;
    for (const auto& l : layers) s += l.mac_ops;
    return s;
  }
  std::uint64_t total_ac() const {
    std::uint64_t s = 0;
    for (const auto& l : layers) s += l.ac_ops;
    return s;
  }
  OpCount& operator+=(const OpCount& o) {
    if (layers.empty()) layers = std::vector<LayerOps>(o.layers.size());
    if (layers.size() != o.layers.size()) throw DimensionError("OpCount layer count mismatch");
    for (std::size_t i = 0; i < layers.size(); ++i) {
      layers[i].position = o.layers[i].position;
      layers[i].fan_out = o.layers[i].fan_out;
      layers[i].mac_ops += o.layers[i].mac_ops;
      layers[i].ac_ops += o.layers[i].ac_ops;
    }
    return *this;
  }
};

namespace detail {

/// Number of output rows (or columns) whose 3x3 window covers input index i.
inline std::uint64_t covering_outputs(std::size_t i, std::size_t extent) {
  const auto pos = static_cast<std::ptrdiff_t>(i);
  std::uint64_t n = 0;
  for (std::ptrdiff_t out = 0; out < static_cast<std::ptrdiff_t>(extent); ++out) {
    const std::ptrdiff_t first = out - static_cast<std::ptrdiff_t>(kConvPadding);
    if (pos >= first && pos < first + static_cast<std::ptrdiff_t>(kConvKernel)) ++n;
  }
  return n;
}

}  // namespace detail

/// Operation counts for one recorded forward pass (summed over the batch).
/// `spikes` holds the final-step output of each spiking layer, in order.
inline OpCount count_synops(const NetworkArch& arch, const Shape& input_chw, const std::vector<Tensor>& spikes,
                            const TimestepVector& T) {
  if (spikes.size() != arch.num_spike_layers())
    throw StateError("count_synops: " + std::to_string(spikes.size()) + " recorded spike tensors for " +
                     std::to_string(arch.num_spike_layers()) + " spiking layers");
  if (T.size() != spikes.size()) throw ConfigError("count_synops: timestep vector length mismatch");
  const auto shapes = resolve_shapes(arch, input_chw);
  const std::size_t N = spikes.front().dim(0);

  OpCount out;
  Tensor current;  // spike-valued tensor feeding the next conv
  bool first_conv = true;
  std::size_t spike_i = 0;
  Shape in = input_chw;
  for (std::size_t li = 0; li < arch.layers.size(); ++li) {
    const auto& l = arch.layers[li];
    switch (l.kind) {
      case LayerKind::Spike: current = spikes[spike_i++]; break;
      case LayerKind::MaxPool:
        if (!current.empty()) current = maxpool2x2_forward(current).output;
        break;
      case LayerKind::Conv: {
        const std::size_t C = in[0], H = in[1], W = in[2], O = l.channels;
        LayerOps ops{l.position, 0, 0, kConvKernel * kConvKernel * O};
        if (first_conv) {
          ops.mac_ops = static_cast<std::uint64_t>(N) * H * W * O * C * kConvKernel * kConvKernel;
          first_conv = false;
        } else {
          if (current.empty() || current.shape() != Shape{N, C, H, W})
            throw StateError("count_synops: no recorded spikes feeding conv at position " +
                             std::to_string(l.position));
          std::vector<std::uint64_t> row(H), col(W);
          for (std::size_t h = 0; h < H; ++h) row[h] = detail::covering_outputs(h, H);
          for (std::size_t w = 0; w < W; ++w) col[w] = detail::covering_outputs(w, W);
          for (std::size_t n = 0; n < N; ++n)
            for (std::size_t c = 0; c < C; ++c)
              for (std::size_t h = 0; h < H; ++h)
                for (std::size_t w = 0; w < W; ++w) {
                  const double a = current.at(n, c, h, w);
                  if (a < 0.0) throw StateError("count_synops: negative spike amplitude");
                  ops.ac_ops += static_cast<std::uint64_t>(a) * row[h] * col[w] * O;
                }
        }
        out.layers.push_back(ops);
        current = Tensor();
        break;
      }
      case LayerKind::Input:
      case LayerKind::Voting: break;
    }
    in = shapes[li];
  }
  return out;
}

struct EnergyReport {
  double e_mac_pj = 0.0;
  double e_ac_pj = 0.0;
  double total_pj = 0.0;
  double total_mj = 0.0;
  std::vector<double> per_layer_mj;
  double spike_rate_percent = 0.0;
};

inline constexpr double kPicoToMilli = 1e-9;
inline constexpr double kDefaultEmacPj = 4.6;
inline constexpr double kDefaultEacPj = 0.9;

inline EnergyReport estimate_energy(const OpCount& counts, double e_mac_pj, double e_ac_pj) {
  if (!(e_mac_pj > 0.0) || !(e_ac_pj > 0.0)) throw ArgumentError("energy constants must be > 0");
  EnergyReport r;
  r.e_mac_pj = e_mac_pj;
  r.e_ac_pj = e_ac_pj;
  double mac_pj = 0.0, ac_pj = 0.0;
  for (const auto& l : counts.layers) {
    const double lm = static_cast<double>(l.mac_ops) * e_mac_pj;
    const double la = static_cast<double>(l.ac_ops) * e_ac_pj;
    mac_pj += lm;
    ac_pj += la;
    r.per_layer_mj.push_back((lm + la) * kPicoToMilli);
  }
  r.total_pj = mac_pj + ac_pj;
  r.total_mj = r.total_pj * kPicoToMilli;
  return r;
}

struct SpikeTally {
  std::uint64_t nonzero = 0;
  std::uint64_t total = 0;

  void add(const Tensor& t) {
    for (double v : t.data()) nonzero += v != 0.0;
    total += t.size();
  }
  SpikeTally& operator+=(const SpikeTally& o) {
    nonzero += o.nonzero;
    total += o.total;
    return *this;
  }
  double percent() const { return total ? 100.0 * static_cast<double>(nonzero) / static_cast<double>(total) : 0.0; }
};

/// Percentage of nonzero entries across all given spike tensors.
inline double spike_rate(const std::vector<Tensor>& spikes) {
  SpikeTally t;
  for (const auto& s : spikes) t.add(s);
  return t.percent();
}

/// Scalars retained for the backward pass of one training batch, times
/// `bytes_per_scalar`. Matches ForwardResult::saved_scalar_count() and does not
/// depend on the timestep vector.
inline std::uint64_t training_state_memory(const NetworkArch& arch, const Shape& input_chw, const TimestepVector& T,
                                           std::size_t batch_size, std::size_t bytes_per_scalar = sizeof(double)) {
  if (T.size() != arch.num_spike_layers()) throw ConfigError("training_state_memory: timestep vector length mismatch");
  const auto shapes = resolve_shapes(arch, input_chw);
  std::uint64_t scalars = 0;
  Shape in = input_chw;
  for (std::size_t li = 0; li < arch.layers.size(); ++li) {
    const auto& l = arch.layers[li];
    const Shape& out = shapes[li];
    switch (l.kind) {
      case LayerKind::Conv:
        scalars += batch_size * shape_numel(in);   // conv input
        scalars += batch_size * shape_numel(out);  // normalized activations
        scalars += out[0];                         // inverse std per channel
        break;
      case LayerKind::Spike:
        scalars += batch_size * shape_numel(out) + 1;  // final potential + final threshold
        break;
      case LayerKind::MaxPool:
        scalars += batch_size * shape_numel(out);  // argmax indices
        break;
      case LayerKind::Input:
      case LayerKind::Voting: break;
    }
    in = out;
  }
  return scalars * bytes_per_scalar;
}

struct EvalMetrics {
  double accuracy = 0.0;
  double spike_rate_percent = 0.0;
  OpCount ops;  // summed over the evaluation set
  std::size_t images = 0;
  EnergyReport energy;  // per image
};

/// Evaluation plus spike and energy accounting, averaged per image.
inline EvalMetrics evaluate_with_metrics(const Network& net, const Dataset& data, const TimestepVector& T,
                                         double e_mac_pj, double e_ac_pj, std::size_t batch_size = 64,
                                         unsigned threads = 1) {
  const std::size_t nb = num_batches(data.size(), batch_size);
  std::vector<OpCount> ops(nb);
  std::vector<SpikeTally> tallies(nb);
  EvalMetrics m;
  m.accuracy = evaluate(net, data, T, batch_size, threads, [&](std::size_t bi, const ForwardResult& f, const Batch&) {
    ops[bi] = count_synops(net.arch, net.input_shape, f.spikes, T);
    for (const auto& s : f.spikes) tallies[bi].add(s);
  });
  SpikeTally tally;
  for (std::size_t i = 0; i < nb; ++i) {
    m.ops += ops[i];
    tally += tallies[i];
  }
  m.images = data.size();
  m.spike_rate_percent = tally.percent();
  // Per-image figures scale the exact totals rather than truncating counts.
  m.energy = estimate_energy(m.ops, e_mac_pj, e_ac_pj);
  const double inv = 1.0 / static_cast<double>(m.images);
  m.energy.total_pj *= inv;
  m.energy.total_mj *= inv;
  for (auto& v : m.energy.per_layer_mj) v *= inv;
  m.energy.spike_rate_percent = m.spike_rate_percent;
  return m;
}

}  // namespace sdsnn
