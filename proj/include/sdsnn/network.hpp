// Spiking network built from an architecture string: forward pass with
// per-layer internal timesteps, single-timestep backward pass, training and
// evaluation loops.
//
// Each spiking layer re-presents its input for t_l internal steps and hands
// only the final step's spikes downstream. Backward uses only that final
// step's membrane potential and threshold, so the stored state per spiking
// layer does not grow with t_l.
#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "sdsnn/arch.hpp"
#include "sdsnn/data.hpp"
#include "sdsnn/error.hpp"
#include "sdsnn/neuron.hpp"
#include "sdsnn/ops.hpp"
#include "sdsnn/optim.hpp"
#include "sdsnn/tensor.hpp"

namespace sdsnn {

inline constexpr std::size_t kConvKernel = 3;
inline constexpr std::size_t kConvStride = 1;
inline constexpr std::size_t kConvPadding = 1;

struct ConvBlock {
  Tensor weight;  // O x I x 3 x 3
  Tensor bias;    // O
  Tensor gamma;   // O
  Tensor beta;    // O
  BatchNormStats bn;
};

struct Network {
  NetworkArch arch;
  Shape input_shape;  // C, H, W
  NeuronConfig neuron;
  std::vector<ConvBlock> convs;

  /// Kaiming-uniform (fan-in) conv weights, BN at identity.
  static Network create(NetworkArch arch, Shape input_shape, NeuronConfig neuron, std::uint64_t seed) {
    neuron.validate();
    const auto shapes = resolve_shapes(arch, input_shape);
    Network net{std::move(arch), std::move(input_shape), neuron, {}};
    std::mt19937_64 rng(seed);
    std::size_t in_ch = net.input_shape[0];
    for (std::size_t i = 0; i < net.arch.layers.size(); ++i) {
      const auto& l = net.arch.layers[i];
      if (l.kind != LayerKind::Conv) continue;
      const std::size_t out = l.channels;
      const double fan_in = static_cast<double>(in_ch * kConvKernel * kConvKernel);
      std::uniform_real_distribution<double> wdist(-std::sqrt(6.0 / fan_in), std::sqrt(6.0 / fan_in));
      std::uniform_real_distribution<double> bdist(-1.0 / std::sqrt(fan_in), 1.0 / std::sqrt(fan_in));
      ConvBlock b{Tensor({out, in_ch, kConvKernel, kConvKernel}), Tensor({out}), Tensor({out}, 1.0), Tensor({out}),
                  BatchNormStats(out)};
      for (auto& w : b.weight.vec()) w = wdist(rng);
      for (auto& v : b.bias.vec()) v = bdist(rng);
      net.convs.push_back(std::move(b));
      in_ch = shapes[i][0];
    }
    return net;
  }

  /// Trainable tensors in a fixed order: per conv block weight, bias, gamma, beta.
  std::vector<Tensor*> parameters() {
    std::vector<Tensor*> p;
    for (auto& c : convs) p.insert(p.end(), {&c.weight, &c.bias, &c.gamma, &c.beta});
    return p;
  }
  std::vector<const Tensor*> parameters() const {
    std::vector<const Tensor*> p;
    for (const auto& c : convs) p.insert(p.end(), {&c.weight, &c.bias, &c.gamma, &c.beta});
    return p;
  }
  static std::vector<std::string> parameter_names(std::size_t num_convs) {
    std::vector<std::string> names;
    for (std::size_t i = 0; i < num_convs; ++i)
      for (const char* s : {"weight", "bias", "gamma", "beta"})
        names.push_back("conv" + std::to_string(i) + "." + s);
    return names;
  }
};

// ---------------------------------------------------------------------------
// Spiking layer
// ---------------------------------------------------------------------------

struct SpikingLayerOutput {
  Tensor spike;   // spikes of step t_l
  Tensor u_fire;  // membrane potential of step t_l (saved for backward)
  double vth = 0; // threshold of step t_l (saved for backward)
};

/// Runs `steps` internal timesteps on a constant input starting from `state`.
inline SpikingLayerOutput forward_spiking_layer(const Tensor& input, SpikingLayerState& state,
                                                const NeuronConfig& cfg, int steps) {
  if (steps < 1) throw ArgumentError("spiking layer needs t_l >= 1, got " + std::to_string(steps));
  Tensor spike;
  for (int s = 0; s < steps; ++s) spike = neuron_step(state, input, cfg);
  return {std::move(spike), state.u_fire, state.vth_current};
}

// ---------------------------------------------------------------------------
// Network forward / backward
// ---------------------------------------------------------------------------

struct LayerCache {
  Tensor conv_input;
  BatchNormCache bn;
  Tensor u_fire;
  double vth = 0.0;
  std::vector<std::size_t> argmax;
  Shape in_shape;
};

struct ForwardResult {
  Tensor logits;
  std::vector<Tensor> spikes;  // final-step output of every spiking layer
  std::vector<LayerCache> caches;
  Mode mode = Mode::eval;

  /// Number of scalars held for the backward pass (tensors plus per-layer thresholds).
  std::size_t saved_scalar_count() const {
    if (mode != Mode::train) return 0;
    std::size_t n = 0;
    for (const auto& c : caches) {
      n += c.conv_input.size() + c.bn.normalized.size() + (c.bn.normalized.empty() ? 0 : c.bn.inv_std.size());
      n += c.u_fire.size() + (c.u_fire.empty() ? 0 : 1);
      n += c.argmax.size();
    }
    return n;
  }
};

inline ForwardResult network_forward(Network& net, const Tensor& batch, const TimestepVector& T, Mode mode) {
  require_rank4(batch, "network_forward batch");
  if (Shape{batch.dim(1), batch.dim(2), batch.dim(3)} != net.input_shape)
    throw DimensionError("batch " + shape_str(batch.shape()) + " vs network input " + shape_str(net.input_shape));
  if (T.size() != net.arch.num_spike_layers())
    throw ConfigError("timestep vector " + to_string(T) + " has " + std::to_string(T.size()) + " entries for " +
                      std::to_string(net.arch.num_spike_layers()) + " spiking layers");

  ForwardResult r;
  r.mode = mode;
  r.caches.resize(net.arch.layers.size());
  const bool keep = mode == Mode::train;
  Tensor x = batch;
  std::size_t conv_i = 0, spike_i = 0;
  for (std::size_t li = 0; li < net.arch.layers.size(); ++li) {
    const auto& layer = net.arch.layers[li];
    auto& cache = r.caches[li];
    switch (layer.kind) {
      case LayerKind::Input: break;
      case LayerKind::Conv: {
        auto& blk = net.convs[conv_i++];
        Tensor y = conv2d_forward(x, blk.weight, blk.bias.data(), kConvStride, kConvPadding);
        if (keep) cache.conv_input = std::move(x);
        x = batchnorm_forward(y, blk.gamma.data(), blk.beta.data(), blk.bn, mode, keep ? &cache.bn : nullptr);
        break;
      }
      case LayerKind::Spike: {
        SpikingLayerState state(net.neuron.vth0);
        auto out = forward_spiking_layer(x, state, net.neuron, T[spike_i++]);
        if (keep) {
          cache.u_fire = std::move(out.u_fire);
          cache.vth = out.vth;
        }
        r.spikes.push_back(out.spike);
        x = std::move(out.spike);
        break;
      }
      case LayerKind::MaxPool: {
        auto p = maxpool2x2_forward(x);
        if (keep) {
          cache.argmax = std::move(p.argmax);
          cache.in_shape = std::move(p.input_shape);
        }
        x = std::move(p.output);
        break;
      }
      case LayerKind::Voting:
        cache.in_shape = x.shape();
        x = voting_forward(x, layer.channels);
        break;
    }
  }
  r.logits = std::move(x);
  return r;
}

/// Gradients aligned with Network::parameters().
using ParamGrads = std::vector<Tensor>;

inline ParamGrads network_backward(const Network& net, const ForwardResult& fwd, const Tensor& grad_logits) {
  if (fwd.mode != Mode::train) throw StateError("network_backward needs a train-mode forward context");
  Tensor::require_same_shape(grad_logits, fwd.logits, "network_backward");
  ParamGrads grads(net.convs.size() * 4);
  Tensor g = grad_logits;
  std::size_t conv_i = net.convs.size();
  for (std::size_t li = net.arch.layers.size(); li-- > 0;) {
    const auto& layer = net.arch.layers[li];
    const auto& cache = fwd.caches[li];
    switch (layer.kind) {
      case LayerKind::Input: break;
      case LayerKind::Voting: g = voting_backward(g, cache.in_shape); break;
      case LayerKind::MaxPool: g = maxpool2x2_backward(g, cache.argmax, cache.in_shape); break;
      case LayerKind::Spike: {
        const Tensor mask = surrogate_mask(cache.u_fire, cache.vth, net.neuron.surrogate_width);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] *= mask[i];
        break;
      }
      case LayerKind::Conv: {
        const auto& blk = net.convs[--conv_i];
        auto bn = batchnorm_backward(g, blk.gamma.data(), cache.bn);
        auto cg = conv2d_backward(bn.input, cache.conv_input, blk.weight, kConvStride, kConvPadding);
        grads[conv_i * 4 + 0] = std::move(cg.weight);
        const Shape vec_shape{blk.bias.size()};
        grads[conv_i * 4 + 1] = Tensor(vec_shape, std::move(cg.bias));
        grads[conv_i * 4 + 2] = Tensor(vec_shape, std::move(bn.gamma));
        grads[conv_i * 4 + 3] = Tensor(vec_shape, std::move(bn.beta));
        g = std::move(cg.input);
        break;
      }
    }
  }
  return grads;
}

// ---------------------------------------------------------------------------
// Training and evaluation
// ---------------------------------------------------------------------------

struct Optimizer {
  std::vector<AdamState> states;

  void step(Network& net, const ParamGrads& grads, double lr) {
    auto params = net.parameters();
    if (states.size() != params.size()) states.assign(params.size(), AdamState{});
    const auto names = Network::parameter_names(net.convs.size());
    for (std::size_t i = 0; i < params.size(); ++i) adam_step(*params[i], grads[i], states[i], lr, names[i]);
  }
};

struct EpochStats {
  double mean_loss = 0.0;
  double accuracy = 0.0;  // percent, on the training batches as seen during the epoch
};

/// Index of the largest logit per row; ties go to the smallest class index.
inline std::vector<int> predict_labels(const Tensor& logits) {
  const std::size_t N = logits.dim(0), K = logits.dim(1);
  std::vector<int> out(N);
  for (std::size_t n = 0; n < N; ++n) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < K; ++k)
      if (logits[n * K + k] > logits[n * K + best]) best = k;
    out[n] = static_cast<int>(best);
  }
  return out;
}

inline EpochStats train_epoch(Network& net, const Dataset& data, const TimestepVector& T, Optimizer& opt, double lr,
                              std::size_t batch_size, std::uint64_t shuffle_seed) {
  if (data.size() == 0) throw ArgumentError("train_epoch: empty dataset");
  EpochStats st;
  std::size_t correct = 0;
  for (const auto& idx : batch_indices(data.size(), batch_size, shuffle_seed)) {
    const Batch b = make_batch(data, idx);
    auto fwd = network_forward(net, b.images, T, Mode::train);
    auto loss = mse_loss(fwd.logits, b.targets);
    if (!std::isfinite(loss.loss)) throw NumericError("training loss is not finite");
    st.mean_loss += loss.loss * static_cast<double>(idx.size());
    const auto pred = predict_labels(fwd.logits);
    for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == b.labels[i];
    opt.step(net, network_backward(net, fwd, loss.grad), lr);
  }
  st.mean_loss /= static_cast<double>(data.size());
  st.accuracy = 100.0 * static_cast<double>(correct) / static_cast<double>(data.size());
  return st;
}

struct TrainOptions {
  int epochs = 1;
  std::size_t batch_size = 8;
  double lr = 1e-3;
  double min_lr = 0.0;
  std::uint64_t seed = 0;
};

/// Trains for `opts.epochs` with a cosine schedule whose period is the epoch count.
inline std::vector<EpochStats> fit(Network& net, const Dataset& data, const TimestepVector& T,
                                   const TrainOptions& opts,
                                   const std::function<void(int, const EpochStats&)>& on_epoch = {}) {
  if (opts.epochs < 1) throw ArgumentError("training needs at least one epoch");
  Optimizer opt;
  std::vector<EpochStats> hist;
  const CosineSchedule sched{opts.lr, opts.min_lr, opts.epochs};
  for (int e = 0; e < opts.epochs; ++e) {
    const double lr = opts.lr > 0.0 ? cosine_lr(sched, e) : 0.0;
    hist.push_back(train_epoch(net, data, T, opt, lr, opts.batch_size, opts.seed * 1000003ULL + static_cast<std::uint64_t>(e)));
    if (on_epoch) on_epoch(e, hist.back());
  }
  return hist;
}

/// Per-batch eval-mode hook. With several threads, calls for different batch
/// indices may run concurrently; each call owns only its own batch index.
using EvalObserver = std::function<void(std::size_t batch_index, const ForwardResult&, const Batch&)>;

inline std::size_t num_batches(std::size_t n, std::size_t batch_size) { return (n + batch_size - 1) / batch_size; }

/// Percentage of correctly classified samples (eval mode, running BN statistics).
/// With `threads` > 1 batches are distributed across copies of the network;
/// results are identical to the single-threaded run.
inline double evaluate(const Network& net, const Dataset& data, const TimestepVector& T, std::size_t batch_size = 64,
                       unsigned threads = 1, const EvalObserver& observer = {}) {
  if (data.size() == 0) throw ArgumentError("evaluate: empty dataset");
  const auto batches = batch_indices(data.size(), batch_size, std::nullopt);
  std::vector<std::size_t> correct(batches.size(), 0);
  auto run = [&](std::size_t first, std::size_t stride) {
    Network local = net;
    for (std::size_t bi = first; bi < batches.size(); bi += stride) {
      const Batch b = make_batch(data, batches[bi]);
      const auto fwd = network_forward(local, b.images, T, Mode::eval);
      const auto pred = predict_labels(fwd.logits);
      for (std::size_t i = 0; i < pred.size(); ++i) correct[bi] += pred[i] == b.labels[i];
      if (observer) observer(bi, fwd, b);
    }
  };
  threads = std::max(1u, threads);
  if (threads == 1) {
    run(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(run, t, threads);
    for (auto& th : pool) th.join();
  }
  std::size_t total = 0;
  for (auto c : correct) total += c;
  return 100.0 * static_cast<double>(total) / static_cast<double>(data.size());
}

}  // namespace sdsnn
