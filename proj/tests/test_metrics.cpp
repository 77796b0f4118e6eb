#include <gtest/gtest.h>

#include <random>

#include "sdsnn/metrics.hpp"
#include "support.hpp"

using namespace sdsnn;

namespace {

// One encoding conv (1 -> 1 channel) feeding a spiking layer, then an 8-channel conv.
const char* kFixtureArch = "Input-1C-SD-8C-Voting-2";

std::vector<Tensor> single_spike(std::size_t h, std::size_t w, double amp) {
  Tensor s({1, 1, 4, 4});
  s.at(0, 0, h, w) = amp;
  return {s};
}

OpCount fixture_counts(std::size_t h, std::size_t w, double amp) {
  return count_synops(parse_architecture(kFixtureArch), {1, 4, 4}, single_spike(h, w, amp), {1});
}

}  // namespace

TEST(CountSynops, InteriorSpikeReachesFullFanOut) {
  const auto c = fixture_counts(1, 2, 1.0);
  ASSERT_EQ(c.layers.size(), 2u);
  EXPECT_EQ(c.layers[0].mac_ops, 4u * 4u * 9u);  // 16 outputs, 9 taps, 1 in and 1 out channel
  EXPECT_EQ(c.layers[0].ac_ops, 0u);
  EXPECT_EQ(c.layers[1].ac_ops, 72u);
  EXPECT_EQ(c.layers[1].mac_ops, 0u);
}

TEST(CountSynops, BorderSpikeReachesFewerOutputs) {
  EXPECT_EQ(fixture_counts(0, 0, 1.0).layers[1].ac_ops, 2u * 2u * 8u);
  EXPECT_EQ(fixture_counts(0, 2, 1.0).layers[1].ac_ops, 2u * 3u * 8u);
}

TEST(CountSynops, AmplitudeIsLinear) {
  EXPECT_EQ(fixture_counts(2, 1, 2.0).layers[1].ac_ops, 2 * fixture_counts(2, 1, 1.0).layers[1].ac_ops);
}

TEST(CountSynops, SilentNetworkKeepsOnlyEncodingMacs) {
  const auto c = count_synops(parse_architecture(kFixtureArch), {1, 4, 4}, {Tensor({3, 1, 4, 4})}, {2});
  EXPECT_EQ(c.total_ac(), 0u);
  EXPECT_EQ(c.total_mac(), 3u * 144u);
}

TEST(CountSynops, MissingSpikesIsStateError) {
  EXPECT_THROW(count_synops(parse_architecture(kFixtureArch), {1, 4, 4}, {}, {}), StateError);
}

// Brute force: scatter every spike through every tap and count in-bounds hits.
TEST(CountSynops, MatchesBruteForceScatter) {
  std::mt19937_64 rng(1);
  const auto arch = parse_architecture("Input-2C-SD-MP-3C-SD-4C-Voting-2");
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<Tensor> spikes{Tensor({2, 2, 6, 6}), Tensor({2, 3, 3, 3})};
    for (auto& s : spikes)
      for (auto& v : s.vec()) v = static_cast<double>(support::random_dim(rng, 0, 4)) * (support::random_dim(rng, 0, 2) == 0);
    const auto c = count_synops(arch, {1, 6, 6}, spikes, {1, 1});
    auto scatter = [](const Tensor& s, std::size_t out_ch) {
      std::uint64_t n = 0;
      const auto H = static_cast<long>(s.dim(2)), W = static_cast<long>(s.dim(3));
      for (std::size_t b = 0; b < s.dim(0); ++b)
        for (std::size_t ch = 0; ch < s.dim(1); ++ch)
          for (long h = 0; h < H; ++h)
            for (long w = 0; w < W; ++w)
              for (long dh = -1; dh <= 1; ++dh)
                for (long dw = -1; dw <= 1; ++dw)
                  if (h + dh >= 0 && h + dh < H && w + dw >= 0 && w + dw < W)
                    n += static_cast<std::uint64_t>(s.at(b, ch, static_cast<std::size_t>(h), static_cast<std::size_t>(w))) * out_ch;
      return n;
    };
    EXPECT_EQ(c.layers[1].ac_ops, scatter(maxpool2x2_forward(spikes[0]).output, 3));
    EXPECT_EQ(c.layers[2].ac_ops, scatter(spikes[1], 4));
  }
}

TEST(CountSynops, BinarySpikesEqualUnitAmplitudeCount) {
  std::mt19937_64 rng(2);
  const auto arch = parse_architecture(kFixtureArch);
  Tensor s({2, 1, 4, 4});
  for (auto& v : s.vec()) v = support::random_dim(rng, 0, 1);
  std::uint64_t sum = 0;
  for (std::size_t i = 0; i < 16; ++i) {
    Tensor one({2, 1, 4, 4});
    one[i] = s[i];
    one[16 + i] = s[16 + i];
    sum += count_synops(arch, {1, 4, 4}, {one}, {1}).total_ac();
  }
  EXPECT_EQ(count_synops(arch, {1, 4, 4}, {s}, {1}).total_ac(), sum);
}

TEST(EstimateEnergy, HandArithmetic) {
  OpCount c;
  c.layers = {LayerOps{1, 100, 0, 0}, LayerOps{3, 0, 1000, 0}};
  const auto e = estimate_energy(c, 4.6, 0.9);
  EXPECT_DOUBLE_EQ(e.total_pj, 1360.0);
  EXPECT_DOUBLE_EQ(e.total_mj, 1.36e-6);
  EXPECT_THROW(estimate_energy(c, 0.0, 0.9), ArgumentError);
}

TEST(EstimateEnergy, ZeroAndLinearity) {
  OpCount zero;
  zero.layers = {LayerOps{}, LayerOps{}};
  EXPECT_EQ(estimate_energy(zero, 4.6, 0.9).total_mj, 0.0);
  OpCount c;
  c.layers = {LayerOps{1, 123, 0, 0}, LayerOps{3, 0, 4567, 0}};
  OpCount twice = c;
  twice += c;
  EXPECT_DOUBLE_EQ(estimate_energy(twice, 4.6, 0.9).total_pj, 2.0 * estimate_energy(c, 4.6, 0.9).total_pj);
}

TEST(EstimateEnergy, MonotoneInAmplitude) {
  std::mt19937_64 rng(3);
  const auto arch = parse_architecture(kFixtureArch);
  Tensor s({1, 1, 4, 4});
  double last = estimate_energy(count_synops(arch, {1, 4, 4}, {s}, {1}), 4.6, 0.9).total_pj;
  for (int k = 0; k < 50; ++k) {
    s[support::random_dim(rng, 0, 15)] += 1.0;
    const double e = estimate_energy(count_synops(arch, {1, 4, 4}, {s}, {1}), 4.6, 0.9).total_pj;
    EXPECT_GE(e, last);
    last = e;
  }
}

TEST(SpikeRate, Definition) {
  EXPECT_EQ(spike_rate({Tensor({2, 2})}), 0.0);
  EXPECT_EQ(spike_rate({Tensor({4}, std::vector<double>{0, 3, 0, 1})}), 50.0);
  EXPECT_EQ(spike_rate({Tensor({2}, std::vector<double>{1, 1}), Tensor({2}, std::vector<double>{0, 0})}), 50.0);
  std::mt19937_64 rng(4);
  for (int k = 0; k < 20; ++k) {
    const double r = spike_rate({support::random_tensor({7}, rng, -1.0, 1.0)});
    EXPECT_GE(r, 0.0);
    EXPECT_LE(r, 100.0);
  }
}

TEST(TrainingStateMemory, IndependentOfTimesteps) {
  const auto arch = parse_architecture("Input-64C-SD-MP-256C-SD-MP-512C-SD-10C-SD-Voting-10");
  EXPECT_EQ(training_state_memory(arch, {1, 28, 28}, {1, 1, 1, 1}, 8),
            training_state_memory(arch, {1, 28, 28}, {5, 5, 5, 5}, 8));
  EXPECT_THROW(training_state_memory(arch, {1, 28, 28}, {1, 1}, 8), ConfigError);
}

TEST(TrainingStateMemory, AddingConvIncreasesCount) {
  const auto small = parse_architecture("Input-4C-SD-Voting-2");
  const auto big = parse_architecture("Input-4C-SD-4C-SD-Voting-2");
  EXPECT_GT(training_state_memory(big, {1, 4, 4}, {1, 1}, 2), training_state_memory(small, {1, 4, 4}, {1}, 2));
}

TEST(TrainingStateMemory, HandEnumeration) {
  // Batch 3, input 1x4x4:
  //   conv 2C: input 48 + normalized 96 + inv std 2
  //   SD:      potential 96 + threshold 1
  //   MP:      argmax 24
  //   conv 4C: input 24 + normalized 48 + inv std 4
  //   SD:      potential 48 + threshold 1
  const std::uint64_t scalars = (48 + 96 + 2) + (96 + 1) + 24 + (24 + 48 + 4) + (48 + 1);
  const auto arch = parse_architecture("Input-2C-SD-MP-4C-SD-Voting-2");
  EXPECT_EQ(training_state_memory(arch, {1, 4, 4}, {3, 2}, 3), scalars * 8);
  EXPECT_EQ(training_state_memory(arch, {1, 4, 4}, {3, 2}, 3, 4), scalars * 4);
}

TEST(EvaluateWithMetrics, AggregatesPerImage) {
  const auto data = support::toy_dataset(10, 1);
  const auto net = Network::create(parse_architecture("Input-4C-SD-4C-Voting-2"), {1, 4, 4}, {}, 2);
  const auto m = evaluate_with_metrics(net, data, {2}, 4.6, 0.9, 4, 1);
  EXPECT_EQ(m.images, 10u);
  EXPECT_EQ(m.accuracy, evaluate(net, data, {2}, 4));
  EXPECT_EQ(m.ops.total_mac(), 10u * 16u * 4u * 9u);
  EXPECT_NEAR(m.energy.total_pj,
              (static_cast<double>(m.ops.total_mac()) * 4.6 + static_cast<double>(m.ops.total_ac()) * 0.9) / 10.0,
              1e-9);

  SpikeTally t;
  evaluate(net, data, {2}, 4, 1, [&](std::size_t, const ForwardResult& f, const Batch&) {
    for (const auto& s : f.spikes) t.add(s);
  });
  EXPECT_EQ(m.spike_rate_percent, t.percent());
  const auto m2 = evaluate_with_metrics(net, data, {2}, 4.6, 0.9, 4, 2);
  EXPECT_EQ(m2.ops.total_ac(), m.ops.total_ac());
  EXPECT_EQ(m2.energy.total_pj, m.energy.total_pj);
}
