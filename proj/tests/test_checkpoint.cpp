#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "sdsnn/checkpoint.hpp"
#include "support.hpp"

using namespace sdsnn;

namespace {

Network trained_net() {
  auto net = Network::create(parse_architecture("Input-4C-SD-MP-2C-SD-Voting-2"), {1, 4, 4}, {}, 3);
  fit(net, support::toy_dataset(8, 1), {2, 1}, {2, 4, 1e-2, 0.0, 1});
  return net;
}

}  // namespace

TEST(Fnv1a64, KnownVectors) {
  EXPECT_EQ(fnv1a64(nullptr, 0), 0xcbf29ce484222325ULL);
  const std::uint8_t a = 'a';
  EXPECT_EQ(fnv1a64(&a, 1), 0xaf63dc4c8601ec8cULL);
  const std::string foobar = "foobar";
  EXPECT_EQ(fnv1a64(reinterpret_cast<const std::uint8_t*>(foobar.data()), foobar.size()), 0x85944171f73967e8ULL);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  const auto net = trained_net();
  const auto bytes = serialize_checkpoint(net, "0123456789abcdef");
  const auto loaded = deserialize_checkpoint(bytes);
  EXPECT_EQ(loaded.config_hash, "0123456789abcdef");
  EXPECT_EQ(loaded.net.arch.text, net.arch.text);
  EXPECT_EQ(loaded.net.input_shape, net.input_shape);
  ASSERT_EQ(loaded.net.convs.size(), net.convs.size());
  for (std::size_t i = 0; i < net.convs.size(); ++i) {
    EXPECT_EQ(loaded.net.convs[i].weight, net.convs[i].weight);
    EXPECT_EQ(loaded.net.convs[i].bias, net.convs[i].bias);
    EXPECT_EQ(loaded.net.convs[i].gamma, net.convs[i].gamma);
    EXPECT_EQ(loaded.net.convs[i].beta, net.convs[i].beta);
    EXPECT_EQ(loaded.net.convs[i].bn.running_mean, net.convs[i].bn.running_mean);
    EXPECT_EQ(loaded.net.convs[i].bn.running_var, net.convs[i].bn.running_var);
  }
  std::mt19937_64 rng(2);
  const Tensor x = support::random_tensor({3, 1, 4, 4}, rng, 0.0, 1.0);
  Network a = net, b = loaded.net;
  EXPECT_EQ(network_forward(a, x, {2, 1}, Mode::eval).logits, network_forward(b, x, {2, 1}, Mode::eval).logits);
  EXPECT_EQ(serialize_checkpoint(loaded.net, "0123456789abcdef"), bytes);
}

TEST(Checkpoint, NeuronConfigSurvives) {
  NeuronConfig n;
  n.kind = NeuronKind::LIF;
  n.tau = 0.5;
  n.vth0 = 0.7;
  n.reset = ResetMode::hard;
  const auto net = Network::create(parse_architecture("Input-2C-SD-Voting-2"), {1, 2, 2}, n, 1);
  const auto back = deserialize_checkpoint(serialize_checkpoint(net, "")).net.neuron;
  EXPECT_EQ(back.kind, NeuronKind::LIF);
  EXPECT_EQ(back.tau, 0.5);
  EXPECT_EQ(back.vth0, 0.7);
  EXPECT_EQ(back.reset, ResetMode::hard);
}

TEST(Checkpoint, EveryFlippedByteIsDetected) {
  const auto bytes = serialize_checkpoint(trained_net(), "h");
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    auto bad = bytes;
    bad[i] ^= 0x10;
    EXPECT_THROW(deserialize_checkpoint(bad), Error) << "byte " << i;
  }
  auto payload = bytes;
  payload[payload.size() - 20] ^= 0x01;
  EXPECT_THROW(deserialize_checkpoint(payload), IntegrityError);
}

TEST(Checkpoint, TruncationAndMagic) {
  const auto bytes = serialize_checkpoint(trained_net(), "h");
  EXPECT_THROW(deserialize_checkpoint({}), FormatError);
  EXPECT_THROW(deserialize_checkpoint(std::vector<std::uint8_t>(bytes.begin(), bytes.begin() + 10)), FormatError);
  EXPECT_THROW(deserialize_checkpoint(std::vector<std::uint8_t>(bytes.begin(), bytes.end() - 1)), IntegrityError);
  auto magic = bytes;
  magic[0] = 'X';
  EXPECT_THROW(deserialize_checkpoint(magic), FormatError);
}

TEST(Checkpoint, FileRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "sdsnn_test.ckpt";
  const auto net = trained_net();
  save_checkpoint(path, net, "abc");
  const auto loaded = load_checkpoint(path);
  EXPECT_EQ(loaded.config_hash, "abc");
  EXPECT_EQ(loaded.net.convs[1].weight, net.convs[1].weight);
  std::filesystem::remove(path);
  EXPECT_THROW(load_checkpoint(path), FormatError);
}
