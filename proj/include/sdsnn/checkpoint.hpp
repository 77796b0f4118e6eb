// Binary checkpoint of a Network.
//
// Layout (all integers little-endian):
//   8 bytes   magic "SDSNNCKP"
//   u32       format version
//   u64       header length L
//   L bytes   JSON header: arch, input shape, neuron config, config hash and
//             the ordered tensor table [{name, shape}]
//   ...       tensor payloads as float64, in table order
//   u64       FNV-1a 64 over every preceding byte
#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sdsnn/arch.hpp"
#include "sdsnn/error.hpp"
#include "sdsnn/network.hpp"

namespace sdsnn {

inline constexpr std::array<char, 8> kCheckpointMagic = {'S', 'D', 'S', 'N', 'N', 'C', 'K', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline std::uint64_t fnv1a64(const std::uint8_t* p, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace detail {

inline void put_le(std::vector<std::uint8_t>& b, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) b.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline std::uint64_t get_le(const std::vector<std::uint8_t>& b, std::size_t off, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(b[off + i]) << (8 * i);
  return v;
}

struct NamedTensor {
  std::string name;
  Shape shape;
  std::vector<double>* values;
};

inline std::vector<NamedTensor> checkpoint_tensors(Network& net) {
  std::vector<NamedTensor> out;
  for (std::size_t i = 0; i < net.convs.size(); ++i) {
    auto& c = net.convs[i];
    const std::string p = "conv" + std::to_string(i) + ".";
    out.push_back({p + "weight", c.weight.shape(), &c.weight.vec()});
    out.push_back({p + "bias", c.bias.shape(), &c.bias.vec()});
    out.push_back({p + "gamma", c.gamma.shape(), &c.gamma.vec()});
    out.push_back({p + "beta", c.beta.shape(), &c.beta.vec()});
    out.push_back({p + "running_mean", {c.bn.running_mean.size()}, &c.bn.running_mean});
    out.push_back({p + "running_var", {c.bn.running_var.size()}, &c.bn.running_var});
  }
  return out;
}

}  // namespace detail

inline nlohmann::json neuron_to_json(const NeuronConfig& n) {
  return {{"kind", to_string(n.kind)},
          {"tau", n.tau},
          {"vth0", n.vth0},
          {"o_max", n.o_max},
          {"surrogate_width", n.surrogate_width},
          {"reset", n.reset == ResetMode::soft ? "soft" : "hard"}};
}

inline NeuronConfig neuron_from_json(const nlohmann::json& j) {
  NeuronConfig n;
  n.kind = parse_neuron_kind(j.at("kind").get<std::string>());
  n.tau = j.at("tau").get<double>();
  n.vth0 = j.at("vth0").get<double>();
  n.o_max = j.at("o_max").get<int>();
  n.surrogate_width = j.at("surrogate_width").get<double>();
  n.reset = j.at("reset").get<std::string>() == "hard" ? ResetMode::hard : ResetMode::soft;
  return n;
}

inline std::vector<std::uint8_t> serialize_checkpoint(const Network& net, const std::string& config_hash) {
  Network copy = net;
  const auto tensors = detail::checkpoint_tensors(copy);
  nlohmann::json header;
  header["arch"] = net.arch.text;
  header["input_shape"] = net.input_shape;
  header["neuron"] = neuron_to_json(net.neuron);
  header["config_hash"] = config_hash;
  header["tensors"] = nlohmann::json::array();
  for (const auto& t : tensors) header["tensors"].push_back({{"name", t.name}, {"shape", t.shape}});
  const std::string h = header.dump();

  std::vector<std::uint8_t> b(kCheckpointMagic.begin(), kCheckpointMagic.end());
  detail::put_le(b, kCheckpointVersion, 4);
  detail::put_le(b, h.size(), 8);
  b.insert(b.end(), h.begin(), h.end());
  for (const auto& t : tensors)
    for (double v : *t.values) detail::put_le(b, std::bit_cast<std::uint64_t>(v), 8);
  detail::put_le(b, fnv1a64(b.data(), b.size()), 8);
  return b;
}

struct LoadedCheckpoint {
  Network net;
  std::string config_hash;
};

/// Verifies the checksum before interpreting anything beyond the fixed prefix.
inline LoadedCheckpoint deserialize_checkpoint(const std::vector<std::uint8_t>& b) {
  constexpr std::size_t prefix = 8 + 4 + 8;
  if (b.size() < prefix + 8 || !std::equal(kCheckpointMagic.begin(), kCheckpointMagic.end(), b.begin()))
    throw FormatError("not a checkpoint (bad magic or truncated)");
  const std::uint64_t stored = detail::get_le(b, b.size() - 8, 8);
  if (fnv1a64(b.data(), b.size() - 8) != stored) throw IntegrityError("checkpoint checksum mismatch");
  const auto version = detail::get_le(b, 8, 4);
  if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
  const std::uint64_t hlen = detail::get_le(b, 12, 8);
  if (hlen > b.size() - prefix - 8) throw FormatError("checkpoint header length out of range");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(b.begin() + prefix, b.begin() + static_cast<std::ptrdiff_t>(prefix + hlen));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint header: ") + e.what());
  }

  LoadedCheckpoint out{{}, header.value("config_hash", std::string())};
  try {
    out.net = Network::create(parse_architecture(header.at("arch").get<std::string>()),
                              header.at("input_shape").get<Shape>(), neuron_from_json(header.at("neuron")), 0);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint header: ") + e.what());
  }
  auto tensors = detail::checkpoint_tensors(out.net);
  const auto& table = header.at("tensors");
  if (table.size() != tensors.size()) throw FormatError("checkpoint tensor table does not match the architecture");
  std::size_t off = prefix + hlen;
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    if (table[i].at("name").get<std::string>() != tensors[i].name ||
        table[i].at("shape").get<Shape>() != tensors[i].shape)
      throw FormatError("checkpoint tensor '" + tensors[i].name + "' has unexpected name or shape");
    auto& vals = *tensors[i].values;
    if (off + vals.size() * 8 > b.size() - 8) throw FormatError("checkpoint payload truncated");
    for (auto& v : vals) {
      v = std::bit_cast<double>(detail::get_le(b, off, 8));
      off += 8;
    }
  }
  if (off != b.size() - 8) throw FormatError("checkpoint has trailing bytes");
  return out;
}

inline void save_checkpoint(const std::filesystem::path& path, const Network& net, const std::string& config_hash) {
  const auto b = serialize_checkpoint(net, config_hash);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

inline LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  return deserialize_checkpoint(detail::read_file(path));
}

}  // namespace sdsnn
