// Architecture strings such as "Input-64C-SD-MP-256C-SD-MP-512C-SD-10C-SD-Voting-10".
//
// Grammar (tokens separated by '-'):
//   Input        first token
//   <n>C         3x3 / stride 1 / pad 1 convolution with n output channels,
//                followed implicitly by batch normalization
//   SD           spiking layer (the neuron kind is a run-time setting)
//   MP | MP2     2x2 / stride 2 max pooling
//   Voting <n>   voting readout into n classes; must end the string
#pragma once

#include <cctype>
#include <cstddef>
#include <string>
#include <vector>

#include "sdsnn/error.hpp"
#include "sdsnn/tensor.hpp"

namespace sdsnn {

enum class LayerKind { Input, Conv, Spike, MaxPool, Voting };

struct LayerDescriptor {
  LayerKind kind = LayerKind::Input;
  std::size_t channels = 0;  // conv output channels or voting class count
  std::size_t position = 0;  // token index in the architecture string
};

struct NetworkArch {
  std::string text;
  std::vector<LayerDescriptor> layers;

  std::size_t count(LayerKind k) const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.kind == k;
    return n;
  }
  std::size_t num_spike_layers() const { return count(LayerKind::Spike); }
  std::size_t num_conv_layers() const { return count(LayerKind::Conv); }
  std::size_t num_classes() const { return layers.back().channels; }
};

namespace detail {

inline bool parse_count(const std::string& s, std::size_t& out) {
  if (s.empty() || s.size() > 9) return false;
  for (char c : s)
    if (!std::isdigit(static_cast<unsigned char>(c))) return false;
  out = std::stoul(s);
  return out > 0;
}

}  // namespace detail

inline NetworkArch parse_architecture(const std::string& spec) {
  std::vector<std::string> tokens;
  std::size_t start = 0;
  while (true) {
    const auto dash = spec.find('-', start);
    tokens.push_back(spec.substr(start, dash == std::string::npos ? std::string::npos : dash - start));
    if (dash == std::string::npos) break;
    start = dash + 1;
  }

  NetworkArch arch;
  arch.text = spec;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const std::string& tok = tokens[i];
    std::size_t n = 0;
    if (tok == "Input") {
      arch.layers.push_back({LayerKind::Input, 0, i});
    } else if (tok == "SD") {
      arch.layers.push_back({LayerKind::Spike, 0, i});
    } else if (tok == "MP" || tok == "MP2") {
      arch.layers.push_back({LayerKind::MaxPool, 0, i});
    } else if (tok == "Voting") {
      if (i + 1 >= tokens.size() || !detail::parse_count(tokens[i + 1], n))
        throw ParseError("'Voting' at position " + std::to_string(i) + " must be followed by a class count");
      arch.layers.push_back({LayerKind::Voting, n, i});
      ++i;
    } else if (tok.size() >= 2 && tok.back() == 'C' && detail::parse_count(tok.substr(0, tok.size() - 1), n)) {
      arch.layers.push_back({LayerKind::Conv, n, i});
    } else {
      throw ParseError("unknown token '" + tok + "' at position " + std::to_string(i));
    }
  }

  const auto& L = arch.layers;
  if (L.empty() || L.front().kind != LayerKind::Input)
    throw ParseError("structure: architecture must start with Input");
  if (L.back().kind != LayerKind::Voting) throw ParseError("structure: architecture must end with Voting-<classes>");
  bool conv_pending_spike = false;
  for (std::size_t i = 1; i < L.size(); ++i) {
    const auto& l = L[i];
    if (l.kind == LayerKind::Input) throw ParseError("structure: Input may only appear first");
    if (l.kind == LayerKind::Voting && i + 1 != L.size())
      throw ParseError("structure: Voting must be the last layer");
    if (l.kind == LayerKind::Conv) {
      if (conv_pending_spike)
        throw ParseError("structure: conv at position " + std::to_string(l.position) +
                         " follows a conv with no spiking layer in between");
      conv_pending_spike = true;
    }
    if (l.kind == LayerKind::Spike) {
      if (!conv_pending_spike)
        throw ParseError("structure: spiking layer at position " + std::to_string(l.position) +
                         " is not preceded by a conv");
      conv_pending_spike = false;
    }
  }
  if (arch.num_conv_layers() == 0) throw ParseError("structure: architecture has no conv layer");
  if (arch.num_spike_layers() == 0) throw ParseError("structure: architecture has no spiking layer");
  return arch;
}

/// Per-layer activation shape (C, H, W) after each layer, given the input sample shape.
inline std::vector<Shape> resolve_shapes(const NetworkArch& arch, const Shape& input_chw) {
  if (input_chw.size() != 3) throw DimensionError("input sample shape must be C,H,W, got " + shape_str(input_chw));
  std::vector<Shape> shapes;
  Shape cur = input_chw;
  for (const auto& l : arch.layers) {
    switch (l.kind) {
      case LayerKind::Input:
      case LayerKind::Spike: break;
      case LayerKind::Conv: cur[0] = l.channels; break;  // 3x3, stride 1, pad 1 keeps H, W
      case LayerKind::MaxPool:
        if (cur[1] % 2 || cur[2] % 2)
          throw DimensionError("max pooling at position " + std::to_string(l.position) + " receives odd dims " +
                               shape_str(cur));
        cur[1] /= 2;
        cur[2] /= 2;
        break;
      case LayerKind::Voting:
        if (cur[0] % l.channels)
          throw ConfigError("voting: " + std::to_string(cur[0]) + " channels not divisible into " +
                            std::to_string(l.channels) + " classes");
        break;
    }
    shapes.push_back(cur);
  }
  return shapes;
}

/// Per-spiking-layer internal timestep counts.
using TimestepVector = std::vector<int>;

inline std::string to_string(const TimestepVector& T) {
  std::string s = "[";
  for (std::size_t i = 0; i < T.size(); ++i) s += (i ? "," : "") + std::to_string(T[i]);
  return s + "]";
}

inline void validate_timesteps(const NetworkArch& arch, const TimestepVector& T, int t_max) {
  if (T.size() != arch.num_spike_layers())
    throw ConfigError("timestep vector " + to_string(T) + " has " + std::to_string(T.size()) + " entries, " +
                      arch.text + " has " + std::to_string(arch.num_spike_layers()) + " spiking layers");
  for (int t : T)
    if (t < 1 || t > t_max)
      throw ConfigError("timestep " + std::to_string(t) + " outside [1, " + std::to_string(t_max) + "]");
}

}  // namespace sdsnn
