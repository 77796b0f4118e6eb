// Dataset ingestion for the IDX (Fashion-MNIST) and CIFAR binary formats,
// normalization, deterministic subsetting and mini-batching.
#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "sdsnn/error.hpp"
#include "sdsnn/tensor.hpp"

namespace sdsnn {

struct Dataset {
  Tensor images;  // N x C x H x W
  std::vector<int> labels;
  int num_classes = 0;
  std::string name;

  std::size_t size() const noexcept { return labels.size(); }
  Shape sample_shape() const { return {images.dim(1), images.dim(2), images.dim(3)}; }
};

namespace detail {

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw FormatError("cannot open " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::uint32_t be32(const std::vector<std::uint8_t>& b, std::size_t off) {
  return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) | (std::uint32_t{b[off + 2]} << 8) |
         std::uint32_t{b[off + 3]};
}

inline std::string hex_bytes(const std::vector<std::uint8_t>& b, std::size_t n) {
  std::ostringstream os;
  os << std::hex;
  for (std::size_t i = 0; i < std::min(n, b.size()); ++i)
    os << (i ? " " : "") << (b[i] < 16 ? "0" : "") << static_cast<int>(b[i]);
  return os.str();
}

}  // namespace detail

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

inline Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                        int num_classes = 10, std::string name = "fashion-mnist") {
  const auto img = detail::read_file(images_path);
  const auto lab = detail::read_file(labels_path);
  if (img.size() < 16 || detail::be32(img, 0) != kIdxImageMagic)
    throw FormatError(images_path.string() + ": bad IDX image magic (bytes " + detail::hex_bytes(img, 4) + ")");
  if (lab.size() < 8 || detail::be32(lab, 0) != kIdxLabelMagic)
    throw FormatError(labels_path.string() + ": bad IDX label magic (bytes " + detail::hex_bytes(lab, 4) + ")");

  const std::size_t n = detail::be32(img, 4), rows = detail::be32(img, 8), cols = detail::be32(img, 12);
  const std::size_t nl = detail::be32(lab, 4);
  if (n == 0 || rows == 0 || cols == 0) throw FormatError(images_path.string() + ": empty IDX image file");
  if (img.size() != 16 + n * rows * cols)
    throw FormatError(images_path.string() + ": length " + std::to_string(img.size()) + " does not match header (" +
                      std::to_string(16 + n * rows * cols) + ")");
  if (lab.size() != 8 + nl)
    throw FormatError(labels_path.string() + ": length " + std::to_string(lab.size()) + " does not match header (" +
                      std::to_string(8 + nl) + ")");
  if (nl != n)
    throw FormatError("consistency: " + std::to_string(n) + " images vs " + std::to_string(nl) + " labels");

  Dataset d;
  d.name = std::move(name);
  d.num_classes = num_classes;
  d.images = Tensor({n, 1, rows, cols});
  for (std::size_t i = 0; i < n * rows * cols; ++i) d.images[i] = static_cast<double>(img[16 + i]) / 255.0;
  d.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int l = lab[8 + i];
    if (l >= num_classes) throw FormatError("label " + std::to_string(l) + " out of range at index " + std::to_string(i));
    d.labels[i] = l;
  }
  return d;
}

enum class CifarVariant { cifar10, cifar100 };

inline Dataset load_cifar_bin(const std::vector<std::filesystem::path>& paths, CifarVariant variant) {
  constexpr std::size_t pixels = 3 * 32 * 32;
  const std::size_t label_bytes = variant == CifarVariant::cifar10 ? 1 : 2;
  const std::size_t record = label_bytes + pixels;
  std::vector<std::vector<std::uint8_t>> files;
  std::size_t total = 0;
  for (const auto& p : paths) {
    auto b = detail::read_file(p);
    if (b.empty() || b.size() % record != 0)
      throw FormatError(p.string() + ": size " + std::to_string(b.size()) + " is not a positive multiple of the " +
                        std::to_string(record) + "-byte record");
    total += b.size() / record;
    files.push_back(std::move(b));
  }
  if (total == 0) throw FormatError("no CIFAR records");

  Dataset d;
  d.name = variant == CifarVariant::cifar10 ? "cifar10" : "cifar100";
  d.num_classes = variant == CifarVariant::cifar10 ? 10 : 100;
  d.images = Tensor({total, 3, 32, 32});
  d.labels.reserve(total);
  std::size_t k = 0;
  for (const auto& b : files) {
    for (std::size_t off = 0; off < b.size(); off += record, ++k) {
      const int label = b[off + label_bytes - 1];  // fine label for CIFAR-100
      if (label >= d.num_classes) throw FormatError("CIFAR label " + std::to_string(label) + " out of range");
      d.labels.push_back(label);
      for (std::size_t i = 0; i < pixels; ++i)
        d.images[k * pixels + i] = static_cast<double>(b[off + label_bytes + i]) / 255.0;
    }
  }
  return d;
}

inline Dataset normalize(Dataset d, const std::vector<double>& mean, const std::vector<double>& stdev) {
  const std::size_t C = d.images.dim(1), HW = d.images.dim(2) * d.images.dim(3);
  if (mean.size() != C || stdev.size() != C)
    throw DimensionError("normalize: " + std::to_string(C) + " channels vs " + std::to_string(mean.size()) +
                         " means / " + std::to_string(stdev.size()) + " stds");
  for (double s : stdev)
    if (!(s > 0.0)) throw ArgumentError("normalize: standard deviation must be > 0");
  for (std::size_t n = 0; n < d.size(); ++n)
    for (std::size_t c = 0; c < C; ++c) {
      double* p = &d.images.at(n, c, 0, 0);
      for (std::size_t i = 0; i < HW; ++i) p[i] = (p[i] - mean[c]) / stdev[c];
    }
  return d;
}

inline Dataset denormalize(Dataset d, const std::vector<double>& mean, const std::vector<double>& stdev) {
  const std::size_t C = d.images.dim(1), HW = d.images.dim(2) * d.images.dim(3);
  if (mean.size() != C || stdev.size() != C) throw DimensionError("denormalize: channel count mismatch");
  for (std::size_t n = 0; n < d.size(); ++n)
    for (std::size_t c = 0; c < C; ++c) {
      double* p = &d.images.at(n, c, 0, 0);
      for (std::size_t i = 0; i < HW; ++i) p[i] = p[i] * stdev[c] + mean[c];
    }
  return d;
}

/// Copy of the samples at `indices`, in that order.
inline Dataset select(const Dataset& d, const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw ArgumentError("select: empty index set");
  const Shape s = d.sample_shape();
  const std::size_t per = shape_numel(s);
  Dataset out;
  out.name = d.name;
  out.num_classes = d.num_classes;
  out.images = Tensor({indices.size(), s[0], s[1], s[2]});
  out.labels.reserve(indices.size());
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const std::size_t i = indices[k];
    if (i >= d.size()) throw ArgumentError("select: index " + std::to_string(i) + " out of range");
    std::copy_n(d.images.data().begin() + static_cast<std::ptrdiff_t>(i * per), per,
                out.images.data().begin() + static_cast<std::ptrdiff_t>(k * per));
    out.labels.push_back(d.labels[i]);
  }
  return out;
}

struct SplitSpec {
  std::size_t train_count = 0;
  std::size_t test_count = 0;
  std::uint64_t seed = 0;
  bool balanced = true;
};

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Deterministic disjoint index sets. Balanced mode draws an equal number of
/// samples from every class.
inline SplitIndices split_indices(const Dataset& d, const SplitSpec& spec) {
  if (spec.train_count + spec.test_count > d.size())
    throw ArgumentError("split asks for " + std::to_string(spec.train_count + spec.test_count) + " of " +
                        std::to_string(d.size()) + " samples");
  std::mt19937_64 rng(spec.seed);
  SplitIndices out;
  if (!spec.balanced) {
    std::vector<std::size_t> idx(d.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::shuffle(idx.begin(), idx.end(), rng);
    out.train.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(spec.train_count));
    out.test.assign(idx.begin() + static_cast<std::ptrdiff_t>(spec.train_count),
                    idx.begin() + static_cast<std::ptrdiff_t>(spec.train_count + spec.test_count));
    return out;
  }
  const auto K = static_cast<std::size_t>(d.num_classes);
  if (K == 0 || spec.train_count % K != 0 || spec.test_count % K != 0)
    throw ArgumentError("balanced split counts must be divisible by " + std::to_string(K) + " classes");
  const std::size_t tr = spec.train_count / K, te = spec.test_count / K;
  std::vector<std::vector<std::size_t>> by_class(K);
  for (std::size_t i = 0; i < d.size(); ++i) by_class[static_cast<std::size_t>(d.labels[i])].push_back(i);
  for (std::size_t c = 0; c < K; ++c) {
    auto& v = by_class[c];
    if (v.size() < tr + te)
      throw ArgumentError("class " + std::to_string(c) + " has " + std::to_string(v.size()) + " samples, needs " +
                          std::to_string(tr + te));
    std::shuffle(v.begin(), v.end(), rng);
    out.train.insert(out.train.end(), v.begin(), v.begin() + static_cast<std::ptrdiff_t>(tr));
    out.test.insert(out.test.end(), v.begin() + static_cast<std::ptrdiff_t>(tr),
                    v.begin() + static_cast<std::ptrdiff_t>(tr + te));
  }
  std::shuffle(out.train.begin(), out.train.end(), rng);
  std::shuffle(out.test.begin(), out.test.end(), rng);
  return out;
}

inline std::pair<Dataset, Dataset> subset_split(const Dataset& d, const SplitSpec& spec) {
  const auto idx = split_indices(d, spec);
  return {select(d, idx.train), select(d, idx.test)};
}

/// Deterministic subset of `count` samples from a single file's dataset.
inline Dataset subset(const Dataset& d, std::size_t count, std::uint64_t seed, bool balanced) {
  if (count >= d.size() && !balanced) return d;
  return select(d, split_indices(d, {count, 0, seed, balanced}).train);
}

struct Batch {
  Tensor images;
  Tensor targets;  // one-hot, N x num_classes
  std::vector<int> labels;
};

/// Index groups for one epoch; the final partial batch is kept.
inline std::vector<std::vector<std::size_t>> batch_indices(std::size_t n, std::size_t batch_size,
                                                           std::optional<std::uint64_t> shuffle_seed) {
  if (batch_size < 1) throw ArgumentError("batch size must be >= 1");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (shuffle_seed) {
    std::mt19937_64 rng(*shuffle_seed);
    std::shuffle(idx.begin(), idx.end(), rng);
  }
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < n; i += batch_size)
    out.emplace_back(idx.begin() + static_cast<std::ptrdiff_t>(i),
                     idx.begin() + static_cast<std::ptrdiff_t>(std::min(n, i + batch_size)));
  return out;
}

inline Batch make_batch(const Dataset& d, const std::vector<std::size_t>& indices) {
  Dataset sel = select(d, indices);
  Batch b{std::move(sel.images), Tensor({indices.size(), static_cast<std::size_t>(d.num_classes)}),
          std::move(sel.labels)};
  for (std::size_t i = 0; i < b.labels.size(); ++i)
    b.targets[i * static_cast<std::size_t>(d.num_classes) + static_cast<std::size_t>(b.labels[i])] = 1.0;
  return b;
}

// Dataset root layout:
//   <root>/fashion-mnist/{train,t10k}-{images-idx3,labels-idx1}-ubyte
//   <root>/cifar-10-batches-bin/{data_batch_1..5,test_batch}.bin
//   <root>/cifar-100-binary/{train,test}.bin
inline constexpr const char* kDataRootEnv = "SDSNN_DATA_ROOT";

inline std::filesystem::path data_root(const std::string& fallback = "data") {
  if (const char* env = std::getenv(kDataRootEnv); env && *env) return env;
  return fallback;
}

inline Dataset load_named(const std::string& name, bool train, const std::filesystem::path& root) {
  if (name == "fashion-mnist") {
    const std::string pre = train ? "train" : "t10k";
    return load_idx(root / "fashion-mnist" / (pre + "-images-idx3-ubyte"),
                    root / "fashion-mnist" / (pre + "-labels-idx1-ubyte"));
  }
  if (name == "cifar10") {
    std::vector<std::filesystem::path> files;
    if (train)
      for (int i = 1; i <= 5; ++i) files.push_back(root / "cifar-10-batches-bin" / ("data_batch_" + std::to_string(i) + ".bin"));
    else
      files.push_back(root / "cifar-10-batches-bin" / "test_batch.bin");
    return load_cifar_bin(files, CifarVariant::cifar10);
  }
  if (name == "cifar100")
    return load_cifar_bin({root / "cifar-100-binary" / (train ? "train.bin" : "test.bin")}, CifarVariant::cifar100);
  throw ConfigError("unknown dataset '" + name + "'");
}

/// Per-channel normalization constants used when a config does not override them.
inline std::pair<std::vector<double>, std::vector<double>> default_normalization(const std::string& name) {
  if (name == "fashion-mnist") return {{0.2860}, {0.3530}};
  if (name == "cifar10") return {{0.4914, 0.4822, 0.4465}, {0.2470, 0.2435, 0.2616}};
  if (name == "cifar100") return {{0.5071, 0.4865, 0.4409}, {0.2673, 0.2564, 0.2762}};
  return {{}, {}};
}

}  // namespace sdsnn
