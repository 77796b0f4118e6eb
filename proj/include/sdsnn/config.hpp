// Run configuration: JSON file schema, defaults, validation and hashing.
//
// Every field is optional in the file; absent fields keep their defaults.
// Unknown keys are rejected so typos surface as validation errors.
#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sdsnn/arch.hpp"
#include "sdsnn/checkpoint.hpp"
#include "sdsnn/error.hpp"
#include "sdsnn/metrics.hpp"
#include "sdsnn/neuron.hpp"

namespace sdsnn {

struct DatasetConfig {
  std::string name = "fashion-mnist";  // fashion-mnist | cifar10 | cifar100 | idx
  std::string root;                    // empty: $SDSNN_DATA_ROOT or ./data
  // Used when name == "idx".
  std::string train_images, train_labels, test_images, test_labels;
  int num_classes = 10;
  std::vector<double> mean, stdev;  // empty: per-dataset defaults
};

struct SubsetConfig {
  std::size_t train_count = 0;  // 0: use the full split
  std::size_t test_count = 0;
  std::uint64_t seed = 0;
  bool balanced = true;
};

struct EpochConfig {
  int train = 20;
  int stage1 = 20;
  int stage2 = 20;
  std::optional<int> stage3;  // no default; required by the search command
};

struct SyntheticConfig {
  bool enabled = false;
  TimestepVector optimum;  // accuracy = 100 - sum (t_l - c_l)^2
  double noise = 0.0;      // std of Gaussian noise added below the stage-3 budget
};

struct SearchConfig {
  int trials_stage2 = 100;
  int trials_stage3 = 100;
  double drop_tolerance = 5.0;
  int n_init = 5;
  double kappa = 2.0;
  double warm_noise_factor = 4.0;
  SyntheticConfig synthetic;
};

struct RunConfig {
  DatasetConfig dataset;
  SubsetConfig subset;
  std::string arch = "Input-64C-SD-MP-256C-SD-MP-512C-SD-10C-SD-Voting-10";
  NeuronConfig neuron;
  int t_max = 5;
  TimestepVector timesteps;  // explicit T for train/eval
  EpochConfig epochs;
  std::size_t batch_size = 8;
  std::size_t eval_batch_size = 64;
  double lr = 1e-3;
  double min_lr = 0.0;
  std::uint64_t seed = 0;
  double e_mac_pj = kDefaultEmacPj;
  double e_ac_pj = kDefaultEacPj;
  SearchConfig search;
  std::string output_dir = "runs";
  unsigned threads = 1;
};

enum class Command { train, search, eval, report };

namespace detail {

template <class T>
void read_field(const nlohmann::json& j, const char* key, T& out, const std::string& path,
                std::vector<std::string>& errors) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    errors.push_back(path + key + ": wrong type (" + j.at(key).dump() + ")");
  }
}

inline void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> known, const std::string& path,
                           std::vector<std::string>& errors) {
  for (const auto& [k, v] : j.items()) {
    bool ok = false;
    for (const char* n : known) ok = ok || k == n;
    if (!ok) errors.push_back(path + k + ": unknown field");
  }
}

inline const nlohmann::json* section(const nlohmann::json& j, const char* key, const std::string& path,
                                     std::vector<std::string>& errors) {
  if (!j.contains(key)) return nullptr;
  if (!j.at(key).is_object()) {
    errors.push_back(path + key + ": expected an object");
    return nullptr;
  }
  return &j.at(key);
}

inline std::string join_errors(const std::vector<std::string>& errors) {
  std::string msg;
  for (const auto& e : errors) msg += "\n  " + e;
  return msg;
}

}  // namespace detail

/// Reads a config object over the defaults. Type and unknown-key errors are
/// collected and raised together.
inline RunConfig config_from_json(const nlohmann::json& j) {
  using detail::read_field;
  std::vector<std::string> errs;
  RunConfig c;
  if (!j.is_object()) throw ConfigError("config root must be an object");
  detail::reject_unknown(j,
                         {"dataset", "subset", "arch", "neuron", "t_max", "timesteps", "epochs", "batch_size",
                          "eval_batch_size", "lr", "min_lr", "seed", "energy", "search", "output_dir", "threads"},
                         "", errs);
  if (const auto* d = detail::section(j, "dataset", "", errs)) {
    detail::reject_unknown(*d,
                           {"name", "root", "train_images", "train_labels", "test_images", "test_labels",
                            "num_classes", "mean", "std"},
                           "dataset.", errs);
    read_field(*d, "name", c.dataset.name, "dataset.", errs);
    read_field(*d, "root", c.dataset.root, "dataset.", errs);
    read_field(*d, "train_images", c.dataset.train_images, "dataset.", errs);
    read_field(*d, "train_labels", c.dataset.train_labels, "dataset.", errs);
    read_field(*d, "test_images", c.dataset.test_images, "dataset.", errs);
    read_field(*d, "test_labels", c.dataset.test_labels, "dataset.", errs);
    read_field(*d, "num_classes", c.dataset.num_classes, "dataset.", errs);
    read_field(*d, "mean", c.dataset.mean, "dataset.", errs);
    read_field(*d, "std", c.dataset.stdev, "dataset.", errs);
  }
  if (const auto* s = detail::section(j, "subset", "", errs)) {
    detail::reject_unknown(*s, {"train_count", "test_count", "seed", "balanced"}, "subset.", errs);
    read_field(*s, "train_count", c.subset.train_count, "subset.", errs);
    read_field(*s, "test_count", c.subset.test_count, "subset.", errs);
    read_field(*s, "seed", c.subset.seed, "subset.", errs);
    read_field(*s, "balanced", c.subset.balanced, "subset.", errs);
  }
  read_field(j, "arch", c.arch, "", errs);
  if (const auto* n = detail::section(j, "neuron", "", errs)) {
    detail::reject_unknown(*n, {"kind", "tau", "vth0", "o_max", "surrogate_width", "reset"}, "neuron.", errs);
    std::string kind = to_string(c.neuron.kind), reset = c.neuron.reset == ResetMode::soft ? "soft" : "hard";
    read_field(*n, "kind", kind, "neuron.", errs);
    read_field(*n, "tau", c.neuron.tau, "neuron.", errs);
    read_field(*n, "vth0", c.neuron.vth0, "neuron.", errs);
    read_field(*n, "o_max", c.neuron.o_max, "neuron.", errs);
    read_field(*n, "surrogate_width", c.neuron.surrogate_width, "neuron.", errs);
    read_field(*n, "reset", reset, "neuron.", errs);
    try {
      c.neuron.kind = parse_neuron_kind(kind);
    } catch (const Error&) {
      errs.push_back("neuron.kind: unknown neuron kind '" + kind + "' (expected IF, LIF or SD)");
    }
    if (reset == "soft") c.neuron.reset = ResetMode::soft;
    else if (reset == "hard") c.neuron.reset = ResetMode::hard;
    else errs.push_back("neuron.reset: expected 'soft' or 'hard', got '" + reset + "'");
  }
  read_field(j, "t_max", c.t_max, "", errs);
  read_field(j, "timesteps", c.timesteps, "", errs);
  if (const auto* e = detail::section(j, "epochs", "", errs)) {
    detail::reject_unknown(*e, {"train", "stage1", "stage2", "stage3"}, "epochs.", errs);
    read_field(*e, "train", c.epochs.train, "epochs.", errs);
    read_field(*e, "stage1", c.epochs.stage1, "epochs.", errs);
    read_field(*e, "stage2", c.epochs.stage2, "epochs.", errs);
    int s3 = 0;
    if (e->contains("stage3")) {
      read_field(*e, "stage3", s3, "epochs.", errs);
      c.epochs.stage3 = s3;
    }
  }
  read_field(j, "batch_size", c.batch_size, "", errs);
  read_field(j, "eval_batch_size", c.eval_batch_size, "", errs);
  read_field(j, "lr", c.lr, "", errs);
  read_field(j, "min_lr", c.min_lr, "", errs);
  read_field(j, "seed", c.seed, "", errs);
  if (const auto* e = detail::section(j, "energy", "", errs)) {
    detail::reject_unknown(*e, {"e_mac_pj", "e_ac_pj"}, "energy.", errs);
    read_field(*e, "e_mac_pj", c.e_mac_pj, "energy.", errs);
    read_field(*e, "e_ac_pj", c.e_ac_pj, "energy.", errs);
  }
  if (const auto* s = detail::section(j, "search", "", errs)) {
    detail::reject_unknown(
        *s, {"trials_stage2", "trials_stage3", "drop_tolerance", "n_init", "kappa", "warm_noise_factor", "synthetic"},
        "search.", errs);
    read_field(*s, "trials_stage2", c.search.trials_stage2, "search.", errs);
    read_field(*s, "trials_stage3", c.search.trials_stage3, "search.", errs);
    read_field(*s, "drop_tolerance", c.search.drop_tolerance, "search.", errs);
    read_field(*s, "n_init", c.search.n_init, "search.", errs);
    read_field(*s, "kappa", c.search.kappa, "search.", errs);
    read_field(*s, "warm_noise_factor", c.search.warm_noise_factor, "search.", errs);
    if (const auto* y = detail::section(*s, "synthetic", "search.", errs)) {
      detail::reject_unknown(*y, {"enabled", "optimum", "noise"}, "search.synthetic.", errs);
      read_field(*y, "enabled", c.search.synthetic.enabled, "search.synthetic.", errs);
      read_field(*y, "optimum", c.search.synthetic.optimum, "search.synthetic.", errs);
      read_field(*y, "noise", c.search.synthetic.noise, "search.synthetic.", errs);
    }
  }
  read_field(j, "output_dir", c.output_dir, "", errs);
  read_field(j, "threads", c.threads, "", errs);
  if (!errs.empty()) throw ConfigError("invalid config:" + detail::join_errors(errs));
  return c;
}

inline nlohmann::json config_to_json(const RunConfig& c) {
  nlohmann::json j;
  j["dataset"] = {{"name", c.dataset.name},
                  {"root", c.dataset.root},
                  {"train_images", c.dataset.train_images},
                  {"train_labels", c.dataset.train_labels},
                  {"test_images", c.dataset.test_images},
                  {"test_labels", c.dataset.test_labels},
                  {"num_classes", c.dataset.num_classes},
                  {"mean", c.dataset.mean},
                  {"std", c.dataset.stdev}};
  j["subset"] = {{"train_count", c.subset.train_count},
                 {"test_count", c.subset.test_count},
                 {"seed", c.subset.seed},
                 {"balanced", c.subset.balanced}};
  j["arch"] = c.arch;
  j["neuron"] = neuron_to_json(c.neuron);
  j["t_max"] = c.t_max;
  j["timesteps"] = c.timesteps;
  j["epochs"] = {{"train", c.epochs.train}, {"stage1", c.epochs.stage1}, {"stage2", c.epochs.stage2}};
  if (c.epochs.stage3) j["epochs"]["stage3"] = *c.epochs.stage3;
  j["batch_size"] = c.batch_size;
  j["eval_batch_size"] = c.eval_batch_size;
  j["lr"] = c.lr;
  j["min_lr"] = c.min_lr;
  j["seed"] = c.seed;
  j["energy"] = {{"e_mac_pj", c.e_mac_pj}, {"e_ac_pj", c.e_ac_pj}};
  j["search"] = {{"trials_stage2", c.search.trials_stage2},
                 {"trials_stage3", c.search.trials_stage3},
                 {"drop_tolerance", c.search.drop_tolerance},
                 {"n_init", c.search.n_init},
                 {"kappa", c.search.kappa},
                 {"warm_noise_factor", c.search.warm_noise_factor},
                 {"synthetic",
                  {{"enabled", c.search.synthetic.enabled},
                   {"optimum", c.search.synthetic.optimum},
                   {"noise", c.search.synthetic.noise}}}};
  j["output_dir"] = c.output_dir;
  j["threads"] = c.threads;
  return j;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  try {
    return config_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
}

/// 16 hex digits of FNV-1a 64 over the canonical JSON of the fields that
/// affect results. Thread count and output location are excluded.
inline std::string config_hash(const RunConfig& c) {
  auto j = config_to_json(c);
  j.erase("threads");
  j.erase("output_dir");
  const std::string s = j.dump();
  const auto h = fnv1a64(reinterpret_cast<const std::uint8_t*>(s.data()), s.size());
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

/// Collects every violated constraint for the given command and raises them
/// together, before any data is touched.
inline void validate_config(const RunConfig& c, Command cmd) {
  std::vector<std::string> errs;
  auto check = [&](bool ok, const std::string& msg) {
    if (!ok) errs.push_back(msg);
  };
  std::optional<NetworkArch> arch;
  try {
    arch = parse_architecture(c.arch);
  } catch (const Error& e) {
    errs.push_back(std::string("arch: ") + e.what());
  }
  try {
    c.neuron.validate();
  } catch (const Error& e) {
    errs.push_back(std::string("neuron: ") + e.what());
  }
  check(c.t_max >= 1, "t_max: must be >= 1");
  check(c.batch_size >= 1, "batch_size: must be >= 1");
  check(c.eval_batch_size >= 1, "eval_batch_size: must be >= 1");
  check(c.lr >= 0.0 && std::isfinite(c.lr), "lr: must be finite and >= 0");
  check(c.min_lr >= 0.0 && c.min_lr <= c.lr, "min_lr: must lie in [0, lr]");
  check(c.e_mac_pj > 0.0, "energy.e_mac_pj: must be > 0");
  check(c.e_ac_pj > 0.0, "energy.e_ac_pj: must be > 0");
  check(c.threads >= 1, "threads: must be >= 1");
  const bool synthetic = cmd == Command::search && c.search.synthetic.enabled;
  if (!synthetic && cmd != Command::report) {
    const std::string& n = c.dataset.name;
    check(n == "fashion-mnist" || n == "cifar10" || n == "cifar100" || n == "idx",
          "dataset.name: expected fashion-mnist, cifar10, cifar100 or idx, got '" + n + "'");
    if (n == "idx") {
      check(!c.dataset.train_images.empty(), "dataset.train_images: required for idx datasets");
      check(!c.dataset.train_labels.empty(), "dataset.train_labels: required for idx datasets");
      check(!c.dataset.test_images.empty(), "dataset.test_images: required for idx datasets");
      check(!c.dataset.test_labels.empty(), "dataset.test_labels: required for idx datasets");
      check(c.dataset.num_classes >= 2, "dataset.num_classes: must be >= 2");
    }
    check(c.dataset.mean.size() == c.dataset.stdev.size(), "dataset.mean/std: lengths differ");
    for (double s : c.dataset.stdev) check(s > 0.0, "dataset.std: entries must be > 0");
  }
  if (cmd == Command::train || cmd == Command::eval) {
    check(c.epochs.train >= 1 || cmd == Command::eval, "epochs.train: must be >= 1");
    if (arch) {
      if (c.timesteps.size() != arch->num_spike_layers())
        errs.push_back("timesteps: " + std::to_string(c.timesteps.size()) + " values for " +
                       std::to_string(arch->num_spike_layers()) + " spiking layers");
      for (int t : c.timesteps)
        check(t >= 1 && t <= c.t_max, "timesteps: value " + std::to_string(t) + " outside [1, t_max]");
    }
  }
  if (cmd == Command::search) {
    check(c.epochs.stage1 >= 1, "epochs.stage1: must be >= 1");
    check(c.epochs.stage2 >= 1, "epochs.stage2: must be >= 1");
    check(c.epochs.stage3.has_value(), "epochs.stage3: required (no default)");
    if (c.epochs.stage3) check(*c.epochs.stage3 >= 1, "epochs.stage3: must be >= 1");
    check(c.search.trials_stage2 >= 1, "search.trials_stage2: must be >= 1");
    check(c.search.trials_stage3 >= 1, "search.trials_stage3: must be >= 1");
    check(c.search.n_init >= 1, "search.n_init: must be >= 1");
    check(c.search.trials_stage2 >= c.search.n_init, "search.trials_stage2: must be >= search.n_init");
    check(c.search.drop_tolerance >= 0.0, "search.drop_tolerance: must be >= 0");
    check(c.search.kappa >= 0.0, "search.kappa: must be >= 0");
    check(c.search.warm_noise_factor >= 1.0, "search.warm_noise_factor: must be >= 1");
    if (synthetic) {
      check(c.search.synthetic.noise >= 0.0, "search.synthetic.noise: must be >= 0");
      if (arch)
        check(c.search.synthetic.optimum.size() == arch->num_spike_layers(),
              "search.synthetic.optimum: needs one value per spiking layer");
    }
  }
  if (!errs.empty()) throw ConfigError("invalid config:" + detail::join_errors(errs));
}

}  // namespace sdsnn
