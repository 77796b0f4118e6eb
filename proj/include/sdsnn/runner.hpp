// Glue between a RunConfig and the library: dataset preparation, training
// runs, search evaluators and Table-3 style reports.
#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sdsnn/config.hpp"
#include "sdsnn/data.hpp"
#include "sdsnn/metrics.hpp"
#include "sdsnn/network.hpp"
#include "sdsnn/search.hpp"
#include "sdsnn/trial_log.hpp"

namespace sdsnn {

struct DataSplits {
  Dataset train;
  Dataset test;
};

/// Loads the configured dataset, applies the subset spec and normalizes.
inline DataSplits load_data(const RunConfig& c) {
  DataSplits d;
  if (c.dataset.name == "idx") {
    d.train = load_idx(c.dataset.train_images, c.dataset.train_labels, c.dataset.num_classes, "idx");
    d.test = load_idx(c.dataset.test_images, c.dataset.test_labels, c.dataset.num_classes, "idx");
  } else {
    const auto root = c.dataset.root.empty() ? data_root() : std::filesystem::path(c.dataset.root);
    d.train = load_named(c.dataset.name, true, root);
    d.test = load_named(c.dataset.name, false, root);
  }
  if (c.subset.train_count > 0)
    d.train = subset(d.train, c.subset.train_count, c.subset.seed, c.subset.balanced);
  if (c.subset.test_count > 0)
    d.test = subset(d.test, c.subset.test_count, c.subset.seed + 1, c.subset.balanced);
  auto [mean, stdev] = default_normalization(c.dataset.name);
  if (!c.dataset.mean.empty()) {
    mean = c.dataset.mean;
    stdev = c.dataset.stdev;
  }
  if (!mean.empty()) {
    d.train = normalize(std::move(d.train), mean, stdev);
    d.test = normalize(std::move(d.test), mean, stdev);
  }
  return d;
}

inline TrainOptions train_options(const RunConfig& c, int epochs) {
  return {epochs, c.batch_size, c.lr, c.min_lr, c.seed};
}

struct TrainRun {
  Network net;
  std::vector<EpochStats> history;
};

inline TrainRun train_network(const RunConfig& c, const Dataset& train, const TimestepVector& T, int epochs,
                              const std::function<void(int, const EpochStats&)>& on_epoch = {}) {
  auto arch = parse_architecture(c.arch);
  validate_timesteps(arch, T, c.t_max);
  TrainRun r{Network::create(std::move(arch), train.sample_shape(), c.neuron, c.seed), {}};
  r.history = fit(r.net, train, T, train_options(c, epochs), on_epoch);
  return r;
}

/// Deterministic stand-in objective: 100 - sum (t_l - c_l)^2.
inline double synthetic_objective(const TimestepVector& T, const TimestepVector& optimum) {
  if (T.size() != optimum.size()) throw ArgumentError("synthetic objective: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < T.size(); ++i) s += static_cast<double>((T[i] - optimum[i]) * (T[i] - optimum[i]));
  return 100.0 - s;
}

/// Synthetic evaluator. Evaluations below `final_epochs` get Gaussian noise
/// whose draw depends only on (seed, T, epochs), so reruns reproduce it.
inline Evaluator synthetic_evaluator(TimestepVector optimum, double noise, int final_epochs, std::uint64_t seed) {
  return [optimum = std::move(optimum), noise, final_epochs, seed](const TimestepVector& T, int epochs, Stage) {
    double v = synthetic_objective(T, optimum);
    if (noise > 0.0 && epochs < final_epochs) {
      std::seed_seq sq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                       static_cast<std::uint32_t>(epochs)};
      std::vector<std::uint32_t> s(1);
      sq.generate(s.begin(), s.end());
      std::uint64_t h = s[0];
      for (int t : T) h = h * 1000003ULL + static_cast<std::uint64_t>(t);
      std::mt19937_64 rng(h);
      v += std::normal_distribution<double>(0.0, noise)(rng);
    }
    return v;
  };
}

/// Trains a fresh network for each configuration and returns test accuracy.
inline Evaluator training_evaluator(const RunConfig& c, const DataSplits& data) {
  return [&c, &data](const TimestepVector& T, int epochs, Stage) {
    const auto run = train_network(c, data.train, T, epochs);
    return evaluate(run.net, data.test, T, c.eval_batch_size, c.threads);
  };
}

inline BoOptions bo_options(const RunConfig& c) {
  BoOptions o;
  o.n_init = c.search.n_init;
  o.seed = c.seed;
  o.kappa = c.search.kappa;
  o.warm_noise_factor = c.search.warm_noise_factor;
  return o;
}

inline SearchPlan search_plan(const RunConfig& c) {
  const auto arch = parse_architecture(c.arch);
  SearchPlan p;
  p.space = SearchSpace::full(arch.num_spike_layers(), c.t_max);
  p.epochs_s1 = c.epochs.stage1;
  p.epochs_s2 = c.epochs.stage2;
  p.epochs_s3 = c.epochs.stage3.value_or(0);
  p.trials_s2 = c.search.trials_stage2;
  p.trials_s3 = c.search.trials_stage3;
  p.drop_tolerance = c.search.drop_tolerance;
  p.bo = bo_options(c);
  return p;
}

// ---- reports ---------------------------------------------------------------

struct ReportRow {
  std::string model;
  TimestepVector T;
  double accuracy = 0.0;
  std::optional<double> energy_mj;
  std::optional<double> spike_rate;
  std::string stage;
  int epochs = 0;
};

inline nlohmann::json row_to_json(const ReportRow& r) {
  nlohmann::json j = {{"model", r.model}, {"T", r.T}, {"accuracy", r.accuracy}, {"stage", r.stage},
                      {"epochs", r.epochs}};
  j["energy_mj"] = r.energy_mj ? nlohmann::json(*r.energy_mj) : nlohmann::json(nullptr);
  j["spike_rate"] = r.spike_rate ? nlohmann::json(*r.spike_rate) : nlohmann::json(nullptr);
  return j;
}

/// Fixed-width table with the columns model, T, accuracy, energy, spike rate.
inline std::string render_table(const std::vector<ReportRow>& rows) {
  std::ostringstream os;
  os << std::left << std::setw(24) << "model" << std::setw(22) << "T" << std::right << std::setw(10) << "acc(%)"
     << std::setw(14) << "energy(mJ)" << std::setw(14) << "spike(%)" << std::setw(7) << "stage" << std::setw(8)
     << "epochs" << '\n';
  for (const auto& r : rows) {
    os << std::left << std::setw(24) << r.model << std::setw(22) << to_string(r.T) << std::right << std::fixed
       << std::setprecision(2) << std::setw(10) << r.accuracy;
    if (r.energy_mj) os << std::setw(14) << std::scientific << std::setprecision(4) << *r.energy_mj;
    else os << std::setw(14) << "-";
    if (r.spike_rate) os << std::setw(14) << std::fixed << std::setprecision(2) << *r.spike_rate;
    else os << std::setw(14) << "-";
    os << std::setw(7) << r.stage << std::setw(8) << r.epochs << '\n';
    os << std::defaultfloat;
  }
  return os.str();
}

/// Best trial per stage, keeping the earliest record on ties.
inline std::map<Stage, LoggedTrial> best_per_stage(const std::vector<LoggedTrial>& log) {
  std::map<Stage, LoggedTrial> best;
  for (const auto& t : log) {
    auto it = best.find(t.trial.stage);
    if (it == best.end() || t.trial.objective > it->second.trial.objective) best[t.trial.stage] = t;
  }
  return best;
}

/// One row per log: the best record of the latest stage present.
inline ReportRow summarize_log(const std::string& label, const std::vector<LoggedTrial>& log) {
  if (log.empty()) throw FormatError("trial log '" + label + "' has no records");
  const auto best = best_per_stage(log);
  const auto& last = best.rbegin()->second;
  return {label, last.trial.config, last.trial.objective, last.energy_mj, last.spike_rate,
          to_string(last.trial.stage), last.trial.epochs};
}

}  // namespace sdsnn
