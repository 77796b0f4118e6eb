// Bayesian search over per-layer timestep vectors.
//
// The search runs in three stages:
//   1. every shared timestep t (all layers equal) is evaluated at a short
//      budget and poorly performing values are dropped from each layer's set;
//   2. a GP-driven search over the reduced lattice at the short budget;
//   3. a GP-driven refinement at the final budget, warm-started with the
//      stage-2 observations at inflated noise.
#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "sdsnn/acquisition.hpp"
#include "sdsnn/arch.hpp"
#include "sdsnn/error.hpp"
#include "sdsnn/gp.hpp"

namespace sdsnn {

enum class Stage { S1, S2, S3 };

inline const char* to_string(Stage s) {
  switch (s) {
    case Stage::S1: return "S1";
    case Stage::S2: return "S2";
    case Stage::S3: return "S3";
  }
  return "?";
}

inline Stage parse_stage(const std::string& s) {
  if (s == "S1") return Stage::S1;
  if (s == "S2") return Stage::S2;
  if (s == "S3") return Stage::S3;
  throw FormatError("unknown stage '" + s + "'");
}

struct SearchSpace {
  int t_max = 5;
  std::vector<std::vector<int>> allowed;  // sorted, per spiking layer

  static SearchSpace full(std::size_t layers, int t_max) {
    std::vector<int> all(static_cast<std::size_t>(t_max));
    std::iota(all.begin(), all.end(), 1);
    return {t_max, std::vector<std::vector<int>>(layers, all)};
  }

  void validate() const {
    if (t_max < 1) throw ArgumentError("search space T_max must be >= 1");
    if (allowed.empty()) throw ArgumentError("search space has no layers");
    for (const auto& s : allowed) {
      if (s.empty()) throw ArgumentError("search space layer with no allowed timesteps");
      for (int t : s)
        if (t < 1 || t > t_max) throw ArgumentError("search space value " + std::to_string(t) + " outside [1, T_max]");
    }
  }

  std::size_t layers() const { return allowed.size(); }

  std::size_t size() const {
    std::size_t n = 1;
    for (const auto& s : allowed) n *= s.size();
    return n;
  }

  bool contains(const TimestepVector& T) const {
    if (T.size() != allowed.size()) return false;
    for (std::size_t i = 0; i < T.size(); ++i)
      if (!std::binary_search(allowed[i].begin(), allowed[i].end(), T[i])) return false;
    return true;
  }

  /// All lattice points in lexicographic order.
  std::vector<TimestepVector> enumerate() const {
    std::vector<TimestepVector> out;
    out.reserve(size());
    std::vector<std::size_t> idx(allowed.size(), 0);
    while (true) {
      TimestepVector T(allowed.size());
      for (std::size_t i = 0; i < T.size(); ++i) T[i] = allowed[i][idx[i]];
      out.push_back(std::move(T));
      std::size_t k = allowed.size();
      while (k > 0) {
        --k;
        if (++idx[k] < allowed[k].size()) break;
        idx[k] = 0;
        if (k == 0) return out;
      }
      if (allowed.empty()) return out;
    }
  }
};

/// Maps each t_l to (t_l - 1) / (T_max - 1) in [0, 1].
inline Point encode_config(const TimestepVector& T, int t_max) {
  Point x(T.size());
  for (std::size_t i = 0; i < T.size(); ++i) {
    if (T[i] < 1 || T[i] > t_max)
      throw ArgumentError("timestep " + std::to_string(T[i]) + " outside [1, " + std::to_string(t_max) + "]");
    x[i] = t_max > 1 ? static_cast<double>(T[i] - 1) / static_cast<double>(t_max - 1) : 0.0;
  }
  return x;
}

struct Trial {
  TimestepVector config;
  double objective = 0.0;  // accuracy percent for real evaluations
  Stage stage = Stage::S2;
  int epochs = 0;
  std::uint64_t seed = 0;
  double wall_time = 0.0;  // seconds
};

/// Trains and scores one configuration for a number of epochs.
using Evaluator = std::function<double(const TimestepVector&, int epochs, Stage)>;

/// Wraps an evaluator: times every call, reports each finished trial to a
/// sink (the trial log), and replays previously logged trials instead of
/// re-evaluating them.
class TrialRecorder {
 public:
  using Sink = std::function<void(const Trial&)>;

  TrialRecorder(Evaluator eval, std::uint64_t seed, std::vector<Trial> replay = {}, Sink sink = {})
      : eval_(std::move(eval)), seed_(seed), replay_(std::move(replay)), sink_(std::move(sink)) {}

  Trial evaluate(const TimestepVector& T, int epochs, Stage stage) {
    for (auto it = replay_.begin(); it != replay_.end(); ++it) {
      if (it->stage == stage && it->epochs == epochs && it->config == T) {
        Trial t = *it;
        replay_.erase(it);
        ++replayed_;
        return t;
      }
    }
    const auto start = std::chrono::steady_clock::now();
    Trial t{T, eval_(T, epochs, stage), stage, epochs, seed_, 0.0};
    t.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    ++evaluated_;
    if (sink_) sink_(t);
    return t;
  }

  std::size_t evaluated() const noexcept { return evaluated_; }
  std::size_t replayed() const noexcept { return replayed_; }

 private:
  Evaluator eval_;
  std::uint64_t seed_;
  std::vector<Trial> replay_;
  Sink sink_;
  std::size_t evaluated_ = 0;
  std::size_t replayed_ = 0;
};

namespace detail {

inline bool prefer(const TimestepVector& a, const TimestepVector& b) {
  const int sa = std::accumulate(a.begin(), a.end(), 0), sb = std::accumulate(b.begin(), b.end(), 0);
  if (sa != sb) return sa < sb;
  return a < b;
}

}  // namespace detail

/// Highest-scoring unevaluated lattice point. Ties (relative 1e-12) go to the
/// smaller timestep sum, then to the lexicographically smaller vector.
inline TimestepVector propose_next(const GpModel& model, const SearchSpace& space, const Acquisition& acq,
                                   const std::set<TimestepVector>& evaluated, double f_best) {
  std::optional<TimestepVector> best;
  double best_score = 0.0;
  for (const auto& T : space.enumerate()) {
    if (evaluated.count(T)) continue;
    const auto p = gp_predict(model, encode_config(T, space.t_max));
    const double s = acq.score(p.mean, p.variance, f_best);
    if (!best) {
      best = T;
      best_score = s;
      continue;
    }
    const double tol = 1e-12 * std::max({1.0, std::abs(s), std::abs(best_score)});
    if (s > best_score + tol || (std::abs(s - best_score) <= tol && detail::prefer(T, *best))) {
      best = T;
      best_score = s;
    }
  }
  if (!best) throw SpaceExhausted();
  return *best;
}

struct BoOptions {
  int n_init = 5;
  std::uint64_t seed = 0;
  double kappa = 2.0;
  double warm_noise_factor = 4.0;
  HyperFitOptions hyper;
};

struct StageResult {
  Trial best;
  std::vector<Trial> trials;
  std::vector<double> incumbent;  // best objective after each trial
};

struct Observation {
  TimestepVector config;
  double value = 0.0;
  double noise_scale = 1.0;
};

namespace detail {

inline void record(StageResult& r, Trial t) {
  if (r.trials.empty() || t.objective > r.best.objective) r.best = t;
  r.trials.push_back(std::move(t));
  r.incumbent.push_back(r.best.objective);
}

/// Evaluates `initial` then proposes points with the GP until `n_trials`
/// evaluations have been made or the space is exhausted.
inline StageResult run_bo(const SearchSpace& space, int n_trials, int epochs, Stage stage, TrialRecorder& rec,
                          const std::vector<Observation>& prior, const std::vector<TimestepVector>& initial,
                          const BoOptions& opts) {
  StageResult r;
  std::set<TimestepVector> evaluated;
  for (const auto& T : initial) {
    if (static_cast<int>(r.trials.size()) >= n_trials) break;
    if (!evaluated.insert(T).second) continue;
    record(r, rec.evaluate(T, epochs, stage));
  }
  const int budget = n_trials - static_cast<int>(r.trials.size());
  for (int it = 1; static_cast<int>(r.trials.size()) < n_trials; ++it) {
    // A budget covering every remaining point exhausts the space whatever the
    // proposals; skip the model and take the points in tie-break order.
    if (static_cast<std::size_t>(n_trials) - r.trials.size() >= space.size() - evaluated.size()) {
      auto rest = space.enumerate();
      std::erase_if(rest, [&](const TimestepVector& T) { return evaluated.count(T) > 0; });
      std::sort(rest.begin(), rest.end(), prefer);
      for (const auto& T : rest) {
        evaluated.insert(T);
        record(r, rec.evaluate(T, epochs, stage));
      }
      break;
    }
    std::vector<Point> X;
    std::vector<double> y, scale;
    for (const auto& o : prior) {
      X.push_back(encode_config(o.config, space.t_max));
      y.push_back(o.value);
      scale.push_back(o.noise_scale);
    }
    for (const auto& t : r.trials) {
      X.push_back(encode_config(t.config, space.t_max));
      y.push_back(t.objective);
      scale.push_back(1.0);
    }
    const auto params = fit_hyperparameters(X, y, scale, opts.seed * 7919ULL + static_cast<std::uint64_t>(it), opts.hyper);
    const auto model = gp_fit(X, y, params, scale);

    double mean = 0.0, var = 0.0;
    for (double v : y) mean += v;
    mean /= static_cast<double>(y.size());
    for (double v : y) var += (v - mean) * (v - mean);
    const double spread = std::sqrt(var / static_cast<double>(y.size()));

    const auto acq = select_acquisition(it, budget, spread, opts.kappa);
    TimestepVector next;
    try {
      next = propose_next(model, space, acq, evaluated, r.best.objective);
    } catch (const SpaceExhausted&) {
      break;
    }
    evaluated.insert(next);
    record(r, rec.evaluate(next, epochs, stage));
  }
  return r;
}

}  // namespace detail

struct Stage1Result {
  SearchSpace reduced;
  std::vector<int> retained;
  std::vector<Trial> trials;
};

/// Evaluates each shared timestep t (every layer at t) and keeps the values
/// whose accuracy is within `drop_tolerance` of the best; 1 is always kept.
inline Stage1Result stage1_shared_step(const SearchSpace& space, int epochs, double drop_tolerance,
                                       TrialRecorder& rec) {
  space.validate();
  if (drop_tolerance < 0.0) throw ArgumentError("drop tolerance must be >= 0");
  std::vector<int> shared = space.allowed.front();
  for (const auto& s : space.allowed) {
    std::vector<int> keep;
    std::set_intersection(shared.begin(), shared.end(), s.begin(), s.end(), std::back_inserter(keep));
    shared = std::move(keep);
  }
  if (!std::binary_search(shared.begin(), shared.end(), 1))
    throw ArgumentError("stage 1 needs timestep 1 in every layer's set");

  Stage1Result r;
  double best = -std::numeric_limits<double>::infinity();
  for (int t : shared) {
    r.trials.push_back(rec.evaluate(TimestepVector(space.layers(), t), epochs, Stage::S1));
    best = std::max(best, r.trials.back().objective);
  }
  for (const auto& tr : r.trials)
    if (tr.objective >= best - drop_tolerance || tr.config.front() == 1) r.retained.push_back(tr.config.front());
  r.reduced.t_max = space.t_max;
  for (const auto& s : space.allowed) {
    std::vector<int> keep;
    std::set_intersection(s.begin(), s.end(), r.retained.begin(), r.retained.end(), std::back_inserter(keep));
    r.reduced.allowed.push_back(std::move(keep));
  }
  return r;
}

/// Random initial design followed by GP-guided proposals at the short budget.
inline StageResult stage2_search(const SearchSpace& space, int n_trials, int epochs, TrialRecorder& rec,
                                 const BoOptions& opts) {
  space.validate();
  const int n_init = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(opts.n_init), space.size()));
  if (n_trials < n_init)
    throw ArgumentError("stage 2 budget " + std::to_string(n_trials) + " is below the " + std::to_string(n_init) +
                        " initial points");
  auto pool = space.enumerate();
  std::mt19937_64 rng(opts.seed);
  std::shuffle(pool.begin(), pool.end(), rng);
  pool.resize(static_cast<std::size_t>(n_init));
  return detail::run_bo(space, n_trials, epochs, Stage::S2, rec, {}, pool, opts);
}

/// GP-guided refinement at the final budget. The stage-2 best is re-evaluated
/// first; stage-2 observations enter the GP with inflated noise.
inline StageResult stage3_refine(const SearchSpace& space, int n_trials, int final_epochs,
                                 const std::vector<Trial>& stage2_trials, TrialRecorder& rec, const BoOptions& opts) {
  space.validate();
  if (n_trials < 1) throw ArgumentError("stage 3 budget must be >= 1");
  if (stage2_trials.empty()) throw ArgumentError("stage 3 needs stage-2 trials");
  std::vector<Observation> prior;
  const Trial* best2 = &stage2_trials.front();
  for (const auto& t : stage2_trials) {
    prior.push_back({t.config, t.objective, opts.warm_noise_factor});
    if (t.objective > best2->objective) best2 = &t;
  }
  return detail::run_bo(space, n_trials, final_epochs, Stage::S3, rec, prior, {best2->config}, opts);
}

struct SearchPlan {
  SearchSpace space;
  int epochs_s1 = 20;
  int epochs_s2 = 20;
  int epochs_s3 = 0;
  int trials_s2 = 100;
  int trials_s3 = 100;
  double drop_tolerance = 5.0;
  BoOptions bo;
};

struct SearchResult {
  Stage1Result stage1;
  StageResult stage2;
  StageResult stage3;
  TimestepVector best;
};

inline SearchResult three_stage_search(const SearchPlan& plan, TrialRecorder& rec) {
  if (plan.epochs_s1 < 1 || plan.epochs_s2 < 1 || plan.epochs_s3 < 1)
    throw ArgumentError("every stage needs at least one epoch");
  if (plan.trials_s2 < 1 || plan.trials_s3 < 1) throw ArgumentError("stage budgets must be >= 1");
  SearchResult r;
  r.stage1 = stage1_shared_step(plan.space, plan.epochs_s1, plan.drop_tolerance, rec);
  r.stage2 = stage2_search(r.stage1.reduced, plan.trials_s2, plan.epochs_s2, rec, plan.bo);
  r.stage3 = stage3_refine(r.stage1.reduced, plan.trials_s3, plan.epochs_s3, r.stage2.trials, rec, plan.bo);
  r.best = r.stage3.best.config;
  return r;
}

}  // namespace sdsnn
