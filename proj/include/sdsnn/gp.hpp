// Gaussian-process regression with an ARD Matern-5/2 kernel.
//
// The model uses a constant mean equal to the empirical mean of the
// observations. Each observation may carry a noise multiplier so that
// low-fidelity observations can be trusted less than high-fidelity ones.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "sdsnn/error.hpp"

namespace sdsnn {

using Point = std::vector<double>;

struct KernelParams {
  std::vector<double> length_scales;
  double signal_var = 1.0;
  double noise_var = 1e-6;
};

inline constexpr double kNoiseFloor = 1e-6;
inline constexpr double kJitterMin = 1e-10;
inline constexpr double kJitterMax = 1e-4;

inline double matern52(const Point& a, const Point& b, const KernelParams& p) {
  if (a.size() != b.size() || a.size() != p.length_scales.size())
    throw DimensionError("kernel inputs of length " + std::to_string(a.size()) + " and " + std::to_string(b.size()) +
                         " with " + std::to_string(p.length_scales.size()) + " length-scales");
  if (!(p.signal_var > 0.0)) throw ArgumentError("kernel signal variance must be > 0");
  double r2 = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!(p.length_scales[i] > 0.0)) throw ArgumentError("kernel length-scales must be > 0");
    const double d = (a[i] - b[i]) / p.length_scales[i];
    r2 += d * d;
  }
  const double s5r = std::sqrt(5.0 * r2);
  return p.signal_var * (1.0 + s5r + 5.0 * r2 / 3.0) * std::exp(-s5r);
}

/// Dense row-major lower-triangular Cholesky factor.
class Cholesky {
 public:
  Cholesky() = default;

  /// Factorizes `a` (n x n, symmetric); returns false if not positive definite.
  bool factor(const std::vector<double>& a, std::size_t n) {
    n_ = n;
    l_.assign(n * n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      double d = a[j * n + j];
      for (std::size_t k = 0; k < j; ++k) d -= l_[j * n + k] * l_[j * n + k];
      if (!(d > 0.0) || !std::isfinite(d)) return false;
      const double ljj = std::sqrt(d);
      l_[j * n + j] = ljj;
      for (std::size_t i = j + 1; i < n; ++i) {
        double s = a[i * n + j];
        for (std::size_t k = 0; k < j; ++k) s -= l_[i * n + k] * l_[j * n + k];
        l_[i * n + j] = s / ljj;
      }
    }
    return true;
  }

  /// Solves L z = b.
  std::vector<double> forward(std::vector<double> b) const {
    for (std::size_t i = 0; i < n_; ++i) {
      double s = b[i];
      for (std::size_t k = 0; k < i; ++k) s -= l_[i * n_ + k] * b[k];
      b[i] = s / l_[i * n_ + i];
    }
    return b;
  }

  /// Solves L^T z = b.
  std::vector<double> backward(std::vector<double> b) const {
    for (std::size_t i = n_; i-- > 0;) {
      double s = b[i];
      for (std::size_t k = i + 1; k < n_; ++k) s -= l_[k * n_ + i] * b[k];
      b[i] = s / l_[i * n_ + i];
    }
    return b;
  }

  std::vector<double> solve(std::vector<double> b) const { return backward(forward(std::move(b))); }

  double log_det() const {
    double s = 0.0;
    for (std::size_t i = 0; i < n_; ++i) s += std::log(l_[i * n_ + i]);
    return 2.0 * s;
  }

  std::size_t size() const noexcept { return n_; }

 private:
  std::size_t n_ = 0;
  std::vector<double> l_;
};

struct GpModel {
  std::vector<Point> inputs;
  std::vector<double> targets;
  std::vector<double> noise_scale;  // per-observation multiplier of params.noise_var
  KernelParams params;
  double mean = 0.0;
  double jitter = 0.0;
  Cholesky chol;
  std::vector<double> alpha;  // (K + noise)^-1 (y - mean)
};

namespace detail {

inline std::vector<double> gram(const std::vector<Point>& X, const std::vector<double>& noise_scale,
                                const KernelParams& p, double jitter) {
  const std::size_t n = X.size();
  std::vector<double> K(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j <= i; ++j) {
      const double k = matern52(X[i], X[j], p);
      K[i * n + j] = k;
      K[j * n + i] = k;
    }
  for (std::size_t i = 0; i < n; ++i) K[i * n + i] += p.noise_var * noise_scale[i] + jitter;
  return K;
}

}  // namespace detail

/// Factorizes K + noise for the given observations. `noise_scale` defaults to ones.
inline GpModel gp_fit(std::vector<Point> X, std::vector<double> y, KernelParams params,
                      std::vector<double> noise_scale = {}) {
  if (X.empty()) throw ArgumentError("gp_fit needs at least one observation");
  if (X.size() != y.size()) throw DimensionError("gp_fit: inputs and targets differ in count");
  if (noise_scale.empty()) noise_scale.assign(X.size(), 1.0);
  if (noise_scale.size() != X.size()) throw DimensionError("gp_fit: noise multipliers differ in count");
  params.noise_var = std::max(params.noise_var, kNoiseFloor);

  GpModel m;
  m.inputs = std::move(X);
  m.targets = std::move(y);
  m.noise_scale = std::move(noise_scale);
  m.params = std::move(params);
  double s = 0.0;
  for (double v : m.targets) s += v;
  m.mean = s / static_cast<double>(m.targets.size());

  const std::size_t n = m.inputs.size();
  bool ok = false;
  for (double jitter = 0.0; jitter <= kJitterMax; jitter = jitter == 0.0 ? kJitterMin : jitter * 10.0) {
    if (m.chol.factor(detail::gram(m.inputs, m.noise_scale, m.params, jitter), n)) {
      m.jitter = jitter;
      ok = true;
      break;
    }
  }
  if (!ok) throw NumericError("GP kernel matrix is singular even with jitter " + std::to_string(kJitterMax));
  std::vector<double> r(n);
  for (std::size_t i = 0; i < n; ++i) r[i] = m.targets[i] - m.mean;
  m.alpha = m.chol.solve(std::move(r));
  return m;
}

struct Prediction {
  double mean = 0.0;
  double variance = 0.0;
};

inline Prediction gp_predict(const GpModel& m, const Point& x) {
  const std::size_t n = m.inputs.size();
  std::vector<double> k(n);
  for (std::size_t i = 0; i < n; ++i) k[i] = matern52(m.inputs[i], x, m.params);
  Prediction p;
  p.mean = m.mean;
  for (std::size_t i = 0; i < n; ++i) p.mean += k[i] * m.alpha[i];
  const auto v = m.chol.forward(std::move(k));
  double q = 0.0;
  for (double e : v) q += e * e;
  p.variance = std::max(0.0, m.params.signal_var - q);
  return p;
}

inline double log_marginal_likelihood(const GpModel& m) {
  double fit = 0.0;
  for (std::size_t i = 0; i < m.targets.size(); ++i) fit += (m.targets[i] - m.mean) * m.alpha[i];
  return -0.5 * fit - 0.5 * m.chol.log_det() -
         0.5 * static_cast<double>(m.targets.size()) * std::log(2.0 * std::numbers::pi);
}

// ---------------------------------------------------------------------------
// Hyperparameter fitting: multi-start Nelder-Mead on the log marginal likelihood
// ---------------------------------------------------------------------------

/// Minimizes `f` from `x0`; returns the best vertex found within `max_evals`.
inline std::vector<double> nelder_mead(const std::function<double(const std::vector<double>&)>& f,
                                       std::vector<double> x0, double step, int max_evals) {
  const std::size_t d = x0.size();
  std::vector<std::vector<double>> simplex(d + 1, x0);
  for (std::size_t i = 0; i < d; ++i) simplex[i + 1][i] += step;
  std::vector<double> fv(d + 1);
  int evals = 0;
  for (std::size_t i = 0; i <= d; ++i, ++evals) fv[i] = f(simplex[i]);

  std::vector<std::size_t> order(d + 1);
  auto point = [&](const std::vector<double>& c, const std::vector<double>& w, double t) {
    std::vector<double> p(d);
    for (std::size_t i = 0; i < d; ++i) p[i] = c[i] + t * (w[i] - c[i]);
    return p;
  };
  while (evals < max_evals) {
    for (std::size_t i = 0; i <= d; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return fv[a] < fv[b]; });
    const std::size_t best = order[0], worst = order[d], second = order[d - 1];
    if (std::abs(fv[worst] - fv[best]) < 1e-10) break;
    std::vector<double> centroid(d, 0.0);
    for (std::size_t k = 0; k < d; ++k)
      for (std::size_t i = 0; i < d; ++i) centroid[i] += simplex[order[k]][i] / static_cast<double>(d);

    const auto xr = point(centroid, simplex[worst], -1.0);
    const double fr = f(xr);
    ++evals;
    if (fr < fv[best]) {
      const auto xe = point(centroid, simplex[worst], -2.0);
      const double fe = f(xe);
      ++evals;
      simplex[worst] = fe < fr ? xe : xr;
      fv[worst] = std::min(fe, fr);
    } else if (fr < fv[second]) {
      simplex[worst] = xr;
      fv[worst] = fr;
    } else {
      const bool outside = fr < fv[worst];
      const auto xc = point(centroid, outside ? xr : simplex[worst], 0.5);
      const double fc = f(xc);
      ++evals;
      if (fc < std::min(fr, fv[worst])) {
        simplex[worst] = xc;
        fv[worst] = fc;
      } else {
        for (std::size_t k = 1; k <= d; ++k) {
          simplex[order[k]] = point(simplex[best], simplex[order[k]], 0.5);
          fv[order[k]] = f(simplex[order[k]]);
          ++evals;
        }
      }
    }
  }
  const auto it = std::min_element(fv.begin(), fv.end());
  return simplex[static_cast<std::size_t>(it - fv.begin())];
}

struct HyperFitOptions {
  int restarts = 16;
  int max_evals = 150;
  double min_length = 0.05;
  double max_length = 20.0;
};

/// Kernel hyperparameters maximizing the log marginal likelihood of the data.
/// Deterministic for a given `seed`.
inline KernelParams fit_hyperparameters(const std::vector<Point>& X, const std::vector<double>& y,
                                        const std::vector<double>& noise_scale, std::uint64_t seed,
                                        const HyperFitOptions& opts = {}) {
  if (X.empty()) throw ArgumentError("fit_hyperparameters needs data");
  const std::size_t d = X.front().size();
  double mean = 0.0;
  for (double v : y) mean += v;
  mean /= static_cast<double>(y.size());
  double var = 0.0;
  for (double v : y) var += (v - mean) * (v - mean);
  var = std::max(var / static_cast<double>(y.size()), 1e-6);

  const double lo_l = std::log(opts.min_length), hi_l = std::log(opts.max_length);
  const double lo_s = std::log(var * 1e-2), hi_s = std::log(var * 1e2);
  const double lo_n = std::log(kNoiseFloor), hi_n = std::log(std::max(var, 2 * kNoiseFloor));
  auto decode = [&](const std::vector<double>& th) {
    KernelParams p;
    p.length_scales.resize(d);
    for (std::size_t i = 0; i < d; ++i) p.length_scales[i] = std::exp(std::clamp(th[i], lo_l, hi_l));
    p.signal_var = std::exp(std::clamp(th[d], lo_s, hi_s));
    p.noise_var = std::exp(std::clamp(th[d + 1], lo_n, hi_n));
    return p;
  };
  auto objective = [&](const std::vector<double>& th) {
    try {
      return -log_marginal_likelihood(gp_fit(X, y, decode(th), noise_scale));
    } catch (const NumericError&) {
      return std::numeric_limits<double>::infinity();
    }
  };

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::vector<double> best_theta;
  double best = std::numeric_limits<double>::infinity();
  for (int r = 0; r < opts.restarts; ++r) {
    std::vector<double> th(d + 2);
    if (r == 0) {
      for (std::size_t i = 0; i < d; ++i) th[i] = std::log(0.5);
      th[d] = std::log(var);
      th[d + 1] = std::log(std::max(var * 1e-3, kNoiseFloor));
    } else {
      for (std::size_t i = 0; i < d; ++i) th[i] = lo_l + (hi_l - lo_l) * u01(rng);
      th[d] = lo_s + (hi_s - lo_s) * u01(rng);
      th[d + 1] = lo_n + (hi_n - lo_n) * u01(rng);
    }
    auto sol = nelder_mead(objective, th, 0.5, opts.max_evals);
    const double v = objective(sol);
    if (v < best) {
      best = v;
      best_theta = sol;
    }
  }
  if (best_theta.empty()) throw NumericError("GP hyperparameter fit failed for every restart");
  return decode(best_theta);
}

}  // namespace sdsnn
