// Acquisition functions for maximizing an objective (accuracy).
#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>

namespace sdsnn {

inline double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }
inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

/// E[max(f - f_best, 0)] under f ~ N(mean, var).
inline double acq_ei(double mean, double var, double f_best) {
  const double sigma = std::sqrt(std::max(var, 0.0));
  const double diff = mean - f_best;
  if (sigma == 0.0) return std::max(diff, 0.0);
  const double z = diff / sigma;
  return std::max(0.0, diff * normal_cdf(z) + sigma * normal_pdf(z));
}

/// P(f > f_best + xi) under f ~ N(mean, var).
inline double acq_pi(double mean, double var, double f_best, double xi) {
  const double sigma = std::sqrt(std::max(var, 0.0));
  const double diff = mean - f_best - xi;
  if (sigma == 0.0) return diff > 0.0 ? 1.0 : 0.0;
  return normal_cdf(diff / sigma);
}

/// Optimistic confidence bound mean + kappa * sigma. Under maximization this is
/// the bound usually called "LCB" when the objective is a loss.
inline double acq_lcb(double mean, double var, double kappa) {
  return mean + kappa * std::sqrt(std::max(var, 0.0));
}

enum class AcqKind { confidence_bound, expected_improvement, probability_of_improvement };

inline const char* to_string(AcqKind k) {
  switch (k) {
    case AcqKind::confidence_bound: return "LCB";
    case AcqKind::expected_improvement: return "EI";
    case AcqKind::probability_of_improvement: return "PI";
  }
  return "?";
}

struct Acquisition {
  AcqKind kind = AcqKind::expected_improvement;
  double kappa = 2.0;
  double xi = 0.0;

  double score(double mean, double var, double f_best) const {
    switch (kind) {
      case AcqKind::confidence_bound: return acq_lcb(mean, var, kappa);
      case AcqKind::expected_improvement: return acq_ei(mean, var, f_best);
      case AcqKind::probability_of_improvement: return acq_pi(mean, var, f_best, xi);
    }
    return 0.0;
  }
};

/// Portfolio schedule over a BO budget: confidence bound for the first third
/// of the iterations, EI for the middle third, PI for the last third.
/// `iteration` counts from 1. `objective_scale` sets PI's margin (1% of it).
inline Acquisition select_acquisition(int iteration, int budget, double objective_scale, double kappa = 2.0) {
  Acquisition a;
  a.kappa = kappa;
  a.xi = 0.01 * objective_scale;
  if (3 * iteration < budget) a.kind = AcqKind::confidence_bound;
  else if (3 * iteration < 2 * budget) a.kind = AcqKind::expected_improvement;
  else a.kind = AcqKind::probability_of_improvement;
  return a;
}

}  // namespace sdsnn
