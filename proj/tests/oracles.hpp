// Independent reference implementations shared by the GP unit tests and the
// acceptance binary: a dense Eigen solve of the GP posterior and Monte Carlo
// estimates of the improvement-based acquisition functions.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <random>
#include <vector>

namespace oracle {

struct GpProblem {
  std::vector<std::vector<double>> X;
  std::vector<double> y;
  std::vector<double> length;
  double signal = 1.0;
  double noise = 1e-6;
};

inline double matern(const std::vector<double>& a, const std::vector<double>& b, const std::vector<double>& len,
                     double signal) {
  double r2 = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) r2 += std::pow((a[i] - b[i]) / len[i], 2);
  const double r = std::sqrt(r2);
  return signal * (1.0 + std::sqrt(5.0) * r + 5.0 / 3.0 * r * r) * std::exp(-std::sqrt(5.0) * r);
}

struct Posterior {
  double mean;
  double variance;
};

/// Posterior at x with a constant prior mean equal to the sample mean of y.
inline Posterior gp_posterior(const GpProblem& p, const std::vector<double>& x) {
  const auto n = static_cast<Eigen::Index>(p.X.size());
  Eigen::MatrixXd K(n, n);
  Eigen::VectorXd k(n), r(n);
  double m = 0.0;
  for (double v : p.y) m += v;
  m /= static_cast<double>(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) K(i, j) = matern(p.X[i], p.X[j], p.length, p.signal);
    K(i, i) += p.noise;
    k(i) = matern(p.X[i], x, p.length, p.signal);
    r(i) = p.y[static_cast<std::size_t>(i)] - m;
  }
  const Eigen::FullPivLU<Eigen::MatrixXd> lu(K);
  return {m + k.dot(lu.solve(r)), p.signal - k.dot(lu.solve(k))};
}

inline double log_marginal_likelihood(const GpProblem& p) {
  const auto n = static_cast<Eigen::Index>(p.X.size());
  Eigen::MatrixXd K(n, n);
  Eigen::VectorXd r(n);
  double m = 0.0;
  for (double v : p.y) m += v;
  m /= static_cast<double>(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) K(i, j) = matern(p.X[i], p.X[j], p.length, p.signal);
    K(i, i) += p.noise;
    r(i) = p.y[static_cast<std::size_t>(i)] - m;
  }
  const Eigen::FullPivLU<Eigen::MatrixXd> lu(K);
  return -0.5 * r.dot(lu.solve(r)) - 0.5 * std::log(K.determinant()) - 0.5 * static_cast<double>(n) * std::log(2.0 * M_PI);
}

struct McEstimate {
  double mean;
  double stderr_;
};

/// Sample mean and standard error of g(f) for f ~ N(mu, sigma^2).
template <class G>
McEstimate monte_carlo(double mu, double sigma, std::size_t samples, std::uint64_t seed, G g) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(mu, sigma);
  double s = 0.0, s2 = 0.0;
  for (std::size_t i = 0; i < samples; ++i) {
    const double v = g(d(rng));
    s += v;
    s2 += v * v;
  }
  const double n = static_cast<double>(samples);
  const double mean = s / n;
  return {mean, std::sqrt(std::max(s2 / n - mean * mean, 0.0) / n)};
}

inline McEstimate mc_ei(double mu, double sigma, double f_best, std::size_t samples, std::uint64_t seed) {
  return monte_carlo(mu, sigma, samples, seed, [&](double f) { return std::max(f - f_best, 0.0); });
}

inline McEstimate mc_pi(double mu, double sigma, double f_best, double xi, std::size_t samples, std::uint64_t seed) {
  return monte_carlo(mu, sigma, samples, seed, [&](double f) { return f > f_best + xi ? 1.0 : 0.0; });
}

}  // namespace oracle
