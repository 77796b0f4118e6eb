#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "sdsnn/acquisition.hpp"

using namespace sdsnn;

namespace {

struct Triple {
  double mu, sigma, f_best;
};

// Draws triples whose improvement region is within 2.5 sigma of the mean, so
// the sampled estimate and its standard error are not degenerate.
Triple draw_triple(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> mu(-2.0, 2.0), sd(0.1, 2.0), z(-2.5, 2.5);
  const double m = mu(rng), s = sd(rng);
  return {m, s, m + z(rng) * s};
}

}  // namespace

TEST(ExpectedImprovement, MatchesMonteCarlo) {
  std::mt19937_64 rng(1);
  for (int k = 0; k < 5; ++k) {
    const auto [m, s, f] = draw_triple(rng);
    const auto mc = oracle::mc_ei(m, s, f, 200000, 100 + k);
    EXPECT_NEAR(acq_ei(m, s * s, f), mc.mean, 3.0 * mc.stderr_) << m << " " << s << " " << f;
  }
}

TEST(ProbabilityOfImprovement, MatchesMonteCarlo) {
  std::mt19937_64 rng(2);
  for (int k = 0; k < 5; ++k) {
    const auto [m, s, f] = draw_triple(rng);
    const auto mc = oracle::mc_pi(m, s, f, 0.05, 200000, 200 + k);
    EXPECT_NEAR(acq_pi(m, s * s, f, 0.05), mc.mean, 3.0 * mc.stderr_) << m << " " << s << " " << f;
  }
}

TEST(ExpectedImprovement, Properties) {
  EXPECT_EQ(acq_ei(3.0, 0.0, 1.0), 2.0);
  EXPECT_EQ(acq_ei(0.0, 0.0, 1.0), 0.0);
  EXPECT_NEAR(acq_ei(0.0, 1.0, 0.0), 1.0 / std::sqrt(2.0 * std::numbers::pi), 1e-15);
  double last = -1.0;
  for (double m = -3.0; m <= 3.0; m += 0.25) {
    const double v = acq_ei(m, 0.7, 0.5);
    EXPECT_GE(v, 0.0);
    EXPECT_GT(v, last);
    last = v;
  }
  last = -1.0;
  for (double var = 0.01; var <= 4.0; var *= 1.5) {
    const double v = acq_ei(0.0, var, 0.5);
    EXPECT_GT(v, last);
    last = v;
  }
}

TEST(ProbabilityOfImprovement, Properties) {
  EXPECT_EQ(acq_pi(1.0, 0.0, 0.5, 0.1), 1.0);
  EXPECT_EQ(acq_pi(0.5, 0.0, 0.5, 0.1), 0.0);
  EXPECT_NEAR(acq_pi(0.5, 1.0, 0.5, 0.0), 0.5, 1e-15);
  double last = -1.0;
  for (double m = -3.0; m <= 3.0; m += 0.25) {
    const double v = acq_pi(m, 0.7, 0.5, 0.01);
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
    EXPECT_GE(v, last);
    last = v;
  }
}

TEST(ConfidenceBound, Formula) {
  EXPECT_EQ(acq_lcb(1.0, 4.0, 2.0), 5.0);
  EXPECT_EQ(acq_lcb(1.0, 0.0, 2.0), 1.0);
  const Acquisition a{AcqKind::confidence_bound, 3.0, 0.0};
  EXPECT_EQ(a.score(1.0, 4.0, 100.0), 7.0);
}

TEST(Schedule, ThirdsOfBudget) {
  EXPECT_EQ(select_acquisition(1, 100, 1.0).kind, AcqKind::confidence_bound);
  EXPECT_EQ(select_acquisition(33, 100, 1.0).kind, AcqKind::confidence_bound);
  EXPECT_EQ(select_acquisition(34, 100, 1.0).kind, AcqKind::expected_improvement);
  EXPECT_EQ(select_acquisition(50, 100, 1.0).kind, AcqKind::expected_improvement);
  EXPECT_EQ(select_acquisition(67, 100, 1.0).kind, AcqKind::probability_of_improvement);
  EXPECT_EQ(select_acquisition(99, 100, 1.0).kind, AcqKind::probability_of_improvement);
  const auto a = select_acquisition(99, 100, 7.0, 2.5);
  EXPECT_DOUBLE_EQ(a.xi, 0.07);
  EXPECT_EQ(a.kappa, 2.5);
  EXPECT_STREQ(to_string(AcqKind::expected_improvement), "EI");
}
