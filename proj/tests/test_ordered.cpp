#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "fixtures.hpp"
#include "panelposi/ordered.hpp"

using namespace panelposi;

TEST(OrderedCounts, NestedLayout) {
  const OrderedCounts c = ordered_counts(fixture::nested_layout());
  EXPECT_EQ(c.n_order, (std::vector<Index>{12, 8, 5, 3}));
  EXPECT_EQ(c.units[3], (std::vector<Index>{0, 1, 4}));
  EXPECT_EQ(c.units[2], (std::vector<Index>{0, 1, 3, 4}));
  EXPECT_EQ(c.units[0], (std::vector<Index>{0, 1, 2, 3, 4}));
}

TEST(OrderedCounts, DegenerateLayouts) {
  EXPECT_EQ(ordered_counts(PValueMatrix(3, 4)).n_order, (std::vector<Index>{0, 0, 0, 0}));
  PValueMatrix last(4, 3);
  last.add(1, 2, -1.0);
  last.add(3, 2, -1.0);
  EXPECT_EQ(ordered_counts(last).n_order, (std::vector<Index>{2, 2, 2}));
}

TEST(StepDown, HandExample) {
  PValueMatrix P(5, 2);
  for (Index n : {0, 1, 2}) P.add(n, 0, -1.0);
  for (Index n : {3, 4}) P.add(n, 1, -1.0);
  const OrderedDecision d = step_down(P, 0.1);
  EXPECT_EQ(d.n_order, (std::vector<Index>{5, 2}));
  EXPECT_NEAR(d.z[1], 0.4, 1e-15);
  EXPECT_NEAR(d.z[0], 1.4, 1e-15);
  EXPECT_NEAR(d.q(1), 0.6703, 5e-5);
  EXPECT_NEAR(d.q(0), 0.2466, 5e-5);
  EXPECT_LT(d.q(0), d.q(1));
}

TEST(StepDown, AllOnesAndEmpty) {
  PValueMatrix ones(4, 3);
  for (Index n = 0; n < 4; ++n) ones.add(n, n % 3, 0.0);
  const OrderedDecision d = step_down(ones, 0.5);
  EXPECT_EQ(d.k_hat, 0);
  for (double z : d.z) EXPECT_EQ(z, 0.0);
  EXPECT_EQ(step_down(PValueMatrix(4, 3), 0.5).k_hat, 0);
  EXPECT_THROW(step_down(ones, 0.0), ConfigError);
}

TEST(StepDown, StrongPrefixIsRejected) {
  PValueMatrix P(10, 4);
  for (Index n = 0; n < 10; ++n) {
    P.add(n, 0, -40.0);
    P.add(n, 1, -30.0);
    if (n % 2 == 0) P.add(n, 2, std::log(0.7));
    if (n % 3 == 0) P.add(n, 3, std::log(0.4));
  }
  EXPECT_EQ(step_down(P, 0.05).k_hat, 2);
}

TEST(StepDown, EqualityRejects) {
  // One cell: q_1 = p and the threshold is γ·1/(1·1).
  PValueMatrix P(1, 1);
  P.add(0, 0, std::log(0.05));
  EXPECT_EQ(step_down(P, 0.05).k_hat, 1);
}

TEST(StepDown, QMonotoneOnRandomPanels) {
  std::mt19937_64 rng(1);
  for (int rep = 0; rep < 200; ++rep) {
    const PValueMatrix P = fixture::random_panel(12, 7, 0.3, rng);
    const OrderedDecision d = step_down(P, 0.1);
    for (size_t k = 1; k < d.log_q.size(); ++k) {
      EXPECT_LE(d.log_q[k - 1], d.log_q[k]);
      EXPECT_GE(d.n_order[k - 1], d.n_order[k]);
    }
    EXPECT_EQ(d.n_order[0], P.n_entries());
    EXPECT_LE(d.k_hat, 7);
  }
}

TEST(OrderedMonteCarlo, GlobalNullControlsFwer) {
  OrderedMcConfig cfg;
  const double fwer = ordered_fwer_mc(cfg, 400, 7);
  EXPECT_LE(fwer, 0.1 + 3 * std::sqrt(0.1 * 0.9 / 400));
  cfg.activity = 0.0;
  EXPECT_EQ(ordered_fwer_mc(cfg, 50, 7), 0.0);
  cfg.activity = 0.3;
  cfg.gamma = 1.0;
  EXPECT_LE(ordered_fwer_mc(cfg, 50, 7), 1.0);
}

TEST(OrderedMonteCarlo, SignalsAreFound) {
  OrderedMcConfig cfg;
  cfg.true_order = 3;
  cfg.signal_power = 200.0;
  // Failures here mean over-rejection beyond the true order.
  EXPECT_LE(ordered_fwer_mc(cfg, 200, 3), 0.1 + 3 * std::sqrt(0.1 * 0.9 / 200));
}
