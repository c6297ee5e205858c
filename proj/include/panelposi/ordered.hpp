#pragma once

#include <cstdint>
#include <vector>

#include "panelposi/panel_mt.hpp"

namespace panelposi {

/// Column order of the p-value matrix is the nesting order: rejecting
/// covariate k asserts every covariate before it as well.
struct OrderedCounts {
  std::vector<std::vector<Index>> units;  // K_k^order = ∪_{k'≥k} K_{k'}
  std::vector<Index> n_order;             // N_k^order = Σ_{k'≥k} |K_{k'}|
};

OrderedCounts ordered_counts(const PValueMatrix& P);

struct OrderedDecision {
  double gamma = 0.0;
  std::vector<Index> n_order;
  std::vector<double> z;      // accumulated −ln p statistics, nonincreasing in k
  std::vector<double> log_q;  // ln q_k = −Z_k
  Index k_hat = 0;            // number of leading covariates rejected

  double q(Index k) const { return std::exp(log_q[k]); }
};

/// Step-down rejection: k̂ = max{k : q_k ≤ γ·N_k^order/(J·N)}, 0 if none.
OrderedDecision step_down(const PValueMatrix& P, double gamma);

struct OrderedMcConfig {
  Index n_units = 50;
  Index n_covariates = 10;
  Index true_order = 0;           // covariates 1..s carry signal
  double activity = 0.3;          // chance that a cell is active
  double gamma = 0.1;
  double signal_power = 20.0;     // signal p-values are U^power
};

/// Share of synthetic panels whose step-down rejects beyond the true order.
double ordered_fwer_mc(const OrderedMcConfig& config, Index reps, std::uint64_t seed);

}  // namespace panelposi
