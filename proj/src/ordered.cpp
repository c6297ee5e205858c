#include "panelposi/ordered.hpp"

#include <algorithm>
#include <cmath>
#include <iterator>
#include <random>

#include "panelposi/rng.hpp"

namespace panelposi {

OrderedCounts ordered_counts(const PValueMatrix& P) {
  const Index J = P.n_covariates();
  OrderedCounts c;
  c.units.resize(static_cast<std::size_t>(J));
  c.n_order.assign(static_cast<std::size_t>(J), 0);
  std::vector<Index> acc;
  Index total = 0;
  for (Index k = J - 1; k >= 0; --k) {
    const auto& here = P.units_of(k);
    std::vector<Index> merged;
    std::set_union(acc.begin(), acc.end(), here.begin(), here.end(), std::back_inserter(merged));
    acc = std::move(merged);
    total += static_cast<Index>(here.size());
    c.units[k] = acc;
    c.n_order[k] = total;
  }
  return c;
}

OrderedDecision step_down(const PValueMatrix& P, double gamma) {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in (0, 1]");
  const Index J = P.n_covariates();
  OrderedDecision d;
  d.gamma = gamma;
  d.n_order = ordered_counts(P).n_order;
  d.z.assign(static_cast<std::size_t>(J), 0.0);
  d.log_q.assign(static_cast<std::size_t>(J), 0.0);
  if (J == 0) return d;

  const double n1 = static_cast<double>(d.n_order[0]);
  double z = 0.0;
  for (Index i = J - 1; i >= 0; --i) {
    const auto& units = P.units_of(i);
    if (!units.empty()) {
      const double next = i + 1 < J ? static_cast<double>(d.n_order[i + 1]) : 0.0;
      double sum = 0.0;
      for (Index n : units) sum -= P.log_p(n, i);
      z += sum / (n1 - next);
    }
    d.z[i] = z;
    d.log_q[i] = -z;
  }

  if (d.n_order[0] == 0) return d;
  const double log_base = std::log(gamma) - std::log(static_cast<double>(J)) -
                          std::log(static_cast<double>(P.n_units()));
  for (Index k = J - 1; k >= 0; --k) {
    if (d.n_order[k] == 0) continue;
    if (d.log_q[k] <= log_base + std::log(static_cast<double>(d.n_order[k]))) {
      d.k_hat = k + 1;
      break;
    }
  }
  return d;
}

double ordered_fwer_mc(const OrderedMcConfig& config, Index reps, std::uint64_t seed) {
  if (reps <= 0) throw ConfigError("ordered_fwer_mc: reps must be positive");
  if (config.true_order < 0 || config.true_order > config.n_covariates) {
    throw ConfigError("ordered_fwer_mc: true order outside [0, J]");
  }
  Index failures = 0;
  for (Index r = 0; r < reps; ++r) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(r)));
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    PValueMatrix P(config.n_units, config.n_covariates);
    for (Index n = 0; n < config.n_units; ++n) {
      for (Index k = 0; k < config.n_covariates; ++k) {
        if (unif(rng) >= config.activity) continue;
        // 1 − U lies in (0, 1], so the log is finite.
        double log_p = std::log1p(-unif(rng));
        if (k < config.true_order) log_p *= config.signal_power;
        P.add(n, k, log_p);
      }
    }
    const Index k_hat = step_down(P, config.gamma).k_hat;
    if (k_hat >= config.true_order + 1) ++failures;
  }
  return static_cast<double>(failures) / static_cast<double>(reps);
}

}  // namespace panelposi
