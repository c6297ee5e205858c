#include "panelposi/panel_mt.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace panelposi {

namespace {

void check_gamma(double gamma) {
  if (!(gamma > 0.0 && gamma <= 1.0)) {
    std::ostringstream msg;
    msg << "gamma must lie in (0, 1], got " << gamma;
    throw ConfigError(msg.str());
  }
}

// Score at or below the level. The linear-space comparison keeps
// K*(γ*(K)) ≥ K even though ln(exp(x)) need not round back to x.
bool within_level(double log_score, double gamma, double log_gamma) {
  return log_score <= log_gamma || std::exp(log_score) <= gamma;
}

void insert_sorted(std::vector<Index>& v, Index x) { v.insert(std::upper_bound(v.begin(), v.end(), x), x); }

}  // namespace

PValueMatrix::PValueMatrix(Index n_units, Index n_covariates)
    : n_units_(n_units),
      n_covariates_(n_covariates),
      units_(static_cast<std::size_t>(std::max<Index>(n_covariates, 0))),
      active_(static_cast<std::size_t>(std::max<Index>(n_units, 0))) {
  if (n_units < 0 || n_covariates < 0) throw ShapeMismatch("negative panel dimensions");
}

void PValueMatrix::add(Index unit, Index covariate, double log_p) {
  if (unit < 0 || unit >= n_units_ || covariate < 0 || covariate >= n_covariates_) {
    std::ostringstream msg;
    msg << "entry (" << unit << ", " << covariate << ") outside a " << n_units_ << "x"
        << n_covariates_ << " panel";
    throw ShapeMismatch(msg.str());
  }
  if (std::isnan(log_p)) throw ParseError("log p-value is NaN");
  const auto [it, inserted] = cells_.emplace(std::make_pair(unit, covariate), std::min(log_p, 0.0));
  if (!inserted) {
    std::ostringstream msg;
    msg << "duplicate p-value for unit " << unit << ", covariate " << covariate;
    throw DuplicateEntry(msg.str());
  }
  insert_sorted(units_[covariate], unit);
  insert_sorted(active_[unit], covariate);
}

bool PValueMatrix::contains(Index unit, Index covariate) const {
  return cells_.count({unit, covariate}) > 0;
}

double PValueMatrix::log_p(Index unit, Index covariate) const {
  const auto it = cells_.find({unit, covariate});
  if (it == cells_.end()) throw ShapeMismatch("no p-value for the requested cell");
  return it->second;
}

std::vector<PValueEntry> PValueMatrix::entries() const {
  std::vector<PValueEntry> out;
  out.reserve(cells_.size());
  for (const auto& [key, lp] : cells_) out.push_back({key.first, key.second, lp});
  return out;
}

PValueMatrix build_pvalue_matrix(const std::vector<std::vector<PosiCoefficient>>& unit_results,
                                 Index n_units, Index n_covariates) {
  PValueMatrix P(n_units, n_covariates);
  for (const auto& unit : unit_results)
    for (const auto& c : unit) P.add(c.unit, c.covariate, c.log_p);
  return P;
}

std::vector<Index> hypothesis_family(const PValueMatrix& P) {
  std::vector<Index> out;
  for (Index j = 0; j < P.n_covariates(); ++j)
    if (!P.units_of(j).empty()) out.push_back(j);
  return out;
}

std::vector<Index> simultaneity_counts(const PValueMatrix& P) {
  std::vector<Index> counts(static_cast<std::size_t>(P.n_covariates()), 0);
  for (Index j = 0; j < P.n_covariates(); ++j)
    for (Index n : P.units_of(j)) counts[j] += static_cast<Index>(P.active_of(n).size());
  return counts;
}

double cohesion(const PValueMatrix& P) {
  const std::vector<Index> counts = simultaneity_counts(P);
  std::vector<double> terms;
  for (Index j = 0; j < P.n_covariates(); ++j) {
    if (P.units_of(j).empty()) continue;
    terms.push_back(static_cast<double>(P.units_of(j).size()) / static_cast<double>(counts[j]));
  }
  if (terms.empty()) throw EmptyFamily("no covariate is active in any unit");
  // Summing in sorted order keeps ρ independent of covariate labels.
  std::sort(terms.begin(), terms.end());
  return 1.0 / std::accumulate(terms.begin(), terms.end(), 0.0);
}

std::vector<Index> MtDecision::rejected() const {
  std::vector<Index> out;
  for (const auto& c : covariates)
    if (c.rejected) out.push_back(c.covariate);
  return out;
}

namespace {

std::vector<CovariateDecision> score_family(const PValueMatrix& P, double& rho) {
  std::vector<CovariateDecision> out;
  const std::vector<Index> family = hypothesis_family(P);
  if (family.empty()) {
    rho = 1.0;
    return out;
  }
  rho = cohesion(P);
  const std::vector<Index> counts = simultaneity_counts(P);
  const double log_rho = std::log(rho);
  for (Index j : family) {
    CovariateDecision c;
    c.covariate = j;
    c.n_units = static_cast<Index>(P.units_of(j).size());
    c.n_j = counts[j];
    c.min_log_p = 0.0;
    for (Index n : P.units_of(j)) c.min_log_p = std::min(c.min_log_p, P.log_p(n, j));
    c.score_log = c.min_log_p + std::log(static_cast<double>(c.n_j)) - log_rho;
    out.push_back(c);
  }
  return out;
}

}  // namespace

MtDecision fwer_reject(const PValueMatrix& P, double gamma) {
  check_gamma(gamma);
  MtDecision d;
  d.gamma = gamma;
  d.covariates = score_family(P, d.rho);
  const double log_gamma = std::log(gamma);
  for (auto& c : d.covariates) c.rejected = within_level(c.score_log, gamma, log_gamma);
  return d;
}

double TraverseResult::gamma_star(Index K) const {
  if (K < 1 || K > size()) throw ConfigError("gamma_star: K out of range");
  return std::exp(log_gamma_star[K - 1]);
}

Index TraverseResult::k_star(double gamma) const {
  if (!(gamma > 0.0)) return 0;
  const double log_gamma = std::log(gamma);
  const auto it = std::partition_point(log_gamma_star.begin(), log_gamma_star.end(),
                                       [&](double lg) { return within_level(lg, gamma, log_gamma); });
  return static_cast<Index>(it - log_gamma_star.begin());
}

TraverseResult traverse(const PValueMatrix& P) {
  double rho = 1.0;
  std::vector<CovariateDecision> scored = score_family(P, rho);
  std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    return a.score_log < b.score_log;
  });
  TraverseResult r;
  for (const auto& c : scored) {
    r.log_gamma_star.push_back(c.score_log);
    r.covariate.push_back(c.covariate);
  }
  return r;
}

std::vector<Index> bonferroni_reject(const PValueMatrix& P, double gamma, BonferroniMode mode) {
  check_gamma(gamma);
  double log_threshold = std::log(gamma);
  if (mode == BonferroniMode::Bonferroni) {
    log_threshold -= std::log(static_cast<double>(P.n_covariates())) +
                     std::log(static_cast<double>(P.n_units()));
  }
  std::vector<Index> out;
  for (Index j = 0; j < P.n_covariates(); ++j) {
    for (Index n : P.units_of(j)) {
      if (P.log_p(n, j) <= log_threshold) {
        out.push_back(j);
        break;
      }
    }
  }
  return out;
}

}  // namespace panelposi
