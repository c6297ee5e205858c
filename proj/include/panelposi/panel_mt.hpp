#pragma once

#include <map>
#include <utility>
#include <vector>

#include "panelposi/numerics.hpp"
#include "panelposi/posi.hpp"

namespace panelposi {

struct PValueEntry {
  Index unit = 0;
  Index covariate = 0;
  double log_p = 0.0;
};

/// Sparse N×J matrix of post-selection log p-values. An entry exists
/// exactly when the covariate is in the unit's active set.
class PValueMatrix {
 public:
  PValueMatrix(Index n_units, Index n_covariates);

  /// Throws DuplicateEntry, or ShapeMismatch for out-of-range indices.
  /// log_p is clipped to ≤ 0.
  void add(Index unit, Index covariate, double log_p);

  Index n_units() const { return n_units_; }
  Index n_covariates() const { return n_covariates_; }
  Index n_entries() const { return static_cast<Index>(cells_.size()); }

  /// K_j, ascending.
  const std::vector<Index>& units_of(Index covariate) const { return units_[covariate]; }
  /// M⁽ⁿ⁾, ascending.
  const std::vector<Index>& active_of(Index unit) const { return active_[unit]; }
  bool contains(Index unit, Index covariate) const;
  double log_p(Index unit, Index covariate) const;

  /// Entries ordered by (unit, covariate).
  std::vector<PValueEntry> entries() const;

 private:
  Index n_units_;
  Index n_covariates_;
  std::map<std::pair<Index, Index>, double> cells_;
  std::vector<std::vector<Index>> units_;
  std::vector<std::vector<Index>> active_;
};

PValueMatrix build_pvalue_matrix(const std::vector<std::vector<PosiCoefficient>>& unit_results,
                                 Index n_units, Index n_covariates);

/// Covariates with K_j ≠ ∅, ascending.
std::vector<Index> hypothesis_family(const PValueMatrix& P);

/// N_j = Σ_{n∈K_j} |M⁽ⁿ⁾| for every covariate (0 outside the family).
std::vector<Index> simultaneity_counts(const PValueMatrix& P);

/// ρ = (Σ_{j: K_j≠∅} |K_j|/N_j)⁻¹. Throws EmptyFamily.
double cohesion(const PValueMatrix& P);

struct CovariateDecision {
  Index covariate = 0;
  Index n_units = 0;  // |K_j|
  Index n_j = 0;
  double min_log_p = 0.0;
  double score_log = 0.0;  // ln(N_j·min p/ρ)
  bool rejected = false;
};

struct MtDecision {
  double gamma = 0.0;
  double rho = 1.0;
  std::vector<CovariateDecision> covariates;  // family members, ascending

  std::vector<Index> rejected() const;
};

/// Rejects H_j iff ln(N_j·min_{n∈K_j} p/ρ) ≤ ln γ. An empty family yields
/// an empty decision with ρ = 1.
MtDecision fwer_reject(const PValueMatrix& P, double gamma);

struct TraverseResult {
  std::vector<double> log_gamma_star;  // ascending, one per family member
  std::vector<Index> covariate;        // covariate entering at each K

  Index size() const { return static_cast<Index>(log_gamma_star.size()); }
  /// γ*(K), K = 1..size().
  double gamma_star(Index K) const;
  /// Largest K with γ*(K) ≤ γ, 0 when there is none.
  Index k_star(double gamma) const;
};

TraverseResult traverse(const PValueMatrix& P);

enum class BonferroniMode { Naive, Bonferroni };

/// Covariates (ascending) with any p ≤ γ (Naive) or ≤ γ/(J·N) (Bonferroni).
std::vector<Index> bonferroni_reject(const PValueMatrix& P, double gamma, BonferroniMode mode);

}  // namespace panelposi
