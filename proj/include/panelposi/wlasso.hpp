#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "panelposi/numerics.hpp"

namespace panelposi {

/// Prior weights ω_j ∈ (0, ∞]; ω_j = ∞ leaves coordinate j unpenalized.
struct WeightVector {
  Vector omega;

  Index size() const { return omega.size(); }
  bool unpenalized(Index j) const { return std::isinf(omega(j)); }
  /// ω_j⁻¹, zero for infinite weights.
  double inverse(Index j) const { return unpenalized(j) ? 0.0 : 1.0 / omega(j); }
  Vector inverses() const;
};

/// Rescale the finite entries so that their reciprocals sum to J.
/// Throws AllInfinite when no entry is finite and ConfigError for
/// nonpositive or NaN entries.
WeightVector normalize_weights(const Vector& raw);

/// ω ≡ 1.
WeightVector unit_weights(Index J);

/// exp(a)·ln(J)/√T for a = −8, …, 8 (ascending).
std::vector<double> lambda_grid(Index J, Index T);

struct LassoFit {
  Index unit = 0;
  double lambda = 0.0;
  WeightVector weights;
  Vector beta;                // length J
  std::vector<Index> active;  // ascending
  std::vector<int> signs;     // sign(beta) on `active`
  double kkt_gap = 0.0;
  Index sweeps = 0;

  Index n_active() const { return static_cast<Index>(active.size()); }
};

struct LassoOptions {
  double change_tol = 1e-9;
  double kkt_tol = 1e-7;
  Index max_sweeps = 100000;
};

/// Weighted LASSO in Gram form,
///   ½ βᵀGβ − cᵀβ + λ Σ_j |β_j|/ω_j,   G = XᵀX/T,  c = Xᵀy/T,
/// so one factorization-free object serves every response on a design.
class GramLasso {
 public:
  explicit GramLasso(const Matrix& X);

  Index dim() const { return gram_.cols(); }
  Index n_obs() const { return n_obs_; }
  const Matrix& gram() const { return gram_; }

  /// `xty` is Xᵀy/T. `warm` (optional) seeds coordinate descent.
  LassoFit solve(const Vector& xty, double lambda, const WeightVector& weights,
                 const Vector* warm = nullptr, const LassoOptions& options = {}) const;

 private:
  Matrix gram_;
  Index n_obs_;
};

/// argmin (1/2T)‖y − Xβ‖² + λ Σ_j |β_j|/ω_j.
LassoFit fit_weighted_lasso(const Matrix& X, const Vector& y, double lambda,
                            const WeightVector& weights, const LassoOptions& options = {});

/// Per-coordinate KKT violation of `fit` on (X, y):
///   active, finite ω:  |X_jᵀ(Xβ̂−y)/T + λ s_j/ω_j|
///   inactive, finite:  max(0, |X_jᵀ(Xβ̂−y)|·ω_j/(Tλ) − 1)
///   ω_j = ∞:           |X_jᵀ(Xβ̂−y)/T|
Vector kkt_check(const LassoFit& fit, const Matrix& X, const Vector& y);

/// Objective value (1/2T)‖y − Xβ‖² + λ Σ |β_j|/ω_j.
double lasso_objective(const Matrix& X, const Vector& y, const Vector& beta, double lambda,
                       const WeightVector& weights);

struct CvResult {
  std::vector<double> mean_mse;  // aligned with the grid passed in
  std::vector<double> se;
  Index min_index = 0;
  Index chosen_index = 0;
  double lambda = 0.0;
};

/// K-fold split of the rows of a design, with the per-fold training Gram
/// matrices built once and shared by every response.
class CvPlan {
 public:
  CvPlan(const Matrix& X, Index folds, std::uint64_t seed);

  Index n_folds() const { return static_cast<Index>(test_rows_.size()); }
  const std::vector<std::vector<Index>>& test_rows() const { return test_rows_; }

  /// One-standard-error rule: the largest λ whose mean held-out MSE is
  /// within one SE of the minimum.
  CvResult evaluate(const Vector& y, const WeightVector& weights,
                    const std::vector<double>& grid, const LassoOptions& options = {}) const;

 private:
  struct Fold {
    Matrix x_train;
    Matrix x_test;
    std::vector<Index> train_rows;
    GramLasso solver;
  };
  std::vector<std::vector<Index>> test_rows_;
  std::vector<Fold> folds_;
};

double cross_validate(const Matrix& X, const Vector& y, const WeightVector& weights,
                      const std::vector<double>& grid, Index folds, std::uint64_t seed);

}  // namespace panelposi
