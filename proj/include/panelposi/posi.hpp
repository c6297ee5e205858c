#pragma once

#include <optional>
#include <vector>

#include "panelposi/numerics.hpp"
#include "panelposi/wlasso.hpp"

namespace panelposi {

enum class VarianceMode { KnownSigma, Estimated };

/// Noise covariance used for the truncation geometry and the scale.
/// Known mode takes σ²I or a full Σ; Estimated mode assumes σ²I with σ²
/// replaced by the residual variance of the refit.
struct NoiseModel {
  VarianceMode mode = VarianceMode::Estimated;
  double sigma2 = 1.0;
  std::optional<Matrix> covariance;

  static NoiseModel known(double sigma2) { return {VarianceMode::KnownSigma, sigma2, std::nullopt}; }
  static NoiseModel known(Matrix sigma) { return {VarianceMode::KnownSigma, 1.0, std::move(sigma)}; }
  static NoiseModel estimated() { return {VarianceMode::Estimated, 1.0, std::nullopt}; }
};

/// Selection event {y : A·y ≤ b} of a weighted-LASSO fit.
struct Polyhedron {
  Matrix A;
  Vector b;

  Index rows() const { return A.rows(); }
};

struct TruncationInterval {
  double v_minus = -kInf;
  double v_plus = kInf;

  bool contains(double v) const { return v_minus <= v && v <= v_plus; }
  double width() const { return v_plus - v_minus; }
};

/// Decomposition y = z + ξ·(ηᵀy) with z independent of ηᵀy, and the
/// range of ηᵀy that keeps A·y ≤ b with z held fixed.
struct TruncationGeometry {
  Vector xi;
  Vector z;
  TruncationInterval interval;
};

struct PosiCoefficient {
  Index unit = 0;
  Index covariate = 0;
  double beta_bar = 0.0;
  double eta_norm = 0.0;
  double scale = 0.0;  // sd of ηᵀy under the noise model
  TruncationInterval interval;  // on the ηᵀy (= β̄_j) axis
  double log_p = 0.0;
  VarianceMode mode = VarianceMode::Estimated;
  double sigma_hat = 0.0;  // √σ̂² in Estimated mode, √σ² otherwise (NaN for a general Σ)
  bool degenerate = false;  // interval collapsed; p reported as 1
};

/// β̄_M = X_M⁺·y, the OLS refit on the active columns.
Vector debias(const LassoFit& fit, const Matrix& X, const Vector& y);

/// σ̂² = ‖y − X_M β̄_M‖²/(T − |M| − centered). With no columns: the sample
/// variance of y when `centered`, otherwise ‖y‖²/T.
double estimate_sigma(const Matrix& X_M, const Vector& y, bool centered = false);

/// KKT polyhedron of the fit. Its rows are, in order: upper and lower bounds
/// for each inactive coordinate, then one sign row per penalized active
/// coordinate. Throws SelectionInfeasible if `y` violates it by more than
/// `slack`.
Polyhedron build_polyhedron(const LassoFit& fit, const Matrix& X, const Vector& y,
                            double slack = 1e-6);

/// `covariance` = nullptr means isotropic noise (ξ = η/‖η‖²).
TruncationGeometry truncation_interval(const Polyhedron& poly, const Vector& eta,
                                       const Matrix* covariance, const Vector& y);

/// ln P(X ≤ x) for X ~ N(mu, sigma²) truncated to [v_minus, v_plus].
double tn_logcdf(double x, double mu, double sigma, double v_minus, double v_plus);
/// ln P(X ≥ x) for the same law.
double tn_logsf(double x, double mu, double sigma, double v_minus, double v_plus);

/// Log-tail gap beyond which the smaller tail is taken as computed instead
/// of as the complement of the larger one.
inline constexpr double kDominantTailGap = 10.0;

/// Two-sided log p-value ln min(1, 2·min(F, 1 − F)) of `stat` under a
/// centred truncated normal with sd `scale`.
double posi_log_pvalue(double stat, double scale, const TruncationInterval& interval);

struct UnitOptions {
  NoiseModel noise = NoiseModel::estimated();
  bool centered = false;  // y and X were demeaned over the unit's rows
  double polyhedron_slack = 1e-6;
};

/// One PosiCoefficient per active covariate of `fit`, in covariate order.
std::vector<PosiCoefficient> unit_pipeline(const Matrix& X, const Vector& y, const LassoFit& fit,
                                           const UnitOptions& options = {});

/// Fits the weighted LASSO at `lambda` first.
std::vector<PosiCoefficient> unit_pipeline(const Matrix& X, const Vector& y, double lambda,
                                           const WeightVector& weights,
                                           const UnitOptions& options = {});

/// Columns of X listed in `idx`.
Matrix select_columns(const Matrix& X, const std::vector<Index>& idx);

}  // namespace panelposi
