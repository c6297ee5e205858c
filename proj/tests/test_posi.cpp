#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "oracles.hpp"
#include "panelposi/posi.hpp"

using namespace panelposi;

namespace {

Matrix columns(const Matrix& X, const std::vector<Index>& idx) {
  Matrix out(X.rows(), static_cast<Index>(idx.size()));
  for (size_t a = 0; a < idx.size(); ++a) out.col(static_cast<Index>(a)) = X.col(idx[a]);
  return out;
}

}  // namespace

TEST(Debias, EqualsRefitOnActiveColumns) {
  std::mt19937_64 rng(1);
  for (int rep = 0; rep < 20; ++rep) {
    const Matrix X = oracle::gaussian_matrix(20, 6, rng);
    const Vector y = X.col(1) - X.col(4) + oracle::gaussian_vector(20, rng);
    const LassoFit fit = fit_weighted_lasso(X, y, 0.2, unit_weights(6));
    if (fit.active.empty()) continue;
    const Matrix XM = columns(X, fit.active);
    const Vector bar = debias(fit, X, y);
    EXPECT_LT((bar - oracle::normal_equations(XM, y)).norm(), 1e-10 * (1 + bar.norm()));

    Vector beta_m(fit.n_active());
    for (Index a = 0; a < fit.n_active(); ++a) beta_m(a) = fit.beta(fit.active[a]);
    const Vector corrected = beta_m + ols_solve(XM, Vector(y - XM * beta_m));
    EXPECT_LT((corrected - bar).norm(), 1e-12 * (1 + bar.norm()));
  }
}

TEST(Debias, ColumnEqualToResponse) {
  std::mt19937_64 rng(2);
  Matrix X = oracle::gaussian_matrix(15, 2, rng);
  const Vector y = X.col(0);
  LassoFit fit;
  fit.beta = Vector::Zero(2);
  fit.beta(0) = 0.9;
  fit.active = {0};
  fit.signs = {1};
  const Vector bar = debias(fit, X, y);
  EXPECT_NEAR(bar(0), 1.0, 1e-13);

  fit.active.clear();
  EXPECT_THROW(debias(fit, X, y), EmptyActiveSet);
}

TEST(EstimateSigma, Conventions) {
  std::mt19937_64 rng(3);
  const Matrix X = oracle::gaussian_matrix(12, 2, rng);
  EXPECT_NEAR(estimate_sigma(X, Vector(X * Vector::Ones(2))), 0.0, 1e-25);

  Vector y(4);
  y << 1, 2, 3, 6;
  EXPECT_NEAR(estimate_sigma(Matrix(4, 0), y, true), 14.0 / 3.0, 1e-14);
  EXPECT_NEAR(estimate_sigma(Matrix(4, 0), y, false), 50.0 / 4.0, 1e-14);
  EXPECT_THROW(estimate_sigma(oracle::gaussian_matrix(3, 3, rng), Vector::Ones(3)), DegenerateDof);
}

TEST(EstimateSigma, ConsistentAtLargeT) {
  std::mt19937_64 rng(4);
  int inside = 0;
  for (int rep = 0; rep < 200; ++rep) {
    const Matrix XM = oracle::gaussian_matrix(2000, 5, rng);
    const Vector y = XM * Vector::LinSpaced(5, -1, 1) +
                     std::sqrt(2.0) * oracle::gaussian_vector(2000, rng);
    const double s2 = estimate_sigma(XM, y);
    if (s2 >= 1.8 && s2 <= 2.2) ++inside;
  }
  EXPECT_GE(inside, 190);
}

TEST(Polyhedron, RowCountsAndContainment) {
  std::mt19937_64 rng(5);
  for (int rep = 0; rep < 20; ++rep) {
    const Matrix X = oracle::gaussian_matrix(30, 6, rng);
    const Vector y = X.col(0) + 0.5 * X.col(2) + oracle::gaussian_vector(30, rng);
    const LassoFit fit = fit_weighted_lasso(X, y, 0.1, unit_weights(6));
    if (fit.active.empty()) continue;
    const Polyhedron poly = build_polyhedron(fit, X, y);
    EXPECT_EQ(poly.rows(), 2 * (6 - fit.n_active()) + fit.n_active());
    EXPECT_EQ(poly.A.cols(), 30);
    EXPECT_GE((poly.b - poly.A * y).minCoeff(), -1e-6);
  }
}

TEST(Polyhedron, FullActiveSetHasOnlySignRows) {
  std::mt19937_64 rng(6);
  const Matrix X = oracle::gaussian_matrix(40, 3, rng);
  const Vector y = X * Vector::Constant(3, 2.0) + 0.1 * oracle::gaussian_vector(40, rng);
  const LassoFit fit = fit_weighted_lasso(X, y, 0.01, unit_weights(3));
  ASSERT_EQ(fit.n_active(), 3);
  EXPECT_EQ(build_polyhedron(fit, X, y).rows(), 3);
}

TEST(Polyhedron, UnpenalizedActiveCoordinateHasNoSignRow) {
  std::mt19937_64 rng(7);
  const Matrix X = oracle::gaussian_matrix(40, 4, rng);
  const Vector y = X.col(1) + oracle::gaussian_vector(40, rng);
  Vector raw = Vector::Ones(4);
  raw(0) = kInf;
  const LassoFit fit = fit_weighted_lasso(X, y, 0.1, normalize_weights(raw));
  ASSERT_EQ(fit.active.front(), 0);
  const Index penalized = fit.n_active() - 1;
  EXPECT_EQ(build_polyhedron(fit, X, y).rows(), 2 * (4 - fit.n_active()) + penalized);
}

TEST(Polyhedron, OrthogonalSignRowIsThreshold) {
  std::mt19937_64 rng(8);
  Vector kappa(4);
  kappa << 0.7, 1.0, 1.4, 2.0;
  const Index T = 50;
  const Matrix X = oracle::orthogonal_design(T, kappa, rng);
  const Vector y = X * Vector::Constant(4, 0.6) + oracle::gaussian_vector(T, rng);
  const double lambda = 0.2;
  const LassoFit fit = fit_weighted_lasso(X, y, lambda, unit_weights(4));
  const Polyhedron poly = build_polyhedron(fit, X, y);
  const Index q = 4 - fit.n_active();
  for (Index a = 0; a < fit.n_active(); ++a) {
    const Index j = fit.active[a];
    const double k2 = kappa(j) * kappa(j);
    // s·ηᵀy ≥ λ/κ², with η = X_j/(Tκ²).
    const Vector eta = X.col(j) / (static_cast<double>(T) * k2);
    EXPECT_LT((poly.A.row(2 * q + a).transpose() + fit.signs[a] * eta).norm(), 1e-12);
    EXPECT_NEAR(poly.b(2 * q + a), -lambda / k2, 1e-12);
  }
}

// Crossing any single facet of the selection polyhedron must change the
// selected model and signs.
TEST(Polyhedron, RefitBoundaryOracle) {
  std::mt19937_64 rng(9);
  int checked = 0;
  for (int rep = 0; rep < 30 && checked < 30; ++rep) {
    const Matrix X = oracle::gaussian_matrix(30, 6, rng);
    const Vector y = X.col(0) - 0.7 * X.col(3) + oracle::gaussian_vector(30, rng);
    const double lambda = 0.15;
    const WeightVector w = unit_weights(6);
    const LassoFit fit = fit_weighted_lasso(X, y, lambda, w);
    if (fit.active.empty()) continue;
    const auto pattern = oracle::sign_pattern(fit, 6);
    const Polyhedron poly = build_polyhedron(fit, X, y);
    std::uniform_int_distribution<Index> pick(0, poly.rows() - 1);
    for (int k = 0; k < 3; ++k) {
      const Index i = pick(rng);
      const Vector a = poly.A.row(i).transpose();
      const double room = poly.b(i) - a.dot(y);
      const double push = room + 1e-3 * (1.0 + std::abs(poly.b(i)));
      const Vector moved = y + a * (push / a.squaredNorm());
      const LassoFit refit = fit_weighted_lasso(X, moved, lambda, w);
      EXPECT_NE(oracle::sign_pattern(refit, 6), pattern) << "rep " << rep << " row " << i;
      ++checked;
    }
  }
  EXPECT_GE(checked, 30);
}

TEST(TruncationInterval, OneRow) {
  Polyhedron poly{Matrix(1, 3), Vector(1)};
  poly.A << 1, 2, 0;
  poly.b << 4;
  Vector eta(3);
  eta << 1, 0, 1;
  Vector y(3);
  y << 0.5, 0.2, 0.3;
  const TruncationGeometry g = truncation_interval(poly, eta, nullptr, y);
  const Vector xi = eta / 2.0;
  const Vector z = y - xi * eta.dot(y);
  EXPECT_LT((g.xi - xi).norm(), 1e-15);
  EXPECT_EQ(g.interval.v_minus, -kInf);
  EXPECT_NEAR(g.interval.v_plus, (4.0 - poly.A.row(0).dot(z)) / poly.A.row(0).dot(xi), 1e-14);
  EXPECT_LT((g.z + g.xi * eta.dot(y) - y).norm(), 1e-14);
  EXPECT_TRUE(g.interval.contains(eta.dot(y)));
}

TEST(TruncationInterval, ZeroRowsAndEmptyIntervals) {
  Polyhedron poly{Matrix(1, 2), Vector(1)};
  poly.A << 0, 1;
  poly.b << -1;
  Vector eta(2);
  eta << 1, 0;
  Vector y(2);
  y << 0.3, 0.5;
  EXPECT_THROW(truncation_interval(poly, eta, nullptr, y), InconsistentZeroRow);
  poly.b << 1;
  const TruncationGeometry g = truncation_interval(poly, eta, nullptr, y);
  EXPECT_EQ(g.interval.v_minus, -kInf);
  EXPECT_EQ(g.interval.v_plus, kInf);

  Polyhedron pinched{Matrix(2, 2), Vector(2)};
  pinched.A << 1, 0, -1, 0;
  pinched.b << 0.0, -0.1;  // ηᵀy ≤ 0 and ηᵀy ≥ 0.1
  EXPECT_THROW(truncation_interval(pinched, eta, nullptr, y), EmptyInterval);
}

TEST(TruncationInterval, GeneralCovarianceDecomposition) {
  std::mt19937_64 rng(10);
  const Matrix L = oracle::gaussian_matrix(5, 5, rng);
  const Matrix sigma = L * L.transpose() + Matrix::Identity(5, 5);
  const Vector eta = oracle::gaussian_vector(5, rng);
  const Vector y = oracle::gaussian_vector(5, rng);
  Polyhedron poly{oracle::gaussian_matrix(3, 5, rng), Vector::Constant(3, 10.0)};
  const TruncationGeometry g = truncation_interval(poly, eta, &sigma, y);
  EXPECT_LT((g.z + g.xi * eta.dot(y) - y).norm(), 1e-12);
  // z is uncorrelated with ηᵀy: Cov(z, ηᵀy) = (I − ξηᵀ)Ση = 0.
  EXPECT_LT((sigma * eta - g.xi * eta.dot(sigma * eta)).norm(), 1e-12);
}

TEST(TruncatedNormal, ReducesToNormalWithoutTruncation) {
  for (double x = -6.0; x <= 6.0; x += 0.5) {
    EXPECT_NEAR(tn_logcdf(x, 0.3, 1.7, -kInf, kInf), log_norm_cdf((x - 0.3) / 1.7), 1e-13);
    EXPECT_NEAR(tn_logsf(x, 0.3, 1.7, -kInf, kInf), log_norm_sf((x - 0.3) / 1.7), 1e-13);
  }
}

TEST(TruncatedNormal, Boundaries) {
  EXPECT_EQ(tn_logcdf(-1.0, 0.0, 1.0, -1.0, 2.0), -kInf);
  EXPECT_EQ(tn_logcdf(2.0, 0.0, 1.0, -1.0, 2.0), 0.0);
  EXPECT_EQ(tn_logsf(2.0, 0.0, 1.0, -1.0, 2.0), -kInf);
  EXPECT_THROW(tn_logcdf(2.5, 0.0, 1.0, -1.0, 2.0), OutOfSupport);
  EXPECT_THROW(tn_logcdf(0.0, 0.0, 1.0, 1.0, 1.0), OutOfSupport);
}

TEST(TruncatedNormal, MonotoneAndFiniteInFarTails) {
  double prev = -kInf;
  for (double x = 30.0; x <= 40.0; x += 0.25) {
    const double v = tn_logcdf(x, 0.0, 1.0, 30.0, 40.0);
    EXPECT_GE(v, prev);
    prev = v;
  }
  const double mid = tn_logcdf(30.05, 0.0, 1.0, 30.0, kInf);
  EXPECT_TRUE(std::isfinite(mid));
  // Deep in the upper tail the truncated law is close to 30 + Exp(30).
  EXPECT_NEAR(mid, std::log1p(-std::exp(-30.0 * 0.05 - 0.5 * 0.05 * 0.05)), 2e-3);
  EXPECT_NEAR(std::exp(tn_logsf(-35.5, 0.0, 1.0, -kInf, -35.0)),
              1.0 - std::exp(tn_logcdf(-35.5, 0.0, 1.0, -kInf, -35.0)), 1e-12);
}

// Exponential-proposal rejection sampler for N(0,1) restricted to [a, ∞),
// further restricted to ≤ b.
TEST(TruncatedNormal, RejectionSamplingOracle) {
  const double a = 2.0, b = 5.0, x = 3.0;
  const double rate = 0.5 * (a + std::sqrt(a * a + 4.0));
  std::mt19937_64 rng(123);
  std::exponential_distribution<double> expo(rate);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const long draws = 10'000'000;
  long accepted = 0, below = 0;
  while (accepted < draws) {
    const double z = a + expo(rng);
    if (unif(rng) > std::exp(-0.5 * (z - rate) * (z - rate))) continue;
    if (z > b) continue;
    ++accepted;
    if (z <= x) ++below;
  }
  const double p_hat = static_cast<double>(below) / draws;
  const double se = std::sqrt(p_hat * (1 - p_hat) / draws);
  EXPECT_NEAR(std::exp(tn_logcdf(x, 0.0, 1.0, a, b)), p_hat, 3 * se);
}

TEST(PosiPValue, MedianAndEdges) {
  const TruncationInterval iv{0.5, 4.0};
  const double lo = 0.5, hi = 4.0;
  // Median of N(0,1) on [lo, hi] by bisection on the closed-form CDF.
  double m_lo = lo, m_hi = hi;
  for (int i = 0; i < 200; ++i) {
    const double m = 0.5 * (m_lo + m_hi);
    (oracle::norm_cdf(m) - oracle::norm_cdf(lo) < 0.5L * (oracle::norm_cdf(hi) - oracle::norm_cdf(lo))
         ? m_lo
         : m_hi) = m;
  }
  EXPECT_NEAR(posi_log_pvalue(0.5 * (m_lo + m_hi), 1.0, iv), 0.0, 1e-12);
  EXPECT_LT(posi_log_pvalue(4.0 - 1e-9, 1.0, iv), -15.0);
  EXPECT_EQ(posi_log_pvalue(4.0, 1.0, iv), -kInf);
  for (double s = 0.5; s <= 4.0; s += 0.05) EXPECT_LE(posi_log_pvalue(s, 1.0, iv), 0.0);
}

TEST(PosiPValue, AgreesWithDirectTwoSidedFormula) {
  const TruncationInterval iv{-1.0, 2.5};
  for (double s = -0.95; s < 2.5; s += 0.1) {
    const long double F = (oracle::norm_cdf(s / 1.3) - oracle::norm_cdf(-1.0 / 1.3)) /
                          (oracle::norm_cdf(2.5 / 1.3) - oracle::norm_cdf(-1.0 / 1.3));
    const double expected = std::log(std::min(1.0L, 2.0L * std::min(F, 1.0L - F)));
    EXPECT_NEAR(posi_log_pvalue(s, 1.3, iv), expected, 1e-10) << "s = " << s;
  }
}

TEST(UnitPipeline, EmptyActiveSetGivesNoRows) {
  std::mt19937_64 rng(11);
  const Matrix X = oracle::gaussian_matrix(30, 4, rng);
  const Vector y = oracle::gaussian_vector(30, rng);
  EXPECT_TRUE(unit_pipeline(X, y, 100.0, unit_weights(4)).empty());
}

TEST(UnitPipeline, SingleActiveCoefficientByHand) {
  std::mt19937_64 rng(12);
  for (int rep = 0; rep < 20; ++rep) {
    const Matrix X = oracle::gaussian_matrix(40, 3, rng);
    const Vector y = 0.8 * X.col(1) + oracle::gaussian_vector(40, rng);
    const double lam_max = (X.transpose() * y).cwiseAbs().maxCoeff() / 40.0;
    const LassoFit fit = fit_weighted_lasso(X, y, 0.9 * lam_max, unit_weights(3));
    ASSERT_EQ(fit.n_active(), 1);
    UnitOptions opt;
    opt.noise = NoiseModel::known(1.5);
    const auto rows = unit_pipeline(X, y, fit, opt);
    ASSERT_EQ(rows.size(), 1u);

    const Vector eta = X.col(fit.active[0]) / X.col(fit.active[0]).squaredNorm();
    const double stat = eta.dot(y);
    const double scale = eta.norm() * std::sqrt(1.5);
    const auto& c = rows[0];
    EXPECT_NEAR(c.beta_bar, stat, 1e-12);
    EXPECT_NEAR(c.scale, scale, 1e-12);
    const double F = tn_logcdf(stat, 0, scale, c.interval.v_minus, c.interval.v_plus);
    const double S = tn_logsf(stat, 0, scale, c.interval.v_minus, c.interval.v_plus);
    const double expected = std::min(0.0, std::numbers::ln2 +
                                              std::log(std::min(std::exp(F), std::exp(S))));
    EXPECT_NEAR(c.log_p, expected, 1e-9 * (1 + std::abs(expected)));
  }
}

TEST(UnitPipeline, InvariantsOnRandomInstances) {
  std::mt19937_64 rng(13);
  for (int rep = 0; rep < 30; ++rep) {
    const Matrix X = oracle::gaussian_matrix(60, 8, rng);
    const Vector y = X.col(0) - 0.5 * X.col(5) + oracle::gaussian_vector(60, rng);
    const LassoFit fit = fit_weighted_lasso(X, y, 0.1, unit_weights(8));
    for (const auto mode : {NoiseModel::known(1.0), NoiseModel::estimated()}) {
      UnitOptions opt;
      opt.noise = mode;
      const auto rows = unit_pipeline(X, y, fit, opt);
      ASSERT_EQ(static_cast<Index>(rows.size()), fit.n_active());
      for (size_t a = 0; a < rows.size(); ++a) {
        EXPECT_EQ(rows[a].covariate, fit.active[a]);
        EXPECT_LE(rows[a].log_p, 0.0);
        EXPECT_TRUE(rows[a].interval.contains(rows[a].beta_bar));
        EXPECT_GT(rows[a].scale, 0.0);
      }
    }
  }
}

TEST(UnitPipeline, IsotropicCovarianceMatchesKnownSigma) {
  std::mt19937_64 rng(14);
  const Matrix X = oracle::gaussian_matrix(50, 5, rng);
  const Vector y = X.col(2) + oracle::gaussian_vector(50, rng);
  const LassoFit fit = fit_weighted_lasso(X, y, 0.1, unit_weights(5));
  UnitOptions a, b;
  a.noise = NoiseModel::known(2.0);
  b.noise = NoiseModel::known(Matrix(2.0 * Matrix::Identity(50, 50)));
  const auto ra = unit_pipeline(X, y, fit, a);
  const auto rb = unit_pipeline(X, y, fit, b);
  ASSERT_EQ(ra.size(), rb.size());
  for (size_t i = 0; i < ra.size(); ++i) {
    EXPECT_NEAR(ra[i].log_p, rb[i].log_p, 1e-10);
    EXPECT_NEAR(ra[i].interval.v_minus, rb[i].interval.v_minus, 1e-10);
  }
}

TEST(UnitPipeline, EstimatedApproachesKnownAtLargeT) {
  std::mt19937_64 rng(15);
  std::vector<double> diffs;
  for (int rep = 0; rep < 200; ++rep) {
    const Matrix X = oracle::gaussian_matrix(2000, 5, rng);
    const Vector y = 0.1 * X.col(0) + 0.05 * X.col(3) + oracle::gaussian_vector(2000, rng);
    const LassoFit fit = fit_weighted_lasso(X, y, 0.02, unit_weights(5));
    UnitOptions known, est;
    known.noise = NoiseModel::known(1.0);
    const auto a = unit_pipeline(X, y, fit, known);
    const auto b = unit_pipeline(X, y, fit, est);
    for (size_t i = 0; i < a.size(); ++i) diffs.push_back(std::abs(std::exp(a[i].log_p) - std::exp(b[i].log_p)));
  }
  ASSERT_FALSE(diffs.empty());
  std::nth_element(diffs.begin(), diffs.begin() + diffs.size() / 2, diffs.end());
  EXPECT_LT(diffs[diffs.size() / 2], 0.02);
}

TEST(UnitPipeline, KnownSigmaNullPValuesAreUniform) {
  std::mt19937_64 rng(16);
  std::vector<double> p;
  while (p.size() < 1000) {
    const Matrix X = oracle::gaussian_matrix(50, 8, rng);
    const Vector y = oracle::gaussian_vector(50, rng);
    UnitOptions opt;
    opt.noise = NoiseModel::known(1.0);
    for (const auto& c : unit_pipeline(X, y, 1.5 / std::sqrt(50.0), unit_weights(8), opt))
      p.push_back(std::exp(c.log_p));
  }
  EXPECT_LT(oracle::ks_uniform(p), 0.06);
}
