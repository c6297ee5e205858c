#include "panelposi/posi.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

namespace panelposi {

Matrix select_columns(const Matrix& X, const std::vector<Index>& idx) {
  Matrix out(X.rows(), static_cast<Index>(idx.size()));
  for (std::size_t a = 0; a < idx.size(); ++a) out.col(static_cast<Index>(a)) = X.col(idx[a]);
  return out;
}

namespace {

std::vector<Index> inactive_of(const LassoFit& fit) {
  std::vector<Index> out;
  std::size_t a = 0;
  for (Index j = 0; j < fit.beta.size(); ++j) {
    if (a < fit.active.size() && fit.active[a] == j) {
      ++a;
    } else {
      out.push_back(j);
    }
  }
  return out;
}

Polyhedron polyhedron_from(const LassoFit& fit, const Matrix& X, const LeastSquares<double>& ls,
                           const Matrix& pinv_t) {
  const Index k = fit.n_active();
  const std::vector<Index> inactive = inactive_of(fit);
  const Index q = static_cast<Index>(inactive.size());
  // The fit's objective carries a 1/T on the loss; the KKT display for A, b
  // is written for the unscaled loss, so its penalty is T·λ.
  const double lambda_eff = static_cast<double>(X.rows()) * fit.lambda;

  Vector s_over_w(k);
  std::vector<Index> sign_rows;
  for (Index a = 0; a < k; ++a) {
    const Index j = fit.active[a];
    s_over_w(a) = fit.signs[a] * fit.weights.inverse(j);
    if (!fit.weights.unpenalized(j)) sign_rows.push_back(a);
  }

  const Index rows = 2 * q + static_cast<Index>(sign_rows.size());
  Polyhedron poly{Matrix(rows, X.rows()), Vector(rows)};

  if (q > 0) {
    const Matrix x_inactive = select_columns(X, inactive);
    const Matrix resid = ls.residual(x_inactive);  // (I − P_M)X_{-M}
    const Vector shift = x_inactive.transpose() * (pinv_t * s_over_w);
    for (Index i = 0; i < q; ++i) {
      const double w_inv = fit.weights.inverse(inactive[i]);
      poly.A.row(i) = resid.col(i).transpose() / lambda_eff;
      poly.A.row(q + i) = -poly.A.row(i);
      poly.b(i) = w_inv - shift(i);
      poly.b(q + i) = w_inv + shift(i);
    }
  }
  if (!sign_rows.empty()) {
    const Vector offset = lambda_eff * (ls.gram_inverse() * s_over_w);
    for (std::size_t r = 0; r < sign_rows.size(); ++r) {
      const Index a = sign_rows[r];
      const Index row = 2 * q + static_cast<Index>(r);
      poly.A.row(row) = -fit.signs[a] * pinv_t.col(a).transpose();
      poly.b(row) = -fit.signs[a] * offset(a);
    }
  }
  return poly;
}

void verify_contains(const Polyhedron& poly, const Vector& y, double slack) {
  if (poly.rows() == 0) return;
  const Vector slackness = poly.b - poly.A * y;
  for (Index i = 0; i < poly.rows(); ++i) {
    if (slackness(i) < -slack * (1.0 + std::abs(poly.b(i)))) {
      std::ostringstream msg;
      msg << "observed response violates selection constraint " << i << " by " << -slackness(i);
      throw SelectionInfeasible(msg.str());
    }
  }
}

}  // namespace

Vector debias(const LassoFit& fit, const Matrix& X, const Vector& y) {
  if (fit.active.empty()) throw EmptyActiveSet("debias: active set is empty");
  return ols_solve(select_columns(X, fit.active), y);
}

double estimate_sigma(const Matrix& X_M, const Vector& y, bool centered) {
  const Index T = y.size();
  const Index k = X_M.cols();
  if (k == 0) {
    if (centered) {
      if (T < 2) throw DegenerateDof("sample variance needs T >= 2");
      return (y.array() - y.mean()).square().sum() / static_cast<double>(T - 1);
    }
    if (T < 1) throw DegenerateDof("empty response");
    return y.squaredNorm() / static_cast<double>(T);
  }
  const Index dof = T - k - (centered ? 1 : 0);
  if (dof <= 0) {
    std::ostringstream msg;
    msg << "residual degrees of freedom " << dof << " (T=" << T << ", |M|=" << k << ")";
    throw DegenerateDof(msg.str());
  }
  const LeastSquares ls(X_M);
  return ls.residual(y).squaredNorm() / static_cast<double>(dof);
}

Polyhedron build_polyhedron(const LassoFit& fit, const Matrix& X, const Vector& y, double slack) {
  if (fit.active.empty()) throw EmptyActiveSet("build_polyhedron: active set is empty");
  if (!(fit.lambda > 0.0)) throw ConfigError("build_polyhedron: lambda must be positive");
  const LeastSquares ls(select_columns(X, fit.active));
  Polyhedron poly = polyhedron_from(fit, X, ls, ls.pinv_transpose());
  verify_contains(poly, y, slack);
  return poly;
}

TruncationGeometry truncation_interval(const Polyhedron& poly, const Vector& eta,
                                       const Matrix* covariance, const Vector& y) {
  TruncationGeometry g;
  const Vector sigma_eta = covariance != nullptr ? Vector(*covariance * eta) : eta;
  const double var = eta.dot(sigma_eta);
  if (!(var > 0.0)) throw EmptyInterval("ηᵀΣη must be positive");
  g.xi = sigma_eta / var;
  g.z = y - g.xi * eta.dot(y);

  if (poly.rows() == 0) return g;
  const Vector a_xi = poly.A * g.xi;
  const Vector room = poly.b - poly.A * g.z;
  const double xi_norm = g.xi.norm();
  for (Index i = 0; i < poly.rows(); ++i) {
    const double d = a_xi(i);
    const double scale = poly.A.row(i).norm() * xi_norm;
    if (std::abs(d) <= 1e-10 * scale) {
      // The data-containment tolerance of the polyhedron applies here too.
      if (room(i) < -1e-6 * (1.0 + std::abs(poly.b(i)))) {
        std::ostringstream msg;
        msg << "constraint " << i << " is independent of the tested direction but violated by "
            << -room(i);
        throw InconsistentZeroRow(msg.str());
      }
      continue;
    }
    const double ratio = room(i) / d;
    if (d < 0.0) {
      g.interval.v_minus = std::max(g.interval.v_minus, ratio);
    } else {
      g.interval.v_plus = std::min(g.interval.v_plus, ratio);
    }
  }
  if (!(g.interval.v_minus < g.interval.v_plus)) {
    std::ostringstream msg;
    msg << "truncation interval [" << g.interval.v_minus << ", " << g.interval.v_plus
        << "] is empty";
    throw EmptyInterval(msg.str());
  }
  return g;
}

namespace {

// Standardized truncated-normal log CDF on [a, b].
double std_tn_logcdf(double t, double a, double b) {
  if (t <= a) return -kInf;
  if (t >= b) return 0.0;
  if (a >= 0.0) {
    // Right of the mode: upper tails are the well-conditioned quantities.
    const double sa = log_norm_sf(a), st = log_norm_sf(t), sb = log_norm_sf(b);
    if (!(sa > sb)) return std::log((t - a) / (b - a));
    if (!(sa > st)) return -kInf;
    if (!(st > sb)) return 0.0;
    return log_diff_exp(sa, st) - log_diff_exp(sa, sb);
  }
  const double fa = log_norm_cdf(a), ft = log_norm_cdf(t), fb = log_norm_cdf(b);
  if (!(fb > fa)) return std::log((t - a) / (b - a));
  if (!(ft > fa)) return -kInf;
  if (!(fb > ft)) return 0.0;
  return log_diff_exp(ft, fa) - log_diff_exp(fb, fa);
}

double standardize_into_support(double x, double mu, double sigma, double v_minus, double v_plus,
                                double& a, double& b) {
  if (!(sigma > 0.0)) throw OutOfSupport("truncated normal scale must be positive");
  if (!(v_minus < v_plus)) throw OutOfSupport("truncation bounds must satisfy v_minus < v_plus");
  a = (v_minus - mu) / sigma;
  b = (v_plus - mu) / sigma;
  double t = (x - mu) / sigma;
  // Points a rounding error outside the support are snapped to it.
  const double tol = 1e-8 * (1.0 + std::max(std::isfinite(a) ? std::abs(a) : 0.0,
                                            std::isfinite(b) ? std::abs(b) : 0.0));
  if (t < a - tol || t > b + tol || std::isnan(t)) {
    std::ostringstream msg;
    msg << "x=" << x << " outside truncation support [" << v_minus << ", " << v_plus << "]";
    throw OutOfSupport(msg.str());
  }
  return std::clamp(t, a, b);
}

}  // namespace

double tn_logcdf(double x, double mu, double sigma, double v_minus, double v_plus) {
  double a, b;
  const double t = standardize_into_support(x, mu, sigma, v_minus, v_plus, a, b);
  return std_tn_logcdf(t, a, b);
}

double tn_logsf(double x, double mu, double sigma, double v_minus, double v_plus) {
  double a, b;
  const double t = standardize_into_support(x, mu, sigma, v_minus, v_plus, a, b);
  return std_tn_logcdf(-t, -b, -a);
}

double posi_log_pvalue(double stat, double scale, const TruncationInterval& interval) {
  const double lf = tn_logcdf(stat, 0.0, scale, interval.v_minus, interval.v_plus);
  const double ls = tn_logsf(stat, 0.0, scale, interval.v_minus, interval.v_plus);
  const double larger = std::max(lf, ls);
  double smaller = std::min(lf, ls);
  if (larger - smaller <= kDominantTailGap && larger < 0.0) smaller = log1m_exp(larger);
  return std::min(0.0, std::numbers::ln2 + smaller);
}

std::vector<PosiCoefficient> unit_pipeline(const Matrix& X, const Vector& y, const LassoFit& fit,
                                           const UnitOptions& options) {
  std::vector<PosiCoefficient> out;
  if (fit.active.empty()) return out;
  if (X.rows() != y.size()) throw ShapeMismatch("unit_pipeline: design and response rows differ");

  const Index k = fit.n_active();
  const LeastSquares ls(select_columns(X, fit.active));
  const Matrix pinv_t = ls.pinv_transpose();
  const Vector beta_bar = pinv_t.transpose() * y;

  Polyhedron poly = polyhedron_from(fit, X, ls, pinv_t);
  verify_contains(poly, y, options.polyhedron_slack);

  const NoiseModel& noise = options.noise;
  const Matrix* cov = nullptr;
  double sigma_hat = std::sqrt(noise.sigma2);
  if (noise.mode == VarianceMode::Estimated) {
    const Index dof = X.rows() - k - (options.centered ? 1 : 0);
    if (dof <= 0) throw DegenerateDof("unit_pipeline: no residual degrees of freedom");
    sigma_hat = std::sqrt(ls.residual(y).squaredNorm() / static_cast<double>(dof));
  } else if (noise.covariance) {
    cov = &*noise.covariance;
    sigma_hat = std::numeric_limits<double>::quiet_NaN();
  }

  out.reserve(static_cast<std::size_t>(k));
  for (Index a = 0; a < k; ++a) {
    PosiCoefficient c;
    c.unit = fit.unit;
    c.covariate = fit.active[a];
    c.mode = noise.mode;
    c.sigma_hat = sigma_hat;
    const Vector eta = pinv_t.col(a);
    c.beta_bar = beta_bar(a);
    c.eta_norm = eta.norm();
    const TruncationGeometry geom = truncation_interval(poly, eta, cov, y);
    c.interval = geom.interval;
    c.scale = cov != nullptr ? std::sqrt(eta.dot(*cov * eta)) : c.eta_norm * sigma_hat;
    if (!(c.scale > 0.0) || c.interval.width() < 1e-12 * c.scale) {
      c.degenerate = true;
      c.log_p = 0.0;
    } else {
      // Containment was checked against the polyhedron with its slack; snap
      // the statistic so that slack does not surface as OutOfSupport.
      const double stat = std::clamp(c.beta_bar, c.interval.v_minus, c.interval.v_plus);
      c.log_p = posi_log_pvalue(stat, c.scale, c.interval);
    }
    out.push_back(c);
  }
  return out;
}

std::vector<PosiCoefficient> unit_pipeline(const Matrix& X, const Vector& y, double lambda,
                                           const WeightVector& weights,
                                           const UnitOptions& options) {
  return unit_pipeline(X, y, fit_weighted_lasso(X, y, lambda, weights), options);
}

}  // namespace panelposi
