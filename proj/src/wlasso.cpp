#include "panelposi/wlasso.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "panelposi/rng.hpp"

namespace panelposi {

Vector WeightVector::inverses() const {
  Vector inv(size());
  for (Index j = 0; j < size(); ++j) inv(j) = inverse(j);
  return inv;
}

WeightVector normalize_weights(const Vector& raw) {
  double reciprocal_sum = 0.0;
  for (Index j = 0; j < raw.size(); ++j) {
    const double w = raw(j);
    if (std::isnan(w) || w <= 0.0) {
      std::ostringstream msg;
      msg << "weight " << j << " must be positive (got " << w << ")";
      throw ConfigError(msg.str());
    }
    if (!std::isinf(w)) reciprocal_sum += 1.0 / w;
  }
  if (reciprocal_sum == 0.0) throw AllInfinite("all weights are infinite");
  // c·Σ 1/ω_j = J  ⇒  ω_j ← ω_j / c.
  const double c = static_cast<double>(raw.size()) / reciprocal_sum;
  WeightVector out{raw};
  for (Index j = 0; j < raw.size(); ++j) {
    if (!std::isinf(raw(j))) out.omega(j) = raw(j) / c;
  }
  return out;
}

WeightVector unit_weights(Index J) { return WeightVector{Vector::Ones(J)}; }

std::vector<double> lambda_grid(Index J, Index T) {
  if (J < 2 || T < 2) throw ConfigError("lambda_grid requires J >= 2 and T >= 2");
  const double base = std::log(static_cast<double>(J)) / std::sqrt(static_cast<double>(T));
  std::vector<double> grid;
  grid.reserve(17);
  for (int a = -8; a <= 8; ++a) grid.push_back(std::exp(static_cast<double>(a)) * base);
  return grid;
}

namespace {

double soft_threshold(double z, double t) {
  if (z > t) return z - t;
  if (z < -t) return z + t;
  return 0.0;
}

int sign_of(double v) { return (v > 0.0) - (v < 0.0); }

// Max KKT violation given gradient g = Gβ − c and penalties λ/ω_j.
double kkt_gap_from_gradient(const Vector& grad, const Vector& beta, const Vector& penalty) {
  double gap = 0.0;
  for (Index j = 0; j < beta.size(); ++j) {
    double v;
    if (penalty(j) == 0.0) {
      v = std::abs(grad(j));
    } else if (beta(j) != 0.0) {
      v = std::abs(grad(j) + penalty(j) * sign_of(beta(j)));
    } else {
      v = std::max(0.0, std::abs(grad(j)) / penalty(j) - 1.0);
    }
    gap = std::max(gap, v);
  }
  return gap;
}

void check_unpenalized_block(const Matrix& gram, const Vector& penalty) {
  std::vector<Index> free_idx;
  for (Index j = 0; j < penalty.size(); ++j) {
    if (penalty(j) == 0.0) free_idx.push_back(j);
  }
  if (free_idx.empty()) return;
  const Index k = static_cast<Index>(free_idx.size());
  Matrix block(k, k);
  for (Index a = 0; a < k; ++a)
    for (Index b = 0; b < k; ++b) block(a, b) = gram(free_idx[a], free_idx[b]);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(block, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  if (!(lo > 0.0) || hi / lo > kConditionCap) {
    throw SingularDesign("unpenalized (infinite-weight) columns are collinear");
  }
}

// Solve the KKT system on the sign pattern of `beta`; accept only when the
// solution reproduces the pattern and satisfies the inactive bounds.
bool polish(const Matrix& gram, const Vector& xty, const Vector& penalty, double kkt_tol,
            Vector& beta, Vector& grad) {
  std::vector<Index> support;
  for (Index j = 0; j < beta.size(); ++j) {
    if (beta(j) != 0.0 || penalty(j) == 0.0) support.push_back(j);
  }
  const Index k = static_cast<Index>(support.size());
  Vector candidate = Vector::Zero(beta.size());
  if (k > 0) {
    Matrix g_mm(k, k);
    Vector rhs(k);
    for (Index a = 0; a < k; ++a) {
      const Index ja = support[a];
      rhs(a) = xty(ja) - penalty(ja) * sign_of(beta(ja));
      for (Index b = 0; b < k; ++b) g_mm(a, b) = gram(ja, support[b]);
    }
    Eigen::LLT<Matrix> llt(g_mm);
    if (llt.info() != Eigen::Success) return false;
    const Vector sol = llt.solve(rhs);
    if (!sol.allFinite()) return false;
    for (Index a = 0; a < k; ++a) {
      const Index ja = support[a];
      if (penalty(ja) > 0.0 && sign_of(sol(a)) != sign_of(beta(ja))) return false;
      candidate(ja) = sol(a);
    }
  }
  Vector cand_grad = -xty;
  for (Index a = 0; a < k; ++a) cand_grad.noalias() += gram.col(support[a]) * candidate(support[a]);
  for (Index j = 0; j < beta.size(); ++j) {
    if (candidate(j) == 0.0 && penalty(j) > 0.0 &&
        std::abs(cand_grad(j)) / penalty(j) - 1.0 > kkt_tol) {
      return false;
    }
  }
  beta = std::move(candidate);
  grad = std::move(cand_grad);
  return true;
}

void finalize(LassoFit& fit) {
  fit.active.clear();
  fit.signs.clear();
  for (Index j = 0; j < fit.beta.size(); ++j) {
    if (fit.beta(j) != 0.0) {
      fit.active.push_back(j);
      fit.signs.push_back(sign_of(fit.beta(j)));
    }
  }
}

}  // namespace

GramLasso::GramLasso(const Matrix& X) : n_obs_(X.rows()) {
  if (X.rows() == 0) throw ShapeMismatch("design has no rows");
  gram_.noalias() = X.transpose() * X / static_cast<double>(X.rows());
}

LassoFit GramLasso::solve(const Vector& xty, double lambda, const WeightVector& weights,
                          const Vector* warm, const LassoOptions& options) const {
  const Index J = dim();
  if (xty.size() != J || weights.size() != J) {
    throw ShapeMismatch("weighted lasso: dimension mismatch between design, response and weights");
  }
  if (!(lambda > 0.0)) throw ConfigError("lambda must be positive");

  const Vector penalty = lambda * weights.inverses();
  check_unpenalized_block(gram_, penalty);

  Vector beta = (warm != nullptr && warm->size() == J) ? *warm : Vector::Zero(J);
  Vector grad = gram_ * beta - xty;

  LassoFit fit;
  fit.lambda = lambda;
  fit.weights = weights;

  std::vector<int> pattern(J, 0), previous(J, 2);
  Index next_polish = 1;
  Index backoff = 1;
  for (Index sweep = 1; sweep <= options.max_sweeps; ++sweep) {
    double max_delta = 0.0;
    for (Index j = 0; j < J; ++j) {
      const double d = gram_(j, j);
      if (d <= 0.0) continue;
      const double updated = soft_threshold(beta(j) - grad(j) / d, penalty(j) / d);
      const double delta = updated - beta(j);
      if (delta != 0.0) {
        beta(j) = updated;
        grad.noalias() += gram_.col(j) * delta;
        max_delta = std::max(max_delta, std::abs(delta));
      }
    }
    for (Index j = 0; j < J; ++j) pattern[j] = sign_of(beta(j));

    const bool settled = max_delta <= options.change_tol * (1.0 + beta.lpNorm<Eigen::Infinity>());
    const bool stable = pattern == previous;
    if ((settled || (stable && sweep >= next_polish))) {
      Vector b = beta, g = grad;
      if (polish(gram_, xty, penalty, options.kkt_tol, b, g)) {
        const double gap = kkt_gap_from_gradient(g, b, penalty);
        if (gap <= options.kkt_tol) {
          fit.beta = std::move(b);
          fit.kkt_gap = gap;
          fit.sweeps = sweep;
          finalize(fit);
          return fit;
        }
      }
      if (stable && !settled) {
        next_polish = sweep + backoff;
        backoff *= 2;
      }
    }
    if (settled) {
      const double gap = kkt_gap_from_gradient(grad, beta, penalty);
      if (gap <= options.kkt_tol) {
        fit.beta = std::move(beta);
        fit.kkt_gap = gap;
        fit.sweeps = sweep;
        finalize(fit);
        return fit;
      }
    }
    std::swap(pattern, previous);
  }
  std::ostringstream msg;
  msg << "coordinate descent did not converge in " << options.max_sweeps
      << " sweeps (KKT gap " << kkt_gap_from_gradient(grad, beta, penalty) << ")";
  throw NoConvergence(msg.str());
}

LassoFit fit_weighted_lasso(const Matrix& X, const Vector& y, double lambda,
                            const WeightVector& weights, const LassoOptions& options) {
  if (X.rows() != y.size()) throw ShapeMismatch("design and response row counts differ");
  GramLasso solver(X);
  const Vector xty = X.transpose() * y / static_cast<double>(X.rows());
  return solver.solve(xty, lambda, weights, nullptr, options);
}

Vector kkt_check(const LassoFit& fit, const Matrix& X, const Vector& y) {
  const double T = static_cast<double>(X.rows());
  const Vector grad = X.transpose() * (X * fit.beta - y) / T;
  Vector gap(grad.size());
  for (Index j = 0; j < grad.size(); ++j) {
    if (fit.weights.unpenalized(j)) {
      gap(j) = std::abs(grad(j));
    } else if (fit.beta(j) != 0.0) {
      gap(j) = std::abs(grad(j) + fit.lambda * sign_of(fit.beta(j)) / fit.weights.omega(j));
    } else {
      gap(j) = std::max(0.0, std::abs(grad(j)) * fit.weights.omega(j) / fit.lambda - 1.0);
    }
  }
  return gap;
}

double lasso_objective(const Matrix& X, const Vector& y, const Vector& beta, double lambda,
                       const WeightVector& weights) {
  const double loss = (y - X * beta).squaredNorm() / (2.0 * static_cast<double>(X.rows()));
  double pen = 0.0;
  for (Index j = 0; j < beta.size(); ++j) pen += std::abs(beta(j)) * weights.inverse(j);
  return loss + lambda * pen;
}

namespace {

Matrix take_rows(const Matrix& X, const std::vector<Index>& rows) {
  Matrix out(static_cast<Index>(rows.size()), X.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Index>(i)) = X.row(rows[i]);
  return out;
}

Vector take_rows(const Vector& v, const std::vector<Index>& rows) {
  Vector out(static_cast<Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) out(static_cast<Index>(i)) = v(rows[i]);
  return out;
}

}  // namespace

CvPlan::CvPlan(const Matrix& X, Index folds, std::uint64_t seed) {
  const Index T = X.rows();
  if (folds < 2) throw ConfigError("cross-validation needs at least 2 folds");
  if (T < 2 * folds) throw ConfigError("cross-validation needs T >= 2*folds");

  std::vector<Index> perm(static_cast<std::size_t>(T));
  std::iota(perm.begin(), perm.end(), Index{0});
  Rng rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);

  test_rows_.resize(static_cast<std::size_t>(folds));
  Index start = 0;
  for (Index f = 0; f < folds; ++f) {
    const Index len = T / folds + (f < T % folds ? 1 : 0);
    test_rows_[f].assign(perm.begin() + start, perm.begin() + start + len);
    std::sort(test_rows_[f].begin(), test_rows_[f].end());
    start += len;
  }

  folds_.reserve(static_cast<std::size_t>(folds));
  for (Index f = 0; f < folds; ++f) {
    std::vector<bool> is_test(static_cast<std::size_t>(T), false);
    for (Index r : test_rows_[f]) is_test[r] = true;
    std::vector<Index> train;
    for (Index r = 0; r < T; ++r)
      if (!is_test[r]) train.push_back(r);
    Matrix x_train = take_rows(X, train);
    Matrix x_test = take_rows(X, test_rows_[f]);
    GramLasso solver(x_train);
    folds_.push_back(Fold{std::move(x_train), std::move(x_test), std::move(train), std::move(solver)});
  }
}

CvResult CvPlan::evaluate(const Vector& y, const WeightVector& weights,
                          const std::vector<double>& grid, const LassoOptions& options) const {
  if (grid.empty()) throw ConfigError("empty lambda grid");
  const Index G = static_cast<Index>(grid.size());
  const Index F = n_folds();

  // Path from the largest λ down, warm-starting each fit from the last.
  std::vector<Index> order(static_cast<std::size_t>(G));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return grid[a] > grid[b]; });

  Matrix mse(G, F);
  for (Index f = 0; f < F; ++f) {
    const Fold& fold = folds_[f];
    const Vector y_train = take_rows(y, fold.train_rows);
    const Vector y_test = take_rows(y, test_rows_[f]);
    const Vector xty = fold.x_train.transpose() * y_train / static_cast<double>(y_train.size());
    Vector warm = Vector::Zero(fold.solver.dim());
    for (Index g : order) {
      LassoFit fit = fold.solver.solve(xty, grid[g], weights, &warm, options);
      mse(g, f) = (y_test - fold.x_test * fit.beta).squaredNorm() / static_cast<double>(y_test.size());
      warm = std::move(fit.beta);
    }
  }

  CvResult result;
  result.mean_mse.resize(static_cast<std::size_t>(G));
  result.se.resize(static_cast<std::size_t>(G));
  for (Index g = 0; g < G; ++g) {
    const double mean = mse.row(g).mean();
    const double var = F > 1 ? (mse.row(g).array() - mean).square().sum() / static_cast<double>(F - 1) : 0.0;
    result.mean_mse[g] = mean;
    result.se[g] = std::sqrt(var / static_cast<double>(F));
  }
  result.min_index = 0;
  for (Index g = 1; g < G; ++g) {
    if (result.mean_mse[g] < result.mean_mse[result.min_index]) result.min_index = g;
  }
  const double bound = result.mean_mse[result.min_index] + result.se[result.min_index];
  result.chosen_index = result.min_index;
  for (Index g = 0; g < G; ++g) {
    if (result.mean_mse[g] <= bound && grid[g] > grid[result.chosen_index]) result.chosen_index = g;
  }
  result.lambda = grid[result.chosen_index];
  return result;
}

double cross_validate(const Matrix& X, const Vector& y, const WeightVector& weights,
                      const std::vector<double>& grid, Index folds, std::uint64_t seed) {
  if (grid.size() == 1) return grid.front();
  return CvPlan(X, folds, seed).evaluate(y, weights, grid).lambda;
}

}  // namespace panelposi
