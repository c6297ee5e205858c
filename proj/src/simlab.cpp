#include "panelposi/simlab.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <random>
#include <sstream>

#include <boost/math/distributions/students_t.hpp>

#include "panelposi/panel_mt.hpp"
#include "panelposi/parallel.hpp"
#include "panelposi/rng.hpp"
#include "panelposi/wlasso.hpp"

namespace panelposi {

namespace {

Index in_sample_rows(const SimConfig& c) {
  return static_cast<Index>(std::floor(static_cast<double>(c.n_periods) * c.split));
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& raw) {
  const std::string text = trim(raw);
  T value{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw ConfigError("setting '" + key + "': cannot parse '" + text + "'");
  }
  return value;
}

}  // namespace

void SimConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError(msg); };
  if (n_units < 1) fail("n-units must be at least 1");
  if (n_covariates < 2) fail("n-covariates must be at least 2");
  if (k_true < 0 || k_true > n_covariates) fail("k-true must lie in [0, n-covariates]");
  if (!(split > 0.0 && split < 1.0)) fail("split must lie in (0, 1)");
  if (!(sigma2 > 0.0)) fail("sigma2 must be positive");
  if (noise == NoiseKind::Dependent) {
    if (!(std::abs(kappa) < sigma2)) fail("|kappa| must be below sigma2");
    if (!(sigma2 + static_cast<double>(n_units - 1) * kappa > 0.0)) {
      fail("noise covariance is not positive definite");
    }
  }
  if (gammas.empty()) fail("at least one gamma is required");
  for (double g : gammas)
    if (!(g > 0.0 && g <= 1.0)) fail("gamma must lie in (0, 1]");
  if (reps < 1) fail("reps must be at least 1");
  if (folds < 2) fail("folds must be at least 2");
  const Index in_rows = in_sample_rows(*this);
  if (in_rows <= n_covariates + 1) fail("in-sample rows must exceed n-covariates + 1 for the OLS benchmarks");
  if (in_rows < 2 * folds) fail("in-sample rows must be at least 2*folds");
  if (fixed_lambda < 0.0) fail("lambda must be positive");
  if (threads < 1) fail("threads must be at least 1");
}

SimConfig sim_preset(const std::string& name) {
  SimConfig c;
  if (name == "table3-independent") return c;
  if (name == "table3-dependent") {
    c.noise = NoiseKind::Dependent;
    return c;
  }
  if (name == "smoke") {
    c.n_units = 12;
    c.n_covariates = 10;
    c.n_periods = 60;
    c.k_true = 3;
    c.reps = 5;
    return c;
  }
  if (name == "global-null") {
    c.n_units = 20;
    c.n_covariates = 15;
    c.n_periods = 100;
    c.k_true = 0;
    c.reps = 500;
    c.gammas = {0.05, 0.1};
    return c;
  }
  throw ConfigError("unknown preset '" + name + "'");
}

void apply_setting(SimConfig& c, const std::string& raw_key, const std::string& value) {
  std::string key = trim(raw_key);
  std::replace(key.begin(), key.end(), '_', '-');
  if (key == "n-units") {
    c.n_units = parse_number<Index>(key, value);
  } else if (key == "n-covariates") {
    c.n_covariates = parse_number<Index>(key, value);
  } else if (key == "n-periods") {
    c.n_periods = parse_number<Index>(key, value);
  } else if (key == "k-true") {
    c.k_true = parse_number<Index>(key, value);
  } else if (key == "noise") {
    const std::string v = trim(value);
    if (v == "independent") {
      c.noise = NoiseKind::Independent;
    } else if (v == "dependent") {
      c.noise = NoiseKind::Dependent;
    } else {
      throw ConfigError("noise must be 'independent' or 'dependent'");
    }
  } else if (key == "sigma2") {
    c.sigma2 = parse_number<double>(key, value);
  } else if (key == "kappa") {
    c.kappa = parse_number<double>(key, value);
  } else if (key == "gamma") {
    c.gammas.clear();
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) c.gammas.push_back(parse_number<double>(key, item));
  } else if (key == "reps") {
    c.reps = parse_number<Index>(key, value);
  } else if (key == "seed") {
    c.seed = parse_number<std::uint64_t>(key, value);
  } else if (key == "split") {
    c.split = parse_number<double>(key, value);
  } else if (key == "folds") {
    c.folds = parse_number<Index>(key, value);
  } else if (key == "lambda") {
    c.fixed_lambda = trim(value) == "cv" ? 0.0 : parse_number<double>(key, value);
  } else if (key == "threads") {
    c.threads = parse_number<Index>(key, value);
  } else {
    throw ConfigError("unknown setting '" + key + "'");
  }
}

const char* method_name(Method m) {
  switch (m) {
    case Method::NOls: return "N-OLS";
    case Method::BOls: return "B-OLS";
    case Method::NLasso: return "N-LASSO";
    case Method::BLasso: return "B-LASSO";
    case Method::BPosi: return "B-PoSI";
    case Method::PPosi: return "P-PoSI";
  }
  return "?";
}

const MethodSummary& SimReport::row(double gamma, Method m) const {
  for (const auto& r : rows)
    if (r.gamma == gamma && r.method == m) return r;
  throw ConfigError("no report row for the requested gamma and method");
}

Matrix noise_covariance(const SimConfig& config) {
  const Index N = config.n_units;
  Matrix sigma = Matrix::Zero(N, N);
  if (config.noise == NoiseKind::Dependent) sigma.setConstant(config.kappa);
  sigma.diagonal().setConstant(config.sigma2);
  return sigma;
}

StaircaseData gen_staircase(const SimConfig& config, std::uint64_t seed) {
  const Index T = config.n_periods, J = config.n_covariates, N = config.n_units, K = config.k_true;
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> loading(-0.5, 0.5);

  StaircaseData d;
  d.X.resize(T, J);
  for (Index t = 0; t < T; ++t)
    for (Index j = 0; j < J; ++j) d.X(t, j) = normal(rng);

  d.mask.setConstant(J, N, false);
  d.beta.setZero(J, N);
  for (Index k = 0; k < K; ++k) {
    const Index reach = (N * (K - k) + K - 1) / K;  // ⌈N(1 − k/K)⌉
    for (Index n = 0; n < reach; ++n) {
      d.mask(k, n) = true;
      d.beta(k, n) = loading(rng);
    }
  }

  Matrix Z(T, N);
  for (Index t = 0; t < T; ++t)
    for (Index n = 0; n < N; ++n) Z(t, n) = normal(rng);
  if (config.noise == NoiseKind::Independent) {
    d.Y = d.X * d.beta + std::sqrt(config.sigma2) * Z;
  } else {
    const Eigen::LLT<Matrix> llt(noise_covariance(config));
    if (llt.info() != Eigen::Success) throw ConfigError("noise covariance is not positive definite");
    d.Y = d.X * d.beta + Z * llt.matrixL().transpose();
  }
  return d;
}

namespace {

double t_log_pvalue(double t, double dof) {
  const boost::math::students_t dist(dof);
  const double p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
  return p > 0.0 ? std::min(0.0, std::log(p)) : -kInf;
}

// OLS t-test log p-values of `y` on every column of `design` (no intercept).
void add_ols_pvalues(PValueMatrix& P, Index unit, const LeastSquares<double>& ls,
                     const Vector& gram_diag, const std::vector<Index>& columns, const Vector& y) {
  const Index k = ls.cols();
  const Index dof = ls.rows() - k;
  if (k == 0 || dof <= 0) return;
  const Vector b = ls.solve(y);
  const double s2 = (y - ls.design() * b).squaredNorm() / static_cast<double>(dof);
  for (Index a = 0; a < k; ++a) {
    const double se = std::sqrt(s2 * gram_diag(a));
    const double lp = se > 0.0 ? t_log_pvalue(b(a) / se, static_cast<double>(dof))
                               : (b(a) != 0.0 ? -kInf : 0.0);
    P.add(unit, columns[a], lp);
  }
}

// Pooled OOS R² of per-unit OLS refits (with intercept) on the selected set.
double oos_r2(const Matrix& X_in, const Matrix& Y_in, const Matrix& X_out, const Matrix& Y_out,
              const std::vector<Index>& selected) {
  // With nothing selected the refit is the in-sample mean, so SSE = TSS.
  if (X_out.rows() == 0 || selected.empty()) return 0.0;
  const Index k = static_cast<Index>(selected.size());
  Matrix design_in(X_in.rows(), k + 1), design_out(X_out.rows(), k + 1);
  design_in.col(0).setOnes();
  design_out.col(0).setOnes();
  for (Index a = 0; a < k; ++a) {
    design_in.col(a + 1) = X_in.col(selected[a]);
    design_out.col(a + 1) = X_out.col(selected[a]);
  }
  const Matrix coef = design_in.colPivHouseholderQr().solve(Y_in);
  const Matrix pred = design_out * coef;
  const Eigen::RowVectorXd mean_in = Y_in.colwise().mean();
  const double sse = (Y_out - pred).squaredNorm();
  const double tss = (Y_out.rowwise() - mean_in).squaredNorm();
  return tss > 0.0 ? 1.0 - sse / tss : 0.0;
}

}  // namespace

std::vector<RepRecord> run_benchmarks(const StaircaseData& data, const SimConfig& config,
                                      Index in_rows, std::uint64_t seed, Index* unit_failures) {
  const Index N = data.Y.cols(), J = data.X.cols();
  const Matrix X_in = data.X.topRows(in_rows);
  const Matrix Y_in = data.Y.topRows(in_rows);
  const Matrix X_out = data.X.bottomRows(data.X.rows() - in_rows);
  const Matrix Y_out = data.Y.bottomRows(data.Y.rows() - in_rows);

  std::vector<Index> all_columns(static_cast<std::size_t>(J));
  for (Index j = 0; j < J; ++j) all_columns[j] = j;

  PValueMatrix p_ols(N, J), p_lasso(N, J), p_posi(N, J);
  {
    const LeastSquares ls(X_in);
    const Vector diag = ls.gram_inverse().diagonal();
    for (Index n = 0; n < N; ++n) add_ols_pvalues(p_ols, n, ls, diag, all_columns, Y_in.col(n));
  }

  const WeightVector weights = unit_weights(J);
  const GramLasso solver(X_in);
  const std::vector<double> grid = lambda_grid(J, in_rows);
  std::optional<CvPlan> plan;
  if (config.fixed_lambda <= 0.0) plan.emplace(X_in, config.folds, seed);

  Index failures = 0;
  UnitOptions posi_options;
  posi_options.noise = NoiseModel::estimated();
  for (Index n = 0; n < N; ++n) {
    const Vector y = Y_in.col(n);
    const double lambda = plan ? plan->evaluate(y, weights, grid).lambda : config.fixed_lambda;
    const Vector xty = X_in.transpose() * y / static_cast<double>(in_rows);
    LassoFit fit = solver.solve(xty, lambda, weights);
    fit.unit = n;
    if (fit.active.empty()) continue;

    const Matrix X_M = select_columns(X_in, fit.active);
    if (in_rows > fit.n_active()) {
      const LeastSquares ls(X_M);
      add_ols_pvalues(p_lasso, n, ls, ls.gram_inverse().diagonal(), fit.active, y);
    }
    try {
      for (const auto& c : unit_pipeline(X_in, y, fit, posi_options)) p_posi.add(n, c.covariate, c.log_p);
    } catch (const Error&) {
      ++failures;
    }
  }
  if (unit_failures != nullptr) *unit_failures += failures;

  std::vector<RepRecord> out;
  for (double gamma : config.gammas) {
    for (Method m : kMethods) {
      std::vector<Index> selected;
      switch (m) {
        case Method::NOls: selected = bonferroni_reject(p_ols, gamma, BonferroniMode::Naive); break;
        case Method::BOls: selected = bonferroni_reject(p_ols, gamma, BonferroniMode::Bonferroni); break;
        case Method::NLasso: selected = bonferroni_reject(p_lasso, gamma, BonferroniMode::Naive); break;
        case Method::BLasso: selected = bonferroni_reject(p_lasso, gamma, BonferroniMode::Bonferroni); break;
        case Method::BPosi: selected = bonferroni_reject(p_posi, gamma, BonferroniMode::Bonferroni); break;
        case Method::PPosi: selected = fwer_reject(p_posi, gamma).rejected(); break;
      }
      RepRecord r;
      r.gamma = gamma;
      r.method = m;
      r.selections = static_cast<Index>(selected.size());
      for (Index j : selected) {
        if (data.mask.row(j).any()) {
          ++r.n_correct;
        } else {
          ++r.n_false;
        }
      }
      r.oos_r2 = oos_r2(X_in, Y_in, X_out, Y_out, selected);
      r.selected = std::move(selected);
      out.push_back(std::move(r));
    }
  }
  return out;
}

SimReport simulate(const SimConfig& config) {
  config.validate();
  const Index in_rows = in_sample_rows(config);
  std::vector<std::vector<RepRecord>> per_rep(static_cast<std::size_t>(config.reps));
  std::vector<Index> failures(static_cast<std::size_t>(config.reps), 0);
  parallel_for(config.reps, config.threads, [&](Index r) {
    const std::uint64_t rep_seed = derive_seed(config.seed, static_cast<std::uint64_t>(r));
    const StaircaseData data = gen_staircase(config, derive_seed(rep_seed, 0));
    per_rep[r] = run_benchmarks(data, config, in_rows, derive_seed(rep_seed, 1), &failures[r]);
    for (auto& rec : per_rep[r]) rec.rep = r;
  });

  SimReport report;
  report.config = config;
  for (Index r = 0; r < config.reps; ++r) {
    report.unit_failures += failures[r];
    for (auto& rec : per_rep[r]) report.records.push_back(std::move(rec));
  }
  const double reps = static_cast<double>(config.reps);
  for (double gamma : config.gammas) {
    for (Method m : kMethods) {
      MethodSummary s;
      s.gamma = gamma;
      s.method = m;
      for (const auto& rec : report.records) {
        if (rec.gamma != gamma || rec.method != m) continue;
        s.selections += static_cast<double>(rec.selections);
        s.n_false += static_cast<double>(rec.n_false);
        s.n_correct += static_cast<double>(rec.n_correct);
        s.oos_r2 += rec.oos_r2;
      }
      s.selections /= reps;
      s.n_false /= reps;
      s.n_correct /= reps;
      s.oos_r2 /= reps;
      report.rows.push_back(s);
    }
  }
  return report;
}

std::vector<FwerEstimate> fwer_monte_carlo(SimConfig config) {
  config.k_true = 0;
  config.validate();
  const Index T = config.n_periods;
  if (T < 2 * config.folds || T <= config.n_covariates + 1) {
    throw ConfigError("fwer_monte_carlo: too few periods for the benchmarks");
  }
  std::vector<std::vector<RepRecord>> per_rep(static_cast<std::size_t>(config.reps));
  parallel_for(config.reps, config.threads, [&](Index r) {
    const std::uint64_t rep_seed = derive_seed(config.seed, static_cast<std::uint64_t>(r));
    const StaircaseData data = gen_staircase(config, derive_seed(rep_seed, 0));
    per_rep[r] = run_benchmarks(data, config, T, derive_seed(rep_seed, 1));
  });

  std::vector<FwerEstimate> out;
  for (double gamma : config.gammas) {
    for (Method m : kMethods) {
      FwerEstimate e;
      e.gamma = gamma;
      e.method = m;
      e.reps = config.reps;
      Index hits = 0;
      for (const auto& rep : per_rep)
        for (const auto& rec : rep)
          if (rec.gamma == gamma && rec.method == m && rec.selections > 0) ++hits;
      e.fwer = static_cast<double>(hits) / static_cast<double>(config.reps);
      out.push_back(e);
    }
  }
  return out;
}

}  // namespace panelposi
