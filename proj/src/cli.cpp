#include "panelposi/cli.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "panelposi/ordered.hpp"
#include "panelposi/parallel.hpp"
#include "panelposi/simlab.hpp"
#include "panelposi/wlasso.hpp"

namespace panelposi {

namespace {

using Json = nlohmann::ordered_json;

// JSON has no infinities; they are written as strings.
Json number(double v) {
  if (std::isfinite(v)) return v;
  return format_double(v);
}

std::string display_p(double log_p) {
  return format_double(std::max(std::exp(log_p), 1e-300));
}

Matrix take_rows(const Matrix& X, const std::vector<Index>& rows) {
  Matrix out(static_cast<Index>(rows.size()), X.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Index>(i)) = X.row(rows[i]);
  return out;
}

void center_columns(Matrix& X) {
  if (X.rows() > 0) X.rowwise() -= X.colwise().mean();
}

Error with_unit(const Error& e, const std::string& unit) {
  return Error(e.error_class(), e.kind(), "unit '" + unit + "': " + e.what());
}

}  // namespace

int exit_code_for(ErrorClass cls) {
  switch (cls) {
    case ErrorClass::Input: return 2;
    case ErrorClass::Numerical: return 3;
    case ErrorClass::Config: return 4;
  }
  return 1;
}

PanelRun run_panel_posi(const PanelData& panel, const RunOptions& options) {
  const Index N = panel.n_units(), J = panel.n_covariates(), T = panel.n_periods();
  if (J < 1) throw ShapeMismatch("no covariates");
  const WeightVector weights =
      normalize_weights(options.raw_weights.size() == 0 ? Vector(Vector::Ones(J)) : options.raw_weights);
  if (weights.size() != J) throw ShapeMismatch("weight vector length differs from covariate count");
  const bool use_cv = !(options.lambda > 0.0);

  UnitOptions unit_options;
  unit_options.centered = options.intercept;
  unit_options.noise = options.variance == VarianceMode::KnownSigma ? NoiseModel::known(options.sigma2)
                                                               : NoiseModel::estimated();

  // Fully observed units share one design, hence one solver and one CV split.
  Matrix full_design = panel.X;
  if (options.intercept) center_columns(full_design);
  std::optional<GramLasso> shared_solver;
  std::optional<CvPlan> shared_plan;
  std::vector<double> shared_grid;
  bool any_full = false;
  for (Index n = 0; n < N && !any_full; ++n) any_full = panel.observed.col(n).all();
  if (any_full) {
    shared_solver.emplace(full_design);
    if (use_cv) {
      shared_grid = lambda_grid(J, T);
      shared_plan.emplace(full_design, options.folds, options.seed);
    }
  }

  PanelRun run;
  run.coefficients.resize(static_cast<std::size_t>(N));
  run.units.resize(static_cast<std::size_t>(N));
  parallel_for(N, options.threads, [&](Index n) {
    const std::string& name = panel.unit_names[n];
    try {
      const bool full = panel.observed.col(n).all();
      const std::vector<Index> rows = panel.rows_of(n);
      const Index Tn = static_cast<Index>(rows.size());
      Matrix X_n = full ? full_design : take_rows(panel.X, rows);
      if (!full && options.intercept) center_columns(X_n);
      Vector y(Tn);
      for (Index i = 0; i < Tn; ++i) y(i) = panel.Y(rows[i], n);
      if (options.intercept && Tn > 0) y.array() -= y.mean();
      if (Tn < 2) throw ShapeMismatch("fewer than two observed periods");

      double lambda = options.lambda;
      if (use_cv) {
        if (full) {
          lambda = shared_plan->evaluate(y, weights, shared_grid).lambda;
        } else {
          lambda = CvPlan(X_n, options.folds, options.seed).evaluate(y, weights, lambda_grid(J, Tn)).lambda;
        }
      }
      const Vector xty = X_n.transpose() * y / static_cast<double>(Tn);
      LassoFit fit = full ? shared_solver->solve(xty, lambda, weights)
                          : GramLasso(X_n).solve(xty, lambda, weights);
      fit.unit = n;
      run.coefficients[n] = unit_pipeline(X_n, y, fit, unit_options);
      run.units[n] = UnitSummary{n, Tn, lambda, fit.n_active()};
    } catch (const Error& e) {
      throw with_unit(e, name);
    }
  });
  run.P = build_pvalue_matrix(run.coefficients, N, J);
  return run;
}

namespace {

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& seed) {
  if (seed) return *seed;
  std::random_device rd;
  const std::uint64_t s = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
  std::cerr << "seed: " << s << " (pass --seed " << s << " to reproduce)\n";
  return s;
}

void write_json(const std::filesystem::path& path, const Json& j) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
}

struct RunArgs {
  std::string y_path, x_path, weights_path, pvalues_in;
  double gamma = 0.05;
  std::string variance = "estimated";
  std::optional<double> sigma2;
  std::string lambda = "cv";
  Index folds = 5;
  std::optional<std::uint64_t> seed;
  bool intercept = false;
  bool ordered = false;
  Index n_units = 0, n_covariates = 0;
  Index threads = 1;
  std::string out = ".";
};

void write_decisions(const std::filesystem::path& dir, const PValueMatrix& P,
                     const std::vector<std::string>& covs,
                     const RunArgs& args, std::optional<std::uint64_t> seed, bool ordered) {
  const MtDecision d = fwer_reject(P, args.gamma);
  const TraverseResult tr = traverse(P);

  Json j;
  j["gamma"] = args.gamma;
  j["rho"] = d.rho;
  j["n_units"] = P.n_units();
  j["n_covariates"] = P.n_covariates();
  j["family_size"] = d.covariates.size();
  j["n_entries"] = P.n_entries();
  j["k_star"] = tr.k_star(args.gamma);
  if (seed) j["seed"] = *seed;
  Json cov = Json::array();
  for (const auto& c : d.covariates) {
    cov.push_back({{"name", covs[c.covariate]},
                   {"K_j", c.n_units},
                   {"N_j", c.n_j},
                   {"min_log_p", number(c.min_log_p)},
                   {"score_log", number(c.score_log)},
                   {"rejected", c.rejected}});
  }
  j["covariates"] = cov;
  Json rejected = Json::array();
  for (Index c : d.rejected()) rejected.push_back(covs[c]);
  j["rejected"] = rejected;
  Json bonf = Json::array();
  for (Index c : bonferroni_reject(P, args.gamma, BonferroniMode::Bonferroni)) bonf.push_back(covs[c]);
  j["bonferroni_rejected"] = bonf;
  write_json(dir / "decisions.json", j);

  CsvTable frontier{{"K", "covariate", "log_gamma_star", "gamma_star"}, {}};
  for (Index K = 1; K <= tr.size(); ++K) {
    const double lg = tr.log_gamma_star[K - 1];
    frontier.rows.push_back({std::to_string(K), covs[tr.covariate[K - 1]], format_double(lg),
                             format_double(std::exp(lg))});
  }
  write_csv_file((dir / "frontier.csv").string(), frontier);

  if (ordered) {
    const OrderedDecision od = step_down(P, args.gamma);
    Json o;
    o["gamma"] = args.gamma;
    o["k_hat"] = od.k_hat;
    Json rows = Json::array();
    for (Index k = 0; k < P.n_covariates(); ++k) {
      rows.push_back({{"k", k + 1},
                      {"name", covs[k]},
                      {"N_order", od.n_order[k]},
                      {"Z", number(od.z[k])},
                      {"log_q", number(od.log_q[k])},
                      {"q", od.q(k)},
                      {"rejected", k < od.k_hat}});
    }
    o["orders"] = rows;
    write_json(dir / "ordered.json", o);
  }
}

int cmd_run(const RunArgs& args) {
  if (!(args.gamma > 0.0 && args.gamma <= 1.0)) throw ConfigError("--gamma must lie in (0, 1]");
  const std::filesystem::path dir(args.out);
  std::filesystem::create_directories(dir);

  if (!args.pvalues_in.empty()) {
    const PValueInput in = read_pvalues(read_csv_file(args.pvalues_in), args.n_units, args.n_covariates);
    CsvTable pv{{"unit", "covariate", "log_p", "p"}, {}};
    for (const auto& e : in.P.entries()) {
      pv.rows.push_back({in.unit_names[e.unit], in.covariate_names[e.covariate], format_double(e.log_p),
                         display_p(e.log_p)});
    }
    write_csv_file((dir / "pvalues.csv").string(), pv);
    write_decisions(dir, in.P, in.covariate_names, args, std::nullopt, args.ordered);
    return 0;
  }

  if (args.y_path.empty() || args.x_path.empty()) {
    throw ConfigError("run needs --y and --x, or --pvalues-in");
  }
  RunOptions opt;
  if (args.variance == "known") {
    if (!args.sigma2) throw ConfigError("--variance known requires --sigma2");
    if (!(*args.sigma2 > 0.0)) throw ConfigError("--sigma2 must be positive");
    opt.variance = VarianceMode::KnownSigma;
    opt.sigma2 = *args.sigma2;
  } else if (args.variance != "estimated") {
    throw ConfigError("--variance must be 'estimated' or 'known'");
  }
  if (args.lambda != "cv") {
    opt.lambda = parse_double(args.lambda, "--lambda");
    if (!(opt.lambda > 0.0)) throw ConfigError("--lambda must be positive or 'cv'");
  }
  if (args.folds < 2) throw ConfigError("--folds must be at least 2");
  opt.folds = args.folds;
  opt.intercept = args.intercept;
  opt.threads = args.threads;
  const std::uint64_t seed = resolve_seed(args.seed);
  opt.seed = seed;

  const PanelData panel = load_panel(args.y_path, args.x_path);
  if (!args.weights_path.empty()) opt.raw_weights = load_weights(args.weights_path, panel.covariate_names);
  for (Index n = 0; n < panel.n_units(); ++n) {
    const Index Tn = panel.observed.col(n).count();
    if (Tn <= panel.n_covariates()) {
      std::cerr << "warning: unit '" << panel.unit_names[n] << "' has " << Tn
                << " observations for " << panel.n_covariates()
                << " covariates; post-selection p-values assume T > J\n";
    }
  }

  const PanelRun run = run_panel_posi(panel, opt);

  CsvTable pv{{"unit", "covariate", "beta_bar", "log_p", "p", "v_minus", "v_plus", "sigma_hat"}, {}};
  for (const auto& unit : run.coefficients) {
    for (const auto& c : unit) {
      pv.rows.push_back({panel.unit_names[c.unit], panel.covariate_names[c.covariate],
                         format_double(c.beta_bar), format_double(c.log_p), display_p(c.log_p),
                         format_double(c.interval.v_minus), format_double(c.interval.v_plus),
                         format_double(c.sigma_hat)});
    }
  }
  write_csv_file((dir / "pvalues.csv").string(), pv);

  CsvTable units{{"unit", "n_obs", "lambda", "n_active"}, {}};
  for (const auto& u : run.units) {
    units.rows.push_back({panel.unit_names[u.unit], std::to_string(u.n_obs), format_double(u.lambda),
                          std::to_string(u.n_active)});
  }
  write_csv_file((dir / "units.csv").string(), units);

  write_decisions(dir, run.P, panel.covariate_names, args, seed, args.ordered);
  return 0;
}

struct SimArgs {
  std::string preset;
  std::string config_file;
  std::vector<std::pair<std::string, std::string>> overrides;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
};

SimConfig build_sim_config(const SimArgs& args) {
  SimConfig c = sim_preset(args.preset);
  if (!args.config_file.empty()) {
    std::ifstream in(args.config_file);
    if (!in) throw ParseError("cannot open '" + args.config_file + "'");
    std::string line;
    int lineno = 0;
    bool seed_in_file = false;
    while (std::getline(in, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) {
        throw ConfigError(args.config_file + ":" + std::to_string(lineno) + ": expected key = value");
      }
      std::string key = line.substr(0, eq);
      apply_setting(c, key, line.substr(eq + 1));
      key.erase(0, key.find_first_not_of(" \t"));
      key.erase(key.find_last_not_of(" \t") + 1);
      seed_in_file = seed_in_file || key == "seed";
    }
    if (seed_in_file && !args.seed) {
      for (const auto& [k, v] : args.overrides) apply_setting(c, k, v);
      return c;
    }
  }
  for (const auto& [k, v] : args.overrides) apply_setting(c, k, v);
  c.seed = resolve_seed(args.seed);
  return c;
}

Json config_json(const SimConfig& c) {
  return {{"n_units", c.n_units},     {"n_covariates", c.n_covariates},
          {"n_periods", c.n_periods}, {"k_true", c.k_true},
          {"noise", c.noise == NoiseKind::Independent ? "independent" : "dependent"},
          {"sigma2", c.sigma2},       {"kappa", c.kappa},
          {"gammas", c.gammas},       {"reps", c.reps},
          {"seed", c.seed},           {"split", c.split},
          {"folds", c.folds},         {"lambda", c.fixed_lambda > 0.0 ? Json(c.fixed_lambda) : Json("cv")}};
}

int cmd_simulate(const SimArgs& args) {
  const SimConfig config = build_sim_config(args);
  const std::filesystem::path dir(args.out);
  std::filesystem::create_directories(dir);
  const SimReport report = simulate(config);

  CsvTable table{{"gamma", "method", "selections", "false", "correct", "oos_r2"}, {}};
  for (const auto& r : report.rows) {
    table.rows.push_back({format_double(r.gamma), method_name(r.method), format_double(r.selections),
                          format_double(r.n_false), format_double(r.n_correct), format_double(r.oos_r2)});
  }
  write_csv_file((dir / "table3.csv").string(), table);

  Json j;
  j["config"] = config_json(config);
  j["unit_failures"] = report.unit_failures;
  Json recs = Json::array();
  for (const auto& r : report.records) {
    recs.push_back({{"rep", r.rep},
                    {"gamma", r.gamma},
                    {"method", method_name(r.method)},
                    {"selections", r.selections},
                    {"false", r.n_false},
                    {"correct", r.n_correct},
                    {"oos_r2", r.oos_r2},
                    {"selected", r.selected}});
  }
  j["records"] = recs;
  write_json(dir / "records.json", j);

  for (const auto& r : report.rows) {
    std::cout << "gamma=" << r.gamma << " " << method_name(r.method) << " selections=" << r.selections
              << " false=" << r.n_false << " correct=" << r.n_correct << " oos_r2=" << r.oos_r2 << '\n';
  }
  return 0;
}

int cmd_fwer(const SimArgs& args) {
  const SimConfig config = build_sim_config(args);
  const std::filesystem::path dir(args.out);
  std::filesystem::create_directories(dir);
  const std::vector<FwerEstimate> est = fwer_monte_carlo(config);
  CsvTable table{{"gamma", "method", "fwer", "reps", "bound"}, {}};
  for (const auto& e : est) {
    const double bound = e.gamma + 3.0 * std::sqrt(e.gamma * (1.0 - e.gamma) / static_cast<double>(e.reps));
    table.rows.push_back({format_double(e.gamma), method_name(e.method), format_double(e.fwer),
                          std::to_string(e.reps), format_double(bound)});
    std::cout << "gamma=" << e.gamma << " " << method_name(e.method) << " fwer=" << e.fwer << '\n';
  }
  write_csv_file((dir / "fwer.csv").string(), table);
  return 0;
}

void add_sim_options(CLI::App* sub, SimArgs& args, const std::string& default_preset) {
  args.preset = default_preset;
  sub->add_option("--preset", args.preset, "table3-independent, table3-dependent, smoke or global-null")
      ->capture_default_str();
  sub->add_option("--config", args.config_file, "file of `key = value` lines")->check(CLI::ExistingFile);
  for (const char* key : {"n-units", "n-covariates", "n-periods", "k-true", "noise", "sigma2", "kappa",
                          "gamma", "reps", "split", "folds", "lambda", "threads"}) {
    const std::string k = key;
    sub->add_option_function<std::string>(
        "--" + k, [&args, k](const std::string& v) { args.overrides.emplace_back(k, v); },
        "override the `" + k + "` setting");
  }
  sub->add_option("--seed", args.seed, "master seed (random and printed when omitted)");
  sub->add_option("--out", args.out, "output directory")->capture_default_str();
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"Post-selection inference and covariate selection for panels of LASSO regressions"};
  app.require_subcommand(1);

  RunArgs run;
  CLI::App* run_cmd = app.add_subcommand("run", "fit every unit, compute p-values, select covariates");
  run_cmd->add_option("--y", run.y_path, "CSV, T rows x N unit columns");
  run_cmd->add_option("--x", run.x_path, "CSV, T rows x J covariate columns");
  run_cmd->add_option("--weights", run.weights_path, "CSV (covariate, weight); `inf` = unpenalized");
  run_cmd->add_option("--pvalues-in", run.pvalues_in, "CSV (unit, covariate, log_p|p); skips estimation");
  run_cmd->add_option("--gamma", run.gamma, "FWER level")->capture_default_str();
  run_cmd->add_option("--variance", run.variance, "estimated or known")->capture_default_str();
  run_cmd->add_option("--sigma2", run.sigma2, "noise variance for --variance known");
  run_cmd->add_option("--lambda", run.lambda, "penalty level, or cv")->capture_default_str();
  run_cmd->add_option("--folds", run.folds, "cross-validation folds")->capture_default_str();
  run_cmd->add_option("--seed", run.seed, "seed for the cross-validation split");
  run_cmd->add_flag("--intercept", run.intercept, "demean y and X within each unit");
  run_cmd->add_flag("--ordered", run.ordered, "also run the ordered step-down (column order = nesting)");
  run_cmd->add_option("--n-units", run.n_units, "panel width for --pvalues-in");
  run_cmd->add_option("--n-covariates", run.n_covariates, "covariate count for --pvalues-in");
  run_cmd->add_option("--threads", run.threads, "worker threads")->capture_default_str();
  run_cmd->add_option("--out", run.out, "output directory")->capture_default_str();

  SimArgs sim;
  CLI::App* sim_cmd = app.add_subcommand("simulate", "staircase simulation of the six selection methods");
  add_sim_options(sim_cmd, sim, "table3-independent");

  SimArgs fwer;
  CLI::App* fwer_cmd = app.add_subcommand("fwer", "global-null family-wise error Monte Carlo");
  add_sim_options(fwer_cmd, fwer, "global-null");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return exit_code_for(ErrorClass::Config);
  }

  try {
    if (run_cmd->parsed()) return cmd_run(run);
    if (sim_cmd->parsed()) return cmd_simulate(sim);
    if (fwer_cmd->parsed()) return cmd_fwer(fwer);
  } catch (const Error& e) {
    std::cerr << "error [" << e.kind() << "]: " << e.what() << '\n';
    return exit_code_for(e.error_class());
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error [IO]: " << e.what() << '\n';
    return exit_code_for(ErrorClass::Input);
  }
  return 1;
}

}  // namespace panelposi
