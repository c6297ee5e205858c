#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "panelposi/numerics.hpp"
#include "panelposi/posi.hpp"

namespace panelposi {

enum class NoiseKind { Independent, Dependent };

struct SimConfig {
  Index n_units = 120;
  Index n_covariates = 100;
  Index n_periods = 300;
  Index k_true = 10;
  NoiseKind noise = NoiseKind::Independent;
  double sigma2 = 2.0;
  double kappa = 1.0;  // cross-unit noise covariance (Dependent only)
  std::vector<double> gammas{0.05};
  Index reps = 100;
  std::uint64_t seed = 1;
  double split = 0.5;  // in-sample fraction
  Index folds = 5;
  double fixed_lambda = 0.0;  // > 0: one λ for every unit instead of per-unit CV
  Index threads = 1;

  /// Throws ConfigError when the fields are inconsistent.
  void validate() const;
};

/// Named presets: "table3-independent", "table3-dependent", "smoke",
/// "global-null".
SimConfig sim_preset(const std::string& name);

/// Applies one `key = value` setting (keys match the CLI flag names).
void apply_setting(SimConfig& config, const std::string& key, const std::string& value);

struct StaircaseData {
  Matrix X;                         // T×J
  Matrix Y;                         // T×N
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> mask;  // J×N true loadings
  Matrix beta;                      // J×N
};

/// Covariate k (0-based) loads on the first ⌈N(1 − k/K)⌉ units for k < K.
StaircaseData gen_staircase(const SimConfig& config, std::uint64_t seed);

/// Noise covariance across units: σ²I or σ² on the diagonal with κ elsewhere.
Matrix noise_covariance(const SimConfig& config);

enum class Method { NOls, BOls, NLasso, BLasso, BPosi, PPosi };
inline constexpr std::array<Method, 6> kMethods{Method::NOls, Method::BOls, Method::NLasso,
                                               Method::BLasso, Method::BPosi, Method::PPosi};
const char* method_name(Method m);

struct RepRecord {
  Index rep = 0;
  double gamma = 0.0;
  Method method = Method::NOls;
  Index selections = 0;
  Index n_false = 0;
  Index n_correct = 0;
  double oos_r2 = 0.0;
  std::vector<Index> selected;
};

struct MethodSummary {
  double gamma = 0.0;
  Method method = Method::NOls;
  double selections = 0.0;
  double n_false = 0.0;
  double n_correct = 0.0;
  double oos_r2 = 0.0;
};

struct SimReport {
  SimConfig config;
  std::vector<MethodSummary> rows;  // γ-major, methods in kMethods order
  std::vector<RepRecord> records;   // ordered by (rep, γ, method)
  Index unit_failures = 0;          // unit PoSI computations that raised

  const MethodSummary& row(double gamma, Method m) const;
};

/// All six methods on one data set. `in_rows` leading rows are in-sample;
/// the rest score the out-of-sample R² (0 when there are none).
std::vector<RepRecord> run_benchmarks(const StaircaseData& data, const SimConfig& config,
                                      Index in_rows, std::uint64_t seed, Index* unit_failures = nullptr);

SimReport simulate(const SimConfig& config);

struct FwerEstimate {
  double gamma = 0.0;
  Method method = Method::NOls;
  double fwer = 0.0;
  Index reps = 0;
};

/// Per-method share of global-null panels (k_true forced to 0, all rows
/// in-sample) with at least one selection, one entry per (γ, method).
std::vector<FwerEstimate> fwer_monte_carlo(SimConfig config);

}  // namespace panelposi
