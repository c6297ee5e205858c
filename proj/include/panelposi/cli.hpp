#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "panelposi/io.hpp"
#include "panelposi/panel_mt.hpp"
#include "panelposi/posi.hpp"

namespace panelposi {

struct RunOptions {
  VarianceMode variance = VarianceMode::Estimated;
  double sigma2 = 1.0;        // Known mode
  double lambda = 0.0;        // > 0 fixes λ; otherwise per-unit cross-validation
  Index folds = 5;
  std::uint64_t seed = 0;
  bool intercept = false;     // demean y and X over each unit's observed rows
  Index threads = 1;
  Vector raw_weights;         // empty: all ones
};

struct UnitSummary {
  Index unit = 0;
  Index n_obs = 0;
  double lambda = 0.0;
  Index n_active = 0;
};

struct PanelRun {
  std::vector<std::vector<PosiCoefficient>> coefficients;  // per unit
  std::vector<UnitSummary> units;
  PValueMatrix P{0, 0};
};

/// Weighted LASSO, post-selection p-values and the sparse p-value matrix
/// for every unit of the panel.
PanelRun run_panel_posi(const PanelData& panel, const RunOptions& options);

/// Exit code for an error class: 2 input, 3 numerical, 4 configuration.
int exit_code_for(ErrorClass cls);

/// Entry point of the `panelposi` tool.
int run_cli(int argc, char** argv);

}  // namespace panelposi
