#pragma once

#include <cmath>
#include <random>

#include "panelposi/panel_mt.hpp"

namespace fixture {

using panelposi::Index;
using panelposi::PValueMatrix;

// Six units, four covariates (0-based here):
//   K_1 = {2}, K_2 = {1,3,5,6}, K_3 = {1,…,6}, K_4 = {2,4,5}.
// The smallest p-value per covariate is 0.005, 0.002, 4e-5, 1.1e-4; the
// other cells carry unremarkable values.
inline PValueMatrix running_example() {
  PValueMatrix P(6, 4);
  P.add(1, 0, std::log(0.005));
  for (Index n : {0, 2, 4, 5}) P.add(n, 1, std::log(n == 2 ? 0.002 : 0.3 + 0.1 * n));
  for (Index n = 0; n < 6; ++n) P.add(n, 2, std::log(n == 3 ? 4e-5 : 0.2 + 0.1 * n));
  for (Index n : {1, 3, 4}) P.add(n, 3, std::log(n == 4 ? 1.1e-4 : 0.6));
  return P;
}

/// Layout with |K_k| = (4, 3, 2, 3) on five units.
inline PValueMatrix nested_layout() {
  PValueMatrix P(5, 4);
  for (Index n : {0, 1, 2, 3}) P.add(n, 0, -5.0);
  for (Index n : {0, 2, 4}) P.add(n, 1, -3.0);
  for (Index n : {1, 3}) P.add(n, 2, -0.5);
  for (Index n : {0, 1, 4}) P.add(n, 3, -0.1);
  return P;
}

/// Random sparsity pattern with uniform p-values.
inline PValueMatrix random_panel(Index N, Index J, double activity, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  PValueMatrix P(N, J);
  for (Index n = 0; n < N; ++n)
    for (Index j = 0; j < J; ++j)
      if (u(rng) < activity) P.add(n, j, std::log1p(-u(rng)));
  return P;
}

}  // namespace fixture
