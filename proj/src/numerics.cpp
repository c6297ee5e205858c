#include "panelposi/numerics.hpp"

#include <cmath>
#include <numbers>

namespace panelposi {

namespace {

constexpr double kAsymptoticCut = -37.0;

// ln Φ(x) for x ≪ 0 from the Mills-ratio expansion
// Φ(x) ≈ φ(x)/|x| · Σ_k (−1)^k (2k−1)!! / x^{2k}.
double log_norm_cdf_asymptotic(double x) {
  const double inv_x2 = 1.0 / (x * x);
  double term = 1.0;
  double series = 1.0;
  for (int k = 1; k <= 8; ++k) {
    term *= -(2.0 * k - 1.0) * inv_x2;
    series += term;
  }
  return -0.5 * x * x - std::log(-x) - 0.5 * std::log(2.0 * std::numbers::pi) +
         std::log(series);
}

}  // namespace

double log_norm_cdf(double x) {
  if (std::isnan(x)) return x;
  if (x == kInf) return 0.0;
  if (x == -kInf) return -kInf;
  if (x < kAsymptoticCut) return log_norm_cdf_asymptotic(x);
  const double u = x / std::numbers::sqrt2;
  if (x > 0.0) return std::log1p(-0.5 * std::erfc(u));
  return std::log(0.5 * std::erfc(-u));
}

double log1m_exp(double a) {
  if (a > 0.0) throw InvalidOrder("log1m_exp: argument must be nonpositive");
  if (a == 0.0) return -kInf;
  // Mächler's switch between the two accurate branches.
  return a > -std::numbers::ln2 ? std::log(-std::expm1(a)) : std::log1p(-std::exp(a));
}

double log_diff_exp(double a, double b) {
  if (!(a > b)) {
    std::ostringstream msg;
    msg << "log_diff_exp requires a > b (a=" << a << ", b=" << b << ")";
    throw InvalidOrder(msg.str());
  }
  if (b == -kInf) return a;
  return a + log1m_exp(b - a);
}

double log_sum_exp(double a, double b) {
  if (a < b) std::swap(a, b);
  if (b == -kInf) return a;
  return a + std::log1p(std::exp(b - a));
}

}  // namespace panelposi
