#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <sstream>

#include "panelposi/errors.hpp"

namespace panelposi {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Cap on cond(XᵀX); anything above is reported as SingularDesign.
inline constexpr double kConditionCap = 1e12;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Column-pivoted QR of a tall design, reused for every quantity the
/// selective-inference algebra needs (OLS solve, residual projection,
/// pseudo-inverse rows, Gram inverse).
///
/// Construction fails with SingularDesign when the design has fewer rows
/// than columns or when the estimated condition number of XᵀX exceeds
/// kConditionCap. A design with zero columns is allowed and behaves as the
/// empty projection.
template <typename Scalar>
class LeastSquares {
 public:
  template <typename Derived>
  explicit LeastSquares(const Eigen::MatrixBase<Derived>& design)
      : design_(design) {
    if (design_.cols() == 0) return;
    if (design_.rows() < design_.cols()) {
      std::ostringstream msg;
      msg << "design has " << design_.rows() << " rows but " << design_.cols()
          << " columns";
      throw SingularDesign(msg.str());
    }
    qr_.compute(design_);
    const auto r = qr_.matrixQR().diagonal().cwiseAbs();
    const Scalar largest = r(0);
    const Scalar smallest = r(design_.cols() - 1);
    const Scalar gram_cond =
        smallest > Scalar(0) ? (largest / smallest) * (largest / smallest)
                             : std::numeric_limits<Scalar>::infinity();
    condition_ = gram_cond;
    if (!(gram_cond <= Scalar(kConditionCap))) {
      std::ostringstream msg;
      msg << "Gram matrix condition estimate " << double(gram_cond)
          << " exceeds cap " << kConditionCap;
      throw SingularDesign(msg.str());
    }
  }

  Index rows() const { return design_.rows(); }
  Index cols() const { return design_.cols(); }
  Scalar gram_condition() const { return condition_; }
  const MatrixX<Scalar>& design() const { return design_; }

  /// argmin ‖response − design·β‖².
  template <typename Derived>
  VectorX<Scalar> solve(const Eigen::MatrixBase<Derived>& response) const {
    if (cols() == 0) return VectorX<Scalar>(0);
    return qr_.solve(response);
  }

  /// (I − P)·v for a vector or a block of columns.
  template <typename Derived>
  MatrixX<Scalar> residual(const Eigen::MatrixBase<Derived>& v) const {
    MatrixX<Scalar> w = v;
    if (cols() == 0) return w;
    w = qr_.householderQ().transpose() * w;
    w.topRows(cols()).setZero();
    return qr_.householderQ() * w;
  }

  /// (X⁺)ᵀ, a rows()×cols() matrix whose j-th column is η_j.
  MatrixX<Scalar> pinv_transpose() const {
    const Index k = cols();
    if (k == 0) return MatrixX<Scalar>(rows(), 0);
    MatrixX<Scalar> r_inv_t =
        upper_r().transpose().template triangularView<Eigen::Lower>().solve(
            MatrixX<Scalar>::Identity(k, k));
    MatrixX<Scalar> mixed = r_inv_t * qr_.colsPermutation().transpose();
    MatrixX<Scalar> padded = MatrixX<Scalar>::Zero(rows(), k);
    padded.topRows(k) = mixed;
    return qr_.householderQ() * padded;
  }

  /// (XᵀX)⁻¹.
  MatrixX<Scalar> gram_inverse() const {
    const Index k = cols();
    if (k == 0) return MatrixX<Scalar>(0, 0);
    MatrixX<Scalar> r_inv = upper_r().template triangularView<Eigen::Upper>().solve(
        MatrixX<Scalar>::Identity(k, k));
    MatrixX<Scalar> inner = r_inv * r_inv.transpose();
    return qr_.colsPermutation() * inner * qr_.colsPermutation().transpose();
  }

 private:
  MatrixX<Scalar> upper_r() const {
    const Index k = cols();
    return qr_.matrixQR().topLeftCorner(k, k).template triangularView<Eigen::Upper>();
  }

  MatrixX<Scalar> design_;
  Eigen::ColPivHouseholderQR<MatrixX<Scalar>> qr_;
  Scalar condition_ = Scalar(1);
};

template <typename Derived>
LeastSquares(const Eigen::MatrixBase<Derived>&)
    -> LeastSquares<typename Derived::Scalar>;

/// Least-squares coefficients of `response` on the columns of `design`.
template <typename DerivedA, typename DerivedB>
VectorX<typename DerivedA::Scalar> ols_solve(const Eigen::MatrixBase<DerivedA>& design,
                                             const Eigen::MatrixBase<DerivedB>& response) {
  if (design.rows() != response.rows()) {
    throw ShapeMismatch("ols_solve: design and response row counts differ");
  }
  return LeastSquares<typename DerivedA::Scalar>(design).solve(response);
}

/// (I − P_M)·v where P_M projects onto the column span of `design_active`.
template <typename DerivedA, typename DerivedB>
VectorX<typename DerivedA::Scalar> projection_residual(
    const Eigen::MatrixBase<DerivedA>& design_active, const Eigen::MatrixBase<DerivedB>& v) {
  if (design_active.cols() == 0) return v;
  if (design_active.rows() != v.rows()) {
    throw ShapeMismatch("projection_residual: row counts differ");
  }
  return LeastSquares<typename DerivedA::Scalar>(design_active).residual(v);
}

/// ln Φ(x). Strictly increasing, finite for finite x.
double log_norm_cdf(double x);

/// ln(1 − Φ(x)) = ln Φ(−x).
inline double log_norm_sf(double x) { return log_norm_cdf(-x); }

/// ln(eᵃ − eᵇ) for a > b; b may be −∞. Throws InvalidOrder when a ≤ b.
double log_diff_exp(double a, double b);

/// ln(1 − eᵃ) for a ≤ 0.
double log1m_exp(double a);

/// ln(eᵃ + eᵇ).
double log_sum_exp(double a, double b);

}  // namespace panelposi
