#pragma once

#include <Eigen/Dense>
#include <span>
#include <vector>

namespace asurv {

/// Natural cubic spline basis without intercept.
///
/// Constructed the same way as the classic `ns()` basis: a cubic B-spline basis
/// on the augmented knot sequence, first column dropped, then projected onto
/// the null space of the second-derivative constraints at both boundary knots
/// (Householder QR). Outside the boundary knots the basis is extended linearly
/// from the boundary value and first derivative.
///
/// The basis has `interior_knots.size() + 1` columns and evaluates to zero at
/// the lower boundary knot.
class NaturalSplineBasis {
 public:
  NaturalSplineBasis(std::vector<double> interior_knots, double lower, double upper);

  [[nodiscard]] int size() const { return df_; }
  [[nodiscard]] const std::vector<double>& interior_knots() const { return interior_; }
  [[nodiscard]] double lower() const { return lower_; }
  [[nodiscard]] double upper() const { return upper_; }

  [[nodiscard]] Eigen::VectorXd evaluate(double x) const;
  void evaluate_into(double x, std::span<double> out) const;

  /// Analytic derivatives of order 0..2 of every basis column.
  [[nodiscard]] Eigen::VectorXd derivative(double x, int order) const;

 private:
  // Full B-spline row (all nIknots + 4 functions) of the given derivative order.
  [[nodiscard]] Eigen::VectorXd bspline_row(double x, int deriv) const;

  std::vector<double> interior_;
  double lower_;
  double upper_;
  int df_;
  std::vector<double> aknots_;
  Eigen::MatrixXd projection_;  // (nbasis - 1) x df
  Eigen::VectorXd value_lo_, slope_lo_, value_hi_, slope_hi_;
};

}  // namespace asurv
