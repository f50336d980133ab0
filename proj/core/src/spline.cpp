#include "asurv/spline.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "asurv/types.hpp"

namespace asurv {
namespace {

constexpr int kOrder = 4;

struct KnotView {
  const std::vector<double>& t;
  int span;

  double value(int i, int k, double x) const {
    if (k == 1) return i == span ? 1.0 : 0.0;
    double out = 0.0;
    const double d1 = t[i + k - 1] - t[i];
    const double d2 = t[i + k] - t[i + 1];
    if (d1 > 0.0) out += (x - t[i]) / d1 * value(i, k - 1, x);
    if (d2 > 0.0) out += (t[i + k] - x) / d2 * value(i + 1, k - 1, x);
    return out;
  }

  double deriv(int i, int k, int d, double x) const {
    if (d == 0) return value(i, k, x);
    double out = 0.0;
    const double d1 = t[i + k - 1] - t[i];
    const double d2 = t[i + k] - t[i + 1];
    if (d1 > 0.0) out += deriv(i, k - 1, d - 1, x) / d1;
    if (d2 > 0.0) out -= deriv(i + 1, k - 1, d - 1, x) / d2;
    return (k - 1) * out;
  }
};

}  // namespace

NaturalSplineBasis::NaturalSplineBasis(std::vector<double> interior_knots, double lower,
                                       double upper)
    : interior_(std::move(interior_knots)), lower_(lower), upper_(upper) {
  if (!std::isfinite(lower_) || !std::isfinite(upper_) || !(lower_ < upper_))
    throw InputError("natural spline: boundary knots must be finite and increasing");
  for (std::size_t i = 0; i < interior_.size(); ++i) {
    const double k = interior_[i];
    if (!std::isfinite(k) || !(k > lower_ && k < upper_))
      throw InputError("natural spline: interior knots must lie strictly inside the boundary");
    if (i > 0 && !(k > interior_[i - 1]))
      throw InputError("natural spline: interior knots must be strictly increasing");
  }
  df_ = static_cast<int>(interior_.size()) + 1;

  aknots_.assign(kOrder, lower_);
  aknots_.insert(aknots_.end(), interior_.begin(), interior_.end());
  aknots_.insert(aknots_.end(), kOrder, upper_);
  const int nbasis = static_cast<int>(interior_.size()) + kOrder;

  // Second-derivative constraints at both boundaries, intercept column dropped.
  Eigen::MatrixXd constraint(nbasis - 1, 2);
  constraint.col(0) = bspline_row(lower_, 2).tail(nbasis - 1);
  constraint.col(1) = bspline_row(upper_, 2).tail(nbasis - 1);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(constraint);
  const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(nbasis - 1, nbasis - 1);
  projection_ = q.rightCols(nbasis - 3);

  auto reduced = [&](double x, int d) -> Eigen::VectorXd {
    return projection_.transpose() * bspline_row(x, d).tail(nbasis - 1);
  };
  value_lo_ = reduced(lower_, 0);
  slope_lo_ = reduced(lower_, 1);
  value_hi_ = reduced(upper_, 0);
  slope_hi_ = reduced(upper_, 1);
}

Eigen::VectorXd NaturalSplineBasis::bspline_row(double x, int deriv) const {
  const int nbasis = static_cast<int>(aknots_.size()) - kOrder;
  // Span: t[s] <= x < t[s+1]; the upper boundary belongs to the last span.
  int span = kOrder - 1;
  for (int s = kOrder - 1; s < nbasis; ++s) {
    if (aknots_[s] <= x && aknots_[s] < aknots_[s + 1]) span = s;
  }
  KnotView view{aknots_, span};
  Eigen::VectorXd row(nbasis);
  for (int i = 0; i < nbasis; ++i) row[i] = view.deriv(i, kOrder, deriv, x);
  return row;
}

void NaturalSplineBasis::evaluate_into(double x, std::span<double> out) const {
  if (!std::isfinite(x)) throw InputError("natural spline: non-finite input");
  if (static_cast<int>(out.size()) != df_)
    throw std::invalid_argument("natural spline: output span has wrong length");
  Eigen::Map<Eigen::VectorXd> dst(out.data(), df_);
  if (x < lower_) {
    dst = value_lo_ + (x - lower_) * slope_lo_;
  } else if (x > upper_) {
    dst = value_hi_ + (x - upper_) * slope_hi_;
  } else {
    const int nbasis = static_cast<int>(aknots_.size()) - kOrder;
    dst = projection_.transpose() * bspline_row(x, 0).tail(nbasis - 1);
  }
}

Eigen::VectorXd NaturalSplineBasis::evaluate(double x) const {
  Eigen::VectorXd out(df_);
  evaluate_into(x, {out.data(), static_cast<std::size_t>(df_)});
  return out;
}

Eigen::VectorXd NaturalSplineBasis::derivative(double x, int order) const {
  if (order < 0 || order > 2) throw std::invalid_argument("natural spline: derivative order 0..2");
  if (order == 0) return evaluate(x);
  if (x < lower_) return order == 1 ? slope_lo_ : Eigen::VectorXd::Zero(df_);
  if (x > upper_) return order == 1 ? slope_hi_ : Eigen::VectorXd::Zero(df_);
  const int nbasis = static_cast<int>(aknots_.size()) - kOrder;
  return projection_.transpose() * bspline_row(x, order).tail(nbasis - 1);
}

}  // namespace asurv
