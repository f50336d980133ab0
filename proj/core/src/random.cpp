#include "asurv/random.hpp"

#include <cmath>
#include <numbers>

#include "asurv/types.hpp"

namespace asurv {
namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kTrunc = 0.64;

double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double log_norm_cdf(double x) {
  if (x > -30.0) return std::log(norm_cdf(x));
  // Asymptotic tail: log(phi(x)/-x)
  return -0.5 * x * x - std::log(-x) - 0.5 * std::log(2.0 * kPi);
}

// Coefficient n of the alternating series for the J*(1, z) density.
double series_term(double x, int n) {
  const double k = (n + 0.5) * kPi;
  if (x > kTrunc) return k * std::exp(-0.5 * k * k * x);
  if (x <= 0.0) return 0.0;
  const double expnt = -1.5 * (std::log(0.5 * kPi) + std::log(x)) + std::log(k) - 2.0 * (n + 0.5) * (n + 0.5) / x;
  return std::exp(expnt);
}

double exponential_tail_mass(double z) {
  const double t = kTrunc;
  const double fz = 0.125 * kPi * kPi + 0.5 * z * z;
  const double b = std::sqrt(1.0 / t) * (t * z - 1.0);
  const double a = -std::sqrt(1.0 / t) * (t * z + 1.0);
  const double x0 = std::log(fz) + fz * t;
  const double xb = x0 - z + log_norm_cdf(b);
  const double xa = x0 + z + log_norm_cdf(a);
  const double qdivp = 4.0 / kPi * (std::exp(xb) + std::exp(xa));
  return 1.0 / (1.0 + qdivp);
}

// Inverse Gaussian with mean 1/z truncated to (0, kTrunc).
double truncated_inverse_gaussian(double z, Rng& rng) {
  const double t = kTrunc;
  double x = t + 1.0;
  if (1.0 / t > z) {
    double alpha = 0.0;
    while (rng.uniform() > alpha) {
      double e1 = rng.exponential();
      double e2 = rng.exponential();
      while (e1 * e1 > 2.0 * e2 / t) {
        e1 = rng.exponential();
        e2 = rng.exponential();
      }
      x = 1.0 + e1 * t;
      x = t / (x * x);
      alpha = std::exp(-0.5 * z * z * x);
    }
  } else {
    const double mu = 1.0 / z;
    while (x > t) {
      const double y = rng.normal();
      const double half_mu = 0.5 * mu;
      const double mu_y = mu * y * y;
      x = mu + half_mu * mu_y - half_mu * std::sqrt(4.0 * mu_y + mu_y * mu_y);
      if (rng.uniform() > mu / (mu + x)) x = mu * mu / x;
    }
  }
  return x;
}

}  // namespace

double Rng::uniform() {
  double u = 0.0;
  do {
    u = std::generate_canonical<double, 53>(eng_);
  } while (u <= 0.0 || u >= 1.0);
  return u;
}

double Rng::gamma(double shape, double rate) {
  return std::gamma_distribution<double>(shape, 1.0 / rate)(eng_);
}

double Rng::beta(double a, double b) {
  const double x = gamma(a);
  const double y = gamma(b);
  return x / (x + y);
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double draw_polya_gamma(double z, Rng& rng) {
  if (!std::isfinite(z)) throw NumericalError("Polya-Gamma draw with non-finite tilt");
  z = 0.5 * std::fabs(z);
  const double fz = 0.125 * kPi * kPi + 0.5 * z * z;
  const double p_exp = exponential_tail_mass(z);
  for (;;) {
    double x = 0.0;
    if (rng.uniform() < p_exp) {
      x = kTrunc + rng.exponential() / fz;
    } else {
      x = truncated_inverse_gaussian(z, rng);
    }
    double s = series_term(x, 0);
    const double y = rng.uniform() * s;
    for (int n = 1;; ++n) {
      if (n % 2 == 1) {
        s -= series_term(x, n);
        if (y <= s) return 0.25 * x;
      } else {
        s += series_term(x, n);
        if (y > s) break;
      }
    }
  }
}

double polya_gamma_mean(double z) {
  if (std::fabs(z) < 1e-6) return 0.25 - z * z / 48.0;
  return std::tanh(0.5 * z) / (2.0 * z);
}

double polya_gamma_variance(double z) {
  const double a = std::fabs(z);
  if (a < 1e-3) return 1.0 / 24.0;
  const double c = std::cosh(0.5 * a);
  return (std::sinh(a) - a) / (4.0 * a * a * a * c * c);
}

double draw_truncated_normal(double mean, double sd, double lower, Rng& rng) {
  const double a = (lower - mean) / sd;
  double x = 0.0;
  if (a < 0.45) {
    do {
      x = rng.normal();
    } while (x <= a);
  } else {
    // Exponential proposal with the optimal rate for the tail beyond a.
    const double lambda = 0.5 * (a + std::sqrt(a * a + 4.0));
    for (;;) {
      x = a + rng.exponential() / lambda;
      const double d = x - lambda;
      if (rng.uniform() <= std::exp(-0.5 * d * d)) break;
    }
  }
  return mean + sd * x;
}

double draw_inverse_gamma(double shape, double rate, Rng& rng) { return 1.0 / rng.gamma(shape, rate); }

Eigen::MatrixXd draw_inverse_wishart(double dof, const Eigen::MatrixXd& scale, Rng& rng) {
  const auto p = scale.rows();
  if (dof <= static_cast<double>(p) - 1.0) throw NumericalError("inverse-Wishart dof too small");
  // S ~ IW(dof, scale)  <=>  S^{-1} ~ W(dof, scale^{-1}).
  Eigen::LLT<Eigen::MatrixXd> scale_llt(scale);
  if (scale_llt.info() != Eigen::Success) throw NumericalError("inverse-Wishart scale not positive definite");
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(p, p);
  for (Eigen::Index i = 0; i < p; ++i) {
    a(i, i) = std::sqrt(rng.chi_squared(dof - static_cast<double>(i)));
    for (Eigen::Index j = 0; j < i; ++j) a(i, j) = rng.normal();
  }
  // scale = U U' with U lower; scale^{-1} = U^{-T} U^{-1}; W = U^{-T} A A' U^{-1}.
  // Then S = W^{-1} = U A^{-T} A^{-1} U' = (U A^{-T})(U A^{-T})'.
  const Eigen::MatrixXd u = scale_llt.matrixL();
  const Eigen::MatrixXd a_inv_t =
      a.triangularView<Eigen::Lower>().solve(Eigen::MatrixXd::Identity(p, p)).transpose();
  const Eigen::MatrixXd f = u * a_inv_t;
  Eigen::MatrixXd s = f * f.transpose();
  return 0.5 * (s + s.transpose());
}

Eigen::VectorXd draw_mvn_precision(const Eigen::MatrixXd& precision, const Eigen::VectorXd& b, Rng& rng) {
  Eigen::LLT<Eigen::MatrixXd> llt(precision);
  if (llt.info() != Eigen::Success) throw NumericalError("posterior precision not positive definite");
  const Eigen::VectorXd mean = llt.solve(b);
  Eigen::VectorXd z(b.size());
  for (Eigen::Index k = 0; k < z.size(); ++k) z[k] = rng.normal();
  // Q = L L'; x = mean + L'^{-1} z has covariance Q^{-1}.
  return mean + llt.matrixU().solve(z);
}

Eigen::VectorXd draw_mvn(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov, Rng& rng) {
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) throw NumericalError("covariance not positive definite");
  Eigen::VectorXd z(mean.size());
  for (Eigen::Index k = 0; k < z.size(); ++k) z[k] = rng.normal();
  return mean + llt.matrixL() * z;
}

}  // namespace asurv
