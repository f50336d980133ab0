#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Dense>

namespace asurv {

/// Seeded generator shared by every sampler. Wraps mt19937_64 so draws are
/// reproducible for a given seed on a given standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  double uniform();  // (0, 1)
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(eng_); }
  double normal(double mean, double sd) { return mean + sd * normal(); }
  double exponential() { return std::exponential_distribution<double>(1.0)(eng_); }
  double gamma(double shape, double rate = 1.0);
  double beta(double a, double b);
  double chi_squared(double dof) { return gamma(0.5 * dof, 0.5); }
  bool bernoulli(double p) { return uniform() < p; }
  std::uint64_t bits() { return eng_(); }
  std::size_t index(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(eng_); }

  std::mt19937_64& engine() { return eng_; }

 private:
  std::mt19937_64 eng_;
};

/// splitmix64 finalizer; used to derive independent stream seeds.
[[nodiscard]] std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b = 0);

/// Polya-Gamma PG(1, z) via Devroye's alternating-series sampler.
[[nodiscard]] double draw_polya_gamma(double z, Rng& rng);
[[nodiscard]] double polya_gamma_mean(double z);
[[nodiscard]] double polya_gamma_variance(double z);

/// Normal(mean, sd) truncated to (lower, inf).
[[nodiscard]] double draw_truncated_normal(double mean, double sd, double lower, Rng& rng);

/// Inverse-Gamma(shape, rate): 1 / Gamma(shape, rate).
[[nodiscard]] double draw_inverse_gamma(double shape, double rate, Rng& rng);

/// Inverse-Wishart(dof, scale) with density proportional to
/// |S|^{-(dof+p+1)/2} exp(-tr(scale S^{-1})/2).
[[nodiscard]] Eigen::MatrixXd draw_inverse_wishart(double dof, const Eigen::MatrixXd& scale, Rng& rng);

/// Draw from N(Q^{-1} b, Q^{-1}) given the precision Q and linear term b.
[[nodiscard]] Eigen::VectorXd draw_mvn_precision(const Eigen::MatrixXd& precision, const Eigen::VectorXd& b,
                                                 Rng& rng);
[[nodiscard]] Eigen::VectorXd draw_mvn(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov, Rng& rng);

}  // namespace asurv
