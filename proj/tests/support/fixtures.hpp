#pragma once

#include <cmath>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include <unistd.h>

#include <Eigen/Dense>

#include "asurv/design.hpp"
#include "asurv/likelihood.hpp"
#include "asurv/model_config.hpp"
#include "asurv/posterior_store.hpp"
#include "asurv/random.hpp"
#include "asurv/simulator.hpp"

namespace asurv::test {

// Toy model with only standardize/identity transforms so oracles can rebuild
// every covariate by hand:
//   psa_fixed   (volume - 50) / 20
//   psa_random  1, (age - 67) / 7
//   biopsy      1, (time_since_dx - 3) / 2, eta
//   reclass     1, (age - 67) / 7, eta
//   surgery     1, prev_reclass, eta, eta * prev_reclass
inline ModelConfig toy_config() {
  ModelConfig c;
  c.covariates = {
      {"volume", StandardizeTransform{50.0, 20.0}, ModelBlock::psa_fixed},
      {"age", StandardizeTransform{67.0, 7.0}, ModelBlock::psa_random},
      {"time_since_dx", StandardizeTransform{3.0, 2.0}, ModelBlock::biopsy},
      {"age", StandardizeTransform{67.0, 7.0}, ModelBlock::reclass},
      {"prev_reclass", IdentityTransform{}, ModelBlock::surgery},
  };
  c.eta_interactions[ModelBlock::surgery] = {"prev_reclass"};
  c.sampler.n_chains = 2;
  c.sampler.n_iterations = 600;
  c.sampler.burn_in = 200;
  c.sampler.thin = 2;
  c.sampler.seed = 11;
  return c;
}

inline ParameterState toy_params() {
  ParameterState p;
  p.rho = 0.3;
  p.beta = Eigen::VectorXd::Constant(1, 0.3);
  p.xi = Eigen::VectorXd::Ones(2);
  p.sigma2 = 0.3;
  p.mu[0] = Eigen::Vector2d(1.4, 0.26);
  p.mu[1] = Eigen::Vector2d(2.1, 0.6);
  Eigen::Matrix2d sig;
  sig << 0.3, 0.04, 0.04, 0.16;
  p.sigma_b[0] = p.sigma_b[1] = sig;
  p.nu = Eigen::Vector3d(-0.4, 0.3, -0.6);
  p.gamma = Eigen::Vector3d(-1.6, 0.3, 1.8);
  p.omega = Eigen::Vector4d(-3.0, 1.2, 0.7, 2.0);
  return p;
}

inline GeneratingConfig toy_generating(int n, std::uint64_t seed) {
  GeneratingConfig g;
  g.model = toy_config();
  g.params = toy_params();
  g.n_patients = n;
  g.seed = seed;
  g.followup_min = 3;
  g.followup_max = 6;
  return g;
}

inline Cohort toy_cohort(int n, std::uint64_t seed) { return simulate_cohort(toy_generating(n, seed)).cohort; }

/// Random state of plausible magnitude with patient blocks sized for `c`.
inline ParameterState random_state(const CompiledCohort& c, Rng& rng) {
  ParameterState s = ParameterState::zeros(c);
  s.rho = 0.1 + 0.8 * rng.uniform();
  for (int d = 0; d < s.beta.size(); ++d) s.beta[d] = rng.normal(0.0, 0.5);
  for (int d = 0; d < s.xi.size(); ++d) s.xi[d] = 0.5 + rng.uniform();
  s.sigma2 = 0.1 + rng.uniform();
  for (int k = 0; k < 2; ++k)
    for (int d = 0; d < s.mu[k].size(); ++d) s.mu[k][d] = rng.normal(0.5 * k, 1.0);
  Eigen::MatrixXd a = Eigen::MatrixXd::Random(c.dim_z, c.dim_z);
  s.sigma_b[0] = s.sigma_b[1] = a * a.transpose() * 0.2 + Eigen::MatrixXd::Identity(c.dim_z, c.dim_z) * 0.1;
  for (auto* v : {&s.nu, &s.gamma, &s.omega})
    for (int d = 0; d < v->size(); ++d) (*v)[d] = rng.normal(0.0, 1.0);
  for (int i = 0; i < c.n; ++i) {
    for (int d = 0; d < c.dim_z; ++d) s.b_check(i, d) = rng.normal(0.0, 1.0);
    if (!c.eta_observed[static_cast<std::size_t>(i)]) s.eta[static_cast<std::size_t>(i)] = rng.bernoulli(0.5);
  }
  return s;
}

// ---- hand-coded oracles for toy_config() --------------------------------

inline double naive_normal_logpdf(double y, double mean, double var) {
  return std::log(1.0 / std::sqrt(2.0 * std::numbers::pi * var)) - (y - mean) * (y - mean) / (2.0 * var);
}

inline double naive_bernoulli(double y, double logit) {
  const double p = 1.0 / (1.0 + std::exp(-logit));
  return y > 0.5 ? std::log(p) : std::log(1.0 - p);
}

inline double naive_psa(const PatientRecord& p, const ParameterState& s, const Eigen::Vector2d& b_check) {
  double out = 0.0;
  for (const auto& o : p.psa) {
    const double mean = s.beta[0] * (o.volume - 50.0) / 20.0 + s.xi[0] * b_check[0] +
                        s.xi[1] * b_check[1] * (o.age - 67.0) / 7.0;
    out += naive_normal_logpdf(o.log_psa, mean, s.sigma2);
  }
  return out;
}

inline double naive_mvn2(const Eigen::Vector2d& x, const Eigen::Vector2d& m, const Eigen::Matrix2d& s) {
  const double det = s(0, 0) * s(1, 1) - s(0, 1) * s(1, 0);
  const double dx = x[0] - m[0];
  const double dy = x[1] - m[1];
  const double q = (s(1, 1) * dx * dx - 2.0 * s(0, 1) * dx * dy + s(0, 0) * dy * dy) / det;
  return -std::log(2.0 * std::numbers::pi) - 0.5 * std::log(det) - 0.5 * q;
}

inline int naive_last_biopsy(const PatientRecord& p) {
  for (const auto& iv : p.intervals)
    if (iv.reclassified && *iv.reclassified) return iv.index;
  return p.intervals.empty() ? 0 : p.intervals.back().index;
}

inline double naive_biopsy(const PatientRecord& p, const ParameterState& s, int eta) {
  double out = 0.0;
  const int last = naive_last_biopsy(p);
  for (const auto& iv : p.intervals) {
    if (iv.index > last) continue;
    const double l = s.nu[0] + s.nu[1] * (iv.cov.time_since_dx - 3.0) / 2.0 + eta * s.nu[2];
    out += naive_bernoulli(iv.biopsy ? 1.0 : 0.0, l);
  }
  return out;
}

inline double naive_reclass(const PatientRecord& p, const ParameterState& s, int eta) {
  double out = 0.0;
  for (const auto& iv : p.intervals) {
    if (!iv.biopsy) continue;
    const double l = s.gamma[0] + s.gamma[1] * (iv.cov.age - 67.0) / 7.0 + eta * s.gamma[2];
    for (int k = 1; k < iv.biopsy_count; ++k) out += naive_bernoulli(0.0, l);
    out += naive_bernoulli(*iv.reclassified ? 1.0 : 0.0, l);
  }
  return out;
}

inline double naive_surgery(const PatientRecord& p, const ParameterState& s, int eta) {
  double out = 0.0;
  for (const auto& iv : p.intervals) {
    const double pr = (iv.cov.prev_reclass || iv.reclassified.value_or(false)) ? 1.0 : 0.0;
    const double l = s.omega[0] + s.omega[1] * pr + eta * (s.omega[2] + s.omega[3] * pr);
    out += naive_bernoulli(iv.surgery ? 1.0 : 0.0, l);
  }
  return out;
}

/// Two-state enumeration of the latent-state full conditional.
inline double naive_eta_probability(const PatientRecord& p, const ParameterState& s, const Eigen::Vector2d& b_check,
                                    IopFlags iop) {
  double lw[2];
  for (int k = 0; k < 2; ++k) {
    lw[k] = std::log(k == 1 ? s.rho : 1.0 - s.rho);
    lw[k] += naive_mvn2(b_check, s.mu[k], s.sigma_b[k]);
    lw[k] += naive_reclass(p, s, k);
    if (iop.biopsy) lw[k] += naive_biopsy(p, s, k);
    if (iop.surgery) lw[k] += naive_surgery(p, s, k);
  }
  return std::exp(lw[1]) / (std::exp(lw[0]) + std::exp(lw[1]));
}

/// Scratch directory under the system temp dir, emptied on construction and removed on destruction.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& name) {
    path = std::filesystem::temp_directory_path() / ("asurv_test_" + name + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

}  // namespace asurv::test
