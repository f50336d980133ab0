#pragma once

#include <vector>

#include <Eigen/Dense>

#include "asurv/design.hpp"
#include "asurv/model_config.hpp"

namespace asurv {

/// One draw of every model unknown.
struct ParameterState {
  double rho = 0.5;
  Eigen::VectorXd beta;
  Eigen::VectorXd xi;
  double sigma2 = 1.0;
  Eigen::VectorXd mu[2];
  Eigen::MatrixXd sigma_b[2];  // identical when the covariance is shared
  Eigen::VectorXd nu, gamma, omega;
  Eigen::MatrixXd b_check;  // n x D_Z
  std::vector<int> eta;

  /// Zero/identity state with dimensions for `cohort`.
  static ParameterState zeros(const CompiledCohort& cohort);
  [[nodiscard]] const Eigen::VectorXd& coefficients(ModelBlock b) const;
  Eigen::VectorXd& coefficients(ModelBlock b);
};

/// Cholesky factors of the class covariances, refreshed after each Sigma update.
struct MvnCache {
  Eigen::LLT<Eigen::MatrixXd> llt[2];
  double log_det[2] = {0.0, 0.0};

  explicit MvnCache(const ParameterState& s);
};

[[nodiscard]] double log1p_exp(double x);
[[nodiscard]] double bernoulli_logit_loglik(double y, double logit);
[[nodiscard]] double mvn_logpdf(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                                const Eigen::LLT<Eigen::MatrixXd>& llt, double log_det);

/// Logit of row `r` of a logistic block evaluated at latent state `eta`.
[[nodiscard]] double logistic_logit(const LogisticData& d, int r, const Eigen::VectorXd& coef, int eta);

[[nodiscard]] double psa_loglik(const CompiledCohort& c, int i, const ParameterState& s);
[[nodiscard]] double random_effect_logprior(const Eigen::VectorXd& b_check, int eta, const ParameterState& s,
                                            const MvnCache& cache);
[[nodiscard]] double logistic_block_loglik(const LogisticData& d, int i, const Eigen::VectorXd& coef, int eta);
[[nodiscard]] double biopsy_loglik(const CompiledCohort& c, int i, const ParameterState& s, int eta);
[[nodiscard]] double reclass_loglik(const CompiledCohort& c, int i, const ParameterState& s, int eta);
[[nodiscard]] double surgery_loglik(const CompiledCohort& c, int i, const ParameterState& s, int eta);

/// log of the eta-dependent factors of one patient at eta = k, including log rho / log(1 - rho).
[[nodiscard]] double eta_log_weight(const CompiledCohort& c, int i, const ParameterState& s, const MvnCache& cache,
                                    IopFlags iop, int k);
/// P(eta_i = 1 | rest); exactly rho when the state is non-identified.
[[nodiscard]] double eta_full_conditional(const CompiledCohort& c, int i, const ParameterState& s,
                                          const MvnCache& cache, IopFlags iop);

struct CoefficientPriorVectors {
  Eigen::VectorXd mean;
  Eigen::VectorXd sd;
};
[[nodiscard]] CoefficientPriorVectors coefficient_prior(const LogisticLayout& layout, const PriorConfig& priors);

struct LogPosteriorComponents {
  double eta = 0.0;
  double psa = 0.0;
  double random_effects = 0.0;
  double biopsy = 0.0;
  double reclass = 0.0;
  double surgery = 0.0;
  double prior = 0.0;

  [[nodiscard]] double total() const { return eta + psa + random_effects + biopsy + reclass + surgery + prior; }
};

[[nodiscard]] double log_prior(const ParameterState& s, const ModelConfig& config, const CompiledCohort& c);
[[nodiscard]] LogPosteriorComponents joint_logpost_components(const CompiledCohort& c, const ParameterState& s,
                                                              const ModelConfig& config, IopFlags iop);
[[nodiscard]] double joint_logpost(const CompiledCohort& c, const ParameterState& s, const ModelConfig& config,
                                   IopFlags iop);

}  // namespace asurv
