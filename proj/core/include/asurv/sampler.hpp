#pragma once

#include <functional>
#include <vector>

#include "asurv/likelihood.hpp"
#include "asurv/posterior_store.hpp"
#include "asurv/random.hpp"

namespace asurv {

/// Robbins-Monro scaled random-walk state for one logistic block.
struct MetropolisState {
  double log_scale = 0.0;
  long proposals = 0;
  long accepted = 0;
  bool initialized = false;

  [[nodiscard]] double acceptance_rate() const { return proposals ? double(accepted) / double(proposals) : 0.0; }
};

inline constexpr double kMetropolisTargetAcceptance = 0.234;

// Individual full-conditional kernels. Each updates `s` in place.

/// Draws eta for every patient without an observed state; returns the full
/// conditional probabilities used (observed patients get their masked value).
std::vector<double> sample_eta(const CompiledCohort& c, ParameterState& s, const MvnCache& cache, IopFlags iop,
                               Rng& rng);
[[nodiscard]] Eigen::VectorXd sample_b_check(const CompiledCohort& c, int i, const ParameterState& s,
                                             const MvnCache& cache, Rng& rng);
void sample_class_means_and_cov(const CompiledCohort& c, ParameterState& s, const PriorConfig& priors,
                                bool class_specific, Rng& rng);
void sample_xi(const CompiledCohort& c, ParameterState& s, const PriorConfig& priors, Rng& rng);
void sample_beta(const CompiledCohort& c, ParameterState& s, const PriorConfig& priors, Rng& rng);
void sample_sigma2(const CompiledCohort& c, ParameterState& s, const PriorConfig& priors, Rng& rng);
void sample_scales_beta_sigma2(const CompiledCohort& c, ParameterState& s, const PriorConfig& priors, Rng& rng);
[[nodiscard]] double sample_rho(const std::vector<int>& eta, const PriorConfig& priors, Rng& rng);

/// Residual sum of squares of every PSA observation at the current state.
[[nodiscard]] double psa_residual_ss(const CompiledCohort& c, const ParameterState& s);

/// One update of a logistic coefficient block given the latent states of the
/// owning patients. `adapt` enables proposal-scale adaptation (burn-in only).
[[nodiscard]] Eigen::VectorXd sample_logistic_block(const LogisticData& data, const std::vector<int>& eta,
                                                    const Eigen::VectorXd& coef,
                                                    const CoefficientPriorVectors& prior, LogisticKernel kernel,
                                                    Rng& rng, MetropolisState* mh = nullptr, bool adapt = false);

/// Full sweep over the blocks in order eta, b_check, (mu, Sigma), (xi, beta,
/// sigma2), rho, nu, gamma, omega.
class GibbsSampler {
 public:
  GibbsSampler(const CompiledCohort& cohort, const ModelConfig& config);

  [[nodiscard]] ParameterState initialize(Rng& rng) const;
  /// Returns the eta full conditionals computed in this sweep.
  std::vector<double> sweep(ParameterState& s, Rng& rng, bool adapt, long iteration = 0);

  [[nodiscard]] const MetropolisState& metropolis(ModelBlock b) const;

 private:
  const CompiledCohort& c_;
  const ModelConfig& config_;
  CoefficientPriorVectors prior_nu_, prior_gamma_, prior_omega_;
  MetropolisState mh_[3];
};

using ProgressCallback = std::function<void(int chain, int iteration)>;

[[nodiscard]] ChainDraws run_chain(const CompiledCohort& cohort, const ModelConfig& config, std::uint64_t chain_seed,
                                   const ProgressCallback& progress = {}, int chain_index = 0);

/// Per-chain seed derived from the sampler seed.
[[nodiscard]] std::uint64_t chain_seed(std::uint64_t seed, int chain);

/// Runs every chain (up to `config.sampler.threads` at once) and assembles a store.
[[nodiscard]] PosteriorStore fit(const Cohort& cohort, const ModelConfig& config,
                                 const ProgressCallback& progress = {});
[[nodiscard]] PosteriorStore fit_compiled(const CompiledCohort& cohort, const ModelConfig& config,
                                          const ProgressCallback& progress = {});

[[nodiscard]] std::string engine_version();

}  // namespace asurv
