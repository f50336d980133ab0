#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "asurv/covariates.hpp"
#include "asurv/types.hpp"

namespace asurv {

/// Prior override for one named coefficient of a logistic block.
struct CoefficientPrior {
  ModelBlock block = ModelBlock::surgery;
  std::string label;  // e.g. "eta", "eta:prev_reclass", "intercept"
  double mean = 0.0;
  double sd = 1.0;
};

struct PriorConfig {
  double rho_a = 1.0;
  double rho_b = 1.0;
  double beta_mean = 0.0;
  double beta_sd = 5.0;
  double mu_mean = 0.0;
  double mu_sd = 10.0;
  double xi_mean = 1.0;
  double xi_sd = 1.0;
  double nu_sd = 5.0;
  double gamma_sd = 5.0;
  double omega_sd = 5.0;
  double sigma2_shape = 0.01;
  double sigma2_rate = 0.01;
  std::optional<double> sigma_b_dof;             // default D_Z + 1
  std::optional<Eigen::MatrixXd> sigma_b_scale;  // default identity
  std::vector<CoefficientPrior> overrides;

  [[nodiscard]] double iw_dof(int dz) const { return sigma_b_dof.value_or(dz + 1.0); }
  [[nodiscard]] Eigen::MatrixXd iw_scale(int dz) const;
  void validate(int dz) const;
};

enum class LogisticKernel { polya_gamma, adaptive_metropolis };

struct SamplerConfig {
  int n_chains = 4;
  int n_iterations = 6000;
  int burn_in = 3000;
  int thin = 5;
  std::uint64_t seed = 20160101;
  LogisticKernel logistic_kernel = LogisticKernel::polya_gamma;
  std::string init_strategy = "default";  // default | prior
  bool store_patient_draws = true;
  int threads = 1;

  [[nodiscard]] int draws_per_chain() const { return (n_iterations - burn_in) / thin; }
  void validate() const;
};

/// Column layout of one logistic sub-model: main effects (intercept first),
/// then the latent-state main effect, then latent-state interactions.
struct LogisticLayout {
  ModelBlock block = ModelBlock::biopsy;
  std::vector<CovariateSpec> covariates;
  std::vector<int> interaction_columns;  // indices into the main-effect columns
  std::vector<std::string> labels;       // full coefficient labels
  int n_main = 1;

  [[nodiscard]] int n_interact() const { return static_cast<int>(interaction_columns.size()); }
  [[nodiscard]] int n_coef() const { return n_main + 1 + n_interact(); }
  [[nodiscard]] int eta_index() const { return n_main; }
  [[nodiscard]] int index_of(const std::string& label) const;  // -1 when absent
};

struct ModelConfig {
  std::vector<CovariateSpec> covariates;
  std::map<ModelBlock, std::vector<std::string>> eta_interactions;
  IopFlags iop{true, true};
  bool class_specific_covariance = false;
  PriorConfig priors;
  SamplerConfig sampler;

  /// Covariates from the cohort analysis tables (PSA, biopsy, reclassification
  /// and surgery models), including prior-biopsy extent covariates.
  static ModelConfig clinical_default();
  /// Covariate set of the simulation study; matches default_generating_config().
  static ModelConfig simulation_default();

  [[nodiscard]] std::vector<CovariateSpec> block_covariates(ModelBlock b) const;
  [[nodiscard]] LogisticLayout layout(ModelBlock b) const;
  [[nodiscard]] int dim_x() const;
  [[nodiscard]] int dim_z() const;  // intercept + psa_random columns

  void validate() const;
  [[nodiscard]] nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
  /// FNV-1a of the canonical JSON dump, hex encoded.
  [[nodiscard]] std::string fingerprint() const;
};

[[nodiscard]] nlohmann::json to_json(const PriorConfig& p);
[[nodiscard]] PriorConfig prior_config_from_json(const nlohmann::json& j);
[[nodiscard]] nlohmann::json to_json(const SamplerConfig& s);
[[nodiscard]] SamplerConfig sampler_config_from_json(const nlohmann::json& j);

[[nodiscard]] std::string fnv1a_hex(std::string_view bytes);

}  // namespace asurv
