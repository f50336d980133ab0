#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "asurv/posterior_store.hpp"
#include "asurv/types.hpp"

namespace asurv {

enum class PredictionMethod { augmented, importance, loo_refit };

[[nodiscard]] std::string to_string(PredictionMethod m);

/// Importance ESS below this fraction of the draw count is flagged.
inline constexpr double kImportanceEssFloor = 0.05;

/// Quantile levels of trajectory bands: 2.5, 7.5, ..., 97.5 plus the median.
[[nodiscard]] std::vector<double> trajectory_levels();

struct TrajectoryBand {
  std::vector<double> ages;
  std::vector<double> levels;
  Eigen::MatrixXd log_psa;  // ages x levels
  Eigen::MatrixXd reclass;  // ages x levels; empty when omitted
  std::string reclass_note;  // reason the reclassification band is omitted

  [[nodiscard]] bool has_reclass() const { return reclass.size() > 0; }
  [[nodiscard]] nlohmann::json to_json() const;
  [[nodiscard]] std::string to_csv() const;
};

struct PredictionReport {
  std::string patient_id;
  PredictionMethod method = PredictionMethod::augmented;
  double mean = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  int n_draws = 0;
  std::optional<double> ess;  // importance only
  bool ess_flagged = false;
  std::optional<TrajectoryBand> trajectory;
  std::vector<std::string> warnings;

  [[nodiscard]] nlohmann::json to_json() const;
};

/// Weighted quantile (lower inverse of the weighted empirical CDF).
[[nodiscard]] double weighted_quantile(const std::vector<double>& values, const std::vector<double>& weights, double q);

/// Hypothetical events appended after the last observed interval.
struct WhatIfScenario {
  std::vector<PsaObservation> psa;     // future PSA values (log scale)
  std::optional<bool> biopsy_result;   // biopsy next interval with this reclassification result
  bool skip_biopsy = false;            // no biopsy next interval
  std::optional<bool> surgery;         // surgery decision next interval

  [[nodiscard]] bool empty() const { return psa.empty() && !biopsy_result && !skip_biopsy && !surgery; }
  [[nodiscard]] nlohmann::json to_json() const;
  static WhatIfScenario from_json(const nlohmann::json& j);
};

struct WhatIfResult {
  PredictionReport base;
  PredictionReport scenario;
  double delta = 0.0;

  [[nodiscard]] nlohmann::json to_json() const;
};

struct ImportanceOptions {
  /// Defaults to the IOP flags the store was fitted with.
  std::optional<IopFlags> iop;
  /// Treat a patient whose id matches a fitted patient with an observed state
  /// as held out (weights remove its own state contribution).
  bool match_store_patient = true;
};

/// Per-draw quantities of the importance path.
struct ImportanceTerms {
  std::vector<double> log_weight;
  std::vector<double> p_eta;
  /// Collapsed PSA marginal log-likelihood by class (diagnostics and tests).
  std::vector<double> log_lik[2];
  /// E[b_check | PSA, eta = k, theta_t].
  std::vector<Eigen::VectorXd> cond_mean[2];
};

/// Prediction over an immutable store. Population draws and their
/// factorizations are computed once.
class Predictor {
 public:
  explicit Predictor(const PosteriorStore& store);

  [[nodiscard]] const PosteriorStore& store() const { return store_; }
  [[nodiscard]] int n_draws() const { return static_cast<int>(draws_.size()); }

  [[nodiscard]] PredictionReport augmented(const std::string& patient_id) const;
  [[nodiscard]] PredictionReport importance(const PatientRecord& patient, const ImportanceOptions& opts = {}) const;
  [[nodiscard]] ImportanceTerms importance_terms(const PatientRecord& patient,
                                                 const ImportanceOptions& opts = {}) const;

  /// Bands for expected log-PSA and next-biopsy reclassification risk. Uses
  /// the stored draws of a fitted patient with a latent state, the importance
  /// path otherwise. An empty grid selects the last PSA age + 0..5 years.
  [[nodiscard]] TrajectoryBand trajectory(const PatientRecord& patient, std::vector<double> ages = {},
                                          const ImportanceOptions& opts = {}) const;

  /// Base and scenario importance predictions; the scenario report carries
  /// the trajectory after the hypothetical events.
  [[nodiscard]] WhatIfResult whatif(const PatientRecord& patient, const WhatIfScenario& scenario,
                                    std::vector<double> ages = {}, const ImportanceOptions& opts = {}) const;

  /// Augmented path for fitted patients without an observed state, importance
  /// path (held out) for everyone else.
  [[nodiscard]] PredictionReport predict(const PatientRecord& patient) const;

 private:
  struct Context;
  [[nodiscard]] Context context(const PatientRecord& patient, const ImportanceOptions& opts) const;
  [[nodiscard]] ImportanceTerms terms(const Context& ctx) const;
  [[nodiscard]] PredictionReport report(const std::string& id, const ImportanceTerms& t) const;
  [[nodiscard]] TrajectoryBand band(const Context& ctx, const ImportanceTerms* t, std::vector<double> ages) const;

  const PosteriorStore& store_;
  std::vector<ParameterState> draws_;
  std::vector<Eigen::LLT<Eigen::MatrixXd>> llt_[2];
  std::vector<Eigen::MatrixXd> sigma_inv_[2];
  std::vector<double> log_det_[2];
};

[[nodiscard]] PredictionReport predict_eta_augmented(const std::string& patient_id, const PosteriorStore& store);
[[nodiscard]] PredictionReport predict_eta_importance(const PatientRecord& patient, const PosteriorStore& store,
                                                      const ImportanceOptions& opts = {});
/// Refits with the patient's observed state masked, then reads the augmented draws.
[[nodiscard]] PredictionReport predict_eta_loo_refit(const std::string& patient_id, const Cohort& cohort,
                                                     const ModelConfig& config);
[[nodiscard]] TrajectoryBand project_trajectory(const PatientRecord& patient, const PosteriorStore& store,
                                                const std::vector<double>& ages = {});

}  // namespace asurv
