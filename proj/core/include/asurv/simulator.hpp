#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "asurv/cohort_io.hpp"
#include "asurv/likelihood.hpp"
#include "asurv/model_config.hpp"
#include "asurv/random.hpp"

namespace asurv {

struct GeneratingConfig {
  int n_patients = 300;
  std::uint64_t seed = 1;
  ModelConfig model = ModelConfig::simulation_default();
  /// Population parameters; patient-level fields are ignored.
  ParameterState params;

  double age_mean = 67.1;
  double age_sd = 6.8;
  double age_lower = 46.8;
  double age_upper = 89.5;
  double volume_mean = 57.5;
  double volume_sd = 24.9;
  int psa_per_year = 2;
  int followup_min = 5;
  int followup_max = 15;
  std::string window_start = "1995-08-17";
  std::string window_end = "2015-09-30";
  double double_biopsy_prob = 0.01;
  /// Redraw patients failing the inclusion rules (two PSA values, one biopsy).
  bool enforce_inclusion = true;

  void validate() const;
  [[nodiscard]] nlohmann::json to_json() const;
  static GeneratingConfig from_json(const nlohmann::json& j);
};

/// Generating values of the simulation study (rho = 0.23 and the tabulated
/// PSA, biopsy, reclassification and surgery coefficients).
[[nodiscard]] GeneratingConfig default_generating_config();

/// Fixed per-patient frame: everything that is not an outcome.
struct PatientFrame {
  std::string id;
  double age_at_dx = 67.0;
  double dx_date = 30.0;  // fractional years since 1970
  double volume = 50.0;
  int max_intervals = 5;
};

/// Simulates PSA, biopsy, reclassification and surgery outcomes of one
/// patient given its latent state and unscaled effects.
[[nodiscard]] PatientRecord simulate_patient(const PatientFrame& frame, int eta, const Eigen::VectorXd& b_check,
                                             const ParameterState& params, const ModelConfig& model,
                                             const GeneratingConfig& gen, Rng& rng);

struct SimulatedCohort {
  Cohort cohort;
  std::vector<TruthRecord> truth;
};

[[nodiscard]] SimulatedCohort simulate_cohort(const GeneratingConfig& gen);

}  // namespace asurv
