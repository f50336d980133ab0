#pragma once

#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "asurv/model_config.hpp"
#include "asurv/types.hpp"

namespace asurv {

struct PsaDesignRow {
  Eigen::VectorXd x;  // population covariates
  Eigen::VectorXd z;  // intercept + patient-level covariates
  double log_psa = 0.0;
};

/// Main-effect rows for one interval. Latent-state slots are appended when the
/// likelihood is evaluated for a given state.
struct IntervalDesignRow {
  int interval_index = 0;
  Eigen::VectorXd u, v, w;
  std::optional<double> biopsy_outcome;    // present for j <= J_i
  std::vector<double> reclass_outcomes;    // one entry per biopsy in the interval
  std::optional<double> surgery_outcome;   // present for every interval (j <= J_Si)
};

struct PatientDesign {
  std::vector<PsaDesignRow> psa_rows;
  std::vector<IntervalDesignRow> interval_rows;
};

/// Main-effect row (intercept first) of one interval for a logistic block.
/// For the surgery block `prev_reclass` also counts this interval's result.
[[nodiscard]] Eigen::VectorXd interval_block_row(const std::vector<CovariateSpec>& specs, const IntervalRecord& iv,
                                                 bool surgery_block);
[[nodiscard]] Eigen::VectorXd psa_fixed_row(const std::vector<CovariateSpec>& specs, const PsaObservation& obs);
[[nodiscard]] Eigen::VectorXd psa_random_row(const std::vector<CovariateSpec>& specs, const PsaObservation& obs);

[[nodiscard]] PatientDesign build_design(const PatientRecord& patient, const ModelConfig& config);

/// Stacked design of one logistic sub-model for a set of patients. Rows of a
/// patient are contiguous: [row_begin[i], row_begin[i+1]).
struct LogisticData {
  Eigen::MatrixXd main;      // N x n_main
  Eigen::MatrixXd interact;  // N x n_interact
  Eigen::VectorXd y;
  std::vector<int> patient;  // owning patient of each row
  std::vector<int> row_begin;

  [[nodiscard]] int rows() const { return static_cast<int>(y.size()); }
  [[nodiscard]] int rows_of(int i) const { return row_begin[i + 1] - row_begin[i]; }
};

/// Per-patient PSA sufficient statistics.
struct PsaStats {
  int m = 0;
  double yy = 0.0;
  Eigen::VectorXd xy, zy;
  Eigen::MatrixXd xx, xz, zz;
};

/// Cohort compiled for repeated likelihood evaluation.
struct CompiledCohort {
  int n = 0;
  int dim_x = 0;
  int dim_z = 0;
  std::vector<std::string> ids;
  std::vector<std::optional<int>> eta_observed;
  std::vector<PsaStats> psa;
  // Raw PSA rows, kept for prediction and tests.
  std::vector<Eigen::MatrixXd> x_rows, z_rows;
  std::vector<Eigen::VectorXd> y_rows;
  LogisticLayout biopsy_layout, reclass_layout, surgery_layout;
  LogisticData biopsy, reclass, surgery;
  Eigen::MatrixXd xx_total;  // sum of X'X
};

[[nodiscard]] CompiledCohort compile_cohort(const Cohort& cohort, const ModelConfig& config);
[[nodiscard]] CompiledCohort compile_designs(const std::vector<PatientDesign>& designs,
                                             const std::vector<std::string>& ids,
                                             const std::vector<std::optional<int>>& eta_observed,
                                             const ModelConfig& config);

/// Appends one patient-level logistic row to a single-patient LogisticData.
void append_logistic_row(LogisticData& data, const Eigen::VectorXd& main,
                         const std::vector<int>& interaction_columns, double y);

}  // namespace asurv
