#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "asurv/likelihood.hpp"
#include "asurv/model_config.hpp"

namespace asurv {

inline constexpr int kStoreFormatVersion = 1;

/// Thinned post-burn-in draws of one chain. Matrices have one row per draw.
struct ChainDraws {
  std::uint64_t seed = 0;
  int draws = 0;
  Eigen::VectorXd rho, sigma2, logpost;
  Eigen::MatrixXd beta, xi, mu0, mu1;
  Eigen::MatrixXd sigma_b;  // row-major D_Z x D_Z (twice that when class-specific)
  Eigen::MatrixXd nu, gamma, omega;
  // Per-patient blocks; empty unless patient draws are stored.
  Eigen::MatrixXi eta;
  Eigen::MatrixXd p_eta;
  Eigen::MatrixXd b_check;  // patient-major: column i*D_Z + d

  void resize(int n_draws, const CompiledCohort& c, bool class_specific, bool patient_draws);
  void record(int t, const ParameterState& s, const std::vector<double>& p_eta_row, double lp, bool patient_draws);
};

struct PosteriorStore {
  ModelConfig config;
  std::string fingerprint;
  std::string engine_version;
  int n_patients = 0;
  int dim_x = 0;
  int dim_z = 0;
  std::vector<std::string> ids;
  std::vector<std::optional<int>> eta_observed;
  std::vector<ChainDraws> chains;

  [[nodiscard]] int total_draws() const;
  [[nodiscard]] bool has_patient_draws() const;
  /// Index of a fitted patient, or -1.
  [[nodiscard]] int patient_index(const std::string& id) const;
  /// Population parameters of one draw; patient-level fields stay empty.
  [[nodiscard]] ParameterState population_draw(int chain, int t) const;
  /// Pooled population draws of all chains in chain-major order.
  [[nodiscard]] std::vector<ParameterState> population_draws() const;
  [[nodiscard]] std::vector<double> pooled_rho() const;

  void save(const std::filesystem::path& dir) const;
  [[nodiscard]] static PosteriorStore load(const std::filesystem::path& dir);
};

/// Single-chain store holding the given population parameters as its draws
/// (no fitted patients). Used for fixed-parameter prediction and test fixtures.
[[nodiscard]] PosteriorStore store_from_draws(const std::vector<ParameterState>& draws, const ModelConfig& config);

/// Labels of every scalar population parameter in the order used by the
/// store files and the diagnostics.
struct ParameterColumn {
  std::string block;
  std::string label;
  bool identified = true;  // false for the (xi, b_check, Sigma) scale split
};
[[nodiscard]] std::vector<ParameterColumn> population_columns(const PosteriorStore& store);
/// draws x columns matrix of one chain following population_columns().
[[nodiscard]] Eigen::MatrixXd population_matrix(const PosteriorStore& store, int chain);

}  // namespace asurv
