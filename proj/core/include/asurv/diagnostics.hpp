#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "asurv/posterior_store.hpp"

namespace asurv {

/// Split-chain potential scale reduction. NaN when every draw is identical.
[[nodiscard]] double potential_scale_reduction(const std::vector<Eigen::VectorXd>& chains);
/// Multi-chain effective sample size (Geyer initial monotone sequence).
[[nodiscard]] double effective_sample_size(const std::vector<Eigen::VectorXd>& chains);
/// Empirical quantile with linear interpolation (type 7).
[[nodiscard]] double quantile(std::vector<double> values, double q);

struct ParameterDiagnostics {
  std::string block;
  std::string label;
  bool identified = true;
  double mean = 0.0;
  double sd = 0.0;
  double q025 = 0.0;
  double q50 = 0.0;
  double q975 = 0.0;
  double psr = 0.0;
  double ess = 0.0;
  bool constant = false;
};

struct DiagnosticsReport {
  std::vector<ParameterDiagnostics> parameters;
  int n_chains = 0;
  int draws_per_chain = 0;
  double max_psr = 0.0;  // over identified, non-constant parameters
  double min_ess = 0.0;

  [[nodiscard]] bool converged(double threshold) const { return max_psr < threshold; }
  [[nodiscard]] nlohmann::json to_json() const;
};

[[nodiscard]] DiagnosticsReport diagnose(const PosteriorStore& store);

/// Writes diagnostics.csv, diagnostics.json, trace.csv and cumulative_quantiles.csv.
void write_diagnostics(const DiagnosticsReport& report, const PosteriorStore& store,
                       const std::filesystem::path& dir);

}  // namespace asurv
