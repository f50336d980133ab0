#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "asurv/evaluation.hpp"
#include "asurv/simulator.hpp"

namespace asurv {

/// Replication study: simulate a cohort per replicate, fit every variant,
/// predict, score and summarize parameter recovery.
struct PipelineScenario {
  int n_replicates = 1;
  std::uint64_t seed = 1;
  GeneratingConfig generating = default_generating_config();
  /// Model fitted to each replicate; defaults to the generating model.
  std::optional<ModelConfig> model;
  std::vector<IopFlags> variants{IopFlags{true, true}};
  MetricOptions metrics{.n_boot = 200, .seed = 1, .target_tpr = 0.62, .calibration = true};
  bool include_baseline = true;
  bool save_stores = false;

  [[nodiscard]] ModelConfig fit_config() const { return model.value_or(generating.model); }
  /// Generating and sampler seeds of replicate r (1-based).
  [[nodiscard]] std::uint64_t replicate_seed(int r) const;

  void validate() const;
  [[nodiscard]] nlohmann::json to_json() const;
  static PipelineScenario from_json(const nlohmann::json& j);
};

struct ParameterRecovery {
  std::string variant;
  std::string block;
  std::string label;
  bool identified = true;
  double truth = 0.0;
  double median = 0.0;
  double lower = 0.0;
  double upper = 0.0;

  [[nodiscard]] bool covered() const { return lower <= truth && truth <= upper; }
};

/// Generating values keyed by "block/label" in the column naming of
/// population_columns(), for every block of a B+S model.
[[nodiscard]] std::map<std::string, double> truth_columns(const ParameterState& params, const ModelConfig& config);

[[nodiscard]] std::vector<ParameterRecovery> parameter_recovery(const VariantResult& fitted,
                                                                const std::map<std::string, double>& truth);

struct ReplicateResult {
  int replicate = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  double seconds = 0.0;
  std::vector<VariantResult> variants;
  std::vector<ParameterRecovery> parameters;

  [[nodiscard]] nlohmann::json to_json() const;
};

struct ParameterSummaryRow {
  std::string variant;
  std::string block;
  std::string label;
  bool identified = true;
  double truth = 0.0;
  int n = 0;  // replicates contributing
  double mean_median = 0.0;
  double mean_bias = 0.0;
  double coverage = 0.0;
};

struct MetricSummaryRow {
  std::string variant;
  std::string stratum;
  std::string metric;  // auc | mse | fpr_at_tpr
  int n = 0;
  double mean = 0.0;
  double sd = 0.0;
};

struct ReplicationSummary {
  int n_replicates = 0;
  int n_failed = 0;
  std::vector<ParameterSummaryRow> parameters;
  std::vector<MetricSummaryRow> metrics;

  [[nodiscard]] nlohmann::json to_json() const;
  /// Missing cells (no successful replicate) are written as NA.
  [[nodiscard]] std::string parameters_csv() const;
  [[nodiscard]] std::string metrics_csv() const;
};

/// One replicate. Failures are captured in the result, never thrown. With an
/// output directory, the cohort, truth and evaluation files are written to
/// `<out>/replicate_<r>/`.
[[nodiscard]] ReplicateResult run_replicate(const PipelineScenario& scenario, int r,
                                            const std::optional<std::filesystem::path>& out = std::nullopt);

[[nodiscard]] ReplicationSummary summarize_replicates(const std::vector<ReplicateResult>& results,
                                                      const PipelineScenario& scenario);

using ReplicateCallback = std::function<void(const ReplicateResult&)>;

/// Runs every replicate in order and writes summary.json, parameters.csv and
/// metrics.csv when `out` is given.
[[nodiscard]] ReplicationSummary run_pipeline(const PipelineScenario& scenario,
                                              const std::optional<std::filesystem::path>& out = std::nullopt,
                                              const ReplicateCallback& on_replicate = {});

}  // namespace asurv
