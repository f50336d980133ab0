#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "asurv/cohort_io.hpp"
#include "asurv/diagnostics.hpp"
#include "asurv/model_config.hpp"
#include "asurv/prediction.hpp"

namespace asurv {

/// Mann-Whitney AUC: P(score+ > score-) + P(tie) / 2.
[[nodiscard]] double auc(const std::vector<double>& scores, const std::vector<int>& labels);

struct RocPoint {
  double threshold = 0.0;  // predict positive when score >= threshold
  double fpr = 0.0;
  double tpr = 0.0;
};

/// ROC points at every distinct score (descending), starting at (0, 0).
[[nodiscard]] std::vector<RocPoint> roc_curve(const std::vector<double>& scores, const std::vector<int>& labels);
/// Trapezoid area under roc_curve(); equals auc() exactly up to rounding.
[[nodiscard]] double roc_area(const std::vector<RocPoint>& curve);

/// FPR at the largest threshold whose TPR reaches `target_tpr`.
[[nodiscard]] double fpr_at_tpr(const std::vector<double>& scores, const std::vector<int>& labels, double target_tpr);

[[nodiscard]] double mse(const std::vector<double>& predictions, const std::vector<int>& labels);

struct LogisticFit {
  Eigen::VectorXd coef;
  Eigen::MatrixXd cov;  // inverse observed information
  int iterations = 0;
  double gradient_norm = 0.0;
  bool converged = false;
};

/// Maximum-likelihood logistic regression by Newton iterations with step
/// halving, stopping when the score norm per observation drops below `tol`.
[[nodiscard]] LogisticFit fit_logistic(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double tol = 1e-10,
                                       int max_iter = 100);

struct CalibrationCurve {
  bool converged = false;
  std::string message;
  std::vector<double> knots;  // interior, lower, upper
  Eigen::VectorXd coef;
  std::vector<double> grid;
  std::vector<double> fitted;
  std::vector<double> lower;
  std::vector<double> upper;

  [[nodiscard]] nlohmann::json to_json() const;
};

/// Logistic recalibration of outcomes on a df = 2 natural spline of the
/// predictions (interior knot at the median, boundary knots at the range),
/// evaluated on an even grid over [0, 1] with pointwise 95% bands.
[[nodiscard]] CalibrationCurve calibration_curve(const std::vector<double>& predictions,
                                                 const std::vector<int>& outcomes, int grid_points = 101);

struct BootstrapInterval {
  double lower = 0.0;
  double upper = 0.0;
  int n_boot = 0;
  int redraws = 0;
};

/// Statistic of a resample given the drawn unit indices; NaN when undefined.
using ResampleStatistic = std::function<double(const std::vector<std::size_t>&)>;

/// Quantile 2.5/97.5% interval over resamples of `n_units` units (patients).
/// Resamples with an undefined statistic are redrawn, at most 10 * n_boot times.
[[nodiscard]] BootstrapInterval bootstrap_interval(const ResampleStatistic& statistic, std::size_t n_units,
                                                   int n_boot, std::uint64_t seed);

enum class Stratum { eta_observed, eta_unobserved, all };
[[nodiscard]] std::string to_string(Stratum s);

struct MetricValue {
  std::optional<double> estimate;
  std::optional<double> lower;
  std::optional<double> upper;

  [[nodiscard]] nlohmann::json to_json() const;
};

struct MetricReport {
  Stratum stratum = Stratum::all;
  int n = 0;
  int n_positive = 0;
  MetricValue auc;
  MetricValue mse;
  MetricValue fpr_at_tpr;
  double target_tpr = 0.62;
  std::optional<CalibrationCurve> calibration;
  std::vector<RocPoint> roc;
  std::vector<std::string> notes;

  [[nodiscard]] nlohmann::json to_json() const;
};

struct MetricOptions {
  int n_boot = 1000;
  std::uint64_t seed = 1;
  double target_tpr = 0.62;
  bool calibration = true;
};

[[nodiscard]] MetricReport compute_metrics(const std::vector<double>& predictions, const std::vector<int>& labels,
                                           Stratum stratum, const MetricOptions& opts = {});

/// Per-patient summaries used by the logistic comparator.
struct BaselineFeatures {
  static const std::vector<std::string>& names();
  [[nodiscard]] static Eigen::VectorXd of(const PatientRecord& p);  // without intercept
};

struct BaselineModel {
  LogisticFit fit;
  [[nodiscard]] double predict(const PatientRecord& p) const;
};

/// Logistic regression of the observed state on BaselineFeatures, fitted on
/// the patients with an observed state.
[[nodiscard]] BaselineModel fit_baseline(const Cohort& cohort);

struct PatientPrediction {
  std::string patient_id;
  bool eta_observed = false;
  int truth = 0;
  PredictionReport report;
};

/// Predicts every patient of a fitted cohort: augmented draws for latent
/// states, held-out importance for observed states.
[[nodiscard]] std::vector<PatientPrediction> predict_cohort(const Cohort& cohort, const PosteriorStore& store,
                                                            const std::vector<TruthRecord>& truth);

/// Metrics in the three strata for predictions against truth.
[[nodiscard]] std::vector<MetricReport> stratified_metrics(const std::vector<PatientPrediction>& preds,
                                                           const MetricOptions& opts = {});

struct PosteriorSummary {
  double median = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};
[[nodiscard]] PosteriorSummary summarize_rho(const PosteriorStore& store);

struct VariantResult {
  std::string name;  // IOP variant or "logistic"
  std::optional<PosteriorSummary> rho;
  double max_psr = 0.0;
  std::vector<ParameterDiagnostics> parameters;  // empty for the comparator
  std::vector<PatientPrediction> predictions;
  std::vector<MetricReport> metrics;

  [[nodiscard]] nlohmann::json to_json() const;
};

struct ComparisonOptions {
  MetricOptions metrics;
  bool include_baseline = true;
  /// Called with each fitted store before it is discarded.
  std::function<void(const std::string& variant, const PosteriorStore& store)> on_store;
};

/// Fits each variant, predicts every patient and scores the predictions per
/// stratum; adds the logistic comparator.
[[nodiscard]] std::vector<VariantResult> compare_variants(const Cohort& cohort, const std::vector<TruthRecord>& truth,
                                                          const std::vector<IopFlags>& variants,
                                                          const ModelConfig& config,
                                                          const ComparisonOptions& opts = {});

/// Writes metrics.json, roc.csv, calibration.csv and predictions.csv.
void write_evaluation(const std::vector<VariantResult>& results, const std::filesystem::path& dir);

}  // namespace asurv
