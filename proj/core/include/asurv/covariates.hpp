#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "asurv/spline.hpp"
#include "asurv/types.hpp"

namespace asurv {

[[nodiscard]] double standardize(double x, double mean, double sd);
[[nodiscard]] double unstandardize(double z, double mean, double sd);

/// ISO-8601 calendar date (YYYY-MM-DD) to fractional years since 1970-01-01.
[[nodiscard]] double date_to_years(std::string_view iso);
/// Inverse of date_to_years, rounded to the nearest day.
[[nodiscard]] std::string years_to_date(double years);

enum class ModelBlock { psa_fixed, psa_random, biopsy, reclass, surgery };

[[nodiscard]] std::string_view to_string(ModelBlock b);
[[nodiscard]] ModelBlock parse_model_block(std::string_view s);

struct IdentityTransform {};
struct StandardizeTransform {
  double mean = 0.0;
  double sd = 1.0;
};
struct SplineTransform {
  std::vector<double> interior_knots;
  double lower = 0.0;
  double upper = 1.0;
};

using CovariateTransform = std::variant<IdentityTransform, StandardizeTransform, SplineTransform>;

/// A single covariate entering one sub-model.
///
/// `name` selects the raw feature: `age`, `volume` (PSA blocks) or
/// `time_since_dx`, `date`, `age`, `num_prev_biopsies`, `prev_reclass`,
/// `max_prev_pos_cores`, `max_prev_pct_pos` (interval blocks).
class CovariateSpec {
 public:
  CovariateSpec(std::string name, CovariateTransform transform, ModelBlock applies_to);

  [[nodiscard]] const std::string& name() const { return name_; }
  [[nodiscard]] const CovariateTransform& transform() const { return transform_; }
  [[nodiscard]] ModelBlock applies_to() const { return applies_to_; }
  [[nodiscard]] int width() const;
  /// Column labels, e.g. `time_since_dx[ns2]`.
  [[nodiscard]] std::vector<std::string> column_labels() const;

  /// Appends the transformed columns for raw value `x`.
  void append(double x, std::vector<double>& out) const;

  [[nodiscard]] nlohmann::json to_json() const;
  static CovariateSpec from_json(const nlohmann::json& j);

 private:
  std::string name_;
  CovariateTransform transform_;
  ModelBlock applies_to_;
  std::optional<NaturalSplineBasis> spline_;
};

/// Raw feature lookup for an interval snapshot. Throws InputError when an
/// optional feature is absent.
[[nodiscard]] double interval_feature(const IntervalCovariates& cov, std::string_view name);
[[nodiscard]] double psa_feature(const PsaObservation& obs, std::string_view name);

}  // namespace asurv
