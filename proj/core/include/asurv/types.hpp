#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace asurv {

/// Bad user input: malformed files, invalid configs, failed validation.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Numerical breakdown inside a kernel (non-PD matrix, non-finite density).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One PSA draw. `log_psa` is stored on the log scale; the CSV carries ng/mL.
struct PsaObservation {
  double age = 0.0;
  double log_psa = 0.0;
  double volume = 0.0;  // patient-constant prostate volume, cm^3
};

/// Raw covariate values known at the start of an annual interval.
struct IntervalCovariates {
  double time_since_dx = 0.0;     // years
  double date = 0.0;              // fractional years since 1970-01-01
  double age = 0.0;               // years
  double num_prev_biopsies = 0.0;
  bool prev_reclass = false;      // reclassified in an earlier interval
  std::optional<double> max_prev_pos_cores;
  std::optional<double> max_prev_pct_pos;
};

struct IntervalRecord {
  int index = 1;  // 1-based year since diagnosis
  bool biopsy = false;
  int biopsy_count = 0;  // 0, 1 or 2
  std::optional<bool> reclassified;  // present iff biopsy
  bool surgery = false;
  IntervalCovariates cov;
};

struct PatientRecord {
  std::string id;
  std::vector<PsaObservation> psa;
  std::vector<IntervalRecord> intervals;
  std::optional<int> eta_observed;  // 0/1 after surgery with pathology

  /// Last interval that carries biopsy data (J_i); 0 when there are no intervals.
  [[nodiscard]] int last_biopsy_interval() const;
  [[nodiscard]] bool reclassified_ever() const;
  [[nodiscard]] bool had_surgery() const;
};

using Cohort = std::vector<PatientRecord>;

/// Which informative-observation-process components enter the likelihood.
struct IopFlags {
  bool biopsy = false;
  bool surgery = false;

  static IopFlags parse(std::string_view text);  // none | b | s | bs
  [[nodiscard]] std::string str() const;
  friend bool operator==(const IopFlags&, const IopFlags&) = default;
};

}  // namespace asurv
