#pragma once

#include <string>
#include <vector>

#include "asurv/types.hpp"

namespace asurv {

struct Violation {
  std::string patient_id;
  std::string field;
  std::string message;
};

struct ValidationReport {
  std::vector<Violation> violations;
  std::vector<Violation> warnings;  // relaxed-mode findings (provisional patients)

  [[nodiscard]] bool ok() const { return violations.empty(); }
  [[nodiscard]] std::string summary() const;
};

struct ValidationOptions {
  /// Service mode: fewer than two PSA values or no biopsy yet is a warning,
  /// not a violation.
  bool relaxed = false;
};

[[nodiscard]] ValidationReport validate_patient(const PatientRecord& p, ValidationOptions opts = {});
[[nodiscard]] ValidationReport validate_cohort(const Cohort& records, ValidationOptions opts = {});

}  // namespace asurv
