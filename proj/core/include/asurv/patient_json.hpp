#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "asurv/types.hpp"

namespace asurv {

struct FieldError {
  std::string field;  // JSON path, e.g. "psa[2].psa"
  std::string message;
};

/// Patient document shared by the service and `predict`:
///
///   { "patient_id": "P1",
///     "psa": [ {"age": 64.5, "psa": 4.2, "volume": 38} ],
///     "intervals": [ {"interval_index": 1, "date": "2011-03-02", "biopsy_performed": true,
///                     "biopsy_count": 1, "reclassified": false, "surgery": false,
///                     "num_prev_biopsies": 0, "prev_reclass": false} ],
///     "eta_observed": null }
///
/// PSA is in ng/mL. `volume` may be given once as top-level
/// `prostate_volume`. Interval `time_since_dx` defaults to the index and
/// `age` to the first PSA age plus `time_since_dx`, as in the CSV reader.
[[nodiscard]] nlohmann::json patient_to_json(const PatientRecord& p);

/// Parses a patient document. Problems are appended to `errors` with their
/// field path; the returned record is meaningful only when none were added.
[[nodiscard]] PatientRecord patient_from_json(const nlohmann::json& j, std::vector<FieldError>& errors);

/// Throws InputError listing every field error.
[[nodiscard]] PatientRecord patient_from_json(const nlohmann::json& j);

}  // namespace asurv
