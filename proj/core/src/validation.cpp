#include "asurv/validation.hpp"

#include <cmath>
#include <set>
#include <sstream>

namespace asurv {

std::string ValidationReport::summary() const {
  std::ostringstream os;
  for (const auto& v : violations) os << v.patient_id << ": " << v.field << ": " << v.message << '\n';
  return os.str();
}

ValidationReport validate_patient(const PatientRecord& p, ValidationOptions opts) {
  ValidationReport rep;
  auto bad = [&](std::string field, std::string msg) {
    rep.violations.push_back({p.id, std::move(field), std::move(msg)});
  };
  auto warn = [&](std::string field, std::string msg) {
    rep.warnings.push_back({p.id, std::move(field), std::move(msg)});
  };

  if (p.id.empty()) bad("patient_id", "patient id must be non-empty");

  if (p.psa.size() < 2) {
    if (opts.relaxed) warn("psa", "fewer than two PSA measurements");
    else bad("psa", "fewer than two PSA measurements");
  }
  for (std::size_t m = 0; m < p.psa.size(); ++m) {
    const auto& o = p.psa[m];
    if (!std::isfinite(o.log_psa)) bad("psa", "log PSA must be finite");
    if (!std::isfinite(o.age)) bad("age", "age must be finite");
    if (!(o.volume > 0.0)) bad("volume", "prostate volume must be positive");
    if (m > 0 && !(o.age > p.psa[m - 1].age)) bad("age", "PSA ages must be strictly increasing");
  }

  bool any_biopsy = false;
  bool reclassified = false;
  int surgery_at = -1;
  for (std::size_t j = 0; j < p.intervals.size(); ++j) {
    const auto& iv = p.intervals[j];
    if (iv.index != static_cast<int>(j) + 1)
      bad("interval_index", "interval indices must be consecutive starting at 1");
    if (iv.biopsy != iv.reclassified.has_value())
      bad("reclassified", "reclassification result present iff a biopsy was performed");
    if (iv.biopsy && (iv.biopsy_count < 1 || iv.biopsy_count > 2))
      bad("biopsy_count", "biopsy count must be 1 or 2 when a biopsy was performed");
    if (!iv.biopsy && iv.biopsy_count != 0)
      bad("biopsy_count", "biopsy count must be 0 without a biopsy");
    if (reclassified && (iv.biopsy || iv.reclassified))
      bad("biopsy_performed", "biopsy data after reclassification (biopsy process is censored)");
    any_biopsy = any_biopsy || iv.biopsy;
    if (iv.reclassified.value_or(false)) reclassified = true;
    if (iv.surgery) {
      if (surgery_at >= 0) bad("surgery", "surgery recorded in more than one interval");
      surgery_at = static_cast<int>(j);
    }
    if (!std::isfinite(iv.cov.time_since_dx) || !std::isfinite(iv.cov.date) || !std::isfinite(iv.cov.age))
      bad("covariates", "interval covariates must be finite");
  }
  if (surgery_at >= 0 && surgery_at + 1 != static_cast<int>(p.intervals.size()))
    bad("surgery", "surgery must terminate follow-up");
  if (!any_biopsy) {
    if (opts.relaxed) warn("intervals", "no post-diagnosis biopsy");
    else bad("intervals", "no post-diagnosis biopsy");
  }
  if (p.eta_observed) {
    if (*p.eta_observed != 0 && *p.eta_observed != 1) bad("eta_observed", "eta must be 0 or 1");
    if (surgery_at < 0) bad("eta_observed", "observed state requires surgery");
  }
  return rep;
}

ValidationReport validate_cohort(const Cohort& records, ValidationOptions opts) {
  ValidationReport rep;
  std::set<std::string> ids;
  for (const auto& p : records) {
    if (!ids.insert(p.id).second) rep.violations.push_back({p.id, "patient_id", "duplicate patient id"});
    auto one = validate_patient(p, opts);
    rep.violations.insert(rep.violations.end(), one.violations.begin(), one.violations.end());
    rep.warnings.insert(rep.warnings.end(), one.warnings.begin(), one.warnings.end());
  }
  return rep;
}

}  // namespace asurv
