#include "asurv/patient_json.hpp"

#include <cmath>
#include <optional>
#include <set>

#include "asurv/covariates.hpp"

namespace asurv {

namespace {

using nlohmann::json;

class Reader {
 public:
  explicit Reader(std::vector<FieldError>& errors) : errors_(errors) {}

  void fail(const std::string& field, const std::string& message) { errors_.push_back({field, message}); }

  std::optional<double> number(const json& obj, const std::string& key, const std::string& path, bool required) {
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) {
      if (required) fail(path + key, "required");
      return std::nullopt;
    }
    if (!it->is_number()) {
      fail(path + key, "must be a number");
      return std::nullopt;
    }
    const double v = it->get<double>();
    if (!std::isfinite(v)) {
      fail(path + key, "must be finite");
      return std::nullopt;
    }
    return v;
  }

  std::optional<bool> flag(const json& obj, const std::string& key, const std::string& path, bool required) {
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) {
      if (required) fail(path + key, "required");
      return std::nullopt;
    }
    if (it->is_boolean()) return it->get<bool>();
    if (it->is_number_integer() && (it->get<long>() == 0 || it->get<long>() == 1)) return it->get<long>() == 1;
    fail(path + key, "must be a boolean");
    return std::nullopt;
  }

  std::optional<int> integer(const json& obj, const std::string& key, const std::string& path, bool required) {
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) {
      if (required) fail(path + key, "required");
      return std::nullopt;
    }
    if (!it->is_number_integer()) {
      fail(path + key, "must be an integer");
      return std::nullopt;
    }
    return it->get<int>();
  }

  void unknown_keys(const json& obj, const std::set<std::string>& allowed, const std::string& path) {
    for (const auto& [k, v] : obj.items())
      if (!allowed.count(k)) fail(path + k, "unknown field");
  }

 private:
  std::vector<FieldError>& errors_;
};

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

json patient_to_json(const PatientRecord& p) {
  json psa = json::array();
  for (const auto& o : p.psa) psa.push_back({{"age", o.age}, {"psa", std::exp(o.log_psa)}, {"volume", o.volume}});
  json iv = json::array();
  for (const auto& r : p.intervals) {
    iv.push_back({{"interval_index", r.index},
                  {"date", years_to_date(r.cov.date)},
                  {"biopsy_performed", r.biopsy},
                  {"biopsy_count", r.biopsy_count},
                  {"reclassified", r.reclassified ? json(*r.reclassified) : json(nullptr)},
                  {"surgery", r.surgery},
                  {"num_prev_biopsies", r.cov.num_prev_biopsies},
                  {"prev_reclass", r.cov.prev_reclass},
                  {"max_prev_pos_cores", optional_number(r.cov.max_prev_pos_cores)},
                  {"max_prev_pct_pos", optional_number(r.cov.max_prev_pct_pos)},
                  {"time_since_dx", r.cov.time_since_dx},
                  {"age", r.cov.age}});
  }
  return {{"patient_id", p.id},
          {"psa", psa},
          {"intervals", iv},
          {"eta_observed", p.eta_observed ? json(*p.eta_observed) : json(nullptr)}};
}

PatientRecord patient_from_json(const json& j, std::vector<FieldError>& errors) {
  Reader rd(errors);
  PatientRecord p;
  if (!j.is_object()) {
    rd.fail("", "patient must be a JSON object");
    return p;
  }
  rd.unknown_keys(j, {"patient_id", "psa", "intervals", "eta_observed", "prostate_volume"}, "");

  if (auto it = j.find("patient_id"); it != j.end() && !it->is_null()) {
    if (it->is_string() && !it->get<std::string>().empty())
      p.id = it->get<std::string>();
    else
      rd.fail("patient_id", "must be a non-empty string");
  } else {
    p.id = "patient";
  }

  const auto volume = rd.number(j, "prostate_volume", "", false);
  if (volume && !(*volume > 0.0)) rd.fail("prostate_volume", "volume must be positive");

  if (auto it = j.find("psa"); it == j.end() || !it->is_array()) {
    rd.fail("psa", "must be an array");
  } else {
    for (std::size_t k = 0; k < it->size(); ++k) {
      const auto& e = (*it)[k];
      const std::string path = "psa[" + std::to_string(k) + "].";
      if (!e.is_object()) {
        rd.fail(path.substr(0, path.size() - 1), "must be an object");
        continue;
      }
      rd.unknown_keys(e, {"age", "psa", "volume"}, path);
      const auto age = rd.number(e, "age", path, true);
      const auto value = rd.number(e, "psa", path, true);
      auto vol = rd.number(e, "volume", path, !volume);
      if (!vol) vol = volume;
      if (value && !(*value > 0.0)) rd.fail(path + "psa", "psa must be positive");
      if (vol && !(*vol > 0.0)) rd.fail(path + "volume", "volume must be positive");
      if (age && value && *value > 0.0 && vol) p.psa.push_back({*age, std::log(*value), *vol});
    }
  }

  if (auto it = j.find("intervals"); it != j.end() && !it->is_null()) {
    if (!it->is_array()) {
      rd.fail("intervals", "must be an array");
    } else {
      for (std::size_t k = 0; k < it->size(); ++k) {
        const auto& e = (*it)[k];
        const std::string path = "intervals[" + std::to_string(k) + "].";
        if (!e.is_object()) {
          rd.fail(path.substr(0, path.size() - 1), "must be an object");
          continue;
        }
        rd.unknown_keys(e,
                        {"interval_index", "date", "biopsy_performed", "biopsy_count", "reclassified", "surgery",
                         "num_prev_biopsies", "prev_reclass", "max_prev_pos_cores", "max_prev_pct_pos",
                         "time_since_dx", "age"},
                        path);
        IntervalRecord rec;
        const std::size_t before = errors.size();
        if (auto v = rd.integer(e, "interval_index", path, true)) rec.index = *v;
        if (auto d = e.find("date"); d == e.end() || !d->is_string()) {
          rd.fail(path + "date", "required ISO-8601 date string");
        } else {
          try {
            rec.cov.date = date_to_years(d->get<std::string>());
          } catch (const std::exception&) {
            rd.fail(path + "date", "invalid ISO-8601 date");
          }
        }
        if (auto v = rd.flag(e, "biopsy_performed", path, true)) rec.biopsy = *v;
        if (auto v = rd.integer(e, "biopsy_count", path, false))
          rec.biopsy_count = *v;
        else
          rec.biopsy_count = rec.biopsy ? 1 : 0;
        rec.reclassified = rd.flag(e, "reclassified", path, false);
        if (auto v = rd.flag(e, "surgery", path, false)) rec.surgery = *v;
        if (auto v = rd.number(e, "num_prev_biopsies", path, true)) rec.cov.num_prev_biopsies = *v;
        if (auto v = rd.flag(e, "prev_reclass", path, false)) rec.cov.prev_reclass = *v;
        rec.cov.max_prev_pos_cores = rd.number(e, "max_prev_pos_cores", path, false);
        rec.cov.max_prev_pct_pos = rd.number(e, "max_prev_pct_pos", path, false);
        rec.cov.time_since_dx = rd.number(e, "time_since_dx", path, false).value_or(rec.index);
        if (auto v = rd.number(e, "age", path, false)) {
          rec.cov.age = *v;
        } else if (!p.psa.empty()) {
          rec.cov.age = p.psa.front().age + rec.cov.time_since_dx;
        } else {
          rd.fail(path + "age", "required when no PSA ages are given");
        }
        if (errors.size() == before) p.intervals.push_back(rec);
      }
    }
  }

  if (auto it = j.find("eta_observed"); it != j.end() && !it->is_null()) {
    if (it->is_number_integer() && (it->get<long>() == 0 || it->get<long>() == 1))
      p.eta_observed = it->get<int>();
    else if (it->is_boolean())
      p.eta_observed = it->get<bool>() ? 1 : 0;
    else
      rd.fail("eta_observed", "must be 0, 1 or null");
  }
  return p;
}

PatientRecord patient_from_json(const json& j) {
  std::vector<FieldError> errors;
  auto p = patient_from_json(j, errors);
  if (!errors.empty()) {
    std::string msg = "invalid patient:";
    for (const auto& e : errors) msg += " " + (e.field.empty() ? std::string("patient") : e.field) + ": " + e.message + ";";
    throw InputError(msg);
  }
  return p;
}

}  // namespace asurv
