#include "asurv/covariates.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>

namespace asurv {
namespace {

constexpr double kDaysPerYear = 365.25;

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

double knot_value(const nlohmann::json& j) {
  if (j.is_string()) return date_to_years(j.get<std::string>());
  if (j.is_number()) return j.get<double>();
  throw InputError("covariate knot must be a number or ISO date string");
}

}  // namespace

double standardize(double x, double mean, double sd) {
  if (!(sd > 0.0)) throw InputError("standardize: sd must be positive");
  return (x - mean) / sd;
}

double unstandardize(double z, double mean, double sd) {
  if (!(sd > 0.0)) throw InputError("standardize: sd must be positive");
  return z * sd + mean;
}

double date_to_years(std::string_view iso) {
  int y = 0;
  unsigned m = 0, d = 0;
  char tail = 0;
  const std::string s(iso);
  if (std::sscanf(s.c_str(), "%d-%u-%u%c", &y, &m, &d, &tail) != 3)
    throw InputError("invalid ISO-8601 date '" + s + "'");
  const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m},
                                        std::chrono::day{d}};
  if (!ymd.ok()) throw InputError("invalid calendar date '" + s + "'");
  const auto days = std::chrono::sys_days{ymd}.time_since_epoch().count();
  return static_cast<double>(days) / kDaysPerYear;
}

std::string years_to_date(double years) {
  const auto days = static_cast<long>(std::lround(years * kDaysPerYear));
  const std::chrono::year_month_day ymd{std::chrono::sys_days{std::chrono::days{days}}};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

std::string_view to_string(ModelBlock b) {
  switch (b) {
    case ModelBlock::psa_fixed: return "psa_fixed";
    case ModelBlock::psa_random: return "psa_random";
    case ModelBlock::biopsy: return "biopsy";
    case ModelBlock::reclass: return "reclass";
    case ModelBlock::surgery: return "surgery";
  }
  return "?";
}

ModelBlock parse_model_block(std::string_view s) {
  if (s == "psa_fixed") return ModelBlock::psa_fixed;
  if (s == "psa_random") return ModelBlock::psa_random;
  if (s == "biopsy") return ModelBlock::biopsy;
  if (s == "reclass") return ModelBlock::reclass;
  if (s == "surgery") return ModelBlock::surgery;
  throw InputError("unknown model block '" + std::string(s) + "'");
}

CovariateSpec::CovariateSpec(std::string name, CovariateTransform transform, ModelBlock applies_to)
    : name_(std::move(name)), transform_(std::move(transform)), applies_to_(applies_to) {
  if (name_.empty()) throw InputError("covariate name must be non-empty");
  std::visit(overloaded{
                 [](const IdentityTransform&) {},
                 [&](const StandardizeTransform& t) {
                   if (!(t.sd > 0.0) || !std::isfinite(t.mean))
                     throw InputError("covariate '" + name_ + "': standardization sd must be > 0");
                 },
                 [&](const SplineTransform& t) {
                   if (t.interior_knots.size() + 1 > 4)
                     throw InputError("covariate '" + name_ + "': spline df must be in 1..4");
                   spline_.emplace(t.interior_knots, t.lower, t.upper);
                 },
             },
             transform_);
}

int CovariateSpec::width() const { return spline_ ? spline_->size() : 1; }

std::vector<std::string> CovariateSpec::column_labels() const {
  if (!spline_) return {name_};
  std::vector<std::string> out;
  for (int k = 1; k <= spline_->size(); ++k) out.push_back(name_ + "[ns" + std::to_string(k) + "]");
  return out;
}

void CovariateSpec::append(double x, std::vector<double>& out) const {
  if (!std::isfinite(x)) throw InputError("covariate '" + name_ + "' is not finite");
  std::visit(overloaded{
                 [&](const IdentityTransform&) { out.push_back(x); },
                 [&](const StandardizeTransform& t) { out.push_back(standardize(x, t.mean, t.sd)); },
                 [&](const SplineTransform&) {
                   const std::size_t at = out.size();
                   out.resize(at + static_cast<std::size_t>(spline_->size()));
                   spline_->evaluate_into(x, {out.data() + at, static_cast<std::size_t>(spline_->size())});
                 },
             },
             transform_);
}

nlohmann::json CovariateSpec::to_json() const {
  nlohmann::json j;
  j["name"] = name_;
  j["applies_to"] = std::string(to_string(applies_to_));
  std::visit(overloaded{
                 [&](const IdentityTransform&) { j["transform"] = {{"type", "identity"}}; },
                 [&](const StandardizeTransform& t) {
                   j["transform"] = {{"type", "standardize"}, {"mean", t.mean}, {"sd", t.sd}};
                 },
                 [&](const SplineTransform& t) {
                   j["transform"] = {{"type", "natural_spline"},
                                     {"df", t.interior_knots.size() + 1},
                                     {"knots", t.interior_knots},
                                     {"boundary", {t.lower, t.upper}}};
                 },
             },
             transform_);
  return j;
}

CovariateSpec CovariateSpec::from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("name") || !j.contains("transform") || !j.contains("applies_to"))
    throw InputError("covariate spec needs name, transform and applies_to");
  const auto& t = j.at("transform");
  const std::string type = t.at("type").get<std::string>();
  CovariateTransform tr;
  if (type == "identity") {
    tr = IdentityTransform{};
  } else if (type == "standardize") {
    tr = StandardizeTransform{t.at("mean").get<double>(), t.at("sd").get<double>()};
  } else if (type == "natural_spline") {
    SplineTransform s;
    for (const auto& k : t.at("knots")) s.interior_knots.push_back(knot_value(k));
    const auto& b = t.at("boundary");
    if (!b.is_array() || b.size() != 2) throw InputError("spline boundary must have two entries");
    s.lower = knot_value(b[0]);
    s.upper = knot_value(b[1]);
    if (t.contains("df") && t.at("df").get<int>() != static_cast<int>(s.interior_knots.size()) + 1)
      throw InputError("covariate '" + j.at("name").get<std::string>() +
                       "': spline df must equal number of interior knots + 1");
    tr = std::move(s);
  } else {
    throw InputError("unknown covariate transform '" + type + "'");
  }
  return {j.at("name").get<std::string>(), std::move(tr),
          parse_model_block(j.at("applies_to").get<std::string>())};
}

double interval_feature(const IntervalCovariates& cov, std::string_view name) {
  if (name == "time_since_dx") return cov.time_since_dx;
  if (name == "date") return cov.date;
  if (name == "age") return cov.age;
  if (name == "num_prev_biopsies") return cov.num_prev_biopsies;
  if (name == "prev_reclass") return cov.prev_reclass ? 1.0 : 0.0;
  if (name == "max_prev_pos_cores") {
    if (!cov.max_prev_pos_cores) throw InputError("missing required covariate max_prev_pos_cores");
    return *cov.max_prev_pos_cores;
  }
  if (name == "max_prev_pct_pos") {
    if (!cov.max_prev_pct_pos) throw InputError("missing required covariate max_prev_pct_pos");
    return *cov.max_prev_pct_pos;
  }
  throw InputError("unknown interval covariate '" + std::string(name) + "'");
}

double psa_feature(const PsaObservation& obs, std::string_view name) {
  if (name == "age") return obs.age;
  if (name == "volume") return obs.volume;
  throw InputError("unknown PSA covariate '" + std::string(name) + "'");
}

}  // namespace asurv
