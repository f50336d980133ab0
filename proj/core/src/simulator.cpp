#include "asurv/simulator.hpp"

#include <cmath>
#include <map>

#include "asurv/covariates.hpp"
#include "asurv/design.hpp"
#include "asurv/validation.hpp"

namespace asurv {
namespace {

using nlohmann::json;

constexpr double kDaysPerYear = 365.25;

double day_round(double years) { return std::round(years * kDaysPerYear) / kDaysPerYear; }

double logit_of(const Eigen::VectorXd& main, const Eigen::VectorXd& coef, const LogisticLayout& layout, int eta) {
  double l = main.dot(coef.head(layout.n_main));
  if (eta != 0) {
    l += coef[layout.n_main];
    for (int k = 0; k < layout.n_interact(); ++k)
      l += main[layout.interaction_columns[static_cast<std::size_t>(k)]] * coef[layout.n_main + 1 + k];
  }
  return l;
}

double inv_logit(double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

Eigen::VectorXd by_label(const LogisticLayout& layout, const std::map<std::string, double>& values) {
  Eigen::VectorXd out(layout.n_coef());
  for (int k = 0; k < layout.n_coef(); ++k) {
    const auto it = values.find(layout.labels[static_cast<std::size_t>(k)]);
    if (it == values.end()) throw InputError("generating config: missing coefficient '" + layout.labels[static_cast<std::size_t>(k)] + "' for " + std::string(to_string(layout.block)));
    out[k] = it->second;
  }
  if (values.size() != static_cast<std::size_t>(layout.n_coef()))
    throw InputError("generating config: unknown coefficient for " + std::string(to_string(layout.block)));
  return out;
}

json labelled(const LogisticLayout& layout, const Eigen::VectorXd& v) {
  json j = json::object();
  for (int k = 0; k < layout.n_coef(); ++k) j[layout.labels[static_cast<std::size_t>(k)]] = v[k];
  return j;
}

json vec_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd vec_from(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

void GeneratingConfig::validate() const {
  if (n_patients < 1) throw InputError("generating config: n_patients must be >= 1");
  model.validate();
  const auto& p = params;
  if (!(p.rho >= 0.0 && p.rho <= 1.0)) throw InputError("generating config: rho must lie in [0, 1]");
  if (!(p.sigma2 > 0.0)) throw InputError("generating config: sigma2 must be positive");
  const int dz = model.dim_z();
  if (p.beta.size() != model.dim_x() || p.xi.size() != dz || p.mu[0].size() != dz || p.mu[1].size() != dz)
    throw InputError("generating config: PSA parameter dimensions do not match the model");
  for (int k = 0; k < 2; ++k) {
    if (p.sigma_b[k].rows() != dz || p.sigma_b[k].cols() != dz)
      throw InputError("generating config: sigma_b dimension mismatch");
    Eigen::LLT<Eigen::MatrixXd> llt(p.sigma_b[k]);
    if (llt.info() != Eigen::Success) throw InputError("generating config: sigma_b not positive definite");
  }
  if (p.nu.size() != model.layout(ModelBlock::biopsy).n_coef() ||
      p.gamma.size() != model.layout(ModelBlock::reclass).n_coef() ||
      p.omega.size() != model.layout(ModelBlock::surgery).n_coef())
    throw InputError("generating config: logistic coefficient dimensions do not match the model");
  if (!(age_sd > 0.0) || !(age_lower < age_upper)) throw InputError("generating config: invalid age distribution");
  if (!(volume_mean > 0.0) || !(volume_sd > 0.0)) throw InputError("generating config: invalid volume distribution");
  if (psa_per_year < 1) throw InputError("generating config: psa_per_year must be >= 1");
  if (followup_min < 1 || followup_max < followup_min) throw InputError("generating config: invalid follow-up range");
  if (date_to_years(window_end) - date_to_years(window_start) < 1.0)
    throw InputError("generating config: enrollment window shorter than one year");
  if (!(double_biopsy_prob >= 0.0 && double_biopsy_prob <= 1.0))
    throw InputError("generating config: double_biopsy_prob must lie in [0, 1]");
}

json GeneratingConfig::to_json() const {
  const auto& p = params;
  json sig = json::array();
  for (int r = 0; r < p.sigma_b[0].rows(); ++r) {
    json row = json::array();
    for (int c = 0; c < p.sigma_b[0].cols(); ++c) row.push_back(p.sigma_b[0](r, c));
    sig.push_back(row);
  }
  return {{"n_patients", n_patients},
          {"seed", seed},
          {"model", model.to_json()},
          {"params",
           {{"rho", p.rho},
            {"beta", vec_json(p.beta)},
            {"xi", vec_json(p.xi)},
            {"sigma2", p.sigma2},
            {"mu0", vec_json(p.mu[0])},
            {"mu1", vec_json(p.mu[1])},
            {"sigma_b", sig},
            {"nu", labelled(model.layout(ModelBlock::biopsy), p.nu)},
            {"gamma", labelled(model.layout(ModelBlock::reclass), p.gamma)},
            {"omega", labelled(model.layout(ModelBlock::surgery), p.omega)}}},
          {"population",
           {{"age_mean", age_mean},
            {"age_sd", age_sd},
            {"age_lower", age_lower},
            {"age_upper", age_upper},
            {"volume_mean", volume_mean},
            {"volume_sd", volume_sd},
            {"psa_per_year", psa_per_year},
            {"followup_min", followup_min},
            {"followup_max", followup_max},
            {"window_start", window_start},
            {"window_end", window_end},
            {"double_biopsy_prob", double_biopsy_prob},
            {"enforce_inclusion", enforce_inclusion}}}};
}

GeneratingConfig GeneratingConfig::from_json(const json& j) {
  GeneratingConfig g = default_generating_config();
  try {
    for (const auto& [k, v] : j.items())
      if (k != "n_patients" && k != "seed" && k != "model" && k != "params" && k != "population")
        throw InputError("generating config: unknown key '" + k + "'");
    if (j.contains("n_patients")) g.n_patients = j.at("n_patients").get<int>();
    if (j.contains("seed")) g.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("model")) g.model = ModelConfig::from_json(j.at("model"));
    if (j.contains("params")) {
      const auto& p = j.at("params");
      auto& s = g.params;
      if (p.contains("rho")) s.rho = p.at("rho").get<double>();
      if (p.contains("beta")) s.beta = vec_from(p.at("beta"));
      if (p.contains("xi")) s.xi = vec_from(p.at("xi"));
      if (p.contains("sigma2")) s.sigma2 = p.at("sigma2").get<double>();
      if (p.contains("mu0")) s.mu[0] = vec_from(p.at("mu0"));
      if (p.contains("mu1")) s.mu[1] = vec_from(p.at("mu1"));
      if (p.contains("sigma_b")) {
        const auto& m = p.at("sigma_b");
        const auto n = static_cast<Eigen::Index>(m.size());
        Eigen::MatrixXd sig(n, n);
        for (Eigen::Index r = 0; r < n; ++r) {
          if (static_cast<Eigen::Index>(m.at(static_cast<std::size_t>(r)).size()) != n)
            throw InputError("generating config: sigma_b must be square");
          for (Eigen::Index c = 0; c < n; ++c) sig(r, c) = m.at(static_cast<std::size_t>(r)).at(static_cast<std::size_t>(c)).get<double>();
        }
        s.sigma_b[0] = s.sigma_b[1] = sig;
      }
      auto block = [&](const char* key, ModelBlock b, Eigen::VectorXd& dst) {
        if (p.contains(key)) dst = by_label(g.model.layout(b), p.at(key).get<std::map<std::string, double>>());
      };
      block("nu", ModelBlock::biopsy, s.nu);
      block("gamma", ModelBlock::reclass, s.gamma);
      block("omega", ModelBlock::surgery, s.omega);
    }
    if (j.contains("population")) {
      const auto& q = j.at("population");
      for (const auto& [k, v] : q.items()) {
        if (k == "age_mean") g.age_mean = v.get<double>();
        else if (k == "age_sd") g.age_sd = v.get<double>();
        else if (k == "age_lower") g.age_lower = v.get<double>();
        else if (k == "age_upper") g.age_upper = v.get<double>();
        else if (k == "volume_mean") g.volume_mean = v.get<double>();
        else if (k == "volume_sd") g.volume_sd = v.get<double>();
        else if (k == "psa_per_year") g.psa_per_year = v.get<int>();
        else if (k == "followup_min") g.followup_min = v.get<int>();
        else if (k == "followup_max") g.followup_max = v.get<int>();
        else if (k == "window_start") g.window_start = v.get<std::string>();
        else if (k == "window_end") g.window_end = v.get<std::string>();
        else if (k == "double_biopsy_prob") g.double_biopsy_prob = v.get<double>();
        else if (k == "enforce_inclusion") g.enforce_inclusion = v.get<bool>();
        else throw InputError("generating config: unknown population key '" + k + "'");
      }
    }
  } catch (const json::exception& e) {
    throw InputError(std::string("generating config: ") + e.what());
  }
  g.validate();
  return g;
}

GeneratingConfig default_generating_config() {
  GeneratingConfig g;
  auto& p = g.params;
  p.rho = 0.23;
  p.beta = Eigen::VectorXd::Constant(1, 0.31);
  p.xi = Eigen::VectorXd::Ones(2);
  p.sigma2 = 0.30;
  p.mu[0] = Eigen::Vector2d(1.4, 0.26);
  p.mu[1] = Eigen::Vector2d(1.6, 0.50);
  Eigen::Matrix2d sig;
  sig << 0.54 * 0.54, 0.041, 0.041, 0.40 * 0.40;
  p.sigma_b[0] = p.sigma_b[1] = sig;

  p.nu = by_label(g.model.layout(ModelBlock::biopsy),
                  {{"intercept", -2.4},
                   {"time_since_dx[ns1]", 0.88}, {"time_since_dx[ns2]", -0.39},
                   {"time_since_dx[ns3]", -1.4}, {"time_since_dx[ns4]", -7.4},
                   {"date[ns1]", 0.74}, {"date[ns2]", 1.2}, {"date[ns3]", 2.1}, {"date[ns4]", -2.5},
                   {"age[ns1]", 1.1}, {"age[ns2]", -3.9},
                   {"num_prev_biopsies[ns1]", 0.58}, {"num_prev_biopsies[ns2]", 3.9},
                   {"eta", -0.52}});
  p.gamma = by_label(g.model.layout(ModelBlock::reclass),
                     {{"intercept", -2.9},
                      {"time_since_dx[ns1]", -1.3}, {"time_since_dx[ns2]", 1.4},
                      {"date[ns1]", -0.07}, {"date[ns2]", 1.0},
                      {"age", 0.55},
                      {"eta", 1.6}});
  p.omega = by_label(g.model.layout(ModelBlock::surgery),
                     {{"intercept", -5.0},
                      {"time_since_dx[ns1]", 1.8}, {"time_since_dx[ns2]", 1.2},
                      {"time_since_dx[ns3]", 6.7}, {"time_since_dx[ns4]", 2.8},
                      {"date[ns1]", 0.67}, {"date[ns2]", -2.1}, {"date[ns3]", -0.93},
                      {"age[ns1]", -5.0}, {"age[ns2]", -11.0},
                      {"num_prev_biopsies", -0.40},
                      {"prev_reclass", 1.2},
                      {"eta", 0.59},
                      {"eta:prev_reclass", 2.3}});
  return g;
}

PatientRecord simulate_patient(const PatientFrame& frame, int eta, const Eigen::VectorXd& b_check,
                               const ParameterState& params, const ModelConfig& model, const GeneratingConfig& gen,
                               Rng& rng) {
  const auto ub = model.block_covariates(ModelBlock::biopsy);
  const auto vb = model.block_covariates(ModelBlock::reclass);
  const auto wb = model.block_covariates(ModelBlock::surgery);
  const auto ul = model.layout(ModelBlock::biopsy);
  const auto vl = model.layout(ModelBlock::reclass);
  const auto wl = model.layout(ModelBlock::surgery);

  PatientRecord rec;
  rec.id = frame.id;
  int biopsies = 0;
  bool reclassified = false;
  int last = 0;
  for (int j = 1; j <= frame.max_intervals; ++j) {
    IntervalRecord iv;
    iv.index = j;
    iv.cov.time_since_dx = j;
    iv.cov.date = day_round(frame.dx_date + j);
    iv.cov.age = frame.age_at_dx + j;
    iv.cov.num_prev_biopsies = 1.0 + biopsies;
    iv.cov.prev_reclass = reclassified;
    if (!reclassified) {
      const double pb = inv_logit(logit_of(interval_block_row(ub, iv, false), params.nu, ul, eta));
      if (rng.uniform() < pb) {
        iv.biopsy = true;
        iv.biopsy_count = 1;
        const double pr = inv_logit(logit_of(interval_block_row(vb, iv, false), params.gamma, vl, eta));
        bool r = rng.uniform() < pr;
        if (!r && rng.uniform() < gen.double_biopsy_prob) {
          // Second biopsy after a negative first one in the same interval.
          iv.biopsy_count = 2;
          r = rng.uniform() < pr;
        }
        iv.reclassified = r;
      }
    }
    const double ps = inv_logit(logit_of(interval_block_row(wb, iv, true), params.omega, wl, eta));
    iv.surgery = rng.uniform() < ps;
    biopsies += iv.biopsy_count;
    reclassified = reclassified || iv.reclassified.value_or(false);
    rec.intervals.push_back(iv);
    last = j;
    if (iv.surgery) {
      rec.eta_observed = eta;
      break;
    }
  }

  const auto xs = model.block_covariates(ModelBlock::psa_fixed);
  const auto zs = model.block_covariates(ModelBlock::psa_random);
  const Eigen::VectorXd b = params.xi.cwiseProduct(b_check);
  const double sd = std::sqrt(params.sigma2);
  const int n_psa = last * gen.psa_per_year;
  for (int m = 0; m < n_psa; ++m) {
    PsaObservation obs;
    obs.age = frame.age_at_dx + static_cast<double>(m) / gen.psa_per_year;
    obs.volume = frame.volume;
    const double mean = psa_fixed_row(xs, obs).dot(params.beta) + psa_random_row(zs, obs).dot(b);
    // Stored through the ng/mL scale so a CSV round trip reproduces it exactly.
    obs.log_psa = std::log(std::exp(mean + sd * rng.normal()));
    rec.psa.push_back(obs);
  }
  return rec;
}

SimulatedCohort simulate_cohort(const GeneratingConfig& gen) {
  gen.validate();
  const double start = date_to_years(gen.window_start);
  const double end = date_to_years(gen.window_end);
  // Lognormal volume matched to the stated mean and sd.
  const double v2 = std::log1p((gen.volume_sd * gen.volume_sd) / (gen.volume_mean * gen.volume_mean));
  const double vmu = std::log(gen.volume_mean) - 0.5 * v2;
  const double vsd = std::sqrt(v2);

  SimulatedCohort out;
  const auto& p = gen.params;
  for (int i = 0; i < gen.n_patients; ++i) {
    Rng rng(mix_seed(gen.seed, static_cast<std::uint64_t>(i)));
    char id[32];
    std::snprintf(id, sizeof id, "P%05d", i + 1);
    for (int attempt = 0;; ++attempt) {
      if (attempt > 10000) throw InputError("simulator: cannot draw a patient satisfying the inclusion rules");
      PatientFrame f;
      f.id = id;
      do {
        f.age_at_dx = rng.normal(gen.age_mean, gen.age_sd);
      } while (f.age_at_dx < gen.age_lower || f.age_at_dx > gen.age_upper);
      f.dx_date = day_round(start + rng.uniform() * (end - 1.0 - start));
      f.volume = std::exp(vmu + vsd * rng.normal());
      const int span = gen.followup_max - gen.followup_min + 1;
      const int planned = gen.followup_min + static_cast<int>(rng.index(static_cast<std::size_t>(span)));
      f.max_intervals = std::max(1, std::min(planned, static_cast<int>(std::floor(end - f.dx_date))));

      const int eta = rng.uniform() < p.rho ? 1 : 0;
      const Eigen::VectorXd b_check = draw_mvn(p.mu[eta], p.sigma_b[eta], rng);
      auto rec = simulate_patient(f, eta, b_check, p, gen.model, gen, rng);
      if (gen.enforce_inclusion && !validate_patient(rec).ok()) continue;
      out.cohort.push_back(std::move(rec));
      out.truth.push_back({id, eta, b_check});
      break;
    }
  }
  return out;
}

}  // namespace asurv
