#include "asurv/prediction.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "asurv/cohort_io.hpp"
#include "asurv/diagnostics.hpp"
#include "asurv/sampler.hpp"

namespace asurv {
namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

double logistic(double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

double log_sum_exp(double a, double b) {
  const double m = std::max(a, b);
  if (m == -std::numeric_limits<double>::infinity()) return m;
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

// Covariates of an interval starting `dt` years after `anchor`, assuming an
// annual biopsy in every whole year in between.
IntervalCovariates advance(const IntervalCovariates& anchor, double dt) {
  IntervalCovariates c = anchor;
  c.time_since_dx += dt;
  c.date += dt;
  c.age += dt;
  c.num_prev_biopsies += std::max(0.0, std::floor(dt + 1e-9));
  return c;
}

nlohmann::json matrix_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

std::string to_string(PredictionMethod m) {
  switch (m) {
    case PredictionMethod::augmented: return "augmented";
    case PredictionMethod::importance: return "importance";
    case PredictionMethod::loo_refit: return "loo_refit";
  }
  return "augmented";
}

std::vector<double> trajectory_levels() {
  std::vector<double> out;
  for (int k = 0; k < 20; ++k) {
    out.push_back(0.025 + 0.05 * k);
    if (k == 9) out.push_back(0.5);
  }
  return out;
}

double weighted_quantile(const std::vector<double>& values, const std::vector<double>& weights, double q) {
  if (values.empty() || values.size() != weights.size()) throw InputError("weighted quantile: bad input");
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return values[a] < values[b]; });
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (!(total > 0.0)) throw InputError("weighted quantile: weights sum to zero");
  const double target = q * total;
  double cum = 0.0;
  for (auto idx : order) {
    cum += weights[idx];
    if (cum >= target * (1.0 - 1e-12)) return values[idx];
  }
  return values[order.back()];
}

nlohmann::json TrajectoryBand::to_json() const {
  nlohmann::json j{{"ages", ages}, {"levels", levels}, {"log_psa", matrix_json(log_psa)}};
  j["reclass"] = has_reclass() ? matrix_json(reclass) : nlohmann::json(nullptr);
  if (!reclass_note.empty()) j["reclass_note"] = reclass_note;
  return j;
}

std::string TrajectoryBand::to_csv() const {
  std::ostringstream out;
  out << "quantity,age";
  for (double l : levels) out << ",q" << format_double(l);
  out << '\n';
  auto emit = [&](const char* name, const Eigen::MatrixXd& m) {
    for (Eigen::Index a = 0; a < m.rows(); ++a) {
      out << name << ',' << format_double(ages[static_cast<std::size_t>(a)]);
      for (Eigen::Index k = 0; k < m.cols(); ++k) out << ',' << format_double(m(a, k));
      out << '\n';
    }
  };
  emit("log_psa", log_psa);
  if (has_reclass()) emit("reclass", reclass);
  return out.str();
}

nlohmann::json PredictionReport::to_json() const {
  nlohmann::json j{{"patient_id", patient_id},
                   {"method", to_string(method)},
                   {"posterior_p_eta", {{"mean", mean}, {"lower", lower}, {"upper", upper}}},
                   {"n_draws", n_draws},
                   {"warnings", warnings}};
  j["effective_sample_size"] = ess ? nlohmann::json(*ess) : nlohmann::json(nullptr);
  j["ess_flagged"] = ess_flagged;
  if (trajectory) j["trajectory"] = trajectory->to_json();
  return j;
}

nlohmann::json WhatIfScenario::to_json() const {
  nlohmann::json p = nlohmann::json::array();
  for (const auto& o : psa) p.push_back({{"age", o.age}, {"psa", std::exp(o.log_psa)}});
  nlohmann::json j{{"psa", p}, {"skip_biopsy", skip_biopsy}};
  j["biopsy_result"] = biopsy_result ? nlohmann::json(*biopsy_result) : nlohmann::json(nullptr);
  j["surgery"] = surgery ? nlohmann::json(*surgery) : nlohmann::json(nullptr);
  return j;
}

WhatIfScenario WhatIfScenario::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw InputError("scenario must be a JSON object");
  WhatIfScenario s;
  for (const auto& [key, v] : j.items()) {
    if (key == "psa") {
      if (!v.is_array()) throw InputError("scenario.psa must be an array");
      for (const auto& o : v) {
        if (!o.is_object() || !o.contains("age") || !o.contains("psa") || !o["age"].is_number() ||
            !o["psa"].is_number())
          throw InputError("scenario.psa entries need numeric age and psa");
        const double value = o["psa"].get<double>();
        if (!(value > 0.0)) throw InputError("scenario.psa: psa must be positive");
        PsaObservation obs;
        obs.age = o["age"].get<double>();
        obs.log_psa = std::log(value);
        s.psa.push_back(obs);
      }
    } else if (key == "biopsy_result") {
      if (!v.is_null()) {
        if (!v.is_boolean()) throw InputError("scenario.biopsy_result must be boolean or null");
        s.biopsy_result = v.get<bool>();
      }
    } else if (key == "skip_biopsy") {
      if (!v.is_boolean()) throw InputError("scenario.skip_biopsy must be boolean");
      s.skip_biopsy = v.get<bool>();
    } else if (key == "surgery") {
      if (!v.is_null()) {
        if (!v.is_boolean()) throw InputError("scenario.surgery must be boolean or null");
        s.surgery = v.get<bool>();
      }
    } else {
      throw InputError("unknown scenario field '" + key + "'");
    }
  }
  if (s.biopsy_result && s.skip_biopsy) throw InputError("scenario cannot both skip and perform the next biopsy");
  return s;
}

nlohmann::json WhatIfResult::to_json() const {
  return {{"base", base.to_json()}, {"scenario", scenario.to_json()}, {"delta", delta}};
}

// Single-patient evidence plus the covariates needed to extrapolate.
struct Predictor::Context {
  std::string id;
  CompiledCohort compiled;
  IopFlags iop;
  std::optional<int> held_out_eta;
  int store_index = -1;  // fitted patient with a latent state, read from draws
  std::optional<IntervalCovariates> next;  // covariates of the next interval
  bool reclassified = false;
  bool ended = false;  // surgery closes follow-up
  std::optional<PsaObservation> last_psa;
};

Predictor::Predictor(const PosteriorStore& store) : store_(store), draws_(store.population_draws()) {
  if (draws_.empty()) throw InputError("posterior store has no draws");
  for (int k = 0; k < 2; ++k) {
    llt_[k].reserve(draws_.size());
    for (const auto& d : draws_) {
      llt_[k].emplace_back(d.sigma_b[k]);
      if (llt_[k].back().info() != Eigen::Success) throw NumericalError("stored covariance not positive definite");
      const auto dz = d.sigma_b[k].rows();
      sigma_inv_[k].push_back(llt_[k].back().solve(Eigen::MatrixXd::Identity(dz, dz)));
      log_det_[k].push_back(2.0 * llt_[k].back().matrixLLT().diagonal().array().log().sum());
    }
  }
}

Predictor::Context Predictor::context(const PatientRecord& patient, const ImportanceOptions& opts) const {
  Context ctx;
  ctx.id = patient.id;
  ctx.iop = opts.iop.value_or(store_.config.iop);
  PatientRecord masked = patient;
  masked.eta_observed.reset();
  ctx.compiled = compile_cohort({masked}, store_.config);
  if (opts.match_store_patient) {
    const int idx = store_.patient_index(patient.id);
    if (idx >= 0) {
      const auto& obs = store_.eta_observed[static_cast<std::size_t>(idx)];
      if (obs) ctx.held_out_eta = *obs;
    }
  }
  ctx.reclassified = patient.reclassified_ever();
  ctx.ended = patient.had_surgery();
  if (!patient.intervals.empty()) {
    const auto& last = patient.intervals.back();
    IntervalCovariates next = advance(last.cov, 1.0);
    next.num_prev_biopsies = last.cov.num_prev_biopsies + last.biopsy_count;
    next.prev_reclass = last.cov.prev_reclass || last.reclassified.value_or(false);
    ctx.next = next;
  }
  if (!patient.psa.empty()) ctx.last_psa = patient.psa.back();
  return ctx;
}

ImportanceTerms Predictor::terms(const Context& ctx) const {
  const auto& c = ctx.compiled;
  const auto& x = c.x_rows[0];
  const auto& z = c.z_rows[0];
  const auto& y = c.y_rows[0];
  const auto m = y.size();
  const auto dz = c.dim_z;
  const auto n = draws_.size();

  ImportanceTerms out;
  out.log_weight.resize(n);
  out.p_eta.resize(n);
  for (int k = 0; k < 2; ++k) {
    out.log_lik[k].resize(n);
    out.cond_mean[k].resize(n);
  }
  for (std::size_t t = 0; t < n; ++t) {
    const auto& d = draws_[t];
    const Eigen::MatrixXd a = z * d.xi.asDiagonal();
    const Eigen::VectorXd r0 = y - x * d.beta;
    const Eigen::MatrixXd ata = a.transpose() * a / d.sigma2;
    const Eigen::VectorXd atr0 = a.transpose() * r0 / d.sigma2;
    double lw[2];
    for (int k = 0; k < 2; ++k) {
      // PSA marginal N(X beta + A mu_k, A Sigma_k A' + sigma2 I) via Woodbury.
      const Eigen::MatrixXd prec = sigma_inv_[k][t] + ata;
      Eigen::LLT<Eigen::MatrixXd> lp(prec);
      if (lp.info() != Eigen::Success) throw NumericalError("collapsed PSA precision not positive definite");
      const double logdet_p = 2.0 * lp.matrixLLT().diagonal().array().log().sum();
      const Eigen::VectorXd r = r0 - a * d.mu[k];
      const Eigen::VectorXd atr = a.transpose() * r / d.sigma2;
      const double quad = r.squaredNorm() / d.sigma2 - atr.dot(lp.solve(atr));
      const double logdet_s = static_cast<double>(m) * std::log(d.sigma2) + log_det_[k][t] + logdet_p;
      double ll = m ? -0.5 * (static_cast<double>(m) * kLog2Pi + logdet_s + quad) : 0.0;
      out.cond_mean[k][t] = m ? Eigen::VectorXd(lp.solve(sigma_inv_[k][t] * d.mu[k] + atr0)) : d.mu[k];
      if (out.cond_mean[k][t].size() != dz) throw InputError("PSA dimension mismatch");
      out.log_lik[k][t] = ll;
      ll += reclass_loglik(c, 0, d, k);
      if (ctx.iop.biopsy) ll += biopsy_loglik(c, 0, d, k);
      if (ctx.iop.surgery) ll += surgery_loglik(c, 0, d, k);
      lw[k] = ll + (k == 1 ? std::log(d.rho) : std::log1p(-d.rho));
    }
    const double total = log_sum_exp(lw[0], lw[1]);
    out.p_eta[t] = std::isfinite(total) ? std::exp(lw[1] - total) : d.rho;
    if (ctx.held_out_eta) {
      out.log_weight[t] = total - lw[*ctx.held_out_eta];
    } else {
      out.log_weight[t] = total;
    }
    if (std::isnan(out.log_weight[t])) throw NumericalError("importance weight is not a number");
  }
  return out;
}

PredictionReport Predictor::report(const std::string& id, const ImportanceTerms& t) const {
  PredictionReport r;
  r.patient_id = id;
  r.method = PredictionMethod::importance;
  r.n_draws = n_draws();
  const double top = *std::max_element(t.log_weight.begin(), t.log_weight.end());
  if (!std::isfinite(top)) throw NumericalError("importance weights are all zero");
  std::vector<double> w(t.log_weight.size());
  double sw = 0.0, sw2 = 0.0, swp = 0.0;
  for (std::size_t k = 0; k < w.size(); ++k) {
    w[k] = std::exp(t.log_weight[k] - top);
    sw += w[k];
    sw2 += w[k] * w[k];
    swp += w[k] * t.p_eta[k];
  }
  r.mean = std::clamp(swp / sw, 0.0, 1.0);
  r.lower = weighted_quantile(t.p_eta, w, 0.025);
  r.upper = weighted_quantile(t.p_eta, w, 0.975);
  r.ess = sw * sw / sw2;
  if (*r.ess < kImportanceEssFloor * r.n_draws) {
    r.ess_flagged = true;
    r.warnings.push_back("importance effective sample size below 5% of draws; estimate may be unreliable");
  }
  return r;
}

PredictionReport Predictor::augmented(const std::string& patient_id) const {
  const int idx = store_.patient_index(patient_id);
  if (idx < 0) throw InputError("patient '" + patient_id + "' is not in the posterior store");
  if (store_.eta_observed[static_cast<std::size_t>(idx)])
    throw InputError("patient '" + patient_id + "' had its state observed; use the importance path");
  if (!store_.has_patient_draws()) throw InputError("posterior store has no patient draws");
  PredictionReport r;
  r.patient_id = patient_id;
  r.method = PredictionMethod::augmented;
  std::vector<double> p;
  double sum = 0.0;
  for (const auto& ch : store_.chains) {
    for (int t = 0; t < ch.draws; ++t) {
      sum += ch.eta(t, idx);
      p.push_back(ch.p_eta(t, idx));
    }
  }
  r.n_draws = static_cast<int>(p.size());
  r.mean = sum / static_cast<double>(p.size());
  r.lower = quantile(p, 0.025);
  r.upper = quantile(p, 0.975);
  return r;
}

ImportanceTerms Predictor::importance_terms(const PatientRecord& patient, const ImportanceOptions& opts) const {
  return terms(context(patient, opts));
}

PredictionReport Predictor::importance(const PatientRecord& patient, const ImportanceOptions& opts) const {
  const auto ctx = context(patient, opts);
  return report(patient.id, terms(ctx));
}

PredictionReport Predictor::predict(const PatientRecord& patient) const {
  const int idx = store_.patient_index(patient.id);
  if (idx >= 0 && !store_.eta_observed[static_cast<std::size_t>(idx)] && store_.has_patient_draws())
    return augmented(patient.id);
  return importance(patient);
}

TrajectoryBand Predictor::band(const Context& ctx, const ImportanceTerms* t, std::vector<double> ages) const {
  if (!ctx.last_psa) throw InputError("trajectory needs at least one PSA observation");
  if (ages.empty())
    for (int k = 0; k <= 10; ++k) ages.push_back(ctx.last_psa->age + 0.5 * k);
  for (double a : ages)
    if (!std::isfinite(a)) throw InputError("trajectory ages must be finite");

  TrajectoryBand b;
  b.ages = ages;
  b.levels = trajectory_levels();
  const auto fixed = store_.config.block_covariates(ModelBlock::psa_fixed);
  const auto random = store_.config.block_covariates(ModelBlock::psa_random);
  const auto reclass_specs = store_.config.block_covariates(ModelBlock::reclass);
  const auto& layout = ctx.compiled.reclass_layout;

  bool with_reclass = true;
  if (ctx.reclassified) {
    with_reclass = false;
    b.reclass_note = "reclassified: biopsy outcomes after reclassification are not modelled";
  } else if (ctx.ended) {
    with_reclass = false;
    b.reclass_note = "follow-up ended with surgery";
  } else if (!ctx.next) {
    with_reclass = false;
    b.reclass_note = "no interval history to anchor future biopsy covariates";
  }

  // Per-draw values, weights and state probabilities.
  const int n = n_draws();
  std::vector<double> weights(static_cast<std::size_t>(n), 1.0);
  std::vector<double> p(static_cast<std::size_t>(n));
  std::vector<Eigen::VectorXd> effect[2];
  if (t) {
    const double top = *std::max_element(t->log_weight.begin(), t->log_weight.end());
    for (int k = 0; k < n; ++k) weights[static_cast<std::size_t>(k)] = std::exp(t->log_weight[static_cast<std::size_t>(k)] - top);
    p = t->p_eta;
    effect[0] = t->cond_mean[0];
    effect[1] = t->cond_mean[1];
  } else {
    const int idx = ctx.store_index;
    const int dz = store_.dim_z;
    int row = 0;
    for (const auto& ch : store_.chains) {
      for (int s = 0; s < ch.draws; ++s, ++row) {
        p[static_cast<std::size_t>(row)] = ch.p_eta(s, idx);
        const Eigen::VectorXd bc = ch.b_check.row(s).segment(static_cast<Eigen::Index>(idx) * dz, dz).transpose();
        effect[0].push_back(bc);
        effect[1].push_back(bc);
      }
    }
  }

  const auto levels = b.levels.size();
  b.log_psa.resize(static_cast<Eigen::Index>(ages.size()), static_cast<Eigen::Index>(levels));
  if (with_reclass) b.reclass.resize(static_cast<Eigen::Index>(ages.size()), static_cast<Eigen::Index>(levels));
  std::vector<double> psa_v(static_cast<std::size_t>(n)), rc_v(static_cast<std::size_t>(n));
  for (std::size_t a = 0; a < ages.size(); ++a) {
    PsaObservation obs = *ctx.last_psa;
    obs.age = ages[a];
    const Eigen::VectorXd xr = psa_fixed_row(fixed, obs);
    const Eigen::VectorXd zr = psa_random_row(random, obs);
    Eigen::VectorXd vr, vi;
    if (with_reclass) {
      IntervalRecord iv;
      iv.cov = advance(*ctx.next, ages[a] - ctx.next->age);
      iv.cov.age = ages[a];
      vr = interval_block_row(reclass_specs, iv, false);
      vi.resize(layout.n_interact());
      for (int k = 0; k < layout.n_interact(); ++k) vi[k] = vr[layout.interaction_columns[static_cast<std::size_t>(k)]];
    }
    for (int s = 0; s < n; ++s) {
      const auto& d = draws_[static_cast<std::size_t>(s)];
      const double ps = p[static_cast<std::size_t>(s)];
      const double base = xr.dot(d.beta);
      const double e0 = base + zr.dot(d.xi.cwiseProduct(effect[0][static_cast<std::size_t>(s)]));
      const double e1 = base + zr.dot(d.xi.cwiseProduct(effect[1][static_cast<std::size_t>(s)]));
      psa_v[static_cast<std::size_t>(s)] = t ? (1.0 - ps) * e0 + ps * e1 : e0;
      if (with_reclass) {
        const double l0 = vr.dot(d.gamma.head(layout.n_main));
        const double l1 = l0 + d.gamma[layout.eta_index()] + vi.dot(d.gamma.tail(layout.n_interact()));
        rc_v[static_cast<std::size_t>(s)] = (1.0 - ps) * logistic(l0) + ps * logistic(l1);
      }
    }
    for (std::size_t q = 0; q < levels; ++q) {
      b.log_psa(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(q)) = weighted_quantile(psa_v, weights, b.levels[q]);
      if (with_reclass)
        b.reclass(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(q)) = weighted_quantile(rc_v, weights, b.levels[q]);
    }
  }
  return b;
}

TrajectoryBand Predictor::trajectory(const PatientRecord& patient, std::vector<double> ages,
                                     const ImportanceOptions& opts) const {
  auto ctx = context(patient, opts);
  const int idx = store_.patient_index(patient.id);
  if (opts.match_store_patient && idx >= 0 && !store_.eta_observed[static_cast<std::size_t>(idx)] &&
      store_.has_patient_draws()) {
    ctx.store_index = idx;
    return band(ctx, nullptr, std::move(ages));
  }
  const auto t = terms(ctx);
  return band(ctx, &t, std::move(ages));
}

WhatIfResult Predictor::whatif(const PatientRecord& patient, const WhatIfScenario& scenario, std::vector<double> ages,
                               const ImportanceOptions& opts) const {
  const auto base_ctx = context(patient, opts);
  WhatIfResult out;
  const auto base_terms = terms(base_ctx);
  out.base = report(patient.id, base_terms);

  auto ctx = base_ctx;
  const bool interval_event = scenario.biopsy_result || scenario.skip_biopsy || scenario.surgery;
  if (interval_event || !scenario.psa.empty()) {
    if (ctx.ended) throw InputError("scenario: follow-up already ended with surgery");
  }
  if (interval_event && !ctx.next) throw InputError("scenario: next interval needs an observed interval history");
  if ((scenario.biopsy_result || scenario.skip_biopsy) && ctx.reclassified)
    throw InputError("scenario: no biopsies are modelled after reclassification");

  auto& c = ctx.compiled;
  if (!scenario.psa.empty()) {
    const auto fixed = store_.config.block_covariates(ModelBlock::psa_fixed);
    const auto random = store_.config.block_covariates(ModelBlock::psa_random);
    double last_age = ctx.last_psa ? ctx.last_psa->age : -std::numeric_limits<double>::infinity();
    auto& x = c.x_rows[0];
    auto& z = c.z_rows[0];
    auto& y = c.y_rows[0];
    for (const auto& o : scenario.psa) {
      if (!(o.age > last_age)) throw InputError("scenario: PSA ages must increase after the last observation");
      if (!std::isfinite(o.log_psa)) throw InputError("scenario: PSA must be positive");
      PsaObservation obs = o;
      obs.volume = ctx.last_psa ? ctx.last_psa->volume : o.volume;
      if (!(obs.volume > 0.0)) throw InputError("scenario: PSA needs a prostate volume");
      const auto r = x.rows();
      x.conservativeResize(r + 1, Eigen::NoChange);
      z.conservativeResize(r + 1, Eigen::NoChange);
      y.conservativeResize(r + 1);
      x.row(r) = psa_fixed_row(fixed, obs).transpose();
      z.row(r) = psa_random_row(random, obs).transpose();
      y[r] = obs.log_psa;
      last_age = obs.age;
      ctx.last_psa = obs;
    }
  }
  if (interval_event) {
    IntervalRecord iv;
    iv.index = 0;
    iv.cov = *ctx.next;
    const auto& rl = c.reclass_layout;
    if (scenario.skip_biopsy) {
      append_logistic_row(c.biopsy, interval_block_row(store_.config.block_covariates(ModelBlock::biopsy), iv, false),
                          c.biopsy_layout.interaction_columns, 0.0);
    } else if (scenario.biopsy_result) {
      append_logistic_row(c.biopsy, interval_block_row(store_.config.block_covariates(ModelBlock::biopsy), iv, false),
                          c.biopsy_layout.interaction_columns, 1.0);
      append_logistic_row(c.reclass, interval_block_row(store_.config.block_covariates(ModelBlock::reclass), iv, false),
                          rl.interaction_columns, *scenario.biopsy_result ? 1.0 : 0.0);
      iv.biopsy = true;
      iv.biopsy_count = 1;
      iv.reclassified = *scenario.biopsy_result;
    }
    if (scenario.surgery) {
      append_logistic_row(c.surgery, interval_block_row(store_.config.block_covariates(ModelBlock::surgery), iv, true),
                          c.surgery_layout.interaction_columns, *scenario.surgery ? 1.0 : 0.0);
    }
    IntervalCovariates next = advance(iv.cov, 1.0);
    next.num_prev_biopsies = iv.cov.num_prev_biopsies + iv.biopsy_count;
    next.prev_reclass = iv.cov.prev_reclass || iv.reclassified.value_or(false);
    ctx.next = next;
    ctx.reclassified = ctx.reclassified || iv.reclassified.value_or(false);
    ctx.ended = scenario.surgery.value_or(false);
  }
  const auto t = scenario.empty() ? base_terms : terms(ctx);
  out.scenario = report(patient.id, t);
  out.scenario.trajectory = band(ctx, &t, std::move(ages));
  out.delta = out.scenario.mean - out.base.mean;
  return out;
}

PredictionReport predict_eta_augmented(const std::string& patient_id, const PosteriorStore& store) {
  return Predictor(store).augmented(patient_id);
}

PredictionReport predict_eta_importance(const PatientRecord& patient, const PosteriorStore& store,
                                        const ImportanceOptions& opts) {
  return Predictor(store).importance(patient, opts);
}

PredictionReport predict_eta_loo_refit(const std::string& patient_id, const Cohort& cohort,
                                       const ModelConfig& config) {
  Cohort masked = cohort;
  bool found = false;
  for (auto& p : masked) {
    if (p.id != patient_id) continue;
    if (!p.eta_observed) throw InputError("patient '" + patient_id + "' has no observed state to hold out");
    p.eta_observed.reset();
    found = true;
  }
  if (!found) throw InputError("patient '" + patient_id + "' is not in the cohort");
  ModelConfig cfg = config;
  cfg.sampler.store_patient_draws = true;
  const auto store = fit(masked, cfg);
  auto r = predict_eta_augmented(patient_id, store);
  r.method = PredictionMethod::loo_refit;
  return r;
}

TrajectoryBand project_trajectory(const PatientRecord& patient, const PosteriorStore& store,
                                  const std::vector<double>& ages) {
  return Predictor(store).trajectory(patient, ages);
}

}  // namespace asurv
