#include "asurv/replication.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>

#include "asurv/cohort_io.hpp"
#include "asurv/random.hpp"

namespace asurv {

namespace {

using nlohmann::json;

std::string key(const std::string& block, const std::string& label) { return block + "/" + label; }

json metric_options_json(const MetricOptions& m) {
  return {{"n_boot", m.n_boot}, {"seed", m.seed}, {"target_tpr", m.target_tpr}, {"calibration", m.calibration}};
}

MetricOptions metric_options_from_json(const json& j) {
  MetricOptions m;
  for (const auto& [k, v] : j.items()) {
    if (k == "n_boot") m.n_boot = v.get<int>();
    else if (k == "seed") m.seed = v.get<std::uint64_t>();
    else if (k == "target_tpr") m.target_tpr = v.get<double>();
    else if (k == "calibration") m.calibration = v.get<bool>();
    else throw InputError("scenario.metrics: unknown key '" + k + "'");
  }
  return m;
}

std::string na_or(int n, double v) { return n > 0 && std::isfinite(v) ? format_double(v) : "NA"; }

}  // namespace

std::uint64_t PipelineScenario::replicate_seed(int r) const { return mix_seed(seed, static_cast<std::uint64_t>(r)); }

void PipelineScenario::validate() const {
  if (n_replicates < 1) throw InputError("scenario: n_replicates must be at least 1");
  if (variants.empty()) throw InputError("scenario: at least one variant is required");
  if (metrics.n_boot < 100) throw InputError("scenario: metrics.n_boot must be at least 100");
  if (!(metrics.target_tpr > 0.0 && metrics.target_tpr <= 1.0))
    throw InputError("scenario: metrics.target_tpr must be in (0, 1]");
  generating.validate();
  fit_config().validate();
}

json PipelineScenario::to_json() const {
  json v = json::array();
  for (const auto& f : variants) v.push_back(f.str());
  json j{{"n_replicates", n_replicates},
         {"seed", seed},
         {"generating", generating.to_json()},
         {"variants", v},
         {"metrics", metric_options_json(metrics)},
         {"include_baseline", include_baseline},
         {"save_stores", save_stores}};
  j["model"] = model ? model->to_json() : json(nullptr);
  return j;
}

PipelineScenario PipelineScenario::from_json(const json& j) {
  if (!j.is_object()) throw InputError("scenario must be a JSON object");
  PipelineScenario s;
  std::optional<SamplerConfig> sampler;
  try {
    for (const auto& [k, v] : j.items()) {
      if (k == "n_replicates") s.n_replicates = v.get<int>();
      else if (k == "seed") s.seed = v.get<std::uint64_t>();
      else if (k == "generating") s.generating = GeneratingConfig::from_json(v);
      else if (k == "model") { if (!v.is_null()) s.model = ModelConfig::from_json(v); }
      else if (k == "sampler") sampler = sampler_config_from_json(v);
      else if (k == "metrics") s.metrics = metric_options_from_json(v);
      else if (k == "include_baseline") s.include_baseline = v.get<bool>();
      else if (k == "save_stores") s.save_stores = v.get<bool>();
      else if (k == "variants") {
        s.variants.clear();
        for (const auto& name : v) s.variants.push_back(IopFlags::parse(name.get<std::string>()));
      } else {
        throw InputError("scenario: unknown key '" + k + "'");
      }
    }
  } catch (const json::exception& e) {
    throw InputError(std::string("scenario: ") + e.what());
  }
  if (sampler) {
    if (!s.model) s.model = s.generating.model;
    s.model->sampler = *sampler;
  }
  s.validate();
  return s;
}

std::map<std::string, double> truth_columns(const ParameterState& params, const ModelConfig& config) {
  ModelConfig cfg = config;
  cfg.iop = {true, true};
  const auto st = store_from_draws({params}, cfg);
  const auto cols = population_columns(st);
  const Eigen::MatrixXd m = population_matrix(st, 0);
  std::map<std::string, double> out;
  for (std::size_t k = 0; k < cols.size(); ++k) out[key(cols[k].block, cols[k].label)] = m(0, static_cast<Eigen::Index>(k));
  return out;
}

std::vector<ParameterRecovery> parameter_recovery(const VariantResult& fitted,
                                                  const std::map<std::string, double>& truth) {
  std::vector<ParameterRecovery> out;
  for (const auto& p : fitted.parameters) {
    const auto it = truth.find(key(p.block, p.label));
    if (it == truth.end()) continue;
    out.push_back({fitted.name, p.block, p.label, p.identified, it->second, p.q50, p.q025, p.q975});
  }
  return out;
}

json ReplicateResult::to_json() const {
  json v = json::array();
  for (const auto& r : variants) v.push_back(r.to_json());
  json p = json::array();
  for (const auto& r : parameters) {
    p.push_back({{"variant", r.variant},
                 {"block", r.block},
                 {"label", r.label},
                 {"identified", r.identified},
                 {"truth", r.truth},
                 {"median", r.median},
                 {"lower", r.lower},
                 {"upper", r.upper},
                 {"covered", r.covered()}});
  }
  return {{"replicate", replicate}, {"seed", seed},        {"ok", ok},          {"error", error},
          {"seconds", seconds},     {"variants", v},        {"parameters", p}};
}

ReplicateResult run_replicate(const PipelineScenario& scenario, int r, const std::optional<std::filesystem::path>& out) {
  const auto start = std::chrono::steady_clock::now();
  ReplicateResult res;
  res.replicate = r;
  res.seed = scenario.replicate_seed(r);
  try {
    GeneratingConfig gen = scenario.generating;
    gen.seed = res.seed;
    const auto sim = simulate_cohort(gen);

    ModelConfig cfg = scenario.fit_config();
    cfg.sampler.seed = mix_seed(res.seed, 1);
    ComparisonOptions opts;
    opts.metrics = scenario.metrics;
    opts.metrics.seed = mix_seed(res.seed, 2);
    opts.include_baseline = scenario.include_baseline;

    std::optional<std::filesystem::path> dir;
    if (out) {
      dir = *out / ("replicate_" + std::to_string(r));
      write_cohort(sim.cohort, *dir / "cohort");
      write_truth(sim.truth, *dir / "cohort" / "truth.csv");
      if (scenario.save_stores)
        opts.on_store = [&](const std::string& v, const PosteriorStore& st) { st.save(*dir / ("store_" + v)); };
    }

    res.variants = compare_variants(sim.cohort, sim.truth, scenario.variants, cfg, opts);
    const auto truth = truth_columns(gen.params, cfg);
    for (const auto& v : res.variants) {
      auto rows = parameter_recovery(v, truth);
      res.parameters.insert(res.parameters.end(), rows.begin(), rows.end());
    }
    if (dir) write_evaluation(res.variants, *dir / "evaluation");
    res.ok = true;
  } catch (const std::exception& e) {
    res.ok = false;
    res.error = e.what();
  }
  res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return res;
}

ReplicationSummary summarize_replicates(const std::vector<ReplicateResult>& results, const PipelineScenario& scenario) {
  ReplicationSummary s;
  s.n_replicates = static_cast<int>(results.size());

  std::vector<std::string> order;
  std::map<std::string, ParameterSummaryRow> rows;
  std::map<std::string, int> covered;
  for (const auto& r : results) {
    if (!r.ok) {
      ++s.n_failed;
      continue;
    }
    for (const auto& p : r.parameters) {
      const auto k = p.variant + "|" + key(p.block, p.label);
      auto [it, fresh] = rows.try_emplace(k);
      if (fresh) {
        order.push_back(k);
        it->second = {p.variant, p.block, p.label, p.identified, p.truth, 0, 0.0, 0.0, 0.0};
      }
      auto& row = it->second;
      ++row.n;
      row.mean_median += p.median;
      row.mean_bias += p.median - p.truth;
      covered[k] += p.covered() ? 1 : 0;
    }
  }
  for (const auto& k : order) {
    auto row = rows[k];
    if (row.n > 0) {
      row.mean_median /= row.n;
      row.mean_bias /= row.n;
      row.coverage = static_cast<double>(covered[k]) / row.n;
    }
    s.parameters.push_back(row);
  }

  std::vector<std::string> variants;
  for (const auto& v : scenario.variants) variants.push_back(v.str());
  if (scenario.include_baseline) variants.push_back("logistic");
  for (const auto& v : variants) {
    for (Stratum st : {Stratum::eta_unobserved, Stratum::eta_observed, Stratum::all}) {
      for (const char* metric : {"auc", "mse", "fpr_at_tpr"}) {
        std::vector<double> vals;
        for (const auto& r : results) {
          if (!r.ok) continue;
          for (const auto& vr : r.variants) {
            if (vr.name != v) continue;
            for (const auto& m : vr.metrics) {
              if (m.stratum != st) continue;
              const auto& mv = std::string(metric) == "auc" ? m.auc : std::string(metric) == "mse" ? m.mse : m.fpr_at_tpr;
              if (mv.estimate) vals.push_back(*mv.estimate);
            }
          }
        }
        MetricSummaryRow row{v, to_string(st), metric, static_cast<int>(vals.size()), std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
        if (!vals.empty()) {
          double sum = 0.0;
          for (double x : vals) sum += x;
          row.mean = sum / static_cast<double>(vals.size());
          double ss = 0.0;
          for (double x : vals) ss += (x - row.mean) * (x - row.mean);
          row.sd = vals.size() > 1 ? std::sqrt(ss / static_cast<double>(vals.size() - 1)) : 0.0;
        }
        s.metrics.push_back(row);
      }
    }
  }
  return s;
}

json ReplicationSummary::to_json() const {
  auto num = [](int n, double v) { return n > 0 && std::isfinite(v) ? json(v) : json(nullptr); };
  json p = json::array();
  for (const auto& r : parameters) {
    p.push_back({{"variant", r.variant},
                 {"block", r.block},
                 {"label", r.label},
                 {"identified", r.identified},
                 {"truth", r.truth},
                 {"n", r.n},
                 {"mean_median", num(r.n, r.mean_median)},
                 {"mean_bias", num(r.n, r.mean_bias)},
                 {"coverage", num(r.n, r.coverage)}});
  }
  json m = json::array();
  for (const auto& r : metrics) {
    m.push_back({{"variant", r.variant},
                 {"stratum", r.stratum},
                 {"metric", r.metric},
                 {"n", r.n},
                 {"mean", num(r.n, r.mean)},
                 {"sd", num(r.n, r.sd)}});
  }
  return {{"n_replicates", n_replicates}, {"n_failed", n_failed}, {"parameters", p}, {"metrics", m}};
}

std::string ReplicationSummary::parameters_csv() const {
  std::ostringstream out;
  out << "variant,block,label,identified,truth,n,mean_median,mean_bias,coverage\n";
  for (const auto& r : parameters) {
    out << r.variant << ',' << r.block << ',' << r.label << ',' << (r.identified ? 1 : 0) << ','
        << format_double(r.truth) << ',' << r.n << ',' << na_or(r.n, r.mean_median) << ','
        << na_or(r.n, r.mean_bias) << ',' << na_or(r.n, r.coverage) << '\n';
  }
  return out.str();
}

std::string ReplicationSummary::metrics_csv() const {
  std::ostringstream out;
  out << "variant,stratum,metric,n,mean,sd\n";
  for (const auto& r : metrics)
    out << r.variant << ',' << r.stratum << ',' << r.metric << ',' << r.n << ',' << na_or(r.n, r.mean) << ','
        << na_or(r.n, r.sd) << '\n';
  return out.str();
}

ReplicationSummary run_pipeline(const PipelineScenario& scenario, const std::optional<std::filesystem::path>& out,
                                const ReplicateCallback& on_replicate) {
  scenario.validate();
  std::vector<ReplicateResult> results;
  for (int r = 1; r <= scenario.n_replicates; ++r) {
    results.push_back(run_replicate(scenario, r, out));
    if (on_replicate) on_replicate(results.back());
    if (out) {
      const auto dir = *out / ("replicate_" + std::to_string(r));
      std::filesystem::create_directories(dir);
      write_file_atomic(dir / "result.json", results.back().to_json().dump(2) + "\n");
    }
  }
  auto summary = summarize_replicates(results, scenario);
  if (out) {
    write_file_atomic(*out / "summary.json", summary.to_json().dump(2) + "\n");
    write_file_atomic(*out / "parameters.csv", summary.parameters_csv());
    write_file_atomic(*out / "metrics.csv", summary.metrics_csv());
    write_file_atomic(*out / "scenario.json", scenario.to_json().dump(2) + "\n");
  }
  return summary;
}

}  // namespace asurv
