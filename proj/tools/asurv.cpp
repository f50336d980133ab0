#include <cmath>
#include <cstdlib>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "asurv/cohort_io.hpp"
#include "asurv/diagnostics.hpp"
#include "asurv/evaluation.hpp"
#include "asurv/likelihood.hpp"
#include "asurv/patient_json.hpp"
#include "asurv/prediction.hpp"
#include "asurv/replication.hpp"
#include "asurv/sampler.hpp"
#include "asurv/service.hpp"
#include "asurv/simulator.hpp"
#include "asurv/validation.hpp"
#include "run_manifest.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace asurv::cli {

enum ExitCode : int { kOk = 0, kNumerical = 1, kInput = 2, kConvergence = 3 };

/// Input error that carries a structured payload for the error JSON.
class DetailedInputError : public InputError {
 public:
  DetailedInputError(const std::string& msg, json details) : InputError(msg), details_(std::move(details)) {}
  [[nodiscard]] const json& details() const { return details_; }

 private:
  json details_;
};

int report_error(const char* code, int exit_code, const std::string& message, const json& details = nullptr) {
  json j{{"error", {{"code", code}, {"message", message}, {"exit_code", exit_code}}}};
  if (!details.is_null()) j["error"]["details"] = details;
  std::cerr << j.dump() << '\n';
  return exit_code;
}

json read_json_file(const fs::path& path) {
  if (!fs::exists(path)) throw InputError("file not found: " + path.string());
  try {
    return json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw InputError(path.string() + ": invalid JSON: " + e.what());
  }
}

/// ENGINE_SEED, when set, replaces the configured seed.
bool apply_env_seed(std::uint64_t& seed) {
  const char* env = std::getenv("ENGINE_SEED");
  if (!env || !*env) return false;
  try {
    std::size_t used = 0;
    const auto v = std::stoull(env, &used, 10);
    if (used != std::string(env).size()) throw std::invalid_argument("trailing characters");
    seed = v;
  } catch (const std::exception&) {
    throw InputError(std::string("ENGINE_SEED is not an unsigned integer: '") + env + "'");
  }
  return true;
}

Cohort load_cohort(const fs::path& dir) {
  for (const char* f : {"psa.csv", "intervals.csv", "outcomes.csv"})
    if (!fs::exists(dir / f)) throw InputError(std::string("cohort file missing: ") + (dir / f).string());
  return read_cohort(dir);
}

void require_valid(const Cohort& cohort) {
  const auto rep = validate_cohort(cohort);
  if (rep.ok()) return;
  json v = json::array();
  for (const auto& x : rep.violations) v.push_back({{"patient_id", x.patient_id}, {"field", x.field}, {"message", x.message}});
  throw DetailedInputError("cohort failed validation (" + std::to_string(rep.violations.size()) + " violations)", v);
}

/// Accepts either a store directory or a fit output directory holding `store/`.
fs::path resolve_store(const fs::path& dir) {
  if (fs::exists(dir / "meta.json")) return dir;
  if (fs::exists(dir / "store" / "meta.json")) return dir / "store";
  throw InputError("no posterior store at " + dir.string());
}

std::vector<double> parse_ages(const std::string& text) {
  std::vector<double> out;
  if (text.empty()) return out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw InputError("--ages: invalid number '" + item + "'");
    }
  }
  return out;
}

void emit(const json& j, const std::string& out) {
  if (out.empty() || out == "-") {
    std::cout << j.dump(2) << '\n';
  } else {
    if (const auto parent = fs::path(out).parent_path(); !parent.empty()) fs::create_directories(parent);
    write_file_atomic(out, j.dump(2) + "\n");
  }
}

struct Globals {
  int threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  bool quiet = false;
};

ProgressCallback progress_printer(const Globals& g, int every) {
  if (g.quiet) return {};
  return [every](int chain, int it) {
    if (it > 0 && it % every == 0) std::cerr << "chain " << chain << " iteration " << it << '\n';
  };
}

// ---------------------------------------------------------------- simulate

struct SimulateArgs {
  std::string config, out;
  std::optional<int> n_patients;
  std::optional<std::uint64_t> seed;
};

int cmd_simulate(const SimulateArgs& a, RunManifest& m) {
  GeneratingConfig gen = default_generating_config();
  if (!a.config.empty()) {
    gen = GeneratingConfig::from_json(read_json_file(a.config));
    m.configs["generating"] = a.config;
  }
  if (a.n_patients) gen.n_patients = *a.n_patients;
  if (a.seed) gen.seed = *a.seed;
  m.seed_from_env = apply_env_seed(gen.seed);
  gen.validate();
  m.seed = gen.seed;
  m.resolved["generating"] = gen.to_json();

  const auto sim = simulate_cohort(gen);
  const fs::path out(a.out);
  write_cohort(sim.cohort, out);
  write_truth(sim.truth, out / "truth.csv");
  write_file_atomic(out / "generating_config.json", gen.to_json().dump(2) + "\n");
  for (const char* f : {"psa.csv", "intervals.csv", "outcomes.csv", "truth.csv", "generating_config.json"})
    m.outputs[f] = (out / f).string();
  m.write(out);
  std::cerr << "simulated " << sim.cohort.size() << " patients into " << out.string() << '\n';
  return kOk;
}

// ---------------------------------------------------------------- fit

struct FitArgs {
  std::string cohort, config, out, iop, kernel;
  std::optional<int> chains, iterations, burn_in, thin;
  std::optional<std::uint64_t> seed;
  double psr_threshold = 1.1;
  bool no_patient_draws = false;
};

int cmd_fit(const FitArgs& a, const Globals& g, RunManifest& m) {
  ModelConfig cfg = ModelConfig::simulation_default();
  if (!a.config.empty()) {
    cfg = ModelConfig::from_json(read_json_file(a.config));
    m.configs["model"] = a.config;
  }
  if (!a.iop.empty()) cfg.iop = IopFlags::parse(a.iop);
  auto& s = cfg.sampler;
  if (a.chains) s.n_chains = *a.chains;
  if (a.iterations) s.n_iterations = *a.iterations;
  if (a.burn_in) s.burn_in = *a.burn_in;
  if (a.thin) s.thin = *a.thin;
  if (a.seed) s.seed = *a.seed;
  if (a.kernel == "pg" || a.kernel == "polya_gamma") s.logistic_kernel = LogisticKernel::polya_gamma;
  else if (a.kernel == "mh" || a.kernel == "adaptive_metropolis") s.logistic_kernel = LogisticKernel::adaptive_metropolis;
  else if (!a.kernel.empty()) throw InputError("--kernel must be pg or mh");
  if (a.no_patient_draws) s.store_patient_draws = false;
  s.threads = g.threads;
  m.seed_from_env = apply_env_seed(s.seed);
  m.seed = s.seed;
  cfg.validate();
  if (!(a.psr_threshold > 1.0)) throw InputError("--psr-threshold must exceed 1");

  const auto cohort = load_cohort(a.cohort);
  require_valid(cohort);
  m.inputs["cohort"] = a.cohort;
  m.resolved["model"] = cfg.to_json();
  m.resolved["psr_threshold"] = a.psr_threshold;

  const auto store = fit(cohort, cfg, progress_printer(g, 1000));
  const fs::path out(a.out);
  store.save(out / "store");
  const auto diag = diagnose(store);
  write_diagnostics(diag, store, out / "diagnostics");
  write_file_atomic(out / "model_config.json", cfg.to_json().dump(2) + "\n");
  m.outputs["store"] = (out / "store").string();
  m.outputs["diagnostics"] = (out / "diagnostics").string();

  const bool converged = diag.converged(a.psr_threshold);
  m.exit_code = converged ? kOk : kConvergence;
  m.resolved["max_psr"] = std::isfinite(diag.max_psr) ? json(diag.max_psr) : json(nullptr);
  m.write(out);
  json summary{{"store", (out / "store").string()},
               {"fingerprint", store.fingerprint},
               {"chains", store.chains.size()},
               {"draws_per_chain", cfg.sampler.draws_per_chain()},
               {"max_psr", m.resolved["max_psr"]},
               {"min_ess", diag.min_ess},
               {"converged", converged}};
  std::cout << summary.dump(2) << '\n';
  if (!converged)
    return report_error("convergence_warning", kConvergence,
                        "max PSR " + format_double(diag.max_psr) + " is not below " + format_double(a.psr_threshold));
  return kOk;
}

// ---------------------------------------------------------------- predict

struct PredictArgs {
  std::string store, patient, patient_id, cohort, method = "auto", scenario, ages, trajectory_csv, out, iop;
  bool trajectory = false;
  bool new_patient = false;
};

PatientRecord find_patient(const Cohort& cohort, const std::string& id) {
  for (const auto& p : cohort)
    if (p.id == id) return p;
  throw InputError("patient '" + id + "' is not in the cohort");
}

int cmd_predict(const PredictArgs& a) {
  const auto store = PosteriorStore::load(resolve_store(a.store));
  const Predictor predictor(store);
  ImportanceOptions opts;
  opts.match_store_patient = !a.new_patient;
  if (!a.iop.empty()) opts.iop = IopFlags::parse(a.iop);

  std::optional<PatientRecord> patient;
  if (!a.patient.empty()) {
    patient = patient_from_json(read_json_file(a.patient));
    const auto rep = validate_patient(*patient, {.relaxed = true});
    if (!rep.ok()) throw InputError("patient failed validation: " + rep.summary());
  } else if (!a.cohort.empty()) {
    if (a.patient_id.empty()) throw InputError("--cohort needs --patient-id");
    patient = find_patient(load_cohort(a.cohort), a.patient_id);
  }
  const std::string id = patient ? patient->id : a.patient_id;
  if (id.empty()) throw InputError("give --patient FILE or --patient-id ID");
  const auto ages = parse_ages(a.ages);

  if (!a.scenario.empty()) {
    if (!patient) throw InputError("what-if prediction needs the patient data (--patient or --cohort)");
    const auto scenario = WhatIfScenario::from_json(read_json_file(a.scenario));
    const auto res = predictor.whatif(*patient, scenario, ages, opts);
    if (!a.trajectory_csv.empty() && res.scenario.trajectory)
      write_file_atomic(a.trajectory_csv, res.scenario.trajectory->to_csv());
    emit(res.to_json(), a.out);
    return kOk;
  }

  PredictionReport report;
  if (a.method == "augmented") {
    report = predictor.augmented(id);
  } else if (a.method == "importance") {
    if (!patient) throw InputError("importance prediction needs the patient data (--patient or --cohort)");
    report = predictor.importance(*patient, opts);
  } else if (a.method == "loo" || a.method == "loo_refit") {
    if (a.cohort.empty()) throw InputError("loo refit needs --cohort");
    ModelConfig cfg = store.config;
    report = predict_eta_loo_refit(id, load_cohort(a.cohort), cfg);
  } else if (a.method == "auto") {
    if (patient) {
      report = a.new_patient ? predictor.importance(*patient, opts) : predictor.predict(*patient);
    } else {
      report = predictor.augmented(id);
    }
  } else {
    throw InputError("--method must be auto, augmented, importance or loo");
  }
  if (a.trajectory || !a.trajectory_csv.empty()) {
    if (!patient) throw InputError("trajectory needs the patient data (--patient or --cohort)");
    report.trajectory = predictor.trajectory(*patient, ages, opts);
    if (!a.trajectory_csv.empty()) write_file_atomic(a.trajectory_csv, report.trajectory->to_csv());
  }
  emit(report.to_json(), a.out);
  return kOk;
}

// ---------------------------------------------------------------- evaluate

struct EvaluateArgs {
  std::string cohort, truth, store, config, variants = "bs,none", out;
  int n_boot = 1000;
  std::optional<std::uint64_t> seed;
  double target_tpr = 0.62;
  bool no_calibration = false;
  bool no_baseline = false;
};

int cmd_evaluate(const EvaluateArgs& a, const Globals& g, RunManifest& m) {
  const auto cohort = load_cohort(a.cohort);
  require_valid(cohort);
  const fs::path truth_path = a.truth.empty() ? fs::path(a.cohort) / "truth.csv" : fs::path(a.truth);
  const auto truth = read_truth(truth_path);
  m.inputs["cohort"] = a.cohort;
  m.inputs["truth"] = truth_path.string();

  MetricOptions mo;
  mo.n_boot = a.n_boot;
  mo.target_tpr = a.target_tpr;
  mo.calibration = !a.no_calibration;
  if (a.seed) mo.seed = *a.seed;
  m.seed_from_env = apply_env_seed(mo.seed);
  m.seed = mo.seed;
  if (mo.n_boot < 100) throw InputError("--n-boot must be at least 100");

  std::vector<VariantResult> results;
  if (!a.store.empty()) {
    const auto store = PosteriorStore::load(resolve_store(a.store));
    m.inputs["store"] = a.store;
    VariantResult r;
    r.name = store.config.iop.str();
    r.rho = summarize_rho(store);
    auto diag = diagnose(store);
    r.max_psr = diag.max_psr;
    r.parameters = std::move(diag.parameters);
    r.predictions = predict_cohort(cohort, store, truth);
    r.metrics = stratified_metrics(r.predictions, mo);
    results.push_back(std::move(r));
  } else {
    ModelConfig cfg = ModelConfig::simulation_default();
    if (!a.config.empty()) {
      cfg = ModelConfig::from_json(read_json_file(a.config));
      m.configs["model"] = a.config;
    }
    cfg.sampler.threads = g.threads;
    m.seed_from_env = apply_env_seed(cfg.sampler.seed) || m.seed_from_env;
    std::vector<IopFlags> variants;
    std::stringstream ss(a.variants);
    std::string item;
    while (std::getline(ss, item, ',')) variants.push_back(IopFlags::parse(item));
    if (variants.empty()) throw InputError("--variants is empty");
    m.resolved["model"] = cfg.to_json();
    ComparisonOptions opts;
    opts.metrics = mo;
    opts.include_baseline = !a.no_baseline;
    results = compare_variants(cohort, truth, variants, cfg, opts);
  }
  m.resolved["metrics"] = {{"n_boot", mo.n_boot}, {"target_tpr", mo.target_tpr}, {"calibration", mo.calibration}};
  write_evaluation(results, a.out);
  for (const char* f : {"metrics.json", "roc.csv", "calibration.csv", "predictions.csv"})
    m.outputs[f] = (fs::path(a.out) / f).string();
  m.write(a.out);

  json brief = json::array();
  for (const auto& r : results) {
    for (const auto& mr : r.metrics) {
      brief.push_back({{"variant", r.name},
                       {"stratum", to_string(mr.stratum)},
                       {"n", mr.n},
                       {"auc", mr.auc.to_json()},
                       {"mse", mr.mse.to_json()},
                       {"fpr_at_tpr", mr.fpr_at_tpr.to_json()}});
    }
  }
  std::cout << brief.dump(2) << '\n';
  return kOk;
}

// ---------------------------------------------------------------- diagnose

struct DiagnoseArgs {
  std::string store, out;
  double psr_threshold = 1.1;
};

int cmd_diagnose(const DiagnoseArgs& a, RunManifest& m) {
  const auto store = PosteriorStore::load(resolve_store(a.store));
  m.inputs["store"] = a.store;
  const auto diag = diagnose(store);
  if (!a.out.empty()) {
    write_diagnostics(diag, store, a.out);
    m.outputs["diagnostics"] = a.out;
    m.exit_code = diag.converged(a.psr_threshold) ? kOk : kConvergence;
    m.write(a.out);
  }
  std::cout << diag.to_json().dump(2) << '\n';
  if (!diag.converged(a.psr_threshold))
    return report_error("convergence_warning", kConvergence,
                        "max PSR " + format_double(diag.max_psr) + " is not below " + format_double(a.psr_threshold));
  return kOk;
}

// ---------------------------------------------------------------- pipeline

struct PipelineArgs {
  std::string scenario, out;
  std::optional<int> replicates;
};

int cmd_pipeline(const PipelineArgs& a, const Globals& g, RunManifest& m) {
  json sj = read_json_file(a.scenario);
  m.configs["scenario"] = a.scenario;
  auto scenario = PipelineScenario::from_json(sj);
  if (a.replicates) scenario.n_replicates = *a.replicates;
  m.seed_from_env = apply_env_seed(scenario.seed);
  m.seed = scenario.seed;
  if (!scenario.model) scenario.model = scenario.generating.model;
  scenario.model->sampler.threads = g.threads;
  scenario.validate();
  m.resolved["scenario"] = scenario.to_json();

  const auto summary = run_pipeline(scenario, fs::path(a.out), [&](const ReplicateResult& r) {
    if (g.quiet) return;
    std::cerr << "replicate " << r.replicate << '/' << scenario.n_replicates << (r.ok ? " ok" : " FAILED: " + r.error)
              << " (" << format_double(std::round(r.seconds * 10.0) / 10.0) << " s)\n";
  });
  for (const char* f : {"summary.json", "parameters.csv", "metrics.csv"})
    m.outputs[f] = (fs::path(a.out) / f).string();
  const bool all_failed = summary.n_failed == summary.n_replicates;
  m.exit_code = all_failed ? kNumerical : kOk;
  m.write(a.out);
  std::cout << json{{"n_replicates", summary.n_replicates}, {"n_failed", summary.n_failed}, {"out", a.out}}.dump(2)
            << '\n';
  if (all_failed) return report_error("all_replicates_failed", kNumerical, "every replicate failed");
  return kOk;
}

// ---------------------------------------------------------------- serve

struct ServeArgs {
  std::string store, host = "127.0.0.1", cors_origin = "*";
  int port = 8080;
};

HttpServer* g_server = nullptr;

int cmd_serve(const ServeArgs& a) {
  std::optional<PosteriorStore> store;
  if (!a.store.empty()) store = PosteriorStore::load(resolve_store(a.store));
  ServiceOptions opts;
  opts.cors_origin = a.cors_origin;
  RiskService service(std::move(store), opts);
  HttpServer server(service);
  const int port = server.bind(a.host, a.port);
  if (port < 0) throw InputError("cannot bind " + a.host + ":" + std::to_string(a.port));
  g_server = &server;
  std::signal(SIGINT, [](int) {
    if (g_server) g_server->stop();
  });
  std::signal(SIGTERM, [](int) {
    if (g_server) g_server->stop();
  });
  std::cerr << json{{"listening", {{"host", a.host}, {"port", port}}}, {"store_loaded", service.loaded()}}.dump()
            << std::endl;
  server.listen();
  g_server = nullptr;
  return kOk;
}

// ---------------------------------------------------------------- loglik

struct LoglikArgs {
  std::string cohort, store, iop;
  int chain = 0;
  int draw = -1;
  bool per_patient = false;
};

json components_json(const LogPosteriorComponents& c) {
  return {{"eta", c.eta},         {"psa", c.psa},         {"random_effects", c.random_effects},
          {"biopsy", c.biopsy},   {"reclass", c.reclass}, {"surgery", c.surgery},
          {"prior", c.prior},     {"total", c.total()}};
}

int cmd_loglik(const LoglikArgs& a) {
  const auto store = PosteriorStore::load(resolve_store(a.store));
  if (!store.has_patient_draws()) throw InputError("loglik needs a store with patient draws");
  const auto cohort = load_cohort(a.cohort);
  const auto c = compile_cohort(cohort, store.config);
  if (c.ids != store.ids) throw InputError("cohort patients do not match the fitted store");
  if (a.chain < 0 || a.chain >= static_cast<int>(store.chains.size())) throw InputError("--chain out of range");
  const auto& ch = store.chains[static_cast<std::size_t>(a.chain)];
  const int t = a.draw < 0 ? ch.draws - 1 : a.draw;
  if (t >= ch.draws) throw InputError("--draw out of range");

  ParameterState s = store.population_draw(a.chain, t);
  s.eta.resize(static_cast<std::size_t>(c.n));
  s.b_check.resize(c.n, c.dim_z);
  for (int i = 0; i < c.n; ++i) {
    s.eta[static_cast<std::size_t>(i)] = ch.eta(t, i);
    for (int d = 0; d < c.dim_z; ++d) s.b_check(i, d) = ch.b_check(t, i * c.dim_z + d);
  }
  const IopFlags iop = a.iop.empty() ? store.config.iop : IopFlags::parse(a.iop);
  const auto comp = joint_logpost_components(c, s, store.config, iop);
  json out{{"chain", a.chain}, {"draw", t}, {"iop", iop.str()}, {"components", components_json(comp)}};
  out["stored_logpost"] = ch.logpost[t];
  if (a.per_patient) {
    const MvnCache cache(s);
    json rows = json::array();
    for (int i = 0; i < c.n; ++i) {
      const int eta = s.eta[static_cast<std::size_t>(i)];
      rows.push_back({{"patient_id", c.ids[static_cast<std::size_t>(i)]},
                      {"eta", eta},
                      {"psa", psa_loglik(c, i, s)},
                      {"random_effects", random_effect_logprior(s.b_check.row(i).transpose(), eta, s, cache)},
                      {"biopsy", biopsy_loglik(c, i, s, eta)},
                      {"reclass", reclass_loglik(c, i, s, eta)},
                      {"surgery", surgery_loglik(c, i, s, eta)},
                      {"p_eta", eta_full_conditional(c, i, s, cache, iop)}});
    }
    out["patients"] = rows;
  }
  std::cout << out.dump(2) << '\n';
  return kOk;
}

// ---------------------------------------------------------------- defaults

int cmd_defaults(const std::string& what) {
  if (what == "model") std::cout << ModelConfig::simulation_default().to_json().dump(2) << '\n';
  else if (what == "clinical") std::cout << ModelConfig::clinical_default().to_json().dump(2) << '\n';
  else if (what == "generating") std::cout << default_generating_config().to_json().dump(2) << '\n';
  else if (what == "scenario") std::cout << PipelineScenario{}.to_json().dump(2) << '\n';
  else throw InputError("defaults: expected model, clinical, generating or scenario");
  return kOk;
}

int run(int argc, char** argv) {
  CLI::App app{"Bayesian latent-state joint model: simulate, fit, predict, evaluate and serve."};
  app.set_version_flag("--version", engine_version());
  app.require_subcommand(1);
  Globals g;
  app.add_option("--threads", g.threads, "Cap on worker threads")->check(CLI::PositiveNumber);
  app.add_flag("--quiet", g.quiet, "Suppress progress output");

  SimulateArgs sim;
  auto* c_sim = app.add_subcommand("simulate", "Generate a synthetic cohort plus truth.csv");
  c_sim->add_option("--config", sim.config, "Generating config JSON (default: built-in generating values)");
  c_sim->add_option("--out", sim.out, "Output cohort directory")->required();
  c_sim->add_option("--n-patients", sim.n_patients, "Override the number of patients");
  c_sim->add_option("--seed", sim.seed, "Override the seed (ENGINE_SEED wins)");

  FitArgs fa;
  auto* c_fit = app.add_subcommand("fit", "Run the Gibbs sampler and write a posterior store");
  c_fit->add_option("--cohort", fa.cohort, "Cohort directory (psa.csv, intervals.csv, outcomes.csv)")->required();
  c_fit->add_option("--config", fa.config, "Model config JSON (default: simulation covariates)");
  c_fit->add_option("--out", fa.out, "Output directory (store/, diagnostics/, manifest.json)")->required();
  c_fit->add_option("--iop", fa.iop, "Informative observation process: none|b|s|bs");
  c_fit->add_option("--chains", fa.chains, "Number of chains");
  c_fit->add_option("--iterations", fa.iterations, "Iterations per chain");
  c_fit->add_option("--burn-in", fa.burn_in, "Burn-in iterations");
  c_fit->add_option("--thin", fa.thin, "Thinning interval");
  c_fit->add_option("--seed", fa.seed, "Sampler seed (ENGINE_SEED wins)");
  c_fit->add_option("--kernel", fa.kernel, "Logistic kernel: pg (Polya-Gamma) or mh (adaptive Metropolis)");
  c_fit->add_option("--psr-threshold", fa.psr_threshold, "Exit 3 unless max PSR is below this")->capture_default_str();
  c_fit->add_flag("--no-patient-draws", fa.no_patient_draws, "Do not store per-patient eta and effects");

  PredictArgs pa;
  auto* c_pred = app.add_subcommand("predict", "Posterior probability of the latent state for one patient");
  c_pred->add_option("--store", pa.store, "Posterior store directory")->required();
  c_pred->add_option("--patient", pa.patient, "Patient JSON file");
  c_pred->add_option("--patient-id", pa.patient_id, "Fitted patient id");
  c_pred->add_option("--cohort", pa.cohort, "Cohort directory (patient lookup, loo refits)");
  c_pred->add_option("--method", pa.method, "auto|augmented|importance|loo")->capture_default_str();
  c_pred->add_option("--scenario", pa.scenario, "What-if scenario JSON");
  c_pred->add_flag("--trajectory", pa.trajectory, "Attach PSA and reclassification bands");
  c_pred->add_option("--ages", pa.ages, "Comma-separated future ages for bands");
  c_pred->add_option("--trajectory-csv", pa.trajectory_csv, "Also write bands as CSV");
  c_pred->add_option("--iop", pa.iop, "IOP flags for the importance path (default: the store's)");
  c_pred->add_flag("--new-patient", pa.new_patient, "Treat the patient as new even if the id is in the store");
  c_pred->add_option("--out", pa.out, "Output JSON file (default stdout)");

  EvaluateArgs ea;
  auto* c_eval = app.add_subcommand("evaluate", "Predictive metrics per stratum against simulated truth");
  c_eval->add_option("--cohort", ea.cohort, "Cohort directory")->required();
  c_eval->add_option("--truth", ea.truth, "truth.csv (default: <cohort>/truth.csv)");
  c_eval->add_option("--store", ea.store, "Evaluate this fitted store instead of fitting variants");
  c_eval->add_option("--config", ea.config, "Model config JSON for variant fits");
  c_eval->add_option("--variants", ea.variants, "Comma-separated IOP variants to fit")->capture_default_str();
  c_eval->add_option("--out", ea.out, "Output directory")->required();
  c_eval->add_option("--n-boot", ea.n_boot, "Bootstrap resamples")->capture_default_str();
  c_eval->add_option("--seed", ea.seed, "Bootstrap seed (ENGINE_SEED wins)");
  c_eval->add_option("--target-tpr", ea.target_tpr, "TPR for the FPR comparison")->capture_default_str();
  c_eval->add_flag("--no-calibration", ea.no_calibration, "Skip calibration curves");
  c_eval->add_flag("--no-baseline", ea.no_baseline, "Skip the logistic comparator");

  DiagnoseArgs da;
  auto* c_diag = app.add_subcommand("diagnose", "Convergence diagnostics of a store");
  c_diag->add_option("--store", da.store, "Posterior store directory")->required();
  c_diag->add_option("--out", da.out, "Write diagnostics files here");
  c_diag->add_option("--psr-threshold", da.psr_threshold, "Exit 3 unless max PSR is below this")->capture_default_str();

  PipelineArgs pl;
  auto* c_pipe = app.add_subcommand("pipeline", "Replication study: simulate, fit, predict, evaluate");
  c_pipe->add_option("--scenario", pl.scenario, "Scenario JSON")->required();
  c_pipe->add_option("--out", pl.out, "Report directory")->required();
  c_pipe->add_option("--replicates", pl.replicates, "Override n_replicates");

  ServeArgs sa;
  auto* c_serve = app.add_subcommand("serve", "HTTP prediction service under /v1");
  c_serve->add_option("--store", sa.store, "Posterior store directory (omit to serve 503s)");
  c_serve->add_option("--host", sa.host, "Bind address")->capture_default_str();
  c_serve->add_option("--port", sa.port, "Port (0 picks a free one)")->capture_default_str();
  c_serve->add_option("--cors-origin", sa.cors_origin, "Access-Control-Allow-Origin value")->capture_default_str();

  LoglikArgs la;
  auto* c_ll = app.add_subcommand("loglik", "Log-posterior components at a stored draw");
  c_ll->add_option("--cohort", la.cohort, "Cohort directory used for the fit")->required();
  c_ll->add_option("--store", la.store, "Posterior store with patient draws")->required();
  c_ll->add_option("--chain", la.chain, "Chain index")->capture_default_str();
  c_ll->add_option("--draw", la.draw, "Draw index (default: last)");
  c_ll->add_option("--iop", la.iop, "Override IOP flags");
  c_ll->add_flag("--per-patient", la.per_patient, "Include per-patient terms");

  std::string defaults_what;
  auto* c_def = app.add_subcommand("defaults", "Print a default config");
  c_def->add_option("kind", defaults_what, "model|clinical|generating|scenario")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report_error("usage", kInput, e.what());
  }

  const std::string name = app.get_subcommands().front()->get_name();
  RunManifest manifest(name, argc, argv);
  try {
    if (name == "simulate") return cmd_simulate(sim, manifest);
    if (name == "fit") return cmd_fit(fa, g, manifest);
    if (name == "predict") return cmd_predict(pa);
    if (name == "evaluate") return cmd_evaluate(ea, g, manifest);
    if (name == "diagnose") return cmd_diagnose(da, manifest);
    if (name == "pipeline") return cmd_pipeline(pl, g, manifest);
    if (name == "serve") return cmd_serve(sa);
    if (name == "loglik") return cmd_loglik(la);
    if (name == "defaults") return cmd_defaults(defaults_what);
  } catch (const DetailedInputError& e) {
    return report_error("input_error", kInput, e.what(), e.details());
  } catch (const InputError& e) {
    return report_error("input_error", kInput, e.what());
  } catch (const NumericalError& e) {
    return report_error("numerical_failure", kNumerical, e.what());
  } catch (const std::exception& e) {
    return report_error("failure", kNumerical, e.what());
  }
  return kInput;
}

}  // namespace asurv::cli

int main(int argc, char** argv) { return asurv::cli::run(argc, argv); }
