// Acceptance runner: one PASS/FAIL line per criterion.
//
//   asurv_acceptance [--only NAME] [--cache DIR]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "asurv/cohort_io.hpp"
#include "asurv/diagnostics.hpp"
#include "asurv/evaluation.hpp"
#include "asurv/patient_json.hpp"
#include "asurv/prediction.hpp"
#include "asurv/replication.hpp"
#include "asurv/sampler.hpp"
#include "asurv/service.hpp"
#include "fixtures.hpp"

#include <httplib.h>

using namespace asurv;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// ---- pinned tolerances ------------------------------------------------------

constexpr double kEtaTol = 1e-12;
constexpr double kGridTol = 1e-3;        // b_check posterior moments vs quadrature
constexpr double kMuGridTol = 1e-2;      // class mean moments vs quadrature
constexpr double kIwRelTol = 0.02;       // inverse-Wishart posterior mean
constexpr double kMcSigmas = 4.0;        // Monte Carlo band for closed-form moments
constexpr double kFullCondSeconds = 60.0;

constexpr int kGewekeSweeps = 20000;
constexpr double kGewekeSlopeLo = 0.9;
constexpr double kGewekeSlopeHi = 1.1;
constexpr double kGewekeSeconds = 300.0;

constexpr int kReplicates = 20;
constexpr int kReplicateN = 300;
constexpr double kCoverageLo = 0.70;
constexpr double kCoverageHi = 1.00;
constexpr double kRhoBiasMax = 0.04;
constexpr double kReplicationSeconds = 7200.0;
constexpr double kMnarGap = 0.05;
constexpr double kOrderingShare = 0.80;
constexpr double kObservedAucLo = 0.70;
constexpr double kObservedAucHi = 0.92;

constexpr int kHeldOut = 10;
constexpr double kLooTol = 0.03;
constexpr double kLooSeconds = 1200.0;

constexpr int kAucInstances = 100;
constexpr double kCalibrationTol = 1e-6;

constexpr double kServiceTol = 1e-9;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct Moments {
  double mean = 0.0;
  double var = 0.0;
};

Moments moments(const std::vector<double>& v) {
  Moments m;
  for (double x : v) m.mean += x;
  m.mean /= static_cast<double>(v.size());
  for (double x : v) m.var += (x - m.mean) * (x - m.mean);
  m.var /= static_cast<double>(v.size() - 1);
  return m;
}

struct Moments2 {
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
};

Moments2 moments2(const std::vector<Eigen::Vector2d>& draws) {
  Moments2 g;
  for (const auto& d : draws) g.mean += d;
  g.mean /= static_cast<double>(draws.size());
  for (const auto& d : draws) g.cov += (d - g.mean) * (d - g.mean).transpose();
  g.cov /= static_cast<double>(draws.size() - 1);
  return g;
}

template <class F>
Moments2 grid2(F logf, Eigen::Vector2d center, Eigen::Vector2d half, int n) {
  std::vector<double> lw;
  std::vector<Eigen::Vector2d> pts;
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) {
      pts.emplace_back(center[0] - half[0] + 2.0 * half[0] * a / (n - 1),
                       center[1] - half[1] + 2.0 * half[1] * b / (n - 1));
      lw.push_back(logf(pts.back()));
    }
  const double mx = *std::max_element(lw.begin(), lw.end());
  double z = 0.0;
  Moments2 g;
  for (std::size_t k = 0; k < pts.size(); ++k) {
    lw[k] = std::exp(lw[k] - mx);
    z += lw[k];
    g.mean += lw[k] * pts[k];
  }
  g.mean /= z;
  for (std::size_t k = 0; k < pts.size(); ++k) g.cov += lw[k] * (pts[k] - g.mean) * (pts[k] - g.mean).transpose();
  g.cov /= z;
  return g;
}

std::vector<PatientRecord> blank_patients(int n) {
  std::vector<PatientRecord> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)].id = "E" + std::to_string(i);
  return out;
}

// ---- full conditionals ------------------------------------------------------

Outcome full_conditionals() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto cfg = test::toy_config();
  std::vector<std::string> failures;
  auto check = [&](bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  };

  // latent state: 50 toy patients, three observation-process variants
  double worst_eta = 0.0;
  {
    const auto cohort = test::toy_cohort(50, 77);
    const auto c = compile_cohort(cohort, cfg);
    Rng rng(12);
    const auto s = test::random_state(c, rng);
    const MvnCache cache(s);
    for (auto iop : {IopFlags{true, true}, IopFlags{false, false}, IopFlags{true, false}, IopFlags{false, true}})
      for (int i = 0; i < c.n; ++i) {
        const Eigen::Vector2d b = s.b_check.row(i).transpose();
        const double oracle = test::naive_eta_probability(cohort[static_cast<std::size_t>(i)], s, b, iop);
        worst_eta = std::max(worst_eta, std::abs(eta_full_conditional(c, i, s, cache, iop) - oracle));
      }
    check(worst_eta <= kEtaTol, fmt("eta %.2e", worst_eta));
  }

  Rng rng(9);
  // b_check against 2-D quadrature
  double worst_b = 0.0;
  {
    PatientRecord p;
    p.id = "T3";
    p.psa = {{50.0, 1.1, 50.0}, {67.0, 1.6, 50.0}, {84.0, 2.3, 50.0}};
    IntervalRecord iv;
    iv.index = 1;
    iv.biopsy = true;
    iv.biopsy_count = 1;
    iv.reclassified = false;
    iv.cov.time_since_dx = 1;
    iv.cov.age = 51;
    p.intervals = {iv};
    const auto c = compile_cohort({p}, cfg);
    auto s = test::toy_params();
    s.b_check = Eigen::MatrixXd::Zero(1, 2);
    s.eta = {0};
    s.sigma2 = 0.05;
    s.xi = Eigen::Vector2d(0.8, 1.3);
    const MvnCache cache(s);
    std::vector<Eigen::Vector2d> draws;
    for (int k = 0; k < 200000; ++k) draws.push_back(sample_b_check(c, 0, s, cache, rng));
    const auto mc = moments2(draws);
    const Eigen::Vector2d half(8.0 * std::sqrt(mc.cov(0, 0)), 8.0 * std::sqrt(mc.cov(1, 1)));
    const auto grid = grid2(
        [&](const Eigen::Vector2d& b) { return test::naive_psa(p, s, b) + test::naive_mvn2(b, s.mu[0], s.sigma_b[0]); },
        mc.mean, half, 401);
    worst_b = std::max((mc.mean - grid.mean).cwiseAbs().maxCoeff(), (mc.cov - grid.cov).cwiseAbs().maxCoeff());
    check(worst_b < kGridTol, fmt("b_check %.2e", worst_b));
  }

  // class mean against 2-D quadrature
  double worst_mu = 0.0;
  {
    const auto c = compile_cohort(blank_patients(2), cfg);
    auto s = test::toy_params();
    s.b_check.resize(2, 2);
    s.b_check << 1.2, 0.1, 1.9, 0.7;
    s.eta = {1, 1};
    PriorConfig pr;
    pr.mu_mean = 0.0;
    pr.mu_sd = 0.8;
    const Eigen::Matrix2d sigma = test::toy_params().sigma_b[0];
    std::vector<Eigen::Vector2d> draws;
    for (int k = 0; k < 100000; ++k) {
      s.sigma_b[0] = s.sigma_b[1] = sigma;
      sample_class_means_and_cov(c, s, pr, false, rng);
      draws.push_back(s.mu[1]);
    }
    const auto mc = moments2(draws);
    const auto grid = grid2(
        [&](const Eigen::Vector2d& m) {
          double lp = -0.5 * m.squaredNorm() / (pr.mu_sd * pr.mu_sd);
          for (int i = 0; i < 2; ++i) lp += test::naive_mvn2(s.b_check.row(i).transpose(), m, sigma);
          return lp;
        },
        mc.mean, Eigen::Vector2d(4.0, 4.0), 401);
    worst_mu = std::max((mc.mean - grid.mean).cwiseAbs().maxCoeff(), (mc.cov - grid.cov).cwiseAbs().maxCoeff());
    check(worst_mu < kMuGridTol, fmt("mu %.2e", worst_mu));
  }

  // covariance against the inverse-Wishart posterior mean
  double iw_rel = 0.0;
  {
    const int n = 30;
    const auto c = compile_cohort(blank_patients(n), cfg);
    auto s = test::toy_params();
    s.b_check.resize(n, 2);
    s.eta.assign(n, 0);
    for (int i = 0; i < n; ++i) s.b_check.row(i) = Eigen::RowVector2d(rng.normal(), rng.normal(0.0, 2.0));
    PriorConfig pr;
    pr.mu_sd = 1e-8;
    Eigen::Matrix2d ss = pr.iw_scale(2);
    for (int i = 0; i < n; ++i) ss += s.b_check.row(i).transpose() * s.b_check.row(i);
    const Eigen::Matrix2d expected = ss / (pr.iw_dof(2) + n - 2 - 1);
    Eigen::Matrix2d acc = Eigen::Matrix2d::Zero();
    const int draws = 50000;
    for (int k = 0; k < draws; ++k) {
      sample_class_means_and_cov(c, s, pr, false, rng);
      acc += s.sigma_b[0];
    }
    acc /= draws;
    iw_rel = (acc - expected).cwiseAbs().maxCoeff() / expected.cwiseAbs().maxCoeff();
    check(iw_rel < kIwRelTol, fmt("Sigma %.3f", iw_rel));
  }

  // rho: Beta(a + k, b + n - k)
  double rho_z = 0.0;
  {
    PriorConfig pr;
    pr.rho_a = 0.5;
    pr.rho_b = 1.5;
    std::vector<int> eta(40, 0);
    for (int i = 0; i < 9; ++i) eta[static_cast<std::size_t>(i)] = 1;
    std::vector<double> d;
    const int draws = 100000;
    for (int k = 0; k < draws; ++k) d.push_back(sample_rho(eta, pr, rng));
    const double a = pr.rho_a + 9.0;
    const double b = pr.rho_b + 31.0;
    const double mean = a / (a + b);
    const double sd = std::sqrt(a * b / ((a + b) * (a + b) * (a + b + 1.0)));
    rho_z = std::abs(moments(d).mean - mean) / (sd / std::sqrt(draws));
    check(rho_z < kMcSigmas, fmt("rho z %.2f", rho_z));
  }

  // sigma2: zero residuals give Gamma(a + N/2, b) precision
  double sigma_z = 0.0;
  {
    auto cohort = test::toy_cohort(5, 3);
    auto s = test::random_state(compile_cohort(cohort, cfg), rng);
    long n_obs = 0;
    for (std::size_t i = 0; i < cohort.size(); ++i)
      for (auto& o : cohort[i].psa) {
        const auto r = static_cast<Eigen::Index>(i);
        o.log_psa = s.beta[0] * (o.volume - 50.0) / 20.0 + s.xi[0] * s.b_check(r, 0) +
                    s.xi[1] * s.b_check(r, 1) * (o.age - 67.0) / 7.0;
        ++n_obs;
      }
    const auto c = compile_cohort(cohort, cfg);
    PriorConfig pr;
    const double shape = pr.sigma2_shape + 0.5 * static_cast<double>(n_obs);
    std::vector<double> prec;
    const int draws = 100000;
    for (int k = 0; k < draws; ++k) {
      sample_sigma2(c, s, pr, rng);
      prec.push_back(1.0 / s.sigma2);
    }
    const auto m = moments(prec);
    const double sd = std::sqrt(shape) / pr.sigma2_rate;
    sigma_z = std::abs(m.mean - shape / pr.sigma2_rate) / (sd / std::sqrt(draws));
    check(sigma_z < kMcSigmas, fmt("sigma2 z %.2f", sigma_z));
  }

  const double secs = seconds_since(t0);
  check(secs < kFullCondSeconds, fmt("runtime %.1fs", secs));
  std::string detail = fmt("eta=%.1e b_check=%.1e mu=%.1e Sigma_rel=%.4f rho_z=%.2f sigma2_z=%.2f %.1fs", worst_eta,
                           worst_b, worst_mu, iw_rel, rho_z, sigma_z, secs);
  for (const auto& f : failures) detail += " [" + f + "]";
  return {failures.empty(), detail};
}

// ---- Geweke ---------------------------------------------------------------

ParameterState prior_draw(const ModelConfig& cfg, const CompiledCohort& c, Rng& rng) {
  const auto& pr = cfg.priors;
  ParameterState s = ParameterState::zeros(c);
  s.rho = rng.beta(pr.rho_a, pr.rho_b);
  for (int d = 0; d < c.dim_x; ++d) s.beta[d] = rng.normal(pr.beta_mean, pr.beta_sd);
  for (int d = 0; d < c.dim_z; ++d) s.xi[d] = draw_truncated_normal(pr.xi_mean, pr.xi_sd, 0.0, rng);
  for (int k = 0; k < 2; ++k)
    for (int d = 0; d < c.dim_z; ++d) s.mu[k][d] = rng.normal(pr.mu_mean, pr.mu_sd);
  s.sigma2 = draw_inverse_gamma(pr.sigma2_shape, pr.sigma2_rate, rng);
  s.sigma_b[0] = s.sigma_b[1] = draw_inverse_wishart(pr.iw_dof(c.dim_z), pr.iw_scale(c.dim_z), rng);
  for (auto [blk, lay] : {std::pair{ModelBlock::biopsy, &c.biopsy_layout},
                          {ModelBlock::reclass, &c.reclass_layout},
                          {ModelBlock::surgery, &c.surgery_layout}}) {
    const auto p = coefficient_prior(*lay, pr);
    auto& v = s.coefficients(blk);
    for (int d = 0; d < v.size(); ++d) v[d] = rng.normal(p.mean[d], p.sd[d]);
  }
  return s;
}

double qq_slope(const std::vector<double>& x, const std::vector<double>& y) {
  std::vector<double> qx, qy;
  for (int l = 1; l < 100; ++l) {
    qx.push_back(quantile(x, l / 100.0));
    qy.push_back(quantile(y, l / 100.0));
  }
  const double mx = std::accumulate(qx.begin(), qx.end(), 0.0) / 99.0;
  const double my = std::accumulate(qy.begin(), qy.end(), 0.0) / 99.0;
  double sxy = 0.0, sxx = 0.0;
  for (int l = 0; l < 99; ++l) {
    sxy += (qx[l] - mx) * (qy[l] - my);
    sxx += (qx[l] - mx) * (qx[l] - mx);
  }
  return sxy / sxx;
}

Outcome geweke() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto gen = default_generating_config();
  ModelConfig cfg = ModelConfig::simulation_default();
  auto& pr = cfg.priors;
  pr.beta_sd = 1;
  pr.mu_mean = 0;
  pr.mu_sd = 1;
  pr.nu_sd = 1;
  pr.gamma_sd = 1;
  pr.omega_sd = 1;
  pr.sigma2_shape = 3;
  pr.sigma2_rate = 1;
  pr.sigma_b_dof = cfg.dim_z() + 4.0;
  pr.xi_sd = 1;
  pr.rho_a = 2;
  pr.rho_b = 2;
  pr.overrides.clear();

  const int n = 5;
  std::vector<PatientFrame> frames;
  for (int i = 0; i < n; ++i) frames.push_back({"G" + std::to_string(i), 60.0 + 3 * i, 35.0 + i, 40.0 + 10 * i, 4});
  Rng rng(7);
  const CompiledCohort schema = compile_cohort(blank_patients(n), cfg);
  ParameterState s = prior_draw(cfg, schema, rng);
  for (int i = 0; i < n; ++i) {
    s.eta[static_cast<std::size_t>(i)] = rng.bernoulli(s.rho);
    s.b_check.row(i) = draw_mvn(s.mu[s.eta[static_cast<std::size_t>(i)]], s.sigma_b[0], rng).transpose();
  }

  const std::vector<std::string> names{"rho", "mu0[0]", "mu1[1]", "sigma2", "nu[eta]", "gamma[eta]", "omega[eta]"};
  const int nu_eta = cfg.layout(ModelBlock::biopsy).eta_index();
  const int gamma_eta = cfg.layout(ModelBlock::reclass).eta_index();
  const int omega_eta = cfg.layout(ModelBlock::surgery).eta_index();
  auto record = [&](std::vector<std::vector<double>>& out, const ParameterState& st) {
    out[0].push_back(st.rho);
    out[1].push_back(st.mu[0][0]);
    out[2].push_back(st.mu[1][1]);
    out[3].push_back(st.sigma2);
    out[4].push_back(st.nu[nu_eta]);
    out[5].push_back(st.gamma[gamma_eta]);
    out[6].push_back(st.omega[omega_eta]);
  };
  std::vector<std::vector<double>> successive(names.size()), marginal(names.size());
  for (int it = 0; it < kGewekeSweeps; ++it) {
    Cohort co;
    for (int i = 0; i < n; ++i)
      co.push_back(simulate_patient(frames[static_cast<std::size_t>(i)], s.eta[static_cast<std::size_t>(i)],
                                    s.b_check.row(i).transpose(), s, cfg, gen, rng));
    const CompiledCohort c = compile_cohort(co, cfg);
    for (int i = 0; i < n; ++i)
      if (c.eta_observed[static_cast<std::size_t>(i)]) s.eta[static_cast<std::size_t>(i)] = *c.eta_observed[static_cast<std::size_t>(i)];
    GibbsSampler gs(c, cfg);
    gs.sweep(s, rng, false, it);
    record(successive, s);
    record(marginal, prior_draw(cfg, schema, rng));
  }
  bool ok = true;
  std::string detail;
  for (std::size_t k = 0; k < names.size(); ++k) {
    const double slope = qq_slope(marginal[k], successive[k]);
    ok = ok && slope >= kGewekeSlopeLo && slope <= kGewekeSlopeHi;
    detail += fmt("%s=%.3f ", names[k].c_str(), slope);
  }
  const double secs = seconds_since(t0);
  ok = ok && secs < kGewekeSeconds;
  return {ok, detail + fmt("(%d sweeps, %.1fs)", kGewekeSweeps, secs)};
}

// ---- replication (recovery, MNAR gap, predictive ordering) ------------------

struct VariantSummary {
  double rho_median = 0.0;
  double rho_lower = 0.0;
  double rho_upper = 0.0;
  double auc_unobserved = NAN;
  double auc_observed = NAN;
};

struct ReplicateSummary {
  bool ok = false;
  std::string error;
  double truth_rho = 0.0;
  double seconds = 0.0;
  std::map<std::string, VariantSummary> variants;
};

json to_json(const ReplicateSummary& r) {
  json v = json::object();
  for (const auto& [name, s] : r.variants)
    v[name] = {{"rho_median", s.rho_median}, {"rho_lower", s.rho_lower}, {"rho_upper", s.rho_upper},
               {"auc_unobserved", std::isnan(s.auc_unobserved) ? json() : json(s.auc_unobserved)},
               {"auc_observed", std::isnan(s.auc_observed) ? json() : json(s.auc_observed)}};
  return {{"ok", r.ok}, {"error", r.error}, {"truth_rho", r.truth_rho}, {"seconds", r.seconds}, {"variants", v}};
}

ReplicateSummary from_json(const json& j) {
  ReplicateSummary r;
  r.ok = j.at("ok");
  r.error = j.at("error");
  r.truth_rho = j.at("truth_rho");
  r.seconds = j.at("seconds");
  for (const auto& [name, v] : j.at("variants").items()) {
    VariantSummary s;
    s.rho_median = v.at("rho_median");
    s.rho_lower = v.at("rho_lower");
    s.rho_upper = v.at("rho_upper");
    s.auc_unobserved = v.at("auc_unobserved").is_null() ? NAN : v.at("auc_unobserved").get<double>();
    s.auc_observed = v.at("auc_observed").is_null() ? NAN : v.at("auc_observed").get<double>();
    r.variants[name] = s;
  }
  return r;
}

PipelineScenario replication_scenario() {
  PipelineScenario sc;
  sc.n_replicates = kReplicates;
  sc.seed = 2016;
  sc.generating = default_generating_config();
  sc.generating.n_patients = kReplicateN;
  sc.variants = {IopFlags{true, true}, IopFlags{false, false}};
  sc.metrics.n_boot = 100;
  sc.metrics.calibration = false;
  sc.include_baseline = false;
  return sc;
}

fs::path g_cache_dir = ASURV_ACCEPTANCE_CACHE;

// Runs (or reads back) every replicate. Results are cached per replicate so
// the three replication criteria share one run.
std::vector<ReplicateSummary> replication(double* total_seconds) {
  const auto sc = replication_scenario();
  const json key = sc.to_json();
  const fs::path dir = g_cache_dir / "replication";
  fs::create_directories(dir);
  const fs::path key_file = dir / "scenario.json";
  if (!fs::exists(key_file) || json::parse(read_file(key_file)) != key) {
    for (const auto& e : fs::directory_iterator(dir)) fs::remove_all(e.path());
    std::ofstream(key_file) << key.dump(2);
  }
  std::vector<ReplicateSummary> out;
  *total_seconds = 0.0;
  for (int r = 1; r <= sc.n_replicates; ++r) {
    const fs::path file = dir / ("replicate_" + std::to_string(r) + ".json");
    if (fs::exists(file)) {
      out.push_back(from_json(json::parse(read_file(file))));
    } else {
      const auto res = run_replicate(sc, r);
      ReplicateSummary s;
      s.ok = res.ok;
      s.error = res.error;
      s.seconds = res.seconds;
      for (const auto& p : res.parameters)
        if (p.block == "rho") s.truth_rho = p.truth;
      for (const auto& v : res.variants) {
        if (!v.rho) continue;
        VariantSummary vs;
        vs.rho_median = v.rho->median;
        vs.rho_lower = v.rho->lower;
        vs.rho_upper = v.rho->upper;
        for (const auto& m : v.metrics) {
          if (!m.auc.estimate) continue;
          if (m.stratum == Stratum::eta_unobserved) vs.auc_unobserved = *m.auc.estimate;
          if (m.stratum == Stratum::eta_observed) vs.auc_observed = *m.auc.estimate;
        }
        s.variants[v.name] = vs;
      }
      std::ofstream(file) << to_json(s).dump(2);
      std::fprintf(stderr, "replicate %d/%d %.1fs%s\n", r, sc.n_replicates, s.seconds,
                   s.ok ? "" : (" failed: " + s.error).c_str());
      out.push_back(s);
    }
    *total_seconds += out.back().seconds;
  }
  return out;
}

Outcome recovery() {
  double secs = 0.0;
  const auto reps = replication(&secs);
  int covered = 0, ok = 0;
  std::vector<double> bias;
  for (const auto& r : reps) {
    if (!r.ok || !r.variants.count("bs")) continue;
    ++ok;
    const auto& v = r.variants.at("bs");
    covered += v.rho_lower <= r.truth_rho && r.truth_rho <= v.rho_upper;
    bias.push_back(v.rho_median - r.truth_rho);
  }
  // failed replicates count as not covered
  const double coverage = static_cast<double>(covered) / static_cast<double>(reps.size());
  const double median_bias = bias.empty() ? NAN : quantile(bias, 0.5);
  const bool pass = ok == static_cast<int>(reps.size()) && coverage >= kCoverageLo && coverage <= kCoverageHi &&
                    std::abs(median_bias) < kRhoBiasMax && secs < kReplicationSeconds;
  return {pass, fmt("coverage=%.2f (%d/%zu) median_bias=%+.4f fitted=%d replicate_time=%.0fs", coverage, covered,
                    reps.size(), median_bias, ok, secs)};
}

Outcome mnar_gap() {
  double secs = 0.0;
  const auto reps = replication(&secs);
  double none = 0.0, bs = 0.0;
  int n = 0;
  for (const auto& r : reps) {
    if (!r.ok || !r.variants.count("bs") || !r.variants.count("none")) continue;
    bs += r.variants.at("bs").rho_median;
    none += r.variants.at("none").rho_median;
    ++n;
  }
  if (n == 0) return {false, "no fitted replicates"};
  bs /= n;
  none /= n;
  return {none - bs >= kMnarGap, fmt("mean median rho none=%.4f bs=%.4f gap=%.4f (n=%d)", none, bs, none - bs, n)};
}

Outcome predictive_ordering() {
  double secs = 0.0;
  const auto reps = replication(&secs);
  int wins = 0, n = 0, n_obs = 0;
  double obs_auc = 0.0;
  for (const auto& r : reps) {
    if (!r.ok || !r.variants.count("bs") || !r.variants.count("none")) continue;
    const auto& bs = r.variants.at("bs");
    const auto& none = r.variants.at("none");
    ++n;
    wins += !std::isnan(bs.auc_unobserved) && !std::isnan(none.auc_unobserved) &&
            bs.auc_unobserved > none.auc_unobserved;
    if (!std::isnan(bs.auc_observed)) {
      obs_auc += bs.auc_observed;
      ++n_obs;
    }
  }
  const double share = static_cast<double>(wins) / static_cast<double>(reps.size());
  const double mean_obs = n_obs ? obs_auc / n_obs : NAN;
  const bool pass = share >= kOrderingShare && mean_obs >= kObservedAucLo && mean_obs <= kObservedAucHi;
  return {pass, fmt("bs>none unobserved-stratum AUC in %d/%zu (%.2f); bs observed-stratum mean AUC=%.3f (n=%d)",
                    wins, reps.size(), share, mean_obs, n_obs)};
}

// ---- importance vs refit -----------------------------------------------------

Outcome importance_vs_loo() {
  const auto t0 = std::chrono::steady_clock::now();
  auto cfg = test::toy_config();
  cfg.sampler.n_chains = 4;
  cfg.sampler.n_iterations = 40000;
  cfg.sampler.burn_in = 2000;
  cfg.sampler.thin = 10;
  cfg.sampler.seed = 5;
  const auto cohort = test::toy_cohort(80, 31);
  const auto store = fit(cohort, cfg);
  const Predictor pred(store);
  double worst = 0.0;
  int used = 0;
  std::string detail;
  for (const auto& p : cohort) {
    if (!p.eta_observed) continue;
    const double imp = pred.importance(p).mean;
    const double loo = predict_eta_loo_refit(p.id, cohort, cfg).mean;
    worst = std::max(worst, std::abs(imp - loo));
    if (++used == kHeldOut) break;
  }
  const double secs = seconds_since(t0);
  return {used == kHeldOut && worst <= kLooTol && secs < kLooSeconds,
          fmt("max |importance - refit| = %.4f over %d held-out patients, %.1fs", worst, used, secs)};
}

// ---- metric oracles ---------------------------------------------------------

double pair_auc(const std::vector<double>& s, const std::vector<int>& y) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (y[i] == 1 && y[j] == 0) {
        den += 1.0;
        num += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
      }
  return num / den;
}

Eigen::Vector3d esl_row(double x, double lo, double k, double hi) {
  auto cube = [](double v) { return v > 0 ? v * v * v : 0.0; };
  auto d = [&](double knot) { return (cube(x - knot) - cube(x - hi)) / (hi - knot); };
  return {1.0, x, d(lo) - d(k)};
}

Eigen::Vector3d newton(const std::vector<Eigen::Vector3d>& rows, const std::vector<int>& y) {
  Eigen::Vector3d beta = Eigen::Vector3d::Zero();
  for (int it = 0; it < 200; ++it) {
    Eigen::Matrix3d h = Eigen::Matrix3d::Zero();
    Eigen::Vector3d g = Eigen::Vector3d::Zero();
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const double p = 1.0 / (1.0 + std::exp(-rows[i].dot(beta)));
      g += (y[i] - p) * rows[i];
      h += p * (1 - p) * rows[i] * rows[i].transpose();
    }
    const Eigen::Vector3d step = h.ldlt().solve(g);
    beta += step;
    if (step.norm() < 1e-13) break;
  }
  return beta;
}

Outcome metric_oracles() {
  Rng rng(2024);
  int auc_mismatch = 0, instances = 0;
  while (instances < kAucInstances) {
    const int n = 4 + static_cast<int>(rng.uniform() * 40);
    std::vector<double> s;
    std::vector<int> y;
    for (int i = 0; i < n; ++i) {
      y.push_back(rng.bernoulli(0.4) ? 1 : 0);
      s.push_back(std::round(4.0 * (rng.normal() + y.back())) / 4.0);
    }
    const auto pos = std::count(y.begin(), y.end(), 1);
    if (pos == 0 || pos == n) continue;
    ++instances;
    auc_mismatch += auc(s, y) != pair_auc(s, y);
  }

  double worst_cal = 0.0;
  int cal_fits = 0;
  for (int rep = 0; rep < 5; ++rep) {
    std::vector<double> p;
    std::vector<int> y;
    for (int i = 0; i < 400; ++i) {
      p.push_back(rng.uniform() * 0.8 + 0.1);
      y.push_back(rng.bernoulli(std::pow(p.back(), 1.3)) ? 1 : 0);
    }
    const auto cc = calibration_curve(p, y);
    if (!cc.converged) continue;
    ++cal_fits;
    const double lo = *std::min_element(p.begin(), p.end());
    const double hi = *std::max_element(p.begin(), p.end());
    const double k = quantile(p, 0.5);
    std::vector<Eigen::Vector3d> rows;
    for (double v : p) rows.push_back(esl_row(v, lo, k, hi));
    const auto beta = newton(rows, y);
    for (std::size_t g = 0; g < cc.grid.size(); ++g) {
      const double expected = 1.0 / (1.0 + std::exp(-esl_row(cc.grid[g], lo, k, hi).dot(beta)));
      worst_cal = std::max(worst_cal, std::abs(cc.fitted[g] - expected));
    }
  }

  std::vector<double> v;
  for (int i = 0; i < 200; ++i) v.push_back(rng.normal());
  const auto mean_of = [&](const std::vector<std::size_t>& idx) {
    double m = 0.0;
    for (auto i : idx) m += v[i];
    return m / static_cast<double>(idx.size());
  };
  const auto a = bootstrap_interval(mean_of, v.size(), 500, 77);
  const auto b = bootstrap_interval(mean_of, v.size(), 500, 77);
  const auto c = bootstrap_interval(mean_of, v.size(), 500, 78);
  const bool boot_same = a.lower == b.lower && a.upper == b.upper;
  const bool boot_differs = a.lower != c.lower || a.upper != c.upper;

  const bool pass = auc_mismatch == 0 && cal_fits == 5 && worst_cal <= kCalibrationTol && boot_same && boot_differs;
  return {pass, fmt("auc mismatches %d/%d; calibration max diff %.2e over %d fits; bootstrap repeat %s, reseed %s",
                    auc_mismatch, instances, worst_cal, cal_fits, boot_same ? "identical" : "DIFFERENT",
                    boot_differs ? "differs" : "IDENTICAL")};
}

// ---- determinism -------------------------------------------------------------

std::string directory_bytes(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::string out;
  for (const auto& f : files) out += fs::relative(f, dir).string() + "\n" + read_file(f);
  return out;
}

Outcome determinism() {
  const fs::path dir = g_cache_dir / "determinism";
  fs::remove_all(dir);
  const auto gen = test::toy_generating(60, 13);
  for (const char* run : {"a", "b"}) {
    const auto sim = simulate_cohort(gen);
    write_cohort(sim.cohort, dir / run / "cohort");
    write_truth(sim.truth, dir / run / "cohort" / "truth.csv");
    auto cfg = test::toy_config();
    cfg.sampler.n_iterations = 300;
    cfg.sampler.burn_in = 100;
    fit(read_cohort(dir / run / "cohort"), cfg).save(dir / run / "store");
  }
  const bool cohort_same = directory_bytes(dir / "a" / "cohort") == directory_bytes(dir / "b" / "cohort");
  const bool store_same = directory_bytes(dir / "a" / "store") == directory_bytes(dir / "b" / "store");
  fs::remove_all(dir);
  return {cohort_same && store_same, fmt("simulate %s, fit %s", cohort_same ? "byte-identical" : "DIFFERS",
                                         store_same ? "byte-identical" : "DIFFERS")};
}

// ---- service equivalence -----------------------------------------------------

double max_abs(const Eigen::MatrixXd& a, const json& b) {
  double worst = 0.0;
  for (Eigen::Index r = 0; r < a.rows(); ++r)
    for (Eigen::Index c = 0; c < a.cols(); ++c)
      worst = std::max(worst, std::abs(a(r, c) - b.at(static_cast<std::size_t>(r)).at(static_cast<std::size_t>(c)).get<double>()));
  return worst;
}

Outcome service_equivalence() {
  auto cfg = test::toy_config();
  cfg.sampler.n_iterations = 300;
  cfg.sampler.burn_in = 100;
  const auto cohort = test::toy_cohort(40, 17);
  const auto store = fit(cohort, cfg);
  const Predictor pred(store);
  RiskService svc(store);
  HttpServer server(svc);
  const int port = server.bind("127.0.0.1", 0);
  std::thread th([&] { server.listen(); });
  while (!server.running()) std::this_thread::sleep_for(std::chrono::milliseconds(5));
  httplib::Client http("127.0.0.1", port);

  const auto opts = RiskService::prediction_options();
  double worst = 0.0;
  int requests = 0, failures = 0;
  auto cmp = [&](double a, double b) { worst = std::max(worst, std::abs(a - b)); };
  auto cmp_report = [&](const json& j, const PredictionReport& r) {
    cmp(j.at("mean").get<double>(), r.mean);
    cmp(j.at("lower").get<double>(), r.lower);
    cmp(j.at("upper").get<double>(), r.upper);
  };
  std::vector<WhatIfScenario> scenarios(3);
  scenarios[1].biopsy_result = true;
  scenarios[2].biopsy_result = false;
  scenarios[2].surgery = false;

  for (const auto& p : cohort) {
    const auto body = patient_to_json(p).dump();
    const auto created = http.Post("/v1/patients", body, "application/json");
    ++requests;
    if (!created || created->status != 201) {
      ++failures;
      continue;
    }
    const auto token = json::parse(created->body).at("token").get<std::string>();
    const auto parsed = patient_from_json(patient_to_json(p));

    const auto risk = http.Get("/v1/patients/" + token + "/risk");
    ++requests;
    if (!risk || risk->status != 200) {
      ++failures;
      continue;
    }
    const auto rj = json::parse(risk->body);
    cmp_report(rj.at("posterior_p_eta"), pred.importance(parsed, opts));
    if (!parsed.psa.empty()) {
      const auto band = pred.trajectory(parsed, {}, opts);
      worst = std::max(worst, max_abs(band.log_psa, rj.at("trajectory").at("log_psa")));
      if (band.has_reclass()) worst = std::max(worst, max_abs(band.reclass, rj.at("trajectory").at("reclass")));
    }

    const bool open = !p.reclassified_ever() && !p.had_surgery();
    for (const auto& sc : scenarios) {
      if (!open && !sc.empty()) continue;
      const auto w = http.Post("/v1/patients/" + token + "/whatif", sc.to_json().dump(), "application/json");
      ++requests;
      if (!w || w->status != 200) {
        ++failures;
        continue;
      }
      const auto wj = json::parse(w->body);
      const auto lib = pred.whatif(parsed, sc, {}, opts);
      cmp_report(wj.at("base").at("posterior_p_eta"), lib.base);
      cmp_report(wj.at("scenario").at("posterior_p_eta"), lib.scenario);
      cmp(wj.at("delta").get<double>(), lib.delta);
    }
  }
  server.stop();
  th.join();
  return {failures == 0 && worst <= kServiceTol,
          fmt("%d requests, %d failed, max |service - library| = %.2e", requests, failures, worst)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"full-conditionals", full_conditionals},
      {"geweke", geweke},
      {"recovery", recovery},
      {"mnar-gap", mnar_gap},
      {"predictive-ordering", predictive_ordering},
      {"importance-vs-loo", importance_vs_loo},
      {"metric-oracles", metric_oracles},
      {"determinism", determinism},
      {"service-equivalence", service_equivalence},
  };
  std::string only;
  for (int a = 1; a < argc; ++a) {
    const std::string arg = argv[a];
    if (arg == "--only" && a + 1 < argc) {
      only = argv[++a];
    } else if (arg == "--cache" && a + 1 < argc) {
      g_cache_dir = argv[++a];
    } else {
      std::fprintf(stderr, "usage: asurv_acceptance [--only NAME] [--cache DIR]\n");
      return 2;
    }
  }
  if (!only.empty() && std::none_of(criteria.begin(), criteria.end(), [&](auto& c) { return c.first == only; })) {
    std::fprintf(stderr, "unknown criterion %s\n", only.c_str());
    return 2;
  }
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    if (!only.empty() && name != only) continue;
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s %s %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
    std::fflush(stdout);
    failed += !o.pass;
  }
  return failed ? 1 : 0;
}
