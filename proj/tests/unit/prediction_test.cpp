#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "asurv/prediction.hpp"
#include "asurv/sampler.hpp"
#include "fixtures.hpp"

using namespace asurv;
using Catch::Approx;

namespace {

// Log of the integral of exp(naive PSA + class-k random-effect prior) over b_check,
// with its normalized mean, by a fine rectangular grid.
struct GridIntegral {
  double log_value = 0.0;
  Eigen::Vector2d mean;
};

GridIntegral integrate_class(const PatientRecord& p, const ParameterState& s, int k) {
  const int n = 801;
  const Eigen::Vector2d half(6.0 * std::sqrt(s.sigma_b[k](0, 0)), 6.0 * std::sqrt(s.sigma_b[k](1, 1)));
  const Eigen::Vector2d lo = s.mu[k] - half;
  const double h0 = 2.0 * half[0] / (n - 1), h1 = 2.0 * half[1] / (n - 1);
  std::vector<double> lw;
  lw.reserve(static_cast<std::size_t>(n) * n);
  double mx = -INFINITY;
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) {
      const Eigen::Vector2d x(lo[0] + h0 * a, lo[1] + h1 * b);
      lw.push_back(test::naive_psa(p, s, x) + test::naive_mvn2(x, s.mu[k], s.sigma_b[k]));
      mx = std::max(mx, lw.back());
    }
  double z = 0.0;
  Eigen::Vector2d m = Eigen::Vector2d::Zero();
  std::size_t idx = 0;
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b, ++idx) {
      const double w = std::exp(lw[idx] - mx);
      z += w;
      m += w * Eigen::Vector2d(lo[0] + h0 * a, lo[1] + h1 * b);
    }
  return {mx + std::log(z * h0 * h1), m / z};
}

// Hand-computed state probability for a single population draw.
double oracle_probability(const PatientRecord& p, const ParameterState& s, IopFlags iop, double* lw_out = nullptr) {
  double lw[2];
  for (int k = 0; k < 2; ++k) {
    lw[k] = integrate_class(p, s, k).log_value + std::log(k ? s.rho : 1.0 - s.rho);
    lw[k] += test::naive_reclass(p, s, k);
    if (iop.biopsy) lw[k] += test::naive_biopsy(p, s, k);
    if (iop.surgery) lw[k] += test::naive_surgery(p, s, k);
  }
  const double mx = std::max(lw[0], lw[1]);
  if (lw_out) *lw_out = mx + std::log(std::exp(lw[0] - mx) + std::exp(lw[1] - mx));
  return 1.0 / (1.0 + std::exp(lw[0] - lw[1]));
}

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// First simulated patient satisfying `pred`.
template <class F>
PatientRecord pick_patient(const Cohort& c, F pred) {
  for (const auto& p : c)
    if (pred(p)) return p;
  FAIL("no patient matches");
  return {};
}

}  // namespace

TEST_CASE("augmented path summarizes stored draws", "[prediction][augmented]") {
  const auto cohort = test::toy_cohort(10, 4);
  auto cfg = test::toy_config();
  cfg.sampler.n_iterations = 40;
  cfg.sampler.burn_in = 20;
  cfg.sampler.thin = 1;
  auto st = fit(cohort, cfg);
  int idx = -1;
  for (int i = 0; i < st.n_patients; ++i)
    if (!st.eta_observed[static_cast<std::size_t>(i)]) idx = i;
  REQUIRE(idx >= 0);
  const std::string id = st.ids[static_cast<std::size_t>(idx)];

  SECTION("all draws in state 1 give probability 1") {
    for (auto& ch : st.chains) {
      ch.eta.col(idx).setOnes();
      ch.p_eta.col(idx).setConstant(0.7);
    }
    const auto r = Predictor(st).augmented(id);
    CHECK(r.mean == 1.0);
    CHECK(r.lower == Approx(0.7));
    CHECK(r.upper == Approx(0.7));
    CHECK(r.n_draws == st.total_draws());
  }
  SECTION("mean is the frequency of sampled states") {
    double expected = 0.0;
    for (const auto& ch : st.chains) expected += ch.eta.col(idx).cast<double>().sum();
    expected /= st.total_draws();
    CHECK(Predictor(st).augmented(id).mean == Approx(expected).margin(1e-15));
  }
  SECTION("observed and unknown patients are rejected") {
    CHECK_THROWS_AS(Predictor(st).augmented("nobody"), InputError);
    for (int i = 0; i < st.n_patients; ++i)
      if (st.eta_observed[static_cast<std::size_t>(i)])
        CHECK_THROWS_AS(Predictor(st).augmented(st.ids[static_cast<std::size_t>(i)]), InputError);
  }
  SECTION("predict routes fitted patients to the augmented path") {
    const auto& p = cohort[static_cast<std::size_t>(idx)];
    REQUIRE(p.id == id);
    CHECK(Predictor(st).predict(p).method == PredictionMethod::augmented);
    auto renamed = p;
    renamed.id = "new-" + p.id;
    CHECK(Predictor(st).predict(renamed).method == PredictionMethod::importance);
  }
}

TEST_CASE("importance path with one population draw", "[prediction][importance]") {
  const auto cfg = test::toy_config();
  const auto s = test::toy_params();
  const auto store = store_from_draws({s}, cfg);
  const Predictor pred(store);
  const auto cohort = test::toy_cohort(40, 8);

  SECTION("collapsed PSA likelihood and conditional means match grid integration") {
    for (int k = 0; k < 5; ++k) {
      const auto& p = cohort[static_cast<std::size_t>(k)];
      const auto t = pred.importance_terms(p);
      for (int e = 0; e < 2; ++e) {
        const auto g = integrate_class(p, s, e);
        CHECK(t.log_lik[e][0] == Approx(g.log_value).epsilon(1e-8).margin(1e-8));
        CHECK((t.cond_mean[e][0] - g.mean).cwiseAbs().maxCoeff() < 1e-6);
      }
    }
  }
  SECTION("state probability matches enumeration under every IOP setting") {
    for (const auto* flags : {"none", "b", "s", "bs"}) {
      const auto iop = IopFlags::parse(flags);
      for (int k = 0; k < 5; ++k) {
        const auto& p = cohort[static_cast<std::size_t>(k)];
        const auto r = pred.importance(p, {.iop = iop});
        CHECK(r.mean == Approx(oracle_probability(p, s, iop)).margin(1e-6));
        CHECK(r.ess == Approx(1.0));
      }
    }
  }
  SECTION("a patient with no data returns rho") {
    PatientRecord empty;
    empty.id = "EMPTY";
    const auto r = pred.importance(empty);
    CHECK(r.mean == Approx(s.rho).margin(1e-14));
  }
}

TEST_CASE("importance weighting across draws", "[prediction][importance]") {
  const auto cfg = test::toy_config();
  auto a = test::toy_params();
  auto b = test::toy_params();
  b.rho = 0.6;
  b.gamma[2] = 0.5;
  b.mu[1][0] = 1.7;
  const auto store = store_from_draws({a, b}, cfg);
  const Predictor pred(store);
  const auto cohort = test::toy_cohort(20, 9);

  SECTION("no data gives the mean rho with equal weights") {
    PatientRecord empty;
    empty.id = "EMPTY";
    const auto r = pred.importance(empty);
    CHECK(r.mean == Approx(0.5 * (a.rho + b.rho)).margin(1e-14));
    CHECK(r.ess == Approx(2.0));
    CHECK_FALSE(r.ess_flagged);
  }
  SECTION("weights are the per-draw marginal likelihoods") {
    const auto& p = cohort[3];
    double la = 0.0, lb = 0.0;
    const IopFlags iop = cfg.iop;
    const double pa = oracle_probability(p, a, iop, &la);
    const double pb = oracle_probability(p, b, iop, &lb);
    const double wa = 1.0 / (1.0 + std::exp(lb - la));
    const auto r = pred.importance(p);
    CHECK(r.mean == Approx(wa * pa + (1.0 - wa) * pb).margin(1e-6));
    const auto t = pred.importance_terms(p);
    CHECK(t.log_weight[1] - t.log_weight[0] == Approx(lb - la).margin(1e-6));
  }
}

TEST_CASE("held-out store patients", "[prediction][importance]") {
  const auto cohort = test::toy_cohort(30, 12);
  auto cfg = test::toy_config();
  cfg.sampler.n_iterations = 40;
  cfg.sampler.burn_in = 20;
  cfg.sampler.thin = 1;
  cfg.sampler.n_chains = 1;
  const auto st = fit(cohort, cfg);
  const Predictor pred(st);
  const auto observed = pick_patient(cohort, [](const PatientRecord& p) { return p.eta_observed.has_value(); });
  const auto held = pred.importance_terms(observed);
  const auto fresh = pred.importance_terms(observed, {.match_store_patient = false});
  const int e = *observed.eta_observed;
  for (std::size_t t = 0; t < held.log_weight.size(); ++t) {
    // held-out weight is the fresh weight divided by the own-state term
    const double own = std::log(e ? held.p_eta[t] : 1.0 - held.p_eta[t]) + fresh.log_weight[t];
    CHECK(held.log_weight[t] == Approx(fresh.log_weight[t] - own).margin(1e-9));
    CHECK(held.p_eta[t] == Approx(fresh.p_eta[t]).margin(1e-12));
  }
}

TEST_CASE("trajectory bands", "[prediction][trajectory]") {
  const auto cfg = test::toy_config();
  auto s = test::toy_params();
  const auto cohort = test::toy_cohort(40, 21);
  const auto p = pick_patient(cohort, [](const PatientRecord& r) {
    return !r.reclassified_ever() && !r.had_surgery() && r.psa.size() >= 2;
  });

  SECTION("single draw matches a hand computation") {
    const auto store = store_from_draws({s}, cfg);
    const std::vector<double> ages{p.psa.back().age, p.psa.back().age + 1.5, p.psa.back().age + 4.0};
    const auto band = Predictor(store).trajectory(p, ages);
    const double pe = oracle_probability(p, s, cfg.iop);
    const auto m0 = integrate_class(p, s, 0).mean;
    const auto m1 = integrate_class(p, s, 1).mean;
    const Eigen::Vector2d eff = (1.0 - pe) * m0 + pe * m1;
    REQUIRE(band.has_reclass());
    for (std::size_t a = 0; a < ages.size(); ++a) {
      const double z1 = (ages[a] - 67.0) / 7.0;
      const double expected =
          s.beta[0] * (p.psa.back().volume - 50.0) / 20.0 + s.xi[0] * eff[0] + s.xi[1] * eff[1] * z1;
      const auto row = static_cast<Eigen::Index>(a);
      CHECK(band.log_psa(row, 0) == Approx(expected).margin(1e-6));
      CHECK(band.log_psa(row, band.log_psa.cols() - 1) == Approx(expected).margin(1e-6));
      const double rc = (1.0 - pe) * logistic(s.gamma[0] + s.gamma[1] * z1) +
                        pe * logistic(s.gamma[0] + s.gamma[1] * z1 + s.gamma[2]);
      CHECK(band.reclass(row, 0) == Approx(rc).margin(1e-6));
    }
  }
  SECTION("zero reclassification coefficients give one half") {
    s.gamma.setZero();
    const auto store = store_from_draws({s, test::toy_params()}, cfg);
    auto two = s;
    two.gamma.setZero();
    two.rho = 0.5;
    const auto band = Predictor(store_from_draws({s, two}, cfg)).trajectory(p);
    REQUIRE(band.has_reclass());
    CHECK(band.reclass.minCoeff() == Approx(0.5).margin(1e-12));
    CHECK(band.reclass.maxCoeff() == Approx(0.5).margin(1e-12));
  }
  SECTION("bands are continuous and ordered across levels") {
    auto cfg2 = cfg;
    cfg2.sampler.n_iterations = 200;
    cfg2.sampler.burn_in = 100;
    cfg2.sampler.n_chains = 1;
    const auto st = fit(cohort, cfg2);
    auto fresh = p;
    fresh.id = "new";
    const double a0 = p.psa.back().age + 2.0;
    const auto band = Predictor(st).trajectory(fresh, {a0, a0 + 1e-4});
    for (Eigen::Index q = 0; q < band.log_psa.cols(); ++q) {
      CHECK(std::abs(band.log_psa(1, q) - band.log_psa(0, q)) < 1e-2);
      if (q > 0) CHECK(band.log_psa(0, q) >= band.log_psa(0, q - 1));
    }
    CHECK(band.levels.size() == 21);
    CHECK(band.levels[10] == 0.5);
  }
  SECTION("reclassified and operated patients omit the reclassification band") {
    const auto store = store_from_draws({s}, cfg);
    const auto r = pick_patient(cohort, [](const PatientRecord& x) { return x.reclassified_ever(); });
    const auto band = Predictor(store).trajectory(r);
    CHECK_FALSE(band.has_reclass());
    CHECK_FALSE(band.reclass_note.empty());
  }
  SECTION("a patient without PSA has no trajectory") {
    const auto store = store_from_draws({s}, cfg);
    PatientRecord empty;
    empty.id = "E";
    CHECK_THROWS_AS(Predictor(store).trajectory(empty), InputError);
  }
}

TEST_CASE("what-if scenarios", "[prediction][whatif]") {
  const auto cfg = test::toy_config();
  const auto s = test::toy_params();
  const auto store = store_from_draws({s}, cfg);
  const Predictor pred(store);
  const auto cohort = test::toy_cohort(40, 31);
  const auto p = pick_patient(cohort, [](const PatientRecord& r) {
    return !r.reclassified_ever() && !r.had_surgery() && !r.psa.empty();
  });

  SECTION("empty scenario changes nothing") {
    const auto w = pred.whatif(p, WhatIfScenario{});
    CHECK(w.delta == 0.0);
    CHECK(w.scenario.mean == w.base.mean);
  }
  SECTION("future PSA equals scoring the extended record") {
    WhatIfScenario sc;
    sc.psa.push_back({p.psa.back().age + 0.5, p.psa.back().log_psa + 0.8, p.psa.back().volume});
    auto extended = p;
    extended.psa.push_back(sc.psa[0]);
    const auto w = pred.whatif(p, sc);
    CHECK(w.scenario.mean == Approx(oracle_probability(extended, s, cfg.iop)).margin(1e-6));
    CHECK(w.delta == Approx(w.scenario.mean - w.base.mean).margin(1e-15));
  }
  SECTION("a positive biopsy raises the risk when the state raises reclassification") {
    REQUIRE(s.gamma[2] > 0);
    WhatIfScenario sc;
    sc.biopsy_result = true;
    CHECK(pred.whatif(p, sc).delta > 0.0);
    sc.biopsy_result = false;
    CHECK(pred.whatif(p, sc).delta < 0.0);
  }
  SECTION("biopsy scenarios after reclassification are rejected") {
    const auto r = pick_patient(cohort, [](const PatientRecord& x) { return x.reclassified_ever() && !x.had_surgery(); });
    WhatIfScenario sc;
    sc.biopsy_result = true;
    CHECK_THROWS_AS(pred.whatif(r, sc), InputError);
  }
  SECTION("scenario JSON round trip") {
    WhatIfScenario sc;
    sc.psa.push_back({70.0, 1.2, 40.0});
    sc.biopsy_result = false;
    sc.surgery = true;
    const auto back = WhatIfScenario::from_json(sc.to_json());
    CHECK(back.to_json() == sc.to_json());
    CHECK_FALSE(back.empty());
    CHECK(WhatIfScenario{}.empty());
  }
}

TEST_CASE("weighted quantile", "[prediction][quantile]") {
  const std::vector<double> v{3.0, 1.0, 2.0, 4.0};
  CHECK(weighted_quantile(v, {1, 1, 1, 1}, 0.5) == 2.0);
  CHECK(weighted_quantile(v, {1, 1, 1, 1}, 0.0) == 1.0);
  CHECK(weighted_quantile(v, {1, 1, 1, 1}, 1.0) == 4.0);
  CHECK(weighted_quantile(v, {0, 1, 0, 0}, 0.9) == 1.0);
  CHECK(weighted_quantile(v, {1, 0, 0, 3}, 0.3) == 4.0);
  CHECK_THROWS_AS(weighted_quantile(v, {0, 0, 0, 0}, 0.5), InputError);
  CHECK_THROWS_AS(weighted_quantile({}, {}, 0.5), InputError);
}
