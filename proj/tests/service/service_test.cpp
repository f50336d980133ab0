#include <catch2/catch_amalgamated.hpp>

#include <set>
#include <thread>

#include "asurv/sampler.hpp"
#include "asurv/service.hpp"
#include "fixtures.hpp"

#include <httplib.h>

using namespace asurv;
using nlohmann::json;
using Catch::Approx;

namespace {

const PosteriorStore& fitted_store() {
  static const PosteriorStore st = [] {
    auto cfg = test::toy_config();
    cfg.sampler.n_iterations = 120;
    cfg.sampler.burn_in = 60;
    return fit(test::toy_cohort(40, 2), cfg);
  }();
  return st;
}

const Cohort& cohort() {
  static const Cohort c = test::toy_cohort(40, 2);
  return c;
}

std::string submit(RiskService& svc, const PatientRecord& p) {
  const auto r = svc.handle("POST", "/v1/patients", patient_to_json(p).dump());
  REQUIRE(r.status == 201);
  return r.body.at("token").get<std::string>();
}

void check_error_envelope(const ApiResponse& r, int status, const std::string& code) {
  CHECK(r.status == status);
  CHECK(r.body.at("code") == code);
  CHECK(r.body.at("message").is_string());
  CHECK(r.body.at("fields").is_array());
}

PatientRecord open_patient() {
  for (const auto& p : cohort())
    if (!p.reclassified_ever() && !p.had_surgery()) return p;
  FAIL("no open patient");
  return {};
}

}  // namespace

TEST_CASE("risk matches the library prediction", "[service]") {
  RiskService svc(fitted_store());
  const Predictor pred(fitted_store());
  for (std::size_t i = 0; i < 8; ++i) {
    const auto& p = cohort()[i];
    const auto token = submit(svc, p);
    const auto r = svc.handle("GET", "/v1/patients/" + token + "/risk", "");
    REQUIRE(r.status == 200);
    const auto parsed = patient_from_json(patient_to_json(p));
    const auto lib = pred.importance(parsed, RiskService::prediction_options());
    CHECK(r.body["posterior_p_eta"]["mean"].get<double>() == Approx(lib.mean).margin(1e-9));
    CHECK(r.body["posterior_p_eta"]["lower"].get<double>() == Approx(lib.lower).margin(1e-9));
    CHECK(r.body["posterior_p_eta"]["upper"].get<double>() == Approx(lib.upper).margin(1e-9));
    CHECK(r.body["method"] == "importance");
    CHECK(r.body["token"] == token);
    // fitted ids are still scored as new patients
    CHECK(pred.importance(p, {.match_store_patient = false}).mean == Approx(lib.mean).margin(1e-9));
    const auto band = pred.trajectory(parsed, {}, RiskService::prediction_options());
    CHECK(r.body["trajectory"]["log_psa"] == band.to_json()["log_psa"]);
  }
}

TEST_CASE("what-if responses", "[service]") {
  const auto cfg = test::toy_config();
  auto a = test::toy_params();
  auto b = test::toy_params();
  b.gamma[2] = 0.9;
  b.rho = 0.45;
  REQUIRE(a.gamma[2] > 0);
  const auto store = store_from_draws({a, b}, cfg);
  RiskService svc(store);
  const Predictor pred(store);
  const auto p = open_patient();
  const auto token = submit(svc, p);
  const auto path = "/v1/patients/" + token + "/whatif";

  SECTION("empty scenario has zero delta") {
    const auto r = svc.handle("POST", path, "{}");
    REQUIRE(r.status == 200);
    CHECK(r.body["delta"].get<double>() == 0.0);
  }
  SECTION("positive biopsy raises the risk and matches the library") {
    const auto r = svc.handle("POST", path, R"({"biopsy_result": true})");
    REQUIRE(r.status == 200);
    CHECK(r.body["delta"].get<double>() >= 0.0);
    WhatIfScenario sc;
    sc.biopsy_result = true;
    const auto lib = pred.whatif(patient_from_json(patient_to_json(p)), sc, {}, RiskService::prediction_options());
    CHECK(r.body["delta"].get<double>() == Approx(lib.delta).margin(1e-9));
    CHECK(r.body["scenario"]["posterior_p_eta"]["mean"].get<double>() == Approx(lib.scenario.mean).margin(1e-9));
    CHECK(r.body["request"]["biopsy_result"] == true);
  }
  SECTION("hand computation on two draws") {
    const auto parsed = patient_from_json(patient_to_json(p));
    const auto base = pred.importance_terms(parsed, RiskService::prediction_options());
    const auto r = svc.handle("POST", path, R"({"biopsy_result": true, "surgery": false})");
    REQUIRE(r.status == 200);
    auto extended = parsed;
    IntervalRecord iv;
    const auto& last = parsed.intervals.back();
    iv.index = last.index + 1;
    iv.biopsy = true;
    iv.biopsy_count = 1;
    iv.reclassified = true;
    iv.cov = last.cov;
    iv.cov.time_since_dx += 1.0;
    iv.cov.date += 1.0;
    iv.cov.age += 1.0;
    iv.cov.num_prev_biopsies = last.cov.num_prev_biopsies + last.biopsy_count;
    iv.cov.prev_reclass = last.cov.prev_reclass || last.reclassified.value_or(false);
    extended.intervals.push_back(iv);
    const auto ext = pred.importance(extended, RiskService::prediction_options());
    CHECK(r.body["scenario"]["posterior_p_eta"]["mean"].get<double>() == Approx(ext.mean).margin(1e-9));
    CHECK(base.p_eta.size() == 2);
  }
  SECTION("invalid scenarios") {
    check_error_envelope(svc.handle("POST", path, R"({"biopsy_result": "yes"})"), 422, "invalid_scenario");
    check_error_envelope(svc.handle("POST", path, R"({"unknown": 1})"), 422, "invalid_scenario");
    check_error_envelope(svc.handle("POST", path, "{not json"), 400, "malformed_json");
  }
}

TEST_CASE("routing and errors", "[service]") {
  RiskService svc(fitted_store());
  check_error_envelope(svc.handle("GET", "/v1/nothing", ""), 404, "not_found");
  check_error_envelope(svc.handle("GET", "/v1/patients/abc/risk", ""), 404, "unknown_token");
  const auto r405 = svc.handle("DELETE", "/v1/model/meta", "");
  check_error_envelope(r405, 405, "method_not_allowed");
  CHECK(r405.body["allow"] == "GET");
  check_error_envelope(svc.handle("GET", "/v1/patients", ""), 405, "method_not_allowed");

  SECTION("field-level validation errors") {
    auto j = patient_to_json(cohort()[0]);
    j["psa"][0]["psa"] = -1.0;
    j["extra"] = true;
    const auto r = svc.handle("POST", "/v1/patients", j.dump());
    check_error_envelope(r, 422, "validation_failed");
    std::set<std::string> fields;
    for (const auto& f : r.body["fields"]) fields.insert(f["field"].get<std::string>());
    CHECK(fields.count("psa[0].psa") == 1);
    CHECK(fields.count("extra") == 1);
  }
  SECTION("no store loaded") {
    RiskService empty(std::nullopt);
    check_error_envelope(empty.handle("GET", "/v1/model/meta", ""), 503, "store_not_loaded");
    const auto t = empty.handle("POST", "/v1/patients", patient_to_json(cohort()[0]).dump());
    REQUIRE(t.status == 201);
    check_error_envelope(empty.handle("GET", "/v1/patients/" + t.body["token"].get<std::string>() + "/risk", ""), 503,
                         "store_not_loaded");
  }
  SECTION("openapi document") {
    const auto r = svc.handle("GET", "/v1/openapi.json", "");
    CHECK(r.status == 200);
    CHECK(r.body["servers"][0]["url"] == "/v1");
    for (const char* route : {"/patients", "/patients/{token}/risk", "/patients/{token}/whatif", "/model/meta"})
      CHECK(r.body["paths"].contains(route));
  }
}

TEST_CASE("sessions and metadata", "[service]") {
  RiskService svc(fitted_store());
  SECTION("patient without data gets the mean rho") {
    PatientRecord empty;
    empty.id = "EMPTY";
    const auto token = submit(svc, empty);
    const auto r = svc.handle("GET", "/v1/patients/" + token + "/risk", "");
    REQUIRE(r.status == 200);
    double mean_rho = 0.0;
    for (double v : fitted_store().pooled_rho()) mean_rho += v;
    mean_rho /= fitted_store().total_draws();
    CHECK(r.body["posterior_p_eta"]["mean"].get<double>() == Approx(mean_rho).margin(1e-12));
    CHECK_FALSE(r.body.contains("trajectory"));
  }
  SECTION("duplicate submissions get fresh tokens") {
    const auto a = submit(svc, cohort()[1]);
    const auto b = submit(svc, cohort()[1]);
    CHECK(a != b);
    CHECK(svc.session_count() == 2);
    CHECK(svc.handle("GET", "/v1/patients/" + a + "/risk", "").body["posterior_p_eta"] ==
          svc.handle("GET", "/v1/patients/" + b + "/risk", "").body["posterior_p_eta"]);
  }
  SECTION("meta is stable and reports the fit") {
    const auto m1 = svc.handle("GET", "/v1/model/meta", "");
    const auto m2 = svc.handle("GET", "/v1/model/meta", "");
    REQUIRE(m1.status == 200);
    CHECK(m1.body == m2.body);
    CHECK(m1.body["fingerprint"] == fitted_store().fingerprint);
    CHECK(m1.body["iop"] == "bs");
    CHECK(m1.body["draws"]["total"] == fitted_store().total_draws());
  }
  SECTION("concurrent identical requests agree") {
    const auto token = submit(svc, cohort()[2]);
    const auto expected = svc.handle("GET", "/v1/patients/" + token + "/risk", "").body.dump();
    std::vector<std::thread> threads;
    std::atomic<int> mismatches{0};
    for (int t = 0; t < 6; ++t)
      threads.emplace_back([&] {
        for (int k = 0; k < 5; ++k)
          if (svc.handle("GET", "/v1/patients/" + token + "/risk", "").body.dump() != expected) ++mismatches;
        (void)svc.create_patient(patient_to_json(cohort()[3]).dump());
      });
    for (auto& th : threads) th.join();
    CHECK(mismatches == 0);
    CHECK(svc.session_count() == 7);
  }
}

TEST_CASE("HTTP front end", "[service][http]") {
  RiskService svc(fitted_store());
  HttpServer server(svc);
  const int port = server.bind("127.0.0.1", 0);
  REQUIRE(port > 0);
  std::thread th([&] { server.listen(); });
  while (!server.running()) std::this_thread::sleep_for(std::chrono::milliseconds(5));

  httplib::Client cli("127.0.0.1", port);
  const auto created = cli.Post("/v1/patients", patient_to_json(cohort()[4]).dump(), "application/json");
  REQUIRE(created);
  CHECK(created->status == 201);
  CHECK(created->get_header_value("Access-Control-Allow-Origin") == "*");
  const auto token = json::parse(created->body)["token"].get<std::string>();

  const auto risk = cli.Get("/v1/patients/" + token + "/risk");
  REQUIRE(risk);
  CHECK(risk->status == 200);
  CHECK(json::parse(risk->body) == svc.handle("GET", "/v1/patients/" + token + "/risk", "").body);

  const auto missing = cli.Get("/v1/patients/none/risk");
  REQUIRE(missing);
  CHECK(missing->status == 404);
  CHECK(json::parse(missing->body)["code"] == "unknown_token");

  const auto pre = cli.Options("/v1/patients");
  REQUIRE(pre);
  CHECK(pre->status == 204);
  CHECK(pre->get_header_value("Access-Control-Allow-Methods").find("POST") != std::string::npos);

  const auto wrong = cli.Put("/v1/model/meta", "", "application/json");
  REQUIRE(wrong);
  CHECK(wrong->status == 405);

  server.stop();
  th.join();
}
