#include "asurv/service.hpp"

#include <mutex>
#include <random>
#include <regex>

#include <httplib.h>

#include "asurv/evaluation.hpp"
#include "asurv/sampler.hpp"
#include "asurv/validation.hpp"

namespace asurv {

namespace {

using nlohmann::json;

json fields_json(const std::vector<FieldError>& fields) {
  json out = json::array();
  for (const auto& f : fields) out.push_back({{"field", f.field}, {"message", f.message}});
  return out;
}

std::optional<json> parse_body(const std::string& body, ApiResponse& err) {
  try {
    return json::parse(body.empty() ? std::string("{}") : body);
  } catch (const json::parse_error& e) {
    err = api_error(400, "malformed_json", std::string("request body is not valid JSON: ") + e.what());
    return std::nullopt;
  }
}

ApiResponse not_loaded() { return api_error(503, "store_not_loaded", "no posterior store is loaded"); }

ApiResponse unknown_token(const std::string& token) {
  return api_error(404, "unknown_token", "no patient session for token '" + token + "'");
}

}  // namespace

ApiResponse api_error(int status, std::string code, std::string message, const std::vector<FieldError>& fields) {
  return {status, {{"code", std::move(code)}, {"message", std::move(message)}, {"fields", fields_json(fields)}}};
}

RiskService::RiskService(std::optional<PosteriorStore> store, ServiceOptions opts) : opts_(std::move(opts)) {
  if (store) {
    store_ = std::make_unique<const PosteriorStore>(std::move(*store));
    predictor_ = std::make_unique<const Predictor>(*store_);
  }
  std::random_device rd;
  token_state_ = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
}

std::size_t RiskService::session_count() const {
  std::shared_lock lock(mutex_);
  return sessions_.size();
}

ImportanceOptions RiskService::prediction_options() {
  ImportanceOptions o;
  o.match_store_patient = false;
  return o;
}

std::string RiskService::new_token() {
  // Caller holds the unique lock.
  std::mt19937_64 gen(token_state_);
  token_state_ = gen();
  std::string token;
  for (int k = 0; k < 2; ++k) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(gen()));
    token += buf;
  }
  return token;
}

std::optional<RiskService::Session> RiskService::session(const std::string& token) const {
  std::shared_lock lock(mutex_);
  auto it = sessions_.find(token);
  if (it == sessions_.end()) return std::nullopt;
  return it->second;
}

ApiResponse RiskService::create_patient(const std::string& body) {
  ApiResponse err;
  const auto j = parse_body(body, err);
  if (!j) return err;

  std::vector<FieldError> errors;
  Session s;
  s.patient = patient_from_json(*j, errors);
  if (errors.empty()) {
    const auto rep = validate_patient(s.patient, {.relaxed = true});
    for (const auto& v : rep.violations) errors.push_back({v.field, v.message});
    for (const auto& v : rep.warnings) s.warnings.push_back({v.field, v.message});
  }
  if (!errors.empty()) return api_error(422, "validation_failed", "patient failed validation", errors);

  const bool provisional = !s.warnings.empty();
  json warnings = fields_json(s.warnings);
  std::string token;
  {
    std::unique_lock lock(mutex_);
    if (sessions_.size() >= opts_.max_sessions)
      return api_error(503, "session_limit", "session registry is full");
    do {
      token = new_token();
    } while (sessions_.count(token));
    sessions_.emplace(token, std::move(s));
  }
  return {201, {{"token", token}, {"provisional", provisional}, {"validation_warnings", warnings}}};
}

ApiResponse RiskService::risk(const std::string& token) const {
  if (!loaded()) return not_loaded();
  const auto s = session(token);
  if (!s) return unknown_token(token);
  try {
    const auto opts = prediction_options();
    auto report = predictor_->importance(s->patient, opts);
    if (opts_.trajectory && !s->patient.psa.empty()) report.trajectory = predictor_->trajectory(s->patient, {}, opts);
    auto body = report.to_json();
    body["token"] = token;
    body["provisional"] = !s->warnings.empty();
    body["validation_warnings"] = fields_json(s->warnings);
    return {200, std::move(body)};
  } catch (const InputError& e) {
    return api_error(422, "unpredictable_patient", e.what());
  } catch (const NumericalError& e) {
    return api_error(500, "numerical_failure", e.what());
  }
}

ApiResponse RiskService::whatif(const std::string& token, const std::string& body) const {
  if (!loaded()) return not_loaded();
  const auto s = session(token);
  if (!s) return unknown_token(token);
  ApiResponse err;
  const auto j = parse_body(body, err);
  if (!j) return err;
  try {
    const auto scenario = WhatIfScenario::from_json(*j);
    auto result = predictor_->whatif(s->patient, scenario, {}, prediction_options());
    auto out = result.to_json();
    out["token"] = token;
    out["request"] = scenario.to_json();
    return {200, std::move(out)};
  } catch (const InputError& e) {
    return api_error(422, "invalid_scenario", e.what(), {{"scenario", e.what()}});
  } catch (const NumericalError& e) {
    return api_error(500, "numerical_failure", e.what());
  }
}

ApiResponse RiskService::meta() const {
  if (!loaded()) return not_loaded();
  const auto& st = *store_;
  const auto cfg = st.config.to_json();
  json per_chain = json::array();
  for (const auto& c : st.chains) per_chain.push_back(c.draws);
  const auto rho = summarize_rho(st);
  return {200,
          {{"fingerprint", st.fingerprint},
           {"iop", st.config.iop.str()},
           {"engine_version", engine_version()},
           {"store_engine_version", st.engine_version},
           {"store_format_version", kStoreFormatVersion},
           {"draws", {{"chains", st.chains.size()}, {"per_chain", per_chain}, {"total", st.total_draws()}}},
           {"n_patients", st.n_patients},
           {"dims", {{"x", st.dim_x}, {"z", st.dim_z}}},
           {"covariates", cfg.at("covariates")},
           {"eta_interactions", cfg.at("eta_interactions")},
           {"priors", cfg.at("priors")},
           {"sampler", cfg.at("sampler")},
           {"rho", {{"median", rho.median}, {"lower", rho.lower}, {"upper", rho.upper}}},
           {"importance_ess_floor", kImportanceEssFloor}}};
}

ApiResponse RiskService::handle(const std::string& method, const std::string& path, const std::string& body) {
  static const std::regex patient_route("^/v1/patients/([^/]+)/(risk|whatif)$");
  std::smatch m;
  auto wrong_method = [&](const char* allowed) {
    auto r = api_error(405, "method_not_allowed", method + " is not allowed on " + path);
    r.body["allow"] = allowed;
    return r;
  };
  if (path == "/v1/patients") return method == "POST" ? create_patient(body) : wrong_method("POST");
  if (path == "/v1/model/meta") return method == "GET" ? meta() : wrong_method("GET");
  if (path == "/v1/openapi.json") return method == "GET" ? ApiResponse{200, openapi()} : wrong_method("GET");
  if (std::regex_match(path, m, patient_route)) {
    if (m[2] == "risk") return method == "GET" ? risk(m[1]) : wrong_method("GET");
    return method == "POST" ? whatif(m[1], body) : wrong_method("POST");
  }
  return api_error(404, "not_found", "no route for " + path);
}

struct HttpServer::Impl {
  explicit Impl(RiskService& s) : service(s) {}
  RiskService& service;
  httplib::Server server;
  bool bound = false;
};

HttpServer::HttpServer(RiskService& service) : impl_(std::make_unique<Impl>(service)) {
  auto& srv = impl_->server;
  const std::string origin = service.options().cors_origin;
  srv.set_default_headers({{"Access-Control-Allow-Origin", origin},
                           {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                           {"Access-Control-Allow-Headers", "Content-Type"},
                           {"Vary", "Origin"}});
  auto dispatch = [this](const httplib::Request& req, httplib::Response& res) {
    const auto r = impl_->service.handle(req.method, req.path, req.body);
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  };
  srv.Get(".*", dispatch);
  srv.Post(".*", dispatch);
  srv.Put(".*", dispatch);
  srv.Delete(".*", dispatch);
  srv.Patch(".*", dispatch);
  srv.Options(".*", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
  srv.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    std::string what = "internal error";
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      what = e.what();
    } catch (...) {
    }
    const auto r = api_error(500, "internal_error", what);
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  });
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  int bound = -1;
  if (port == 0) {
    bound = impl_->server.bind_to_any_port(host);
  } else if (impl_->server.bind_to_port(host, port)) {
    bound = port;
  }
  impl_->bound = bound > 0;
  return impl_->bound ? bound : -1;
}

bool HttpServer::listen() { return impl_->bound && impl_->server.listen_after_bind(); }

void HttpServer::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

bool HttpServer::running() const { return impl_->server.is_running(); }

}  // namespace asurv
