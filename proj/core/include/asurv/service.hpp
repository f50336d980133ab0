#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "asurv/patient_json.hpp"
#include "asurv/posterior_store.hpp"
#include "asurv/prediction.hpp"

namespace asurv {

struct ServiceOptions {
  std::string cors_origin = "*";
  std::size_t max_sessions = 100000;
  /// Attach trajectory bands to risk responses.
  bool trajectory = true;
};

struct ApiResponse {
  int status = 200;
  nlohmann::json body;
};

/// Uniform error body: {code, message, fields: [{field, message}]}.
[[nodiscard]] ApiResponse api_error(int status, std::string code, std::string message,
                                    const std::vector<FieldError>& fields = {});

/// Prediction endpoints over one immutable posterior store plus an in-memory
/// registry of submitted patients. All members are safe to call concurrently.
class RiskService {
 public:
  explicit RiskService(std::optional<PosteriorStore> store, ServiceOptions opts = {});
  RiskService(const RiskService&) = delete;
  RiskService& operator=(const RiskService&) = delete;

  [[nodiscard]] bool loaded() const { return predictor_ != nullptr; }
  [[nodiscard]] const ServiceOptions& options() const { return opts_; }
  [[nodiscard]] std::size_t session_count() const;

  /// POST /v1/patients
  [[nodiscard]] ApiResponse create_patient(const std::string& body);
  /// GET /v1/patients/{token}/risk
  [[nodiscard]] ApiResponse risk(const std::string& token) const;
  /// POST /v1/patients/{token}/whatif
  [[nodiscard]] ApiResponse whatif(const std::string& token, const std::string& body) const;
  /// GET /v1/model/meta
  [[nodiscard]] ApiResponse meta() const;
  /// GET /v1/openapi.json
  [[nodiscard]] static const nlohmann::json& openapi();

  /// Routes a request by method and path (query string excluded).
  [[nodiscard]] ApiResponse handle(const std::string& method, const std::string& path, const std::string& body);

  /// Importance options used for every service prediction: submitted
  /// patients are new patients even when their id matches a fitted one.
  [[nodiscard]] static ImportanceOptions prediction_options();

 private:
  struct Session {
    PatientRecord patient;
    std::vector<FieldError> warnings;
  };
  [[nodiscard]] std::optional<Session> session(const std::string& token) const;
  [[nodiscard]] std::string new_token();

  ServiceOptions opts_;
  std::unique_ptr<const PosteriorStore> store_;
  std::unique_ptr<const Predictor> predictor_;
  mutable std::shared_mutex mutex_;
  std::map<std::string, Session> sessions_;
  std::uint64_t token_state_ = 0;
};

/// HTTP/1.1 front end for a RiskService. Adds CORS headers and answers
/// preflight requests.
class HttpServer {
 public:
  explicit HttpServer(RiskService& service);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Binds; port 0 picks a free port. Returns the bound port or -1.
  int bind(const std::string& host, int port);
  /// Serves until stop(). Requires a successful bind().
  bool listen();
  void stop();
  [[nodiscard]] bool running() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace asurv
