#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace asurv::cli {

/// Record of one command invocation, written as `manifest.json` next to its
/// outputs. Holds the resolved configuration so the run can be repeated.
struct RunManifest {
  std::string command;
  std::vector<std::string> argv;
  std::map<std::string, std::string> configs;
  std::map<std::string, std::string> inputs;
  std::map<std::string, std::string> outputs;
  std::optional<std::uint64_t> seed;
  bool seed_from_env = false;
  nlohmann::json resolved = nlohmann::json::object();
  int exit_code = 0;
  std::string started_at;
  double seconds = 0.0;

  RunManifest(std::string cmd, int argc, char** argv_in);

  [[nodiscard]] nlohmann::json to_json() const;
  void write(const std::filesystem::path& dir);

 private:
  std::chrono::steady_clock::time_point start_;
};

}  // namespace asurv::cli
