#include "run_manifest.hpp"

#include <ctime>

#include "asurv/cohort_io.hpp"
#include "asurv/sampler.hpp"

namespace asurv::cli {

namespace {

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

RunManifest::RunManifest(std::string cmd, int argc, char** argv_in)
    : command(std::move(cmd)), started_at(utc_now()), start_(std::chrono::steady_clock::now()) {
  for (int k = 0; k < argc; ++k) argv.emplace_back(argv_in[k]);
}

nlohmann::json RunManifest::to_json() const {
  nlohmann::json j{{"manifest_version", 1},
                   {"command", command},
                   {"argv", argv},
                   {"configs", configs},
                   {"inputs", inputs},
                   {"outputs", outputs},
                   {"seed_from_env", seed_from_env},
                   {"resolved", resolved},
                   {"engine_version", engine_version()},
                   {"exit_code", exit_code},
                   {"timing", {{"started_at", started_at}, {"seconds", seconds}}}};
  j["seed"] = seed ? nlohmann::json(std::to_string(*seed)) : nlohmann::json(nullptr);
  return j;
}

void RunManifest::write(const std::filesystem::path& dir) {
  seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  std::filesystem::create_directories(dir);
  write_file_atomic(dir / "manifest.json", to_json().dump(2) + "\n");
}

}  // namespace asurv::cli
