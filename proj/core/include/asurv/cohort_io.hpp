#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "asurv/types.hpp"

namespace asurv {

/// Minimal header-indexed CSV table (no quoting; fields never contain commas).
class CsvTable {
 public:
  static CsvTable read(const std::filesystem::path& path);
  static CsvTable parse(const std::string& text, const std::string& origin);

  [[nodiscard]] std::size_t rows() const { return cells_.size(); }
  [[nodiscard]] bool has_column(const std::string& name) const;
  [[nodiscard]] const std::string& at(std::size_t row, const std::string& column) const;
  [[nodiscard]] double number(std::size_t row, const std::string& column) const;
  [[nodiscard]] const std::vector<std::string>& header() const { return header_; }

 private:
  std::string origin_;
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> cells_;
};

/// Reads `psa.csv`, `intervals.csv` and `outcomes.csv` from a directory.
/// PSA values are log-transformed on ingest; dates are ISO-8601.
[[nodiscard]] Cohort read_cohort(const std::filesystem::path& dir);
void write_cohort(const Cohort& cohort, const std::filesystem::path& dir);

struct TruthRecord {
  std::string patient_id;
  int eta = 0;
  Eigen::VectorXd b_check;
};

void write_truth(const std::vector<TruthRecord>& truth, const std::filesystem::path& file);
[[nodiscard]] std::vector<TruthRecord> read_truth(const std::filesystem::path& file);

/// Deterministic shortest-roundtrip formatting used by every writer.
[[nodiscard]] std::string format_double(double v);

/// Writes to `<path>.tmp` then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);
[[nodiscard]] std::string read_file(const std::filesystem::path& path);

}  // namespace asurv
