#include "asurv/cohort_io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "asurv/covariates.hpp"

namespace asurv {
namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

bool parse_flag(const std::string& s, const std::string& what) {
  if (s == "1" || s == "true" || s == "TRUE") return true;
  if (s == "0" || s == "false" || s == "FALSE") return false;
  throw InputError("invalid boolean '" + s + "' in column " + what);
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write " + tmp.string());
    out << contents;
    if (!out) throw InputError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

CsvTable CsvTable::read(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw InputError("cohort file missing: " + path.string());
  return parse(read_file(path), path.filename().string());
}

CsvTable CsvTable::parse(const std::string& text, const std::string& origin) {
  CsvTable t;
  t.origin_ = origin;
  std::istringstream in(text);
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    auto fields = split(line);
    if (header) {
      t.header_ = std::move(fields);
      header = false;
      continue;
    }
    if (fields.size() != t.header_.size())
      throw InputError(origin + ": row " + std::to_string(t.cells_.size() + 1) + " has " +
                       std::to_string(fields.size()) + " fields, expected " +
                       std::to_string(t.header_.size()));
    t.cells_.push_back(std::move(fields));
  }
  if (header) throw InputError(origin + ": empty file");
  return t;
}

bool CsvTable::has_column(const std::string& name) const {
  for (const auto& h : header_)
    if (h == name) return true;
  return false;
}

const std::string& CsvTable::at(std::size_t row, const std::string& column) const {
  for (std::size_t k = 0; k < header_.size(); ++k)
    if (header_[k] == column) return cells_.at(row)[k];
  throw InputError(origin_ + ": missing column '" + column + "'");
}

double CsvTable::number(std::size_t row, const std::string& column) const {
  const auto& s = at(row, column);
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw InputError(origin_ + ": column '" + column + "' row " + std::to_string(row + 1) +
                     ": invalid number '" + s + "'");
  return v;
}

Cohort read_cohort(const std::filesystem::path& dir) {
  const auto psa = CsvTable::read(dir / "psa.csv");
  const auto iv = CsvTable::read(dir / "intervals.csv");
  const auto out = CsvTable::read(dir / "outcomes.csv");

  std::map<std::string, std::size_t> index;
  Cohort cohort;
  auto patient = [&](const std::string& id) -> PatientRecord& {
    auto [it, fresh] = index.try_emplace(id, cohort.size());
    if (fresh) {
      cohort.emplace_back();
      cohort.back().id = id;
    }
    return cohort[it->second];
  };

  for (std::size_t r = 0; r < psa.rows(); ++r) {
    auto& p = patient(psa.at(r, "patient_id"));
    const double value = psa.number(r, "psa");
    if (!(value > 0.0)) throw InputError("psa.csv row " + std::to_string(r + 1) + ": psa must be positive");
    p.psa.push_back({psa.number(r, "age"), std::log(value), psa.number(r, "volume")});
  }

  const bool has_time = iv.has_column("time_since_dx");
  const bool has_age = iv.has_column("age");
  for (std::size_t r = 0; r < iv.rows(); ++r) {
    auto& p = patient(iv.at(r, "patient_id"));
    IntervalRecord rec;
    rec.index = static_cast<int>(iv.number(r, "interval_index"));
    rec.biopsy = parse_flag(iv.at(r, "biopsy_performed"), "biopsy_performed");
    rec.biopsy_count = static_cast<int>(iv.number(r, "biopsy_count"));
    if (const auto& s = iv.at(r, "reclassified"); !s.empty()) rec.reclassified = parse_flag(s, "reclassified");
    rec.surgery = parse_flag(iv.at(r, "surgery"), "surgery");
    rec.cov.date = date_to_years(iv.at(r, "date"));
    rec.cov.num_prev_biopsies = iv.number(r, "num_prev_biopsies");
    rec.cov.prev_reclass = parse_flag(iv.at(r, "prev_reclass"), "prev_reclass");
    if (!iv.at(r, "max_prev_pos_cores").empty()) rec.cov.max_prev_pos_cores = iv.number(r, "max_prev_pos_cores");
    if (!iv.at(r, "max_prev_pct_pos").empty()) rec.cov.max_prev_pct_pos = iv.number(r, "max_prev_pct_pos");
    rec.cov.time_since_dx = has_time ? iv.number(r, "time_since_dx") : static_cast<double>(rec.index);
    if (has_age) {
      rec.cov.age = iv.number(r, "age");
    } else {
      if (p.psa.empty()) throw InputError("intervals.csv: no age column and no PSA ages for " + p.id);
      rec.cov.age = p.psa.front().age + rec.cov.time_since_dx;
    }
    p.intervals.push_back(rec);
  }
  for (auto& p : cohort) {
    std::stable_sort(p.intervals.begin(), p.intervals.end(),
                     [](const IntervalRecord& a, const IntervalRecord& b) { return a.index < b.index; });
  }

  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto& p = patient(out.at(r, "patient_id"));
    if (const auto& s = out.at(r, "eta_observed"); !s.empty() && s != "NA") {
      const int v = static_cast<int>(out.number(r, "eta_observed"));
      p.eta_observed = v;
    }
  }
  return cohort;
}

void write_cohort(const Cohort& cohort, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ostringstream psa, iv, out;
  psa << "patient_id,age,psa,volume\n";
  iv << "patient_id,interval_index,date,biopsy_performed,biopsy_count,reclassified,surgery,"
        "num_prev_biopsies,prev_reclass,max_prev_pos_cores,max_prev_pct_pos,time_since_dx,age\n";
  out << "patient_id,eta_observed\n";
  for (const auto& p : cohort) {
    for (const auto& o : p.psa)
      psa << p.id << ',' << format_double(o.age) << ',' << format_double(std::exp(o.log_psa)) << ','
          << format_double(o.volume) << '\n';
    for (const auto& r : p.intervals) {
      iv << p.id << ',' << r.index << ',' << years_to_date(r.cov.date) << ',' << (r.biopsy ? 1 : 0) << ','
         << r.biopsy_count << ',' << (r.reclassified ? (*r.reclassified ? "1" : "0") : "") << ','
         << (r.surgery ? 1 : 0) << ',' << format_double(r.cov.num_prev_biopsies) << ','
         << (r.cov.prev_reclass ? 1 : 0) << ','
         << (r.cov.max_prev_pos_cores ? format_double(*r.cov.max_prev_pos_cores) : "") << ','
         << (r.cov.max_prev_pct_pos ? format_double(*r.cov.max_prev_pct_pos) : "") << ','
         << format_double(r.cov.time_since_dx) << ',' << format_double(r.cov.age) << '\n';
    }
    out << p.id << ',' << (p.eta_observed ? std::to_string(*p.eta_observed) : "") << '\n';
  }
  write_file_atomic(dir / "psa.csv", psa.str());
  write_file_atomic(dir / "intervals.csv", iv.str());
  write_file_atomic(dir / "outcomes.csv", out.str());
}

void write_truth(const std::vector<TruthRecord>& truth, const std::filesystem::path& file) {
  std::ostringstream os;
  os << "patient_id,eta";
  const auto dz = truth.empty() ? 0 : truth.front().b_check.size();
  for (Eigen::Index k = 0; k < dz; ++k) os << ",b_check_" << k;
  os << '\n';
  for (const auto& t : truth) {
    os << t.patient_id << ',' << t.eta;
    for (Eigen::Index k = 0; k < t.b_check.size(); ++k) os << ',' << format_double(t.b_check[k]);
    os << '\n';
  }
  write_file_atomic(file, os.str());
}

std::vector<TruthRecord> read_truth(const std::filesystem::path& file) {
  const auto t = CsvTable::read(file);
  int dz = 0;
  while (t.has_column("b_check_" + std::to_string(dz))) ++dz;
  std::vector<TruthRecord> out;
  for (std::size_t r = 0; r < t.rows(); ++r) {
    TruthRecord rec;
    rec.patient_id = t.at(r, "patient_id");
    rec.eta = static_cast<int>(t.number(r, "eta"));
    rec.b_check.resize(dz);
    for (int k = 0; k < dz; ++k) rec.b_check[k] = t.number(r, "b_check_" + std::to_string(k));
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace asurv
