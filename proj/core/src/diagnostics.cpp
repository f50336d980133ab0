#include "asurv/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "asurv/cohort_io.hpp"

namespace asurv {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double mean_of(const Eigen::VectorXd& v) { return v.size() ? v.mean() : 0.0; }

double var_of(const Eigen::VectorXd& v) {
  if (v.size() < 2) return 0.0;
  return (v.array() - v.mean()).square().sum() / static_cast<double>(v.size() - 1);
}

// Autocovariance at lags 0..n-1 (biased, divided by n).
std::vector<double> autocovariance(const Eigen::VectorXd& v) {
  const auto n = v.size();
  const double m = v.mean();
  std::vector<double> out(static_cast<std::size_t>(n), 0.0);
  for (Eigen::Index lag = 0; lag < n; ++lag) {
    double s = 0.0;
    for (Eigen::Index t = 0; t + lag < n; ++t) s += (v[t] - m) * (v[t + lag] - m);
    out[static_cast<std::size_t>(lag)] = s / static_cast<double>(n);
  }
  return out;
}

std::string num(double v) { return std::isfinite(v) ? format_double(v) : (std::isnan(v) ? "NA" : (v > 0 ? "Inf" : "-Inf")); }

nlohmann::json json_num(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

}  // namespace

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw InputError("quantile of empty sample");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

double potential_scale_reduction(const std::vector<Eigen::VectorXd>& chains) {
  std::vector<Eigen::VectorXd> split;
  for (const auto& c : chains) {
    const auto half = c.size() / 2;
    if (half < 2) throw InputError("chains too short for split potential scale reduction");
    split.emplace_back(c.head(half));
    split.emplace_back(c.segment(c.size() - half, half));
  }
  const auto n = static_cast<double>(split.front().size());
  const auto m = static_cast<double>(split.size());
  Eigen::VectorXd means(static_cast<Eigen::Index>(split.size()));
  double w = 0.0;
  for (std::size_t k = 0; k < split.size(); ++k) {
    means[static_cast<Eigen::Index>(k)] = mean_of(split[k]);
    w += var_of(split[k]);
  }
  w /= m;
  const double b = n * var_of(means);
  if (w <= 0.0) return b <= 0.0 ? kNaN : std::numeric_limits<double>::infinity();
  const double var_plus = (n - 1.0) / n * w + b / n;
  return std::sqrt(var_plus / w);
}

double effective_sample_size(const std::vector<Eigen::VectorXd>& chains) {
  if (chains.empty()) throw InputError("effective sample size of empty store");
  const auto n = chains.front().size();
  for (const auto& c : chains)
    if (c.size() != n) throw InputError("chains of unequal length");
  const double m = static_cast<double>(chains.size());
  const double total = m * static_cast<double>(n);
  if (n < 4) return total;

  std::vector<std::vector<double>> acov;
  Eigen::VectorXd means(static_cast<Eigen::Index>(chains.size()));
  double w = 0.0;
  for (std::size_t k = 0; k < chains.size(); ++k) {
    acov.push_back(autocovariance(chains[k]));
    means[static_cast<Eigen::Index>(k)] = mean_of(chains[k]);
    w += acov.back()[0] * static_cast<double>(n) / static_cast<double>(n - 1);
  }
  w /= m;
  const double nd = static_cast<double>(n);
  double var_plus = w * (nd - 1.0) / nd;
  if (chains.size() > 1) var_plus += var_of(means);
  if (var_plus <= 0.0) return kNaN;

  auto rho = [&](Eigen::Index lag) {
    double s = 0.0;
    for (const auto& a : acov) s += a[static_cast<std::size_t>(lag)];
    s /= m;
    return 1.0 - (w - s) / var_plus;
  };
  // Geyer: sum consecutive pairs while positive, enforcing monotonicity.
  double sum = 0.0;
  double prev_pair = std::numeric_limits<double>::infinity();
  for (Eigen::Index t = 0; t + 1 < n; t += 2) {
    double pair = rho(t) + rho(t + 1);
    if (pair <= 0.0) break;
    pair = std::min(pair, prev_pair);
    prev_pair = pair;
    sum += pair;
  }
  const double tau = std::max(-1.0 + 2.0 * sum, 1.0 / std::log10(total));
  return total / tau;
}

nlohmann::json DiagnosticsReport::to_json() const {
  nlohmann::json params = nlohmann::json::array();
  for (const auto& p : parameters) {
    params.push_back({{"block", p.block}, {"label", p.label}, {"identified", p.identified}, {"mean", json_num(p.mean)},
                      {"sd", json_num(p.sd)}, {"q025", json_num(p.q025)}, {"q50", json_num(p.q50)},
                      {"q975", json_num(p.q975)}, {"psr", json_num(p.psr)}, {"ess", json_num(p.ess)},
                      {"constant", p.constant}});
  }
  return {{"n_chains", n_chains}, {"draws_per_chain", draws_per_chain}, {"max_psr", json_num(max_psr)},
          {"min_ess", json_num(min_ess)}, {"parameters", params}};
}

DiagnosticsReport diagnose(const PosteriorStore& store) {
  if (store.chains.empty() || store.total_draws() == 0) throw InputError("diagnostics of an empty store");
  DiagnosticsReport rep;
  rep.n_chains = static_cast<int>(store.chains.size());
  rep.draws_per_chain = store.chains.front().draws;
  const auto cols = population_columns(store);
  std::vector<Eigen::MatrixXd> mats;
  for (int k = 0; k < rep.n_chains; ++k) mats.push_back(population_matrix(store, k));

  rep.max_psr = 1.0;
  rep.min_ess = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < cols.size(); ++j) {
    ParameterDiagnostics d;
    d.block = cols[j].block;
    d.label = cols[j].label;
    d.identified = cols[j].identified;
    std::vector<Eigen::VectorXd> chains;
    std::vector<double> pooled;
    for (const auto& m : mats) {
      chains.emplace_back(m.col(static_cast<Eigen::Index>(j)));
      pooled.insert(pooled.end(), chains.back().data(), chains.back().data() + chains.back().size());
    }
    const Eigen::Map<const Eigen::VectorXd> all(pooled.data(), static_cast<Eigen::Index>(pooled.size()));
    d.mean = all.mean();
    d.sd = std::sqrt(var_of(all));
    d.q025 = quantile(pooled, 0.025);
    d.q50 = quantile(pooled, 0.5);
    d.q975 = quantile(pooled, 0.975);
    d.constant = d.sd == 0.0;
    d.psr = rep.draws_per_chain >= 4 ? potential_scale_reduction(chains) : kNaN;
    d.ess = effective_sample_size(chains);
    if (d.identified && !d.constant) {
      if (std::isfinite(d.psr) || std::isinf(d.psr)) rep.max_psr = std::max(rep.max_psr, d.psr);
      if (std::isfinite(d.ess)) rep.min_ess = std::min(rep.min_ess, d.ess);
    }
    rep.parameters.push_back(std::move(d));
  }
  if (!std::isfinite(rep.min_ess)) rep.min_ess = 0.0;
  return rep;
}

void write_diagnostics(const DiagnosticsReport& report, const PosteriorStore& store, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ostringstream csv;
  csv << "block,label,identified,mean,sd,q025,q50,q975,psr,ess\n";
  for (const auto& p : report.parameters)
    csv << p.block << ',' << p.label << ',' << (p.identified ? 1 : 0) << ',' << num(p.mean) << ',' << num(p.sd)
        << ',' << num(p.q025) << ',' << num(p.q50) << ',' << num(p.q975) << ',' << num(p.psr) << ','
        << num(p.ess) << '\n';
  write_file_atomic(dir / "diagnostics.csv", csv.str());
  write_file_atomic(dir / "diagnostics.json", report.to_json().dump(2) + "\n");

  const auto cols = population_columns(store);
  std::ostringstream trace;
  trace << "chain,draw";
  for (const auto& c : cols) trace << ',' << c.block << ':' << c.label;
  trace << '\n';
  std::ostringstream cq;
  cq << "block,label,chain,draw,q025,q50,q975\n";
  for (int k = 0; k < static_cast<int>(store.chains.size()); ++k) {
    const auto m = population_matrix(store, k);
    for (Eigen::Index t = 0; t < m.rows(); ++t) {
      trace << k << ',' << t;
      for (Eigen::Index j = 0; j < m.cols(); ++j) trace << ',' << format_double(m(t, j));
      trace << '\n';
    }
    // Running quantiles at up to 100 checkpoints per chain.
    const Eigen::Index step = std::max<Eigen::Index>(1, m.rows() / 100);
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      for (Eigen::Index t = step - 1; t < m.rows(); t += step) {
        std::vector<double> v(m.col(j).data(), m.col(j).data() + t + 1);
        cq << cols[static_cast<std::size_t>(j)].block << ',' << cols[static_cast<std::size_t>(j)].label << ',' << k
           << ',' << t << ',' << format_double(quantile(v, 0.025)) << ',' << format_double(quantile(v, 0.5)) << ','
           << format_double(quantile(v, 0.975)) << '\n';
      }
    }
  }
  write_file_atomic(dir / "trace.csv", trace.str());
  write_file_atomic(dir / "cumulative_quantiles.csv", cq.str());
}

}  // namespace asurv
