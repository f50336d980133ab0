#include "asurv/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include "asurv/diagnostics.hpp"
#include "asurv/random.hpp"
#include "asurv/sampler.hpp"
#include "asurv/spline.hpp"

namespace asurv {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void check_labels(const std::vector<double>& scores, const std::vector<int>& labels, bool need_both) {
  if (scores.size() != labels.size()) throw InputError("scores and labels differ in length");
  int pos = 0;
  for (std::size_t k = 0; k < labels.size(); ++k) {
    if (labels[k] != 0 && labels[k] != 1) throw InputError("labels must be 0 or 1");
    if (!std::isfinite(scores[k])) throw InputError("scores must be finite");
    pos += labels[k];
  }
  if (need_both && (pos == 0 || pos == static_cast<int>(labels.size())))
    throw InputError("both classes must be present");
}

double logistic(double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

bool both_classes(const std::vector<int>& labels) {
  const auto pos = std::count(labels.begin(), labels.end(), 1);
  return pos > 0 && pos < static_cast<long>(labels.size());
}

std::string num(double v) {
  if (std::isnan(v)) return "NA";
  if (std::isinf(v)) return v > 0 ? "Inf" : "-Inf";
  return format_double(v);
}

nlohmann::json opt_json(const std::optional<double>& v) {
  return v && std::isfinite(*v) ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

}  // namespace

double auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  check_labels(scores, labels, true);
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });
  // Midranks; every quantity below is a multiple of 1/2 and exact in double.
  double rank_sum = 0.0;
  double n1 = 0.0;
  for (std::size_t k = 0; k < n;) {
    std::size_t e = k;
    while (e + 1 < n && scores[order[e + 1]] == scores[order[k]]) ++e;
    const double mid = 0.5 * static_cast<double>(k + 1 + e + 1);
    for (std::size_t q = k; q <= e; ++q) {
      if (labels[order[q]] == 1) {
        rank_sum += mid;
        n1 += 1.0;
      }
    }
    k = e + 1;
  }
  const double n0 = static_cast<double>(n) - n1;
  return (rank_sum - n1 * (n1 + 1.0) / 2.0) / (n1 * n0);
}

std::vector<RocPoint> roc_curve(const std::vector<double>& scores, const std::vector<int>& labels) {
  check_labels(scores, labels, true);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] > scores[b]; });
  const double n1 = static_cast<double>(std::count(labels.begin(), labels.end(), 1));
  const double n0 = static_cast<double>(labels.size()) - n1;
  std::vector<RocPoint> out{{std::numeric_limits<double>::infinity(), 0.0, 0.0}};
  double tp = 0.0, fp = 0.0;
  for (std::size_t k = 0; k < order.size();) {
    const double t = scores[order[k]];
    while (k < order.size() && scores[order[k]] == t) {
      (labels[order[k]] == 1 ? tp : fp) += 1.0;
      ++k;
    }
    out.push_back({t, fp / n0, tp / n1});
  }
  return out;
}

double roc_area(const std::vector<RocPoint>& curve) {
  double a = 0.0;
  for (std::size_t k = 1; k < curve.size(); ++k)
    a += (curve[k].fpr - curve[k - 1].fpr) * (curve[k].tpr + curve[k - 1].tpr) / 2.0;
  return a;
}

double fpr_at_tpr(const std::vector<double>& scores, const std::vector<int>& labels, double target_tpr) {
  if (!(target_tpr >= 0.0 && target_tpr <= 1.0)) throw InputError("target TPR must lie in [0, 1]");
  for (const auto& p : roc_curve(scores, labels))
    if (p.tpr >= target_tpr - 1e-12) return p.fpr;
  return 1.0;
}

double mse(const std::vector<double>& predictions, const std::vector<int>& labels) {
  check_labels(predictions, labels, false);
  if (predictions.empty()) throw InputError("mse of empty input");
  double s = 0.0;
  for (std::size_t k = 0; k < predictions.size(); ++k) {
    const double r = predictions[k] - labels[k];
    s += r * r;
  }
  return s / static_cast<double>(predictions.size());
}

LogisticFit fit_logistic(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double tol, int max_iter) {
  if (x.rows() != y.size() || x.rows() == 0) throw InputError("logistic fit: bad dimensions");
  LogisticFit f;
  f.coef = Eigen::VectorXd::Zero(x.cols());
  auto loglik = [&](const Eigen::VectorXd& b) {
    const Eigen::VectorXd eta = x * b;
    double l = 0.0;
    for (Eigen::Index r = 0; r < eta.size(); ++r) l += bernoulli_logit_loglik(y[r], eta[r]);
    return l;
  };
  double current = loglik(f.coef);
  Eigen::MatrixXd info(x.cols(), x.cols());
  for (f.iterations = 0;; ++f.iterations) {
    const Eigen::VectorXd eta = x * f.coef;
    Eigen::VectorXd p(eta.size()), w(eta.size());
    for (Eigen::Index r = 0; r < eta.size(); ++r) {
      p[r] = logistic(eta[r]);
      w[r] = p[r] * (1.0 - p[r]);
    }
    const Eigen::VectorXd grad = x.transpose() * (y - p);
    info = x.transpose() * w.asDiagonal() * x;
    f.gradient_norm = grad.norm();
    if (f.gradient_norm < tol * static_cast<double>(std::max<Eigen::Index>(1, x.rows()))) {
      f.converged = true;
      break;
    }
    if (f.iterations >= max_iter) break;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) break;
    const Eigen::VectorXd step = ldlt.solve(grad);
    double scale = 1.0;
    Eigen::VectorXd next = f.coef + step;
    double value = loglik(next);
    while (!(value >= current - 1e-12) && scale > 1e-10) {
      scale *= 0.5;
      next = f.coef + scale * step;
      value = loglik(next);
    }
    f.coef = next;
    current = value;
  }
  Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
  f.cov = ldlt.solve(Eigen::MatrixXd::Identity(x.cols(), x.cols()));
  if (!f.cov.allFinite()) f.converged = false;
  return f;
}

nlohmann::json CalibrationCurve::to_json() const {
  nlohmann::json j{{"converged", converged}, {"message", message}, {"knots", knots}};
  if (converged) {
    j["coefficients"] = std::vector<double>(coef.data(), coef.data() + coef.size());
    j["grid"] = grid;
    j["fitted"] = fitted;
    j["lower"] = lower;
    j["upper"] = upper;
  }
  return j;
}

CalibrationCurve calibration_curve(const std::vector<double>& predictions, const std::vector<int>& outcomes,
                                   int grid_points) {
  check_labels(predictions, outcomes, false);
  if (predictions.size() < 10) throw InputError("calibration needs at least 10 predictions");
  if (grid_points < 2) throw InputError("calibration grid needs at least two points");
  const auto [lo_it, hi_it] = std::minmax_element(predictions.begin(), predictions.end());
  const double lo = *lo_it, hi = *hi_it;
  if (!(hi > lo)) throw InputError("degenerate spline input: predictions are constant");
  double knot = quantile(predictions, 0.5);
  CalibrationCurve cc;
  if (!(knot > lo && knot < hi)) {
    knot = 0.5 * (lo + hi);
    cc.message = "median on a boundary; interior knot moved to the midrange";
  }
  cc.knots = {knot, lo, hi};
  const NaturalSplineBasis basis({knot}, lo, hi);
  const auto n = static_cast<Eigen::Index>(predictions.size());
  Eigen::MatrixXd x(n, 3);
  Eigen::VectorXd y(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    x(r, 0) = 1.0;
    x.block(r, 1, 1, 2) = basis.evaluate(predictions[static_cast<std::size_t>(r)]).transpose();
    y[r] = outcomes[static_cast<std::size_t>(r)];
  }
  const auto fit = fit_logistic(x, y);
  cc.converged = fit.converged;
  if (!fit.converged) {
    cc.message = "logistic recalibration did not converge (gradient norm " + num(fit.gradient_norm) + ")";
    return cc;
  }
  cc.coef = fit.coef;
  for (int g = 0; g < grid_points; ++g) {
    const double p = static_cast<double>(g) / (grid_points - 1);
    Eigen::Vector3d row;
    row << 1.0, basis.evaluate(p);
    const double eta = row.dot(fit.coef);
    const double se = std::sqrt(std::max(0.0, row.dot(fit.cov * row)));
    cc.grid.push_back(p);
    cc.fitted.push_back(logistic(eta));
    cc.lower.push_back(logistic(eta - 1.959963984540054 * se));
    cc.upper.push_back(logistic(eta + 1.959963984540054 * se));
  }
  return cc;
}

BootstrapInterval bootstrap_interval(const ResampleStatistic& statistic, std::size_t n_units, int n_boot,
                                     std::uint64_t seed) {
  if (n_boot < 100) throw InputError("bootstrap needs at least 100 resamples");
  if (n_units == 0) throw InputError("bootstrap of empty data");
  Rng rng(seed);
  std::vector<double> stats;
  stats.reserve(static_cast<std::size_t>(n_boot));
  std::vector<std::size_t> idx(n_units);
  BootstrapInterval out;
  out.n_boot = n_boot;
  while (static_cast<int>(stats.size()) < n_boot) {
    for (auto& k : idx) k = rng.index(n_units);
    const double v = statistic(idx);
    if (std::isnan(v)) {
      if (++out.redraws > 10 * n_boot) throw InputError("bootstrap statistic undefined on too many resamples");
      continue;
    }
    stats.push_back(v);
  }
  out.lower = quantile(stats, 0.025);
  out.upper = quantile(stats, 0.975);
  return out;
}

std::string to_string(Stratum s) {
  switch (s) {
    case Stratum::eta_observed: return "eta_observed";
    case Stratum::eta_unobserved: return "eta_unobserved";
    case Stratum::all: return "all";
  }
  return "all";
}

nlohmann::json MetricValue::to_json() const {
  return {{"estimate", opt_json(estimate)}, {"lower", opt_json(lower)}, {"upper", opt_json(upper)}};
}

nlohmann::json MetricReport::to_json() const {
  nlohmann::json j{{"stratum", to_string(stratum)},
                   {"n", n},
                   {"n_positive", n_positive},
                   {"auc", auc.to_json()},
                   {"mse", mse.to_json()},
                   {"fpr_at_tpr", fpr_at_tpr.to_json()},
                   {"target_tpr", target_tpr},
                   {"notes", notes}};
  j["calibration"] = calibration ? calibration->to_json() : nlohmann::json(nullptr);
  return j;
}

MetricReport compute_metrics(const std::vector<double>& predictions, const std::vector<int>& labels, Stratum stratum,
                             const MetricOptions& opts) {
  check_labels(predictions, labels, false);
  MetricReport r;
  r.stratum = stratum;
  r.n = static_cast<int>(labels.size());
  r.n_positive = static_cast<int>(std::count(labels.begin(), labels.end(), 1));
  r.target_tpr = opts.target_tpr;
  if (r.n == 0) {
    r.notes.push_back("empty stratum");
    return r;
  }
  auto subset = [&](const std::vector<std::size_t>& idx, std::vector<double>& p, std::vector<int>& y) {
    p.clear();
    y.clear();
    for (auto k : idx) {
      p.push_back(predictions[k]);
      y.push_back(labels[k]);
    }
  };
  r.mse.estimate = mse(predictions, labels);
  const auto mse_ci = bootstrap_interval(
      [&](const std::vector<std::size_t>& idx) {
        std::vector<double> p;
        std::vector<int> y;
        subset(idx, p, y);
        return mse(p, y);
      },
      labels.size(), opts.n_boot, opts.seed);
  r.mse.lower = mse_ci.lower;
  r.mse.upper = mse_ci.upper;

  if (!both_classes(labels)) {
    r.notes.push_back("single class: AUC, FPR and calibration undefined");
    return r;
  }
  r.roc = roc_curve(predictions, labels);
  r.auc.estimate = auc(predictions, labels);
  r.fpr_at_tpr.estimate = fpr_at_tpr(predictions, labels, opts.target_tpr);
  auto boot = [&](auto metric) {
    return bootstrap_interval(
        [&](const std::vector<std::size_t>& idx) {
          std::vector<double> p;
          std::vector<int> y;
          subset(idx, p, y);
          return both_classes(y) ? metric(p, y) : kNaN;
        },
        labels.size(), opts.n_boot, opts.seed);
  };
  try {
    const auto a = boot([](const auto& p, const auto& y) { return auc(p, y); });
    r.auc.lower = a.lower;
    r.auc.upper = a.upper;
    const auto f = boot([&](const auto& p, const auto& y) { return fpr_at_tpr(p, y, opts.target_tpr); });
    r.fpr_at_tpr.lower = f.lower;
    r.fpr_at_tpr.upper = f.upper;
  } catch (const InputError& e) {
    r.notes.push_back(std::string("bootstrap: ") + e.what());
  }
  if (opts.calibration) {
    try {
      r.calibration = calibration_curve(predictions, labels);
      if (!r.calibration->converged) r.notes.push_back("calibration: " + r.calibration->message);
    } catch (const InputError& e) {
      r.notes.push_back(std::string("calibration: ") + e.what());
    }
  }
  return r;
}

const std::vector<std::string>& BaselineFeatures::names() {
  static const std::vector<std::string> n{"reclassified",     "age",          "num_negative_biopsies", "years",
                                          "psa_density_x10", "psa_slope_x10"};
  return n;
}

Eigen::VectorXd BaselineFeatures::of(const PatientRecord& p) {
  Eigen::VectorXd f = Eigen::VectorXd::Zero(6);
  f[0] = p.reclassified_ever() ? 1.0 : 0.0;
  double negatives = 0.0;
  for (const auto& iv : p.intervals)
    if (iv.biopsy) negatives += iv.biopsy_count - (iv.reclassified.value_or(false) ? 1 : 0);
  f[2] = negatives;
  if (!p.intervals.empty()) f[3] = p.intervals.back().cov.time_since_dx;
  if (!p.psa.empty()) {
    const auto& last = p.psa.back();
    f[1] = last.age;
    f[4] = 10.0 * std::exp(last.log_psa) / last.volume;
  }
  if (p.psa.size() >= 2) {
    double ma = 0.0, my = 0.0;
    for (const auto& o : p.psa) {
      ma += o.age;
      my += o.log_psa;
    }
    ma /= static_cast<double>(p.psa.size());
    my /= static_cast<double>(p.psa.size());
    double sxy = 0.0, sxx = 0.0;
    for (const auto& o : p.psa) {
      sxy += (o.age - ma) * (o.log_psa - my);
      sxx += (o.age - ma) * (o.age - ma);
    }
    if (sxx > 0.0) f[5] = 10.0 * sxy / sxx;
  }
  return f;
}

double BaselineModel::predict(const PatientRecord& p) const {
  const Eigen::VectorXd f = BaselineFeatures::of(p);
  return logistic(fit.coef[0] + f.dot(fit.coef.tail(f.size())));
}

BaselineModel fit_baseline(const Cohort& cohort) {
  std::vector<Eigen::VectorXd> rows;
  std::vector<double> ys;
  for (const auto& p : cohort) {
    if (!p.eta_observed) continue;
    Eigen::VectorXd r(7);
    r << 1.0, BaselineFeatures::of(p);
    rows.push_back(r);
    ys.push_back(*p.eta_observed);
  }
  if (rows.size() < 8) throw InputError("logistic comparator needs at least 8 patients with an observed state");
  Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), 7);
  for (std::size_t k = 0; k < rows.size(); ++k) x.row(static_cast<Eigen::Index>(k)) = rows[k].transpose();
  const Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(ys.data(), static_cast<Eigen::Index>(ys.size()));
  return {fit_logistic(x, y)};
}

std::vector<PatientPrediction> predict_cohort(const Cohort& cohort, const PosteriorStore& store,
                                              const std::vector<TruthRecord>& truth) {
  std::map<std::string, int> truth_eta;
  for (const auto& t : truth) truth_eta[t.patient_id] = t.eta;
  const Predictor predictor(store);
  std::vector<PatientPrediction> out;
  out.reserve(cohort.size());
  for (const auto& p : cohort) {
    PatientPrediction pp;
    pp.patient_id = p.id;
    pp.eta_observed = p.eta_observed.has_value();
    const auto it = truth_eta.find(p.id);
    if (it != truth_eta.end()) {
      pp.truth = it->second;
    } else if (p.eta_observed) {
      pp.truth = *p.eta_observed;
    } else {
      throw InputError("no true state for patient '" + p.id + "'");
    }
    pp.report = predictor.predict(p);
    out.push_back(std::move(pp));
  }
  return out;
}

std::vector<MetricReport> stratified_metrics(const std::vector<PatientPrediction>& preds, const MetricOptions& opts) {
  std::vector<MetricReport> out;
  for (auto stratum : {Stratum::eta_observed, Stratum::eta_unobserved, Stratum::all}) {
    std::vector<double> p;
    std::vector<int> y;
    for (const auto& pp : preds) {
      if (stratum == Stratum::eta_observed && !pp.eta_observed) continue;
      if (stratum == Stratum::eta_unobserved && pp.eta_observed) continue;
      p.push_back(pp.report.mean);
      y.push_back(pp.truth);
    }
    out.push_back(compute_metrics(p, y, stratum, opts));
  }
  return out;
}

PosteriorSummary summarize_rho(const PosteriorStore& store) {
  const auto r = store.pooled_rho();
  if (r.empty()) throw InputError("posterior store has no draws");
  return {quantile(r, 0.5), quantile(r, 0.025), quantile(r, 0.975)};
}

nlohmann::json VariantResult::to_json() const {
  nlohmann::json m = nlohmann::json::array();
  for (const auto& r : metrics) m.push_back(r.to_json());
  nlohmann::json j{{"variant", name}, {"metrics", m}};
  if (rho) j["rho"] = {{"median", rho->median}, {"lower", rho->lower}, {"upper", rho->upper}};
  else j["rho"] = nullptr;
  j["max_psr"] = std::isfinite(max_psr) ? nlohmann::json(max_psr) : nlohmann::json(nullptr);
  return j;
}

std::vector<VariantResult> compare_variants(const Cohort& cohort, const std::vector<TruthRecord>& truth,
                                            const std::vector<IopFlags>& variants, const ModelConfig& config,
                                            const ComparisonOptions& opts) {
  std::vector<VariantResult> out;
  for (const auto& v : variants) {
    ModelConfig cfg = config;
    cfg.iop = v;
    cfg.sampler.store_patient_draws = true;
    const auto store = fit(cohort, cfg);
    VariantResult r;
    r.name = v.str();
    r.rho = summarize_rho(store);
    auto diag = diagnose(store);
    r.max_psr = diag.max_psr;
    r.parameters = std::move(diag.parameters);
    if (opts.on_store) opts.on_store(r.name, store);
    r.predictions = predict_cohort(cohort, store, truth);
    r.metrics = stratified_metrics(r.predictions, opts.metrics);
    out.push_back(std::move(r));
  }
  std::optional<BaselineModel> baseline;
  if (opts.include_baseline) {
    try {
      baseline = fit_baseline(cohort);
    } catch (const InputError&) {
      // Too few observed states; the comparator is left out of the table.
    }
  }
  if (baseline) {
    const auto& model = *baseline;
    std::map<std::string, int> truth_eta;
    for (const auto& t : truth) truth_eta[t.patient_id] = t.eta;
    VariantResult r;
    r.name = "logistic";
    r.max_psr = kNaN;
    for (const auto& p : cohort) {
      PatientPrediction pp;
      pp.patient_id = p.id;
      pp.eta_observed = p.eta_observed.has_value();
      const auto it = truth_eta.find(p.id);
      pp.truth = it != truth_eta.end() ? it->second : p.eta_observed.value_or(0);
      pp.report.patient_id = p.id;
      pp.report.mean = pp.report.lower = pp.report.upper = model.predict(p);
      if (!model.fit.converged) pp.report.warnings.push_back("logistic comparator did not converge");
      r.predictions.push_back(std::move(pp));
    }
    r.metrics = stratified_metrics(r.predictions, opts.metrics);
    out.push_back(std::move(r));
  }
  return out;
}

void write_evaluation(const std::vector<VariantResult>& results, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json all = nlohmann::json::array();
  std::ostringstream roc, cal, pred;
  roc << "variant,stratum,threshold,fpr,tpr\n";
  cal << "variant,stratum,predicted,recalibrated,lower,upper\n";
  pred << "variant,patient_id,eta_observed,truth,method,mean,lower,upper,ess\n";
  for (const auto& r : results) {
    all.push_back(r.to_json());
    for (const auto& m : r.metrics) {
      for (const auto& p : m.roc)
        roc << r.name << ',' << to_string(m.stratum) << ',' << num(p.threshold) << ',' << num(p.fpr) << ','
            << num(p.tpr) << '\n';
      if (m.calibration && m.calibration->converged) {
        const auto& c = *m.calibration;
        for (std::size_t g = 0; g < c.grid.size(); ++g)
          cal << r.name << ',' << to_string(m.stratum) << ',' << num(c.grid[g]) << ',' << num(c.fitted[g]) << ','
              << num(c.lower[g]) << ',' << num(c.upper[g]) << '\n';
      }
    }
    for (const auto& p : r.predictions)
      pred << r.name << ',' << p.patient_id << ',' << (p.eta_observed ? 1 : 0) << ',' << p.truth << ','
           << (r.name == "logistic" ? std::string("logistic") : to_string(p.report.method)) << ','
           << num(p.report.mean) << ',' << num(p.report.lower) << ',' << num(p.report.upper) << ','
           << (p.report.ess ? num(*p.report.ess) : std::string("NA")) << '\n';
  }
  write_file_atomic(dir / "metrics.json", all.dump(2) + "\n");
  write_file_atomic(dir / "roc.csv", roc.str());
  write_file_atomic(dir / "calibration.csv", cal.str());
  write_file_atomic(dir / "predictions.csv", pred.str());
}

}  // namespace asurv
