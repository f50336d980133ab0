#include "asurv/sampler.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

namespace asurv {
namespace {

Eigen::MatrixXd full_design(const LogisticData& d, const std::vector<int>& eta) {
  const auto n_main = d.main.cols();
  const auto n_int = d.interact.cols();
  Eigen::MatrixXd x(d.rows(), n_main + 1 + n_int);
  for (int r = 0; r < d.rows(); ++r) {
    const double e = eta[static_cast<std::size_t>(d.patient[static_cast<std::size_t>(r)])];
    x.row(r).head(n_main) = d.main.row(r);
    x(r, n_main) = e;
    x.row(r).tail(n_int) = e * d.interact.row(r);
  }
  return x;
}

double logistic_log_target(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& coef,
                           const CoefficientPriorVectors& prior) {
  const Eigen::VectorXd l = x * coef;
  double out = 0.0;
  for (Eigen::Index r = 0; r < l.size(); ++r) out += bernoulli_logit_loglik(y[r], l[r]);
  out -= 0.5 * ((coef - prior.mean).array() / prior.sd.array()).square().sum();
  return out;
}

Eigen::MatrixXd inverse_from(const Eigen::LLT<Eigen::MatrixXd>& llt, Eigen::Index n) {
  return llt.solve(Eigen::MatrixXd::Identity(n, n));
}

struct BlockContext {
  long iteration;
  const char* block;
};

[[noreturn]] void rethrow_with_context(const BlockContext& ctx, const std::exception& e) {
  throw NumericalError("iteration " + std::to_string(ctx.iteration) + ", block " + ctx.block + ": " + e.what());
}

}  // namespace

std::string engine_version() { return ASURV_VERSION; }

std::uint64_t chain_seed(std::uint64_t seed, int chain) { return mix_seed(seed, static_cast<std::uint64_t>(chain)); }

std::vector<double> sample_eta(const CompiledCohort& c, ParameterState& s, const MvnCache& cache, IopFlags iop,
                               Rng& rng) {
  std::vector<double> p(static_cast<std::size_t>(c.n));
  for (int i = 0; i < c.n; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    p[ui] = eta_full_conditional(c, i, s, cache, iop);
    if (c.eta_observed[ui]) {
      s.eta[ui] = *c.eta_observed[ui];
    } else {
      s.eta[ui] = rng.uniform() < p[ui] ? 1 : 0;
    }
  }
  return p;
}

Eigen::VectorXd sample_b_check(const CompiledCohort& c, int i, const ParameterState& s, const MvnCache& cache,
                               Rng& rng) {
  const int k = s.eta[static_cast<std::size_t>(i)];
  const auto& st = c.psa[static_cast<std::size_t>(i)];
  const auto dz = c.dim_z;
  const Eigen::MatrixXd prior_prec = inverse_from(cache.llt[k], dz);
  Eigen::MatrixXd q = prior_prec;
  Eigen::VectorXd b = prior_prec * s.mu[k];
  if (st.m > 0) {
    const Eigen::MatrixXd d = s.xi.asDiagonal();
    q += d * st.zz * d / s.sigma2;
    b += d * (st.zy - st.xz.transpose() * s.beta) / s.sigma2;
  }
  return draw_mvn_precision(q, b, rng);
}

void sample_class_means_and_cov(const CompiledCohort& c, ParameterState& s, const PriorConfig& priors,
                                bool class_specific, Rng& rng) {
  const auto dz = c.dim_z;
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(dz, dz);
  for (int k = 0; k < 2; ++k) {
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(dz);
    int nk = 0;
    for (int i = 0; i < c.n; ++i) {
      if (s.eta[static_cast<std::size_t>(i)] != k) continue;
      sum += s.b_check.row(i).transpose();
      ++nk;
    }
    Eigen::LLT<Eigen::MatrixXd> llt(s.sigma_b[k]);
    if (llt.info() != Eigen::Success) throw NumericalError("random-effect covariance not positive definite");
    const Eigen::MatrixXd prec = inverse_from(llt, dz);
    const double tau = 1.0 / (priors.mu_sd * priors.mu_sd);
    const Eigen::MatrixXd q = nk * prec + tau * eye;
    const Eigen::VectorXd b = prec * sum + Eigen::VectorXd::Constant(dz, tau * priors.mu_mean);
    s.mu[k] = draw_mvn_precision(q, b, rng);
  }

  const double dof = priors.iw_dof(dz);
  const Eigen::MatrixXd scale = priors.iw_scale(dz);
  if (class_specific) {
    for (int k = 0; k < 2; ++k) {
      Eigen::MatrixXd ss = scale;
      int nk = 0;
      for (int i = 0; i < c.n; ++i) {
        if (s.eta[static_cast<std::size_t>(i)] != k) continue;
        const Eigen::VectorXd r = s.b_check.row(i).transpose() - s.mu[k];
        ss += r * r.transpose();
        ++nk;
      }
      s.sigma_b[k] = draw_inverse_wishart(dof + nk, ss, rng);
    }
  } else {
    Eigen::MatrixXd ss = scale;
    for (int i = 0; i < c.n; ++i) {
      const Eigen::VectorXd r = s.b_check.row(i).transpose() - s.mu[s.eta[static_cast<std::size_t>(i)]];
      ss += r * r.transpose();
    }
    s.sigma_b[0] = draw_inverse_wishart(dof + c.n, ss, rng);
    s.sigma_b[1] = s.sigma_b[0];
  }
}

void sample_xi(const CompiledCohort& c, ParameterState& s, const PriorConfig& priors, Rng& rng) {
  const auto dz = c.dim_z;
  const double tau = 1.0 / (priors.xi_sd * priors.xi_sd);
  Eigen::MatrixXd p = Eigen::MatrixXd::Identity(dz, dz) * tau;
  Eigen::VectorXd r = Eigen::VectorXd::Constant(dz, tau * priors.xi_mean);
  for (int i = 0; i < c.n; ++i) {
    const auto& st = c.psa[static_cast<std::size_t>(i)];
    if (st.m == 0) continue;
    const Eigen::VectorXd bc = s.b_check.row(i).transpose();
    const Eigen::MatrixXd d = bc.asDiagonal();
    p += d * st.zz * d / s.sigma2;
    r += d * (st.zy - st.xz.transpose() * s.beta) / s.sigma2;
  }
  for (Eigen::Index k = 0; k < dz; ++k) {
    double rest = r[k];
    for (Eigen::Index l = 0; l < dz; ++l)
      if (l != k) rest -= p(k, l) * s.xi[l];
    const double prec = p(k, k);
    if (!(prec > 0.0) || !std::isfinite(rest)) throw NumericalError("degenerate scale-parameter conditional");
    s.xi[k] = draw_truncated_normal(rest / prec, 1.0 / std::sqrt(prec), 0.0, rng);
  }
}

void sample_beta(const CompiledCohort& c, ParameterState& s, const PriorConfig& priors, Rng& rng) {
  const auto dx = c.dim_x;
  if (dx == 0) return;
  const double tau = 1.0 / (priors.beta_sd * priors.beta_sd);
  Eigen::MatrixXd q = c.xx_total / s.sigma2 + tau * Eigen::MatrixXd::Identity(dx, dx);
  Eigen::VectorXd b = Eigen::VectorXd::Constant(dx, tau * priors.beta_mean);
  for (int i = 0; i < c.n; ++i) {
    const auto& st = c.psa[static_cast<std::size_t>(i)];
    if (st.m == 0) continue;
    const Eigen::VectorXd a = s.xi.cwiseProduct(s.b_check.row(i).transpose());
    b += (st.xy - st.xz * a) / s.sigma2;
  }
  s.beta = draw_mvn_precision(q, b, rng);
}

double psa_residual_ss(const CompiledCohort& c, const ParameterState& s) {
  double ss = 0.0;
  for (int i = 0; i < c.n; ++i) {
    const auto& st = c.psa[static_cast<std::size_t>(i)];
    if (st.m == 0) continue;
    const Eigen::VectorXd a = s.xi.cwiseProduct(s.b_check.row(i).transpose());
    double v = st.yy - 2.0 * a.dot(st.zy) + a.dot(st.zz * a);
    if (c.dim_x > 0)
      v += -2.0 * s.beta.dot(st.xy) + s.beta.dot(st.xx * s.beta) + 2.0 * s.beta.dot(st.xz * a);
    ss += v;
  }
  return std::max(ss, 0.0);
}

void sample_sigma2(const CompiledCohort& c, ParameterState& s, const PriorConfig& priors, Rng& rng) {
  long n_obs = 0;
  for (const auto& st : c.psa) n_obs += st.m;
  const double ss = psa_residual_ss(c, s);
  s.sigma2 = draw_inverse_gamma(priors.sigma2_shape + 0.5 * static_cast<double>(n_obs),
                                priors.sigma2_rate + 0.5 * ss, rng);
}

void sample_scales_beta_sigma2(const CompiledCohort& c, ParameterState& s, const PriorConfig& priors, Rng& rng) {
  sample_xi(c, s, priors, rng);
  sample_beta(c, s, priors, rng);
  sample_sigma2(c, s, priors, rng);
}

double sample_rho(const std::vector<int>& eta, const PriorConfig& priors, Rng& rng) {
  double k = 0.0;
  for (int e : eta) k += e;
  return rng.beta(priors.rho_a + k, priors.rho_b + static_cast<double>(eta.size()) - k);
}

Eigen::VectorXd sample_logistic_block(const LogisticData& data, const std::vector<int>& eta,
                                      const Eigen::VectorXd& coef, const CoefficientPriorVectors& prior,
                                      LogisticKernel kernel, Rng& rng, MetropolisState* mh, bool adapt) {
  const Eigen::Index p = coef.size();
  const Eigen::MatrixXd x = full_design(data, eta);
  const Eigen::VectorXd prior_prec = prior.sd.array().square().inverse().matrix();

  if (kernel == LogisticKernel::polya_gamma) {
    const Eigen::VectorXd l = x * coef;
    Eigen::VectorXd w(l.size());
    for (Eigen::Index r = 0; r < l.size(); ++r) w[r] = draw_polya_gamma(l[r], rng);
    Eigen::MatrixXd q = x.transpose() * w.asDiagonal() * x;
    q.diagonal() += prior_prec;
    const Eigen::VectorXd b =
        x.transpose() * (data.y.array() - 0.5).matrix() + prior_prec.cwiseProduct(prior.mean);
    return draw_mvn_precision(q, b, rng);
  }

  MetropolisState local;
  MetropolisState& st = mh ? *mh : local;
  if (!st.initialized) {
    st.log_scale = std::log(2.38 / std::sqrt(static_cast<double>(p)));
    st.initialized = true;
  }
  Eigen::MatrixXd info = 0.25 * x.transpose() * x;
  info.diagonal() += prior_prec;
  Eigen::LLT<Eigen::MatrixXd> llt(info);
  if (llt.info() != Eigen::Success) throw NumericalError("logistic proposal precision not positive definite");
  Eigen::VectorXd z(p);
  for (Eigen::Index k = 0; k < p; ++k) z[k] = rng.normal();
  const Eigen::VectorXd prop = coef + std::exp(st.log_scale) * llt.matrixU().solve(z);
  const double cur_lp = logistic_log_target(x, data.y, coef, prior);
  const double new_lp = logistic_log_target(x, data.y, prop, prior);
  if (!std::isfinite(cur_lp)) throw NumericalError("non-finite logistic log-target");
  const double log_alpha = std::isfinite(new_lp) ? std::min(0.0, new_lp - cur_lp) : -INFINITY;
  const bool accept = std::log(rng.uniform()) < log_alpha;
  ++st.proposals;
  if (accept) ++st.accepted;
  if (adapt) {
    const double step = 1.0 / std::pow(static_cast<double>(st.proposals) + 1.0, 0.6);
    st.log_scale += step * (std::exp(log_alpha) - kMetropolisTargetAcceptance);
  }
  return accept ? prop : coef;
}

GibbsSampler::GibbsSampler(const CompiledCohort& cohort, const ModelConfig& config)
    : c_(cohort),
      config_(config),
      prior_nu_(coefficient_prior(cohort.biopsy_layout, config.priors)),
      prior_gamma_(coefficient_prior(cohort.reclass_layout, config.priors)),
      prior_omega_(coefficient_prior(cohort.surgery_layout, config.priors)) {}

const MetropolisState& GibbsSampler::metropolis(ModelBlock b) const {
  switch (b) {
    case ModelBlock::biopsy: return mh_[0];
    case ModelBlock::reclass: return mh_[1];
    default: return mh_[2];
  }
}

ParameterState GibbsSampler::initialize(Rng& rng) const {
  const auto& pr = config_.priors;
  const bool dispersed = config_.sampler.init_strategy == "prior";
  ParameterState s = ParameterState::zeros(c_);
  const auto dz = c_.dim_z;
  s.rho = dispersed ? rng.beta(pr.rho_a, pr.rho_b) : pr.rho_a / (pr.rho_a + pr.rho_b);
  for (int i = 0; i < c_.n; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    s.eta[ui] = c_.eta_observed[ui] ? *c_.eta_observed[ui] : (rng.uniform() < s.rho ? 1 : 0);
  }

  // Per-patient least squares on Z with a small ridge for short series.
  double rss = 0.0;
  long dof = 0;
  for (int i = 0; i < c_.n; ++i) {
    const auto& z = c_.z_rows[static_cast<std::size_t>(i)];
    const auto& y = c_.y_rows[static_cast<std::size_t>(i)];
    if (y.size() == 0) continue;
    Eigen::MatrixXd q = z.transpose() * z;
    q.diagonal().array() += 1e-3;
    const Eigen::VectorXd b = q.ldlt().solve(z.transpose() * y);
    s.b_check.row(i) = b.transpose();
    rss += (y - z * b).squaredNorm();
    dof += std::max<long>(0, y.size() - dz);
  }
  s.sigma2 = dof > 0 ? std::max(rss / static_cast<double>(dof), 1e-3) : 1.0;

  Eigen::VectorXd overall = Eigen::VectorXd::Zero(dz);
  for (int i = 0; i < c_.n; ++i) overall += s.b_check.row(i).transpose();
  if (c_.n > 0) overall /= c_.n;
  for (int k = 0; k < 2; ++k) {
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(dz);
    int nk = 0;
    for (int i = 0; i < c_.n; ++i)
      if (s.eta[static_cast<std::size_t>(i)] == k) {
        sum += s.b_check.row(i).transpose();
        ++nk;
      }
    s.mu[k] = nk > 0 ? Eigen::VectorXd(sum / nk) : overall;
  }
  Eigen::MatrixXd cov = Eigen::MatrixXd::Identity(dz, dz);
  if (c_.n > dz + 1) {
    cov.setZero();
    for (int i = 0; i < c_.n; ++i) {
      const Eigen::VectorXd r = s.b_check.row(i).transpose() - s.mu[s.eta[static_cast<std::size_t>(i)]];
      cov += r * r.transpose();
    }
    cov /= (c_.n - 1);
    cov.diagonal().array() += 1e-2;
  }
  s.sigma_b[0] = s.sigma_b[1] = cov;

  if (dispersed) {
    auto jitter = [&](Eigen::VectorXd& v, const CoefficientPriorVectors& p) {
      for (Eigen::Index k = 0; k < v.size(); ++k) v[k] = p.mean[k] + std::min(p.sd[k], 1.0) * rng.normal();
    };
    if (config_.iop.biopsy) jitter(s.nu, prior_nu_);
    jitter(s.gamma, prior_gamma_);
    if (config_.iop.surgery) jitter(s.omega, prior_omega_);
  }
  return s;
}

std::vector<double> GibbsSampler::sweep(ParameterState& s, Rng& rng, bool adapt, long iteration) {
  const auto& pr = config_.priors;
  const auto kernel = config_.sampler.logistic_kernel;
  std::vector<double> p_eta;
  BlockContext ctx{iteration, "eta"};
  try {
    const MvnCache cache(s);
    p_eta = sample_eta(c_, s, cache, config_.iop, rng);
    ctx.block = "b_check";
    for (int i = 0; i < c_.n; ++i) s.b_check.row(i) = sample_b_check(c_, i, s, cache, rng).transpose();
    ctx.block = "mu_sigma";
    sample_class_means_and_cov(c_, s, pr, config_.class_specific_covariance, rng);
    ctx.block = "xi";
    sample_xi(c_, s, pr, rng);
    ctx.block = "beta";
    sample_beta(c_, s, pr, rng);
    ctx.block = "sigma2";
    sample_sigma2(c_, s, pr, rng);
    ctx.block = "rho";
    s.rho = sample_rho(s.eta, pr, rng);
    if (config_.iop.biopsy) {
      ctx.block = "nu";
      s.nu = sample_logistic_block(c_.biopsy, s.eta, s.nu, prior_nu_, kernel, rng, &mh_[0], adapt);
    }
    ctx.block = "gamma";
    s.gamma = sample_logistic_block(c_.reclass, s.eta, s.gamma, prior_gamma_, kernel, rng, &mh_[1], adapt);
    if (config_.iop.surgery) {
      ctx.block = "omega";
      s.omega = sample_logistic_block(c_.surgery, s.eta, s.omega, prior_omega_, kernel, rng, &mh_[2], adapt);
    }
  } catch (const NumericalError& e) {
    rethrow_with_context(ctx, e);
  }
  return p_eta;
}

ChainDraws run_chain(const CompiledCohort& cohort, const ModelConfig& config, std::uint64_t seed,
                     const ProgressCallback& progress, int chain_index) {
  const auto& sc = config.sampler;
  sc.validate();
  Rng rng(seed);
  GibbsSampler sampler(cohort, config);
  ParameterState s = sampler.initialize(rng);
  ChainDraws out;
  out.seed = seed;
  out.resize(sc.draws_per_chain(), cohort, config.class_specific_covariance, sc.store_patient_draws);
  int t = 0;
  for (int it = 0; it < sc.n_iterations; ++it) {
    const bool in_burn = it < sc.burn_in;
    auto p_eta = sampler.sweep(s, rng, in_burn, it);
    if (!in_burn && (it - sc.burn_in + 1) % sc.thin == 0 && t < out.draws) {
      // Store the eta conditional at the recorded state, not the pre-sweep one.
      const MvnCache cache(s);
      for (int i = 0; i < cohort.n; ++i) p_eta[static_cast<std::size_t>(i)] = eta_full_conditional(cohort, i, s, cache, config.iop);
      const double lp = joint_logpost(cohort, s, config, config.iop);
      if (!std::isfinite(lp)) throw NumericalError("non-finite log-posterior at iteration " + std::to_string(it));
      out.record(t++, s, p_eta, lp, sc.store_patient_draws);
    }
    if (progress && (it + 1) % 500 == 0) progress(chain_index, it + 1);
  }
  return out;
}

PosteriorStore fit_compiled(const CompiledCohort& cohort, const ModelConfig& config, const ProgressCallback& progress) {
  config.validate();
  const auto& sc = config.sampler;
  PosteriorStore store;
  store.config = config;
  store.fingerprint = config.fingerprint();
  store.engine_version = engine_version();
  store.n_patients = cohort.n;
  store.dim_x = cohort.dim_x;
  store.dim_z = cohort.dim_z;
  store.ids = cohort.ids;
  store.eta_observed = cohort.eta_observed;
  store.chains.resize(static_cast<std::size_t>(sc.n_chains));

  const int workers = std::clamp(sc.threads, 1, sc.n_chains);
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (;;) {
      const int k = next.fetch_add(1);
      if (k >= sc.n_chains) return;
      try {
        store.chains[static_cast<std::size_t>(k)] = run_chain(cohort, config, chain_seed(sc.seed, k), progress, k);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);
  return store;
}

PosteriorStore fit(const Cohort& cohort, const ModelConfig& config, const ProgressCallback& progress) {
  const auto compiled = compile_cohort(cohort, config);
  return fit_compiled(compiled, config, progress);
}

}  // namespace asurv
