#include "asurv/likelihood.hpp"

#include <cmath>
#include <numbers>

namespace asurv {
namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

double normal_logpdf(double x, double mean, double sd) {
  const double z = (x - mean) / sd;
  return -0.5 * kLog2Pi - std::log(sd) - 0.5 * z * z;
}

double log_multigamma(double a, int p) {
  double out = 0.25 * p * (p - 1) * std::log(std::numbers::pi);
  for (int j = 0; j < p; ++j) out += std::lgamma(a - 0.5 * j);
  return out;
}

double inverse_wishart_logpdf(const Eigen::MatrixXd& s, double dof, const Eigen::MatrixXd& scale) {
  const int p = static_cast<int>(s.rows());
  Eigen::LLT<Eigen::MatrixXd> ls(s);
  Eigen::LLT<Eigen::MatrixXd> lp(scale);
  if (ls.info() != Eigen::Success || lp.info() != Eigen::Success)
    throw NumericalError("inverse-Wishart argument not positive definite");
  const double logdet_s = 2.0 * ls.matrixLLT().diagonal().array().log().sum();
  const double logdet_p = 2.0 * lp.matrixLLT().diagonal().array().log().sum();
  const double trace = ls.solve(scale).trace();
  return 0.5 * dof * logdet_p - 0.5 * dof * p * std::log(2.0) - log_multigamma(0.5 * dof, p) -
         0.5 * (dof + p + 1.0) * logdet_s - 0.5 * trace;
}

}  // namespace

ParameterState ParameterState::zeros(const CompiledCohort& c) {
  ParameterState s;
  s.beta = Eigen::VectorXd::Zero(c.dim_x);
  s.xi = Eigen::VectorXd::Ones(c.dim_z);
  s.mu[0] = s.mu[1] = Eigen::VectorXd::Zero(c.dim_z);
  s.sigma_b[0] = s.sigma_b[1] = Eigen::MatrixXd::Identity(c.dim_z, c.dim_z);
  s.nu = Eigen::VectorXd::Zero(c.biopsy_layout.n_coef());
  s.gamma = Eigen::VectorXd::Zero(c.reclass_layout.n_coef());
  s.omega = Eigen::VectorXd::Zero(c.surgery_layout.n_coef());
  s.b_check = Eigen::MatrixXd::Zero(c.n, c.dim_z);
  s.eta.assign(static_cast<std::size_t>(c.n), 0);
  for (int i = 0; i < c.n; ++i)
    if (c.eta_observed[static_cast<std::size_t>(i)]) s.eta[static_cast<std::size_t>(i)] = *c.eta_observed[static_cast<std::size_t>(i)];
  return s;
}

const Eigen::VectorXd& ParameterState::coefficients(ModelBlock b) const {
  switch (b) {
    case ModelBlock::biopsy: return nu;
    case ModelBlock::reclass: return gamma;
    case ModelBlock::surgery: return omega;
    default: throw InputError("block has no logistic coefficients");
  }
}

Eigen::VectorXd& ParameterState::coefficients(ModelBlock b) {
  return const_cast<Eigen::VectorXd&>(static_cast<const ParameterState&>(*this).coefficients(b));
}

MvnCache::MvnCache(const ParameterState& s) {
  for (int k = 0; k < 2; ++k) {
    llt[k].compute(s.sigma_b[k]);
    if (llt[k].info() != Eigen::Success) throw NumericalError("random-effect covariance not positive definite");
    log_det[k] = 2.0 * llt[k].matrixLLT().diagonal().array().log().sum();
  }
}

double log1p_exp(double x) {
  if (x > 35.0) return x;
  if (x < -35.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

double bernoulli_logit_loglik(double y, double logit) { return y * logit - log1p_exp(logit); }

double mvn_logpdf(const Eigen::VectorXd& x, const Eigen::VectorXd& mean, const Eigen::LLT<Eigen::MatrixXd>& llt,
                  double log_det) {
  const Eigen::VectorXd r = llt.matrixL().solve(x - mean);
  return -0.5 * static_cast<double>(x.size()) * kLog2Pi - 0.5 * log_det - 0.5 * r.squaredNorm();
}

double logistic_logit(const LogisticData& d, int r, const Eigen::VectorXd& coef, int eta) {
  const auto n_main = d.main.cols();
  double l = d.main.row(r).dot(coef.head(n_main));
  if (eta != 0) l += coef[n_main] + d.interact.row(r).dot(coef.tail(d.interact.cols()));
  return l;
}

double psa_loglik(const CompiledCohort& c, int i, const ParameterState& s) {
  const auto& x = c.x_rows[static_cast<std::size_t>(i)];
  const auto& z = c.z_rows[static_cast<std::size_t>(i)];
  const auto& y = c.y_rows[static_cast<std::size_t>(i)];
  if (y.size() == 0) return 0.0;
  if (x.cols() != s.beta.size() || z.cols() != s.xi.size()) throw InputError("PSA dimension mismatch");
  const Eigen::VectorXd b = s.xi.cwiseProduct(s.b_check.row(i).transpose());
  const Eigen::VectorXd resid = y - x * s.beta - z * b;
  return -0.5 * static_cast<double>(y.size()) * (kLog2Pi + std::log(s.sigma2)) - 0.5 * resid.squaredNorm() / s.sigma2;
}

double random_effect_logprior(const Eigen::VectorXd& b_check, int eta, const ParameterState& s,
                              const MvnCache& cache) {
  return mvn_logpdf(b_check, s.mu[eta], cache.llt[eta], cache.log_det[eta]);
}

double logistic_block_loglik(const LogisticData& d, int i, const Eigen::VectorXd& coef, int eta) {
  if (d.row_begin.empty()) return 0.0;
  if (coef.size() != d.main.cols() + 1 + d.interact.cols()) throw InputError("coefficient dimension mismatch");
  double out = 0.0;
  for (int r = d.row_begin[static_cast<std::size_t>(i)]; r < d.row_begin[static_cast<std::size_t>(i) + 1]; ++r)
    out += bernoulli_logit_loglik(d.y[r], logistic_logit(d, r, coef, eta));
  return out;
}

double biopsy_loglik(const CompiledCohort& c, int i, const ParameterState& s, int eta) {
  return logistic_block_loglik(c.biopsy, i, s.nu, eta);
}

double reclass_loglik(const CompiledCohort& c, int i, const ParameterState& s, int eta) {
  return logistic_block_loglik(c.reclass, i, s.gamma, eta);
}

double surgery_loglik(const CompiledCohort& c, int i, const ParameterState& s, int eta) {
  return logistic_block_loglik(c.surgery, i, s.omega, eta);
}

double eta_log_weight(const CompiledCohort& c, int i, const ParameterState& s, const MvnCache& cache, IopFlags iop,
                      int k) {
  double out = k == 1 ? std::log(s.rho) : std::log1p(-s.rho);
  out += random_effect_logprior(s.b_check.row(i).transpose(), k, s, cache);
  out += reclass_loglik(c, i, s, k);
  if (iop.biopsy) out += biopsy_loglik(c, i, s, k);
  if (iop.surgery) out += surgery_loglik(c, i, s, k);
  return out;
}

double eta_full_conditional(const CompiledCohort& c, int i, const ParameterState& s, const MvnCache& cache,
                            IopFlags iop) {
  if (s.rho <= 0.0) return 0.0;
  if (s.rho >= 1.0) return 1.0;
  const double l1 = eta_log_weight(c, i, s, cache, iop, 1);
  const double l0 = eta_log_weight(c, i, s, cache, iop, 0);
  if (!std::isfinite(l0) || !std::isfinite(l1)) throw NumericalError("non-finite latent-state likelihood");
  // P = 1 / (1 + exp(l0 - l1))
  const double d = l0 - l1;
  return d > 0 ? std::exp(-d) / (1.0 + std::exp(-d)) : 1.0 / (1.0 + std::exp(d));
}

CoefficientPriorVectors coefficient_prior(const LogisticLayout& layout, const PriorConfig& priors) {
  double sd = 5.0;
  switch (layout.block) {
    case ModelBlock::biopsy: sd = priors.nu_sd; break;
    case ModelBlock::reclass: sd = priors.gamma_sd; break;
    case ModelBlock::surgery: sd = priors.omega_sd; break;
    default: break;
  }
  CoefficientPriorVectors out{Eigen::VectorXd::Zero(layout.n_coef()), Eigen::VectorXd::Constant(layout.n_coef(), sd)};
  for (const auto& o : priors.overrides) {
    if (o.block != layout.block) continue;
    const int k = layout.index_of(o.label);
    if (k < 0) throw InputError("prior override for unknown coefficient '" + o.label + "' in block " + std::string(to_string(o.block)));
    out.mean[k] = o.mean;
    out.sd[k] = o.sd;
  }
  return out;
}

double log_prior(const ParameterState& s, const ModelConfig& config, const CompiledCohort& c) {
  const auto& p = config.priors;
  if (!(s.rho > 0.0 && s.rho < 1.0) || !(s.sigma2 > 0.0)) return -INFINITY;
  double out = std::lgamma(p.rho_a + p.rho_b) - std::lgamma(p.rho_a) - std::lgamma(p.rho_b) +
               (p.rho_a - 1.0) * std::log(s.rho) + (p.rho_b - 1.0) * std::log1p(-s.rho);
  for (Eigen::Index k = 0; k < s.beta.size(); ++k) out += normal_logpdf(s.beta[k], p.beta_mean, p.beta_sd);
  const double xi_norm = std::log(0.5 * std::erfc(-p.xi_mean / (p.xi_sd * std::numbers::sqrt2)));
  for (Eigen::Index k = 0; k < s.xi.size(); ++k) {
    if (!(s.xi[k] > 0.0)) return -INFINITY;
    out += normal_logpdf(s.xi[k], p.xi_mean, p.xi_sd) - xi_norm;
  }
  for (int k = 0; k < 2; ++k)
    for (Eigen::Index d = 0; d < s.mu[k].size(); ++d) out += normal_logpdf(s.mu[k][d], p.mu_mean, p.mu_sd);
  out += p.sigma2_shape * std::log(p.sigma2_rate) - std::lgamma(p.sigma2_shape) -
         (p.sigma2_shape + 1.0) * std::log(s.sigma2) - p.sigma2_rate / s.sigma2;
  const int dz = c.dim_z;
  const double dof = p.iw_dof(dz);
  const Eigen::MatrixXd scale = p.iw_scale(dz);
  out += inverse_wishart_logpdf(s.sigma_b[0], dof, scale);
  if (config.class_specific_covariance) out += inverse_wishart_logpdf(s.sigma_b[1], dof, scale);

  auto block = [&](const LogisticLayout& layout, const Eigen::VectorXd& coef) {
    const auto pr = coefficient_prior(layout, p);
    for (Eigen::Index k = 0; k < coef.size(); ++k) out += normal_logpdf(coef[k], pr.mean[k], pr.sd[k]);
  };
  if (config.iop.biopsy) block(c.biopsy_layout, s.nu);
  block(c.reclass_layout, s.gamma);
  if (config.iop.surgery) block(c.surgery_layout, s.omega);
  return out;
}

LogPosteriorComponents joint_logpost_components(const CompiledCohort& c, const ParameterState& s,
                                                const ModelConfig& config, IopFlags iop) {
  LogPosteriorComponents out;
  const MvnCache cache(s);
  for (int i = 0; i < c.n; ++i) {
    const int k = s.eta[static_cast<std::size_t>(i)];
    out.eta += k == 1 ? std::log(s.rho) : std::log1p(-s.rho);
    out.psa += psa_loglik(c, i, s);
    out.random_effects += random_effect_logprior(s.b_check.row(i).transpose(), k, s, cache);
    if (iop.biopsy) out.biopsy += biopsy_loglik(c, i, s, k);
    out.reclass += reclass_loglik(c, i, s, k);
    if (iop.surgery) out.surgery += surgery_loglik(c, i, s, k);
  }
  ModelConfig scoped = config;
  scoped.iop = iop;
  out.prior = log_prior(s, scoped, c);
  return out;
}

double joint_logpost(const CompiledCohort& c, const ParameterState& s, const ModelConfig& config, IopFlags iop) {
  return joint_logpost_components(c, s, config, iop).total();
}

}  // namespace asurv
