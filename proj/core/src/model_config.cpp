#include "asurv/model_config.hpp"

#include <algorithm>
#include <cstdio>
#include <set>

namespace asurv {
namespace {

using nlohmann::json;

CovariateSpec ns(std::string name, std::vector<double> knots, double lo, double hi, ModelBlock b) {
  return {std::move(name), SplineTransform{std::move(knots), lo, hi}, b};
}
CovariateSpec std_cov(std::string name, double mean, double sd, ModelBlock b) {
  return {std::move(name), StandardizeTransform{mean, sd}, b};
}
double d(const char* iso) { return date_to_years(iso); }

std::vector<CovariateSpec> shared_psa_covariates() {
  return {std_cov("volume", 57.5, 24.9, ModelBlock::psa_fixed),
          std_cov("age", 67.1, 6.8, ModelBlock::psa_random)};
}

std::vector<CovariateSpec> biopsy_covariates() {
  const auto B = ModelBlock::biopsy;
  return {ns("time_since_dx", {2, 4, 6}, 1, 20, B),
          ns("date", {d("2007-04-04"), d("2010-07-11"), d("2013-01-28")}, d("1995-08-17"),
             d("2015-09-30"), B),
          ns("age", {69.8}, 46.8, 89.5, B), ns("num_prev_biopsies", {3}, 1, 13, B)};
}

std::vector<CovariateSpec> reclass_covariates() {
  const auto R = ModelBlock::reclass;
  return {ns("time_since_dx", {2.3}, 0.08, 15.9, R),
          ns("date", {d("2009-01-07")}, d("1995-10-25"), d("2014-06-19"), R),
          std_cov("age", 67.7, 5.5, R)};
}

std::vector<CovariateSpec> surgery_covariates(bool with_biopsy_extent) {
  const auto S = ModelBlock::surgery;
  std::vector<CovariateSpec> out{
      ns("time_since_dx", {2, 4, 6}, 1, 20, S),
      ns("date", {d("2008-06-18"), d("2012-04-15")}, d("1995-08-17"), d("2015-09-30"), S),
      ns("age", {69.8}, 46.8, 89.6, S), std_cov("num_prev_biopsies", 3.8, 2.3, S)};
  if (with_biopsy_extent) {
    out.push_back(std_cov("max_prev_pos_cores", 1.6, 0.9, S));
    out.push_back(ns("max_prev_pct_pos", {15}, 1, 100, S));
  }
  out.push_back({"prev_reclass", IdentityTransform{}, S});
  return out;
}

ModelConfig assemble(bool with_biopsy_extent) {
  ModelConfig c;
  auto append = [&](std::vector<CovariateSpec> v) {
    for (auto& s : v) c.covariates.push_back(std::move(s));
  };
  append(shared_psa_covariates());
  append(biopsy_covariates());
  append(reclass_covariates());
  append(surgery_covariates(with_biopsy_extent));
  c.eta_interactions[ModelBlock::surgery] = {"prev_reclass"};
  return c;
}

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (int r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (int k = 0; k < m.cols(); ++k) row.push_back(m(r, k));
    rows.push_back(row);
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j) {
  const auto n = static_cast<int>(j.size());
  Eigen::MatrixXd m(n, n);
  for (int r = 0; r < n; ++r) {
    if (j[r].size() != j.size()) throw InputError("matrix must be square");
    for (int k = 0; k < n; ++k) m(r, k) = j[r][k].get<double>();
  }
  return m;
}

template <class T>
void read_opt(const json& j, const char* key, T& dst) {
  if (j.contains(key)) dst = j.at(key).get<T>();
}

}  // namespace

Eigen::MatrixXd PriorConfig::iw_scale(int dz) const {
  if (sigma_b_scale) return *sigma_b_scale;
  return Eigen::MatrixXd::Identity(dz, dz);
}

void PriorConfig::validate(int dz) const {
  auto pos = [](double v, const char* what) {
    if (!(v > 0.0)) throw InputError(std::string("prior: ") + what + " must be positive");
  };
  pos(rho_a, "rho_beta a");
  pos(rho_b, "rho_beta b");
  pos(beta_sd, "beta sd");
  pos(mu_sd, "mu sd");
  pos(xi_sd, "xi sd");
  pos(nu_sd, "nu sd");
  pos(gamma_sd, "gamma sd");
  pos(omega_sd, "omega sd");
  pos(sigma2_shape, "sigma2 shape");
  pos(sigma2_rate, "sigma2 rate");
  for (const auto& o : overrides) pos(o.sd, "coefficient override sd");
  if (!(iw_dof(dz) > dz - 1)) throw InputError("prior: inverse-Wishart dof must exceed D_Z - 1");
  const Eigen::MatrixXd s = iw_scale(dz);
  if (s.rows() != dz || s.cols() != dz) throw InputError("prior: inverse-Wishart scale has wrong size");
  if (!s.isApprox(s.transpose()) || Eigen::LLT<Eigen::MatrixXd>(s).info() != Eigen::Success)
    throw InputError("prior: inverse-Wishart scale must be symmetric positive-definite");
}

void SamplerConfig::validate() const {
  if (n_chains < 1) throw InputError("sampler: n_chains must be >= 1");
  if (thin < 1) throw InputError("sampler: thin must be >= 1");
  if (burn_in < 0 || burn_in >= n_iterations)
    throw InputError("sampler: burn_in must be in [0, n_iterations)");
  if (init_strategy != "default" && init_strategy != "prior")
    throw InputError("sampler: init_strategy must be 'default' or 'prior'");
  if (threads < 1) throw InputError("sampler: threads must be >= 1");
}

int LogisticLayout::index_of(const std::string& label) const {
  const auto it = std::find(labels.begin(), labels.end(), label);
  return it == labels.end() ? -1 : static_cast<int>(it - labels.begin());
}

ModelConfig ModelConfig::clinical_default() { return assemble(true); }
ModelConfig ModelConfig::simulation_default() { return assemble(false); }

std::vector<CovariateSpec> ModelConfig::block_covariates(ModelBlock b) const {
  std::vector<CovariateSpec> out;
  for (const auto& c : covariates)
    if (c.applies_to() == b) out.push_back(c);
  return out;
}

LogisticLayout ModelConfig::layout(ModelBlock b) const {
  if (b == ModelBlock::psa_fixed || b == ModelBlock::psa_random)
    throw std::invalid_argument("layout() is defined for logistic blocks only");
  LogisticLayout out;
  out.block = b;
  out.covariates = block_covariates(b);
  out.labels.push_back("intercept");
  std::map<std::string, std::vector<int>> columns_of;
  int col = 1;
  for (const auto& c : out.covariates) {
    for (const auto& l : c.column_labels()) {
      out.labels.push_back(l);
      columns_of[c.name()].push_back(col++);
    }
  }
  out.n_main = col;
  out.labels.push_back("eta");
  if (const auto it = eta_interactions.find(b); it != eta_interactions.end()) {
    for (const auto& name : it->second) {
      const auto cols = columns_of.find(name);
      if (cols == columns_of.end())
        throw InputError("eta interaction '" + name + "' is not a covariate of block " +
                         std::string(to_string(b)));
      for (int k : cols->second) {
        out.interaction_columns.push_back(k);
        out.labels.push_back("eta:" + out.labels[static_cast<std::size_t>(k)]);
      }
    }
  }
  return out;
}

int ModelConfig::dim_x() const {
  int n = 0;
  for (const auto& c : covariates)
    if (c.applies_to() == ModelBlock::psa_fixed) n += c.width();
  return n;
}

int ModelConfig::dim_z() const {
  int n = 1;
  for (const auto& c : covariates)
    if (c.applies_to() == ModelBlock::psa_random) n += c.width();
  return n;
}

void ModelConfig::validate() const {
  std::set<std::pair<std::string, ModelBlock>> seen;
  for (const auto& c : covariates) {
    if (!seen.insert({c.name(), c.applies_to()}).second)
      throw InputError("covariate '" + c.name() + "' listed twice for block " +
                       std::string(to_string(c.applies_to())));
    const bool psa = c.applies_to() == ModelBlock::psa_fixed || c.applies_to() == ModelBlock::psa_random;
    if (psa && c.name() != "age" && c.name() != "volume")
      throw InputError("PSA covariate '" + c.name() + "' must be age or volume");
  }
  for (auto b : {ModelBlock::biopsy, ModelBlock::reclass, ModelBlock::surgery}) (void)layout(b);
  priors.validate(dim_z());
  for (const auto& o : priors.overrides) {
    if (layout(o.block).index_of(o.label) < 0)
      throw InputError("prior override refers to unknown coefficient '" + o.label + "'");
  }
  sampler.validate();
}

json to_json(const PriorConfig& p) {
  json j{{"rho_beta", {p.rho_a, p.rho_b}},
         {"beta", {{"mean", p.beta_mean}, {"sd", p.beta_sd}}},
         {"mu", {{"mean", p.mu_mean}, {"sd", p.mu_sd}}},
         {"xi", {{"mean", p.xi_mean}, {"sd", p.xi_sd}}},
         {"nu_sd", p.nu_sd},
         {"gamma_sd", p.gamma_sd},
         {"omega_sd", p.omega_sd},
         {"sigma2", {{"shape", p.sigma2_shape}, {"rate", p.sigma2_rate}}}};
  json iw = json::object();
  if (p.sigma_b_dof) iw["dof"] = *p.sigma_b_dof;
  if (p.sigma_b_scale) iw["scale"] = matrix_to_json(*p.sigma_b_scale);
  j["sigma_b"] = iw;
  json ov = json::array();
  for (const auto& o : p.overrides)
    ov.push_back({{"block", std::string(to_string(o.block))}, {"label", o.label}, {"mean", o.mean}, {"sd", o.sd}});
  j["coefficient_overrides"] = ov;
  return j;
}

PriorConfig prior_config_from_json(const json& j) {
  PriorConfig p;
  if (j.contains("rho_beta")) {
    p.rho_a = j.at("rho_beta").at(0).get<double>();
    p.rho_b = j.at("rho_beta").at(1).get<double>();
  }
  if (j.contains("beta")) {
    read_opt(j.at("beta"), "mean", p.beta_mean);
    read_opt(j.at("beta"), "sd", p.beta_sd);
  }
  if (j.contains("mu")) {
    read_opt(j.at("mu"), "mean", p.mu_mean);
    read_opt(j.at("mu"), "sd", p.mu_sd);
  }
  if (j.contains("xi")) {
    read_opt(j.at("xi"), "mean", p.xi_mean);
    read_opt(j.at("xi"), "sd", p.xi_sd);
  }
  read_opt(j, "nu_sd", p.nu_sd);
  read_opt(j, "gamma_sd", p.gamma_sd);
  read_opt(j, "omega_sd", p.omega_sd);
  if (j.contains("sigma2")) {
    read_opt(j.at("sigma2"), "shape", p.sigma2_shape);
    read_opt(j.at("sigma2"), "rate", p.sigma2_rate);
  }
  if (j.contains("sigma_b")) {
    const auto& iw = j.at("sigma_b");
    if (iw.contains("dof")) p.sigma_b_dof = iw.at("dof").get<double>();
    if (iw.contains("scale")) p.sigma_b_scale = matrix_from_json(iw.at("scale"));
  }
  if (j.contains("coefficient_overrides")) {
    for (const auto& o : j.at("coefficient_overrides")) {
      p.overrides.push_back({parse_model_block(o.at("block").get<std::string>()),
                             o.at("label").get<std::string>(), o.at("mean").get<double>(),
                             o.at("sd").get<double>()});
    }
  }
  return p;
}

json to_json(const SamplerConfig& s) {
  return {{"n_chains", s.n_chains},
          {"n_iterations", s.n_iterations},
          {"burn_in", s.burn_in},
          {"thin", s.thin},
          {"seed", s.seed},
          {"logistic_kernel",
           s.logistic_kernel == LogisticKernel::polya_gamma ? "polya_gamma" : "adaptive_metropolis"},
          {"init_strategy", s.init_strategy},
          {"store_patient_draws", s.store_patient_draws}};
}

SamplerConfig sampler_config_from_json(const json& j) {
  SamplerConfig s;
  read_opt(j, "n_chains", s.n_chains);
  read_opt(j, "n_iterations", s.n_iterations);
  read_opt(j, "burn_in", s.burn_in);
  read_opt(j, "thin", s.thin);
  read_opt(j, "seed", s.seed);
  read_opt(j, "init_strategy", s.init_strategy);
  read_opt(j, "store_patient_draws", s.store_patient_draws);
  read_opt(j, "threads", s.threads);
  if (j.contains("logistic_kernel")) {
    const auto k = j.at("logistic_kernel").get<std::string>();
    if (k == "polya_gamma") s.logistic_kernel = LogisticKernel::polya_gamma;
    else if (k == "adaptive_metropolis") s.logistic_kernel = LogisticKernel::adaptive_metropolis;
    else throw InputError("sampler: unknown logistic_kernel '" + k + "'");
  }
  return s;
}

json ModelConfig::to_json() const {
  json covs = json::array();
  for (const auto& c : covariates) covs.push_back(c.to_json());
  json inter = json::object();
  for (const auto& [b, names] : eta_interactions) inter[std::string(to_string(b))] = names;
  return {{"schema_version", 1},
          {"covariates", covs},
          {"eta_interactions", inter},
          {"iop", iop.str()},
          {"class_specific_covariance", class_specific_covariance},
          {"priors", asurv::to_json(priors)},
          {"sampler", asurv::to_json(sampler)}};
}

ModelConfig ModelConfig::from_json(const json& j) {
  try {
    if (!j.is_object()) throw InputError("model config must be a JSON object");
    if (j.contains("schema_version") && j.at("schema_version").get<int>() != 1)
      throw InputError("unsupported model config schema_version");
    static const std::set<std::string> known{"schema_version", "covariates", "eta_interactions", "iop",
                                             "class_specific_covariance", "priors", "sampler", "preset"};
    for (const auto& [k, v] : j.items())
      if (!known.count(k)) throw InputError("model config: unknown key '" + k + "'");
    ModelConfig c;
    const std::string preset = j.value("preset", std::string{});
    if (preset == "clinical") c = clinical_default();
    else if (preset == "simulation") c = simulation_default();
    else if (!preset.empty()) throw InputError("model config: unknown preset '" + preset + "'");
    if (j.contains("covariates")) {
      c.covariates.clear();
      for (const auto& cj : j.at("covariates")) c.covariates.push_back(CovariateSpec::from_json(cj));
    }
    if (j.contains("eta_interactions")) {
      c.eta_interactions.clear();
      for (const auto& [k, v] : j.at("eta_interactions").items())
        c.eta_interactions[parse_model_block(k)] = v.get<std::vector<std::string>>();
    }
    if (j.contains("iop")) c.iop = IopFlags::parse(j.at("iop").get<std::string>());
    read_opt(j, "class_specific_covariance", c.class_specific_covariance);
    if (j.contains("priors")) c.priors = prior_config_from_json(j.at("priors"));
    if (j.contains("sampler")) c.sampler = sampler_config_from_json(j.at("sampler"));
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw InputError(std::string("model config: ") + e.what());
  }
}

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string ModelConfig::fingerprint() const { return fnv1a_hex(to_json().dump()); }

}  // namespace asurv
