#include "asurv/posterior_store.hpp"

#include <sstream>

#include "asurv/cohort_io.hpp"

namespace asurv {
namespace {

using nlohmann::json;

std::vector<std::string> spec_labels(const ModelConfig& config, ModelBlock b, bool intercept) {
  std::vector<std::string> out;
  if (intercept) out.emplace_back("intercept");
  for (const auto& s : config.block_covariates(b))
    for (auto& l : s.column_labels()) out.push_back(std::move(l));
  return out;
}

std::vector<std::string> sigma_labels(int dz, bool class_specific) {
  std::vector<std::string> out;
  for (int k = 0; k < (class_specific ? 2 : 1); ++k)
    for (int r = 0; r < dz; ++r)
      for (int c = 0; c < dz; ++c)
        out.push_back((class_specific ? "class" + std::to_string(k) + ":" : std::string()) + "s" +
                      std::to_string(r) + std::to_string(c));
  return out;
}

template <typename M>
std::string matrix_csv(const std::vector<std::string>& header, const M& m) {
  std::ostringstream os;
  for (std::size_t k = 0; k < header.size(); ++k) os << (k ? "," : "") << header[k];
  os << '\n';
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index k = 0; k < m.cols(); ++k) {
      if (k) os << ',';
      if constexpr (std::is_same_v<typename M::Scalar, int>) os << m(r, k);
      else os << format_double(m(r, k));
    }
    os << '\n';
  }
  return os.str();
}

Eigen::MatrixXd read_matrix(const std::filesystem::path& file, std::size_t expected_cols, int expected_rows) {
  const auto t = CsvTable::read(file);
  if (t.header().size() != expected_cols)
    throw InputError(file.filename().string() + ": expected " + std::to_string(expected_cols) + " columns");
  if (static_cast<int>(t.rows()) != expected_rows)
    throw InputError(file.filename().string() + ": expected " + std::to_string(expected_rows) + " draws");
  Eigen::MatrixXd m(expected_rows, static_cast<Eigen::Index>(expected_cols));
  for (int r = 0; r < expected_rows; ++r)
    for (std::size_t k = 0; k < expected_cols; ++k) m(r, static_cast<Eigen::Index>(k)) = t.number(static_cast<std::size_t>(r), t.header()[k]);
  return m;
}

std::string chain_file(int chain, const char* block) {
  return "chain" + std::to_string(chain) + "_" + block + ".csv";
}

}  // namespace

void ChainDraws::resize(int n_draws, const CompiledCohort& c, bool class_specific, bool patient_draws) {
  draws = n_draws;
  const int dz = c.dim_z;
  rho.setZero(n_draws);
  sigma2.setZero(n_draws);
  logpost.setZero(n_draws);
  beta.setZero(n_draws, c.dim_x);
  xi.setZero(n_draws, dz);
  mu0.setZero(n_draws, dz);
  mu1.setZero(n_draws, dz);
  sigma_b.setZero(n_draws, dz * dz * (class_specific ? 2 : 1));
  nu.setZero(n_draws, c.biopsy_layout.n_coef());
  gamma.setZero(n_draws, c.reclass_layout.n_coef());
  omega.setZero(n_draws, c.surgery_layout.n_coef());
  if (patient_draws) {
    eta.setZero(n_draws, c.n);
    p_eta.setZero(n_draws, c.n);
    b_check.setZero(n_draws, static_cast<Eigen::Index>(c.n) * dz);
  } else {
    eta.resize(0, 0);
    p_eta.resize(0, 0);
    b_check.resize(0, 0);
  }
}

void ChainDraws::record(int t, const ParameterState& s, const std::vector<double>& p_eta_row, double lp,
                        bool patient_draws) {
  rho[t] = s.rho;
  sigma2[t] = s.sigma2;
  logpost[t] = lp;
  beta.row(t) = s.beta.transpose();
  xi.row(t) = s.xi.transpose();
  mu0.row(t) = s.mu[0].transpose();
  mu1.row(t) = s.mu[1].transpose();
  const auto dz = s.xi.size();
  for (Eigen::Index k = 0; k < sigma_b.cols() / (dz * dz); ++k)
    for (Eigen::Index r = 0; r < dz; ++r)
      for (Eigen::Index q = 0; q < dz; ++q) sigma_b(t, k * dz * dz + r * dz + q) = s.sigma_b[k](r, q);
  nu.row(t) = s.nu.transpose();
  gamma.row(t) = s.gamma.transpose();
  omega.row(t) = s.omega.transpose();
  if (patient_draws) {
    for (std::size_t i = 0; i < s.eta.size(); ++i) {
      eta(t, static_cast<Eigen::Index>(i)) = s.eta[i];
      p_eta(t, static_cast<Eigen::Index>(i)) = p_eta_row[i];
      for (Eigen::Index d = 0; d < dz; ++d) b_check(t, static_cast<Eigen::Index>(i) * dz + d) = s.b_check(static_cast<Eigen::Index>(i), d);
    }
  }
}

int PosteriorStore::total_draws() const {
  int n = 0;
  for (const auto& c : chains) n += c.draws;
  return n;
}

bool PosteriorStore::has_patient_draws() const {
  return !chains.empty() && chains.front().p_eta.size() > 0;
}

int PosteriorStore::patient_index(const std::string& id) const {
  for (std::size_t i = 0; i < ids.size(); ++i)
    if (ids[i] == id) return static_cast<int>(i);
  return -1;
}

ParameterState PosteriorStore::population_draw(int chain, int t) const {
  const auto& c = chains.at(static_cast<std::size_t>(chain));
  ParameterState s;
  s.rho = c.rho[t];
  s.sigma2 = c.sigma2[t];
  s.beta = c.beta.row(t).transpose();
  s.xi = c.xi.row(t).transpose();
  s.mu[0] = c.mu0.row(t).transpose();
  s.mu[1] = c.mu1.row(t).transpose();
  const int dz = dim_z;
  for (int k = 0; k < 2; ++k) {
    const int block = config.class_specific_covariance ? k : 0;
    s.sigma_b[k].resize(dz, dz);
    for (int r = 0; r < dz; ++r)
      for (int q = 0; q < dz; ++q) s.sigma_b[k](r, q) = c.sigma_b(t, block * dz * dz + r * dz + q);
  }
  s.nu = c.nu.row(t).transpose();
  s.gamma = c.gamma.row(t).transpose();
  s.omega = c.omega.row(t).transpose();
  return s;
}

std::vector<ParameterState> PosteriorStore::population_draws() const {
  std::vector<ParameterState> out;
  out.reserve(static_cast<std::size_t>(total_draws()));
  for (int c = 0; c < static_cast<int>(chains.size()); ++c)
    for (int t = 0; t < chains[static_cast<std::size_t>(c)].draws; ++t) out.push_back(population_draw(c, t));
  return out;
}

std::vector<double> PosteriorStore::pooled_rho() const {
  std::vector<double> out;
  for (const auto& c : chains) out.insert(out.end(), c.rho.data(), c.rho.data() + c.rho.size());
  return out;
}

void PosteriorStore::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  json meta;
  meta["format_version"] = kStoreFormatVersion;
  meta["engine_version"] = engine_version;
  meta["fingerprint"] = fingerprint;
  meta["config"] = config.to_json();
  meta["dims"] = {{"n_patients", n_patients}, {"dim_x", dim_x}, {"dim_z", dim_z}};
  meta["patient_draws"] = has_patient_draws();
  json seeds = json::array();
  json draws = json::array();
  for (const auto& c : chains) {
    seeds.push_back(std::to_string(c.seed));
    draws.push_back(c.draws);
  }
  meta["chain_seeds"] = seeds;
  meta["chain_draws"] = draws;
  json patients = json::array();
  for (std::size_t i = 0; i < ids.size(); ++i)
    patients.push_back({{"id", ids[i]}, {"eta_observed", eta_observed[i] ? json(*eta_observed[i]) : json(nullptr)}});
  meta["patients"] = patients;
  write_file_atomic(dir / "meta.json", meta.dump(2) + "\n");

  const auto x_labels = spec_labels(config, ModelBlock::psa_fixed, false);
  const auto z_labels = spec_labels(config, ModelBlock::psa_random, true);
  const auto s_labels = sigma_labels(dim_z, config.class_specific_covariance);
  const auto u_labels = config.layout(ModelBlock::biopsy).labels;
  const auto v_labels = config.layout(ModelBlock::reclass).labels;
  const auto w_labels = config.layout(ModelBlock::surgery).labels;
  std::vector<std::string> b_labels;
  for (const auto& id : ids)
    for (int d = 0; d < dim_z; ++d) b_labels.push_back(id + "[" + z_labels[static_cast<std::size_t>(d)] + "]");

  for (int k = 0; k < static_cast<int>(chains.size()); ++k) {
    const auto& c = chains[static_cast<std::size_t>(k)];
    Eigen::MatrixXd scalars(c.draws, 3);
    scalars << c.rho, c.sigma2, c.logpost;
    write_file_atomic(dir / chain_file(k, "scalars"), matrix_csv({"rho", "sigma2", "logpost"}, scalars));
    write_file_atomic(dir / chain_file(k, "beta"), matrix_csv(x_labels, c.beta));
    write_file_atomic(dir / chain_file(k, "xi"), matrix_csv(z_labels, c.xi));
    write_file_atomic(dir / chain_file(k, "mu0"), matrix_csv(z_labels, c.mu0));
    write_file_atomic(dir / chain_file(k, "mu1"), matrix_csv(z_labels, c.mu1));
    write_file_atomic(dir / chain_file(k, "sigma_b"), matrix_csv(s_labels, c.sigma_b));
    write_file_atomic(dir / chain_file(k, "nu"), matrix_csv(u_labels, c.nu));
    write_file_atomic(dir / chain_file(k, "gamma"), matrix_csv(v_labels, c.gamma));
    write_file_atomic(dir / chain_file(k, "omega"), matrix_csv(w_labels, c.omega));
    if (has_patient_draws()) {
      write_file_atomic(dir / chain_file(k, "eta"), matrix_csv(ids, c.eta));
      write_file_atomic(dir / chain_file(k, "p_eta"), matrix_csv(ids, c.p_eta));
      write_file_atomic(dir / chain_file(k, "b_check"), matrix_csv(b_labels, c.b_check));
    }
  }
}

PosteriorStore PosteriorStore::load(const std::filesystem::path& dir) {
  const auto meta_path = dir / "meta.json";
  if (!std::filesystem::exists(meta_path)) throw InputError("store meta.json missing: " + meta_path.string());
  PosteriorStore s;
  bool patient_draws = false;
  std::vector<std::uint64_t> seeds;
  std::vector<int> draws;
  try {
    const auto meta = json::parse(read_file(meta_path));
    if (meta.at("format_version").get<int>() != kStoreFormatVersion)
      throw InputError("unsupported store format version");
    s.engine_version = meta.at("engine_version").get<std::string>();
    s.fingerprint = meta.at("fingerprint").get<std::string>();
    s.config = ModelConfig::from_json(meta.at("config"));
    s.n_patients = meta.at("dims").at("n_patients").get<int>();
    s.dim_x = meta.at("dims").at("dim_x").get<int>();
    s.dim_z = meta.at("dims").at("dim_z").get<int>();
    patient_draws = meta.at("patient_draws").get<bool>();
    for (const auto& v : meta.at("chain_seeds")) seeds.push_back(std::stoull(v.get<std::string>()));
    for (const auto& v : meta.at("chain_draws")) draws.push_back(v.get<int>());
    for (const auto& p : meta.at("patients")) {
      s.ids.push_back(p.at("id").get<std::string>());
      const auto& e = p.at("eta_observed");
      s.eta_observed.push_back(e.is_null() ? std::nullopt : std::optional<int>(e.get<int>()));
    }
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed store meta.json: ") + e.what());
  }
  if (s.config.fingerprint() != s.fingerprint) throw InputError("store fingerprint does not match its config");
  if (static_cast<int>(s.ids.size()) != s.n_patients) throw InputError("store patient list has wrong length");
  if (s.config.dim_x() != s.dim_x || s.config.dim_z() != s.dim_z) throw InputError("store dims do not match config");
  const int expected = s.config.sampler.draws_per_chain();

  const int dz = s.dim_z;
  const auto nsig = static_cast<std::size_t>(dz * dz * (s.config.class_specific_covariance ? 2 : 1));
  for (std::size_t k = 0; k < seeds.size(); ++k) {
    if (draws[k] != expected) throw InputError("chain draw count does not match sampler config");
    const int ck = static_cast<int>(k);
    ChainDraws c;
    c.seed = seeds[k];
    c.draws = draws[k];
    const auto sc = read_matrix(dir / chain_file(ck, "scalars"), 3, c.draws);
    c.rho = sc.col(0);
    c.sigma2 = sc.col(1);
    c.logpost = sc.col(2);
    c.beta = read_matrix(dir / chain_file(ck, "beta"), static_cast<std::size_t>(s.dim_x), c.draws);
    c.xi = read_matrix(dir / chain_file(ck, "xi"), static_cast<std::size_t>(dz), c.draws);
    c.mu0 = read_matrix(dir / chain_file(ck, "mu0"), static_cast<std::size_t>(dz), c.draws);
    c.mu1 = read_matrix(dir / chain_file(ck, "mu1"), static_cast<std::size_t>(dz), c.draws);
    c.sigma_b = read_matrix(dir / chain_file(ck, "sigma_b"), nsig, c.draws);
    c.nu = read_matrix(dir / chain_file(ck, "nu"), static_cast<std::size_t>(s.config.layout(ModelBlock::biopsy).n_coef()), c.draws);
    c.gamma = read_matrix(dir / chain_file(ck, "gamma"), static_cast<std::size_t>(s.config.layout(ModelBlock::reclass).n_coef()), c.draws);
    c.omega = read_matrix(dir / chain_file(ck, "omega"), static_cast<std::size_t>(s.config.layout(ModelBlock::surgery).n_coef()), c.draws);
    if (patient_draws) {
      const auto n = static_cast<std::size_t>(s.n_patients);
      c.eta = read_matrix(dir / chain_file(ck, "eta"), n, c.draws).cast<int>();
      c.p_eta = read_matrix(dir / chain_file(ck, "p_eta"), n, c.draws);
      c.b_check = read_matrix(dir / chain_file(ck, "b_check"), n * static_cast<std::size_t>(dz), c.draws);
    }
    s.chains.push_back(std::move(c));
  }
  return s;
}

std::vector<ParameterColumn> population_columns(const PosteriorStore& store) {
  std::vector<ParameterColumn> out;
  const auto& cfg = store.config;
  out.push_back({"rho", "rho", true});
  out.push_back({"sigma2", "sigma2", true});
  for (const auto& l : spec_labels(cfg, ModelBlock::psa_fixed, false)) out.push_back({"beta", l, true});
  const auto z = spec_labels(cfg, ModelBlock::psa_random, true);
  for (const auto& l : z) out.push_back({"xi", l, false});
  for (const auto& l : z) out.push_back({"mu0", l, false});
  for (const auto& l : z) out.push_back({"mu1", l, false});
  for (const auto& l : sigma_labels(store.dim_z, cfg.class_specific_covariance)) out.push_back({"sigma_b", l, false});
  // Identified functionals of the scale split: xi * mu and diag(xi) Sigma diag(xi).
  for (const auto& l : z) out.push_back({"xi*mu0", l, true});
  for (const auto& l : z) out.push_back({"xi*mu1", l, true});
  for (const auto& l : sigma_labels(store.dim_z, cfg.class_specific_covariance)) out.push_back({"cov_b", l, true});
  if (cfg.iop.biopsy)
    for (const auto& l : cfg.layout(ModelBlock::biopsy).labels) out.push_back({"nu", l, true});
  for (const auto& l : cfg.layout(ModelBlock::reclass).labels) out.push_back({"gamma", l, true});
  if (cfg.iop.surgery)
    for (const auto& l : cfg.layout(ModelBlock::surgery).labels) out.push_back({"omega", l, true});
  return out;
}

Eigen::MatrixXd population_matrix(const PosteriorStore& store, int chain) {
  const auto& c = store.chains.at(static_cast<std::size_t>(chain));
  const auto cols = population_columns(store);
  const int dz = store.dim_z;
  const int nsig = static_cast<int>(c.sigma_b.cols());
  Eigen::MatrixXd m(c.draws, static_cast<Eigen::Index>(cols.size()));
  for (int t = 0; t < c.draws; ++t) {
    int k = 0;
    m(t, k++) = c.rho[t];
    m(t, k++) = c.sigma2[t];
    for (Eigen::Index j = 0; j < c.beta.cols(); ++j) m(t, k++) = c.beta(t, j);
    for (int j = 0; j < dz; ++j) m(t, k++) = c.xi(t, j);
    for (int j = 0; j < dz; ++j) m(t, k++) = c.mu0(t, j);
    for (int j = 0; j < dz; ++j) m(t, k++) = c.mu1(t, j);
    for (int j = 0; j < nsig; ++j) m(t, k++) = c.sigma_b(t, j);
    for (int j = 0; j < dz; ++j) m(t, k++) = c.xi(t, j) * c.mu0(t, j);
    for (int j = 0; j < dz; ++j) m(t, k++) = c.xi(t, j) * c.mu1(t, j);
    for (int j = 0; j < nsig; ++j) {
      const int r = (j % (dz * dz)) / dz;
      const int q = j % dz;
      m(t, k++) = c.xi(t, r) * c.sigma_b(t, j) * c.xi(t, q);
    }
    if (store.config.iop.biopsy)
      for (Eigen::Index j = 0; j < c.nu.cols(); ++j) m(t, k++) = c.nu(t, j);
    for (Eigen::Index j = 0; j < c.gamma.cols(); ++j) m(t, k++) = c.gamma(t, j);
    if (store.config.iop.surgery)
      for (Eigen::Index j = 0; j < c.omega.cols(); ++j) m(t, k++) = c.omega(t, j);
  }
  return m;
}

PosteriorStore store_from_draws(const std::vector<ParameterState>& draws, const ModelConfig& config) {
  if (draws.empty()) throw InputError("store_from_draws: no draws");
  const auto empty = compile_cohort({}, config);
  PosteriorStore st;
  st.config = config;
  st.fingerprint = config.fingerprint();
  st.engine_version = ASURV_VERSION;
  st.dim_x = empty.dim_x;
  st.dim_z = empty.dim_z;
  ChainDraws ch;
  ch.resize(static_cast<int>(draws.size()), empty, config.class_specific_covariance, false);
  for (std::size_t t = 0; t < draws.size(); ++t) {
    ParameterState s = draws[t];
    s.b_check = Eigen::MatrixXd::Zero(0, empty.dim_z);
    s.eta.clear();
    ch.record(static_cast<int>(t), s, {}, 0.0, false);
  }
  st.chains.push_back(std::move(ch));
  return st;
}

}  // namespace asurv
