#include "asurv/design.hpp"

#include <cmath>

namespace asurv {
namespace {

Eigen::VectorXd to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

void stack(int patient, const Eigen::VectorXd& main, double y, std::vector<Eigen::VectorXd>& rows,
           std::vector<double>& ys, std::vector<int>& owners) {
  rows.push_back(main);
  ys.push_back(y);
  owners.push_back(patient);
}

void finish(LogisticData& dst, const LogisticLayout& layout, const std::vector<Eigen::VectorXd>& rows,
            const std::vector<double>& ys, const std::vector<int>& owners, int n_patients) {
  const auto n = static_cast<Eigen::Index>(rows.size());
  dst.main.resize(n, layout.n_main);
  dst.interact.resize(n, layout.n_interact());
  dst.y.resize(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    if (rows[r].size() != layout.n_main) throw InputError("design row has wrong dimension");
    dst.main.row(r) = rows[r].transpose();
    for (int k = 0; k < layout.n_interact(); ++k)
      dst.interact(r, k) = rows[r][layout.interaction_columns[k]];
    dst.y[r] = ys[r];
  }
  dst.patient = owners;
  dst.row_begin.assign(n_patients + 1, 0);
  for (int p : owners) ++dst.row_begin[p + 1];
  for (int i = 0; i < n_patients; ++i) dst.row_begin[i + 1] += dst.row_begin[i];
}

}  // namespace

Eigen::VectorXd interval_block_row(const std::vector<CovariateSpec>& specs, const IntervalRecord& iv,
                                   bool surgery_block) {
  std::vector<double> row{1.0};
  for (const auto& spec : specs) {
    double raw = 0.0;
    if (surgery_block && spec.name() == "prev_reclass") {
      // Reclassification found at this interval's biopsy precedes the surgery decision.
      raw = (iv.cov.prev_reclass || iv.reclassified.value_or(false)) ? 1.0 : 0.0;
    } else {
      raw = interval_feature(iv.cov, spec.name());
    }
    spec.append(raw, row);
  }
  return to_vector(row);
}

Eigen::VectorXd psa_fixed_row(const std::vector<CovariateSpec>& specs, const PsaObservation& obs) {
  std::vector<double> x;
  for (const auto& s : specs) s.append(psa_feature(obs, s.name()), x);
  return to_vector(x);
}

Eigen::VectorXd psa_random_row(const std::vector<CovariateSpec>& specs, const PsaObservation& obs) {
  std::vector<double> z{1.0};
  for (const auto& s : specs) s.append(psa_feature(obs, s.name()), z);
  return to_vector(z);
}

PatientDesign build_design(const PatientRecord& patient, const ModelConfig& config) {
  PatientDesign out;
  const auto fixed = config.block_covariates(ModelBlock::psa_fixed);
  const auto random = config.block_covariates(ModelBlock::psa_random);
  for (const auto& obs : patient.psa) {
    if (!std::isfinite(obs.log_psa)) throw InputError("patient " + patient.id + ": log PSA not finite");
    out.psa_rows.push_back({psa_fixed_row(fixed, obs), psa_random_row(random, obs), obs.log_psa});
  }

  const auto ub = config.block_covariates(ModelBlock::biopsy);
  const auto vb = config.block_covariates(ModelBlock::reclass);
  const auto wb = config.block_covariates(ModelBlock::surgery);
  const int last_biopsy = patient.last_biopsy_interval();
  for (const auto& iv : patient.intervals) {
    IntervalDesignRow row;
    row.interval_index = iv.index;
    if (iv.index <= last_biopsy) {
      row.u = interval_block_row(ub, iv, false);
      row.biopsy_outcome = iv.biopsy ? 1.0 : 0.0;
      if (iv.biopsy) {
        if (!iv.reclassified) throw InputError("patient " + patient.id + ": biopsy without result");
        row.v = interval_block_row(vb, iv, false);
        const bool r = *iv.reclassified;
        if (iv.biopsy_count >= 2) {
          // Only the last biopsy of the interval can reclassify.
          row.reclass_outcomes = {0.0, r ? 1.0 : 0.0};
        } else {
          row.reclass_outcomes = {r ? 1.0 : 0.0};
        }
      } else if (iv.reclassified) {
        throw InputError("patient " + patient.id + ": reclassification without biopsy");
      }
    }
    row.w = interval_block_row(wb, iv, true);
    row.surgery_outcome = iv.surgery ? 1.0 : 0.0;
    out.interval_rows.push_back(std::move(row));
  }
  return out;
}

void append_logistic_row(LogisticData& data, const Eigen::VectorXd& main,
                         const std::vector<int>& interaction_columns, double y) {
  const Eigen::Index r = data.y.size();
  data.main.conservativeResize(r + 1, main.size());
  data.interact.conservativeResize(r + 1, static_cast<Eigen::Index>(interaction_columns.size()));
  data.y.conservativeResize(r + 1);
  data.main.row(r) = main.transpose();
  for (std::size_t k = 0; k < interaction_columns.size(); ++k)
    data.interact(r, static_cast<Eigen::Index>(k)) = main[interaction_columns[k]];
  data.y[r] = y;
  data.patient.push_back(0);
  if (data.row_begin.empty()) data.row_begin = {0, 0};
  data.row_begin.back() = static_cast<int>(r + 1);
}

CompiledCohort compile_designs(const std::vector<PatientDesign>& designs,
                               const std::vector<std::string>& ids,
                               const std::vector<std::optional<int>>& eta_observed,
                               const ModelConfig& config) {
  CompiledCohort c;
  c.n = static_cast<int>(designs.size());
  c.dim_x = config.dim_x();
  c.dim_z = config.dim_z();
  c.ids = ids;
  c.eta_observed = eta_observed;
  c.biopsy_layout = config.layout(ModelBlock::biopsy);
  c.reclass_layout = config.layout(ModelBlock::reclass);
  c.surgery_layout = config.layout(ModelBlock::surgery);
  c.xx_total = Eigen::MatrixXd::Zero(c.dim_x, c.dim_x);

  std::vector<Eigen::VectorXd> ur, vr, wr;
  std::vector<double> uy, vy, wy;
  std::vector<int> uo, vo, wo;
  for (int i = 0; i < c.n; ++i) {
    const auto& d = designs[static_cast<std::size_t>(i)];
    const auto m = static_cast<Eigen::Index>(d.psa_rows.size());
    Eigen::MatrixXd x(m, c.dim_x), z(m, c.dim_z);
    Eigen::VectorXd y(m);
    for (Eigen::Index r = 0; r < m; ++r) {
      const auto& row = d.psa_rows[static_cast<std::size_t>(r)];
      if (row.x.size() != c.dim_x || row.z.size() != c.dim_z)
        throw InputError("PSA design row has wrong dimension");
      x.row(r) = row.x.transpose();
      z.row(r) = row.z.transpose();
      y[r] = row.log_psa;
    }
    PsaStats s;
    s.m = static_cast<int>(m);
    s.yy = y.squaredNorm();
    s.xy = x.transpose() * y;
    s.zy = z.transpose() * y;
    s.xx = x.transpose() * x;
    s.xz = x.transpose() * z;
    s.zz = z.transpose() * z;
    c.xx_total += s.xx;
    c.psa.push_back(std::move(s));
    c.x_rows.push_back(std::move(x));
    c.z_rows.push_back(std::move(z));
    c.y_rows.push_back(std::move(y));

    for (const auto& row : d.interval_rows) {
      if (row.biopsy_outcome)
        stack(i, row.u, *row.biopsy_outcome, ur, uy, uo);
      for (double r : row.reclass_outcomes) stack(i, row.v, r, vr, vy, vo);
      if (row.surgery_outcome) stack(i, row.w, *row.surgery_outcome, wr, wy, wo);
    }
  }
  finish(c.biopsy, c.biopsy_layout, ur, uy, uo, c.n);
  finish(c.reclass, c.reclass_layout, vr, vy, vo, c.n);
  finish(c.surgery, c.surgery_layout, wr, wy, wo, c.n);
  return c;
}

CompiledCohort compile_cohort(const Cohort& cohort, const ModelConfig& config) {
  std::vector<PatientDesign> designs;
  std::vector<std::string> ids;
  std::vector<std::optional<int>> eta;
  designs.reserve(cohort.size());
  for (const auto& p : cohort) {
    designs.push_back(build_design(p, config));
    ids.push_back(p.id);
    eta.push_back(p.eta_observed);
  }
  return compile_designs(designs, ids, eta, config);
}

}  // namespace asurv
