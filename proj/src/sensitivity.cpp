#include "dualct/sensitivity.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>
#include <stdexcept>

#include <Eigen/SVD>
#include <json.hpp>

#include "dualct/forward.hpp"
#include "dualct/pals.hpp"

namespace dualct {

JacobianBlocks jacobian_blocks(const SystemMatrix& a, const Eigen::MatrixXd& basis, const Eigen::VectorXd& beta,
                               const Eigen::VectorXd& alpha, const EnergySpectrum& spectrum) {
  if (basis.rows() != a.cols()) throw std::invalid_argument("jacobian_blocks: basis rows must equal pixel count");
  if (beta.size() != basis.cols() || alpha.size() != basis.cols()) {
    throw std::invalid_argument("jacobian_blocks: weight length must equal basis size");
  }
  const SpectralKernel kernel(spectrum);
  const Eigen::MatrixXd ab = a.a * basis;  // rows A_i* B
  const Eigen::VectorXd lc = ab * beta;
  const Eigen::VectorXd lp = ab * alpha;
  const Eigen::VectorXd chord = a.a * Eigen::VectorXd::Ones(a.cols());

  JacobianBlocks out;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    if (chord(i) > 0.0) out.rows.push_back(i);
  }
  out.dropped = a.rows() - Eigen::Index(out.rows.size());
  const auto m = Eigen::Index(out.rows.size());
  out.j_c.resize(m, basis.cols());
  out.j_p.resize(m, basis.cols());
  out.d.resize(m);
  out.mean_counts.resize(m);
  for (Eigen::Index r = 0; r < m; ++r) {
    const Eigen::Index i = out.rows[std::size_t(r)];
    const auto mo = kernel.moments(lc(i), lp(i));
    // D1_ii = sum_b W_ib w_b fKN_b, D2_ii likewise with f_p; R_i* = A_i* B / Ybar_i.
    const double d1 = mo.kn;
    const double d2 = mo.pe;
    out.mean_counts(r) = mo.counts;
    out.d(r) = d2 / d1;
    out.j_c.row(r) = (d1 / mo.counts) * ab.row(i);
    out.j_p.row(r) = out.d(r) * out.j_c.row(r);
  }
  return out;
}

SensitivityReport error_bounds(const Eigen::MatrixXd& j_c, const Eigen::VectorXd& d, Eigen::Index exact_limit) {
  if (d.size() != j_c.rows()) throw std::invalid_argument("error_bounds: D size must match the Jacobian rows");
  if (j_c.rows() == 0 || j_c.cols() == 0) throw std::invalid_argument("error_bounds: empty Jacobian");
  if ((d.array() <= 0.0).any()) throw std::invalid_argument("error_bounds: D must be positive");

  SensitivityReport rep;
  const Eigen::MatrixXd& h = j_c;
  const Eigen::MatrixXd dh = d.asDiagonal() * h;
  rep.unknowns = h.cols();
  rep.rows = h.rows();
  rep.d_max = d.maxCoeff();
  rep.d_max_inv_sq = 1.0 / (rep.d_max * rep.d_max);
  rep.norm_1 = h.cwiseAbs().colwise().sum().maxCoeff();
  rep.norm_inf = h.cwiseAbs().rowwise().sum().maxCoeff();

  const Eigen::BDCSVD<Eigen::MatrixXd> svd_h(h, Eigen::ComputeThinU);
  const Eigen::BDCSVD<Eigen::MatrixXd> svd_m(dh, Eigen::ComputeThinU);
  const Eigen::MatrixXd k = svd_h.matrixU().transpose() * svd_m.matrixU();
  const Eigen::VectorXd m_left = 1.0 + (k * k.transpose()).diagonal().array();
  const Eigen::VectorXd m_right = 1.0 + (k.transpose() * k).diagonal().array();
  rep.min_m = std::min(m_left.minCoeff(), m_right.minCoeff());

  const double n = double(rep.unknowns);
  const double hh = rep.norm_1 * rep.norm_inf;
  rep.bound_beta = n * rep.min_m / hh;
  rep.bound_alpha = n * rep.min_m / (rep.d_max * rep.d_max * hh);

  // Stacked G = [H, D H]; equilibrate columns so the rank test is meaningful.
  Eigen::MatrixXd g(h.rows(), 2 * h.cols());
  g << h, dh;
  const Eigen::VectorXd colnorm = g.colwise().norm();
  if ((colnorm.array() == 0.0).any()) {
    rep.rank = 0;
    rep.full_rank = false;
    return rep;
  }
  const Eigen::MatrixXd gs = g * colnorm.cwiseInverse().asDiagonal();
  const bool want_exact = g.cols() <= exact_limit;
  const Eigen::BDCSVD<Eigen::MatrixXd> svd_g(gs, want_exact ? Eigen::ComputeThinV : 0);
  const Eigen::VectorXd sv = svd_g.singularValues();
  const double tol = 1e-10 * sv(0);
  rep.rank = int((sv.array() > tol).count());
  rep.full_rank = rep.rank == g.cols();
  if (want_exact && rep.full_rank) {
    // (G^T G)^-1 = S^-1 V Sigma^-2 V^T S^-1; its diagonal blocks are Lambda_1^-1 and Lambda_4^-1.
    const Eigen::MatrixXd w = colnorm.cwiseInverse().asDiagonal() * svd_g.matrixV() * sv.cwiseInverse().asDiagonal();
    const Eigen::VectorXd diag = w.rowwise().squaredNorm();
    rep.trace_beta = diag.head(h.cols()).sum();
    rep.trace_alpha = diag.tail(h.cols()).sum();
  }
  return rep;
}

std::vector<std::pair<std::string, MaterialPoint>> reference_materials() {
  return {{"water", MaterialPoint{0.1907, 4939.2}},
          {"plexiglass", MaterialPoint{0.2157, 3670.1}},
          {"aluminium", MaterialPoint{0.4547, 72887.5}}};
}

std::vector<MaterialRow> material_table(const std::vector<std::pair<std::string, MaterialPoint>>& materials,
                                        const EnergySpectrum& spectrum) {
  const ImageGrid grid(20.0, 20.0, 32, 32);
  ScanGeometry geom;
  geom.angles_rad = {0.0};
  geom.detectors_per_view = 32;
  geom.detector_spacing = grid.lx / 32.0;
  const SystemMatrix a = build_system_matrix(grid, geom);

  // Background basis rescaled to a partition of unity, so constant weights
  // give an exactly homogeneous slab.
  const DefaultBases bases = build_default_bases(grid);
  Eigen::MatrixXd b = bases.background->matrix();
  b = b.rowwise().sum().cwiseInverse().asDiagonal() * b;

  std::vector<MaterialRow> rows;
  for (const auto& [name, mat] : materials) {
    const Eigen::VectorXd beta = Eigen::VectorXd::Constant(b.cols(), mat.c);
    const Eigen::VectorXd alpha = Eigen::VectorXd::Constant(b.cols(), mat.p);
    const JacobianBlocks jb = jacobian_blocks(a, b, beta, alpha, spectrum);
    MaterialRow r;
    r.name = name;
    r.material = mat;
    r.d_max = jb.d.maxCoeff();
    r.d_max_inv_sq = 1.0 / (r.d_max * r.d_max);
    rows.push_back(r);
  }
  return rows;
}

SensitivityReport example_bounds(const EnergySpectrum& spectrum) {
  const ImageGrid grid(20.0, 20.0, 16, 16);
  const ScanGeometry geom = ScanGeometry::parallel(grid, 12, 24);
  const SystemMatrix a = build_system_matrix(grid, geom);

  const double step = grid.lx / 8.0;
  const RbfBasis basis = RbfBasis::lattice(grid, 8, 8, 0.5 * step, 0.5 * step, step, step, step);
  Eigen::MatrixXd b = basis.matrix();
  b = b.rowwise().sum().cwiseInverse().asDiagonal() * b;

  Eigen::VectorXd beta(b.cols()), alpha(b.cols());
  for (Eigen::Index k = 0; k < b.cols(); ++k) {
    const double x = basis.centers()(k, 0), y = basis.centers()(k, 1);
    const double ripple = 1.0 + 0.2 * std::sin(x / 3.0) * std::cos(y / 4.0);
    beta(k) = 0.1907 * ripple;
    alpha(k) = 4939.2 * (2.0 - ripple);
  }
  const JacobianBlocks jb = jacobian_blocks(a, b, beta, alpha, spectrum);
  return error_bounds(jb.j_c, jb.d);
}

void write_material_table_csv(std::ostream& os, const std::vector<MaterialRow>& rows) {
  os << "material,p,c,d_max_inv_sq\n" << std::setprecision(10);
  for (const MaterialRow& r : rows) {
    os << r.name << ',' << r.material.p << ',' << r.material.c << ',' << r.d_max_inv_sq << '\n';
  }
}

void write_report_json(std::ostream& os, const SensitivityReport& r) {
  nlohmann::ordered_json j;
  j["unknowns"] = r.unknowns;
  j["rows"] = r.rows;
  j["d_max"] = r.d_max;
  j["d_max_inv_sq"] = r.d_max_inv_sq;
  j["norm_1"] = r.norm_1;
  j["norm_inf"] = r.norm_inf;
  j["min_m"] = r.min_m;
  j["bound_beta"] = r.bound_beta;
  j["bound_alpha"] = r.bound_alpha;
  j["rank"] = r.rank;
  j["full_rank"] = r.full_rank;
  j["trace_beta"] = r.trace_beta ? nlohmann::ordered_json(*r.trace_beta) : nlohmann::ordered_json();
  j["trace_alpha"] = r.trace_alpha ? nlohmann::ordered_json(*r.trace_alpha) : nlohmann::ordered_json();
  os << j.dump(2) << '\n';
}

}  // namespace dualct
