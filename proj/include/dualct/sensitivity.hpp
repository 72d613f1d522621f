#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dualct/pals.hpp"
#include "dualct/projector.hpp"
#include "dualct/spectra.hpp"

namespace dualct {

/// Linearized low-energy background Jacobians. Rows are the rays with a
/// nonzero chord through the grid; rays that miss it carry no information
/// and are dropped.
struct JacobianBlocks {
  Eigen::MatrixXd j_c;          // d m_L / d beta
  Eigen::MatrixXd j_p;          // d m_L / d alpha  (= D J_c)
  Eigen::VectorXd d;            // diagonal of D = D2 D1^-1
  Eigen::VectorXd mean_counts;  // Ybar of each retained ray
  std::vector<Eigen::Index> rows;  // original ray index of each retained row
  Eigen::Index dropped = 0;
};

JacobianBlocks jacobian_blocks(const SystemMatrix& a, const Eigen::MatrixXd& basis, const Eigen::VectorXd& beta,
                               const Eigen::VectorXd& alpha, const EnergySpectrum& spectrum);

struct SensitivityReport {
  Eigen::Index unknowns = 0;  // N, columns of H
  Eigen::Index rows = 0;
  double d_max = 0.0;
  double d_max_inv_sq = 0.0;
  double norm_1 = 0.0;    // max column sum of |H|
  double norm_inf = 0.0;  // max row sum of |H|
  double min_m = 0.0;
  double bound_beta = 0.0;
  double bound_alpha = 0.0;
  int rank = 0;
  bool full_rank = false;
  std::optional<double> trace_beta;   // tr(Lambda_1^-1)
  std::optional<double> trace_alpha;  // tr(Lambda_4^-1)
};

/// Lower bounds on the MVU error traces for H = J_c and M = D H (unit noise
/// variance). Exact traces are added when 2 N <= exact_limit and the
/// stacked matrix [H, D H] has full column rank.
SensitivityReport error_bounds(const Eigen::MatrixXd& j_c, const Eigen::VectorXd& d, Eigen::Index exact_limit = 400);

struct MaterialRow {
  std::string name;
  MaterialPoint material;
  double d_max = 0.0;
  double d_max_inv_sq = 0.0;
};

/// Water, plexiglass and aluminium with their tabulated coefficients.
std::vector<std::pair<std::string, MaterialPoint>> reference_materials();

/// d_max^-2 for each homogeneous material filling a 20 x 20 cm domain
/// (32 x 32 pixels) seen by one parallel view at angle 0 with 32 detectors.
std::vector<MaterialRow> material_table(const std::vector<std::pair<std::string, MaterialPoint>>& materials,
                                        const EnergySpectrum& spectrum);

/// Bounds for a small inhomogeneous scene: 16 x 16 pixels over 20 x 20 cm,
/// 12 views x 24 detectors, an 8 x 8 partition-of-unity background basis
/// and water-like weights with a smooth +-20% ripple. Small enough for the
/// exact traces.
SensitivityReport example_bounds(const EnergySpectrum& spectrum);

void write_material_table_csv(std::ostream& os, const std::vector<MaterialRow>& rows);
void write_report_json(std::ostream& os, const SensitivityReport& report);

}  // namespace dualct
