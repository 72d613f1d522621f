#pragma once

#include <memory>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include "dualct/forward.hpp"
#include "dualct/pals.hpp"
#include "dualct/projector.hpp"

namespace dualct {

/// Ellipse in (c, p) space holding the admissible object contrasts.
struct ContrastRegion {
  double c0 = 0.19;
  double p0 = 5000.0;
  double sigma_c = 0.05;
  double sigma_p = 500.0;

  void validate() const;
  bool contains(double c, double p) const;
};

struct ObjectiveConfig {
  double lambda1 = 0.1;
  double lambda2 = 10.0;
  double penalty_r = 1e5;
  double smooth_max_eps = 1e-6;
  double sigma_weight = 1.0;
  ContrastRegion region;

  void validate() const;
};

/// (c_a - c0)^2 / sigma_c^2 + (p_a - p0)^2 / sigma_p^2 - 1; negative inside.
double g1(double c_a, double p_a, const ContrastRegion& region);
/// Per-pixel background constraint, positive where (B beta, B alpha) falls inside the region.
Eigen::VectorXd g2(const Eigen::VectorXd& beta, const Eigen::VectorXd& alpha, const RbfBasis& background,
                   const ContrastRegion& region);
Eigen::VectorXd g2_images(const Eigen::VectorXd& c_background, const Eigen::VectorXd& p_background,
                          const ContrastRegion& region);

/// 0.5 * (sqrt(x^2 + eps) + x)
double smooth_max(double x, double eps);
double smooth_max_derivative(double x, double eps);

/// Stacked forward differences [Dx; Dy] with a zero last difference on each
/// row/column. Size 2 N_p x N_p.
Eigen::SparseMatrix<double> gradient_matrix(const ImageGrid& grid);

struct ResidualVector {
  Eigen::VectorXd eps1;  // data misfit, 2 N_m
  Eigen::VectorXd eps2;  // area penalty, N_p
  double eps3 = 0.0;     // gradient correlation
  Eigen::VectorXd eps4;  // constraint penalties, 1 + N_p

  Eigen::Index size() const { return eps1.size() + eps2.size() + 1 + eps4.size(); }
  Eigen::VectorXd concatenated() const;
  double cost() const;

  struct Breakdown {
    double total, data, area, correlation, penalty;
  };
  Breakdown breakdown() const;
};

/// Splits a concatenated residual back into its blocks.
ResidualVector split_residual(const Eigen::VectorXd& flat, Eigen::Index rays, Eigen::Index pixels);

/// Value and gradients of the gradient-correlation ratio
/// |u|^2 |v|^2 / (u.v)^2 with u = D B beta, v = D B alpha.
struct CorrelationTerm {
  double ratio = 1.0;
  bool active = false;  // false when a safeguard fixed the ratio (zero gradient)
  Eigen::VectorXd d_beta;
  Eigen::VectorXd d_alpha;
};
CorrelationTerm correlation_ratio(const Eigen::MatrixXd& db, const Eigen::VectorXd& beta,
                                  const Eigen::VectorXd& alpha, bool with_gradient);

/// Everything needed to evaluate the penalized cost for one data set:
/// system matrix, both spectra, measurements, configuration and the
/// precomputed D B product.
class Objective {
 public:
  Objective(std::shared_ptr<const SystemMatrix> a, const EnergySpectrum& spec_low,
            const EnergySpectrum& spec_high, MeasurementSet data, ObjectiveConfig config,
            const SceneModel& model_template);

  /// K(theta) = [m_low; m_high] predicted without noise.
  Eigen::VectorXd forward_operator(const SceneModel& model) const;
  ResidualVector residuals(const SceneModel& model) const;
  /// Full Jacobian, rows ordered as the concatenated residual, columns as theta.
  Eigen::MatrixXd jacobian(const SceneModel& model) const;
  /// Only the listed theta columns, in the given order.
  Eigen::MatrixXd jacobian(const SceneModel& model, const std::vector<Eigen::Index>& columns) const;

  const ObjectiveConfig& config() const { return config_; }
  const SystemMatrix& system() const { return *a_; }
  const MeasurementSet& data() const { return data_; }
  const SpectralKernel& kernel_low() const { return low_; }
  const SpectralKernel& kernel_high() const { return high_; }
  Eigen::Index rays() const { return a_->rows(); }
  Eigen::Index pixels() const { return a_->cols(); }
  Eigen::Index residual_size() const { return 2 * rays() + 2 * pixels() + 2; }

 private:
  std::shared_ptr<const SystemMatrix> a_;
  SpectralKernel low_;
  SpectralKernel high_;
  MeasurementSet data_;
  ObjectiveConfig config_;
  Eigen::VectorXd m_;
  Eigen::MatrixXd db_;  // D * B
};

// Convenience wrappers that build a one-off Objective.
Eigen::VectorXd forward_operator(const SceneModel& model, const SystemMatrix& a,
                                 const EnergySpectrum& spec_low, const EnergySpectrum& spec_high);
ResidualVector residuals(const SceneModel& model, const MeasurementSet& data, const ObjectiveConfig& config,
                         const SystemMatrix& a, const EnergySpectrum& spec_low,
                         const EnergySpectrum& spec_high);
Eigen::MatrixXd jacobian(const SceneModel& model, const MeasurementSet& data, const ObjectiveConfig& config,
                         const SystemMatrix& a, const EnergySpectrum& spec_low,
                         const EnergySpectrum& spec_high);

}  // namespace dualct
