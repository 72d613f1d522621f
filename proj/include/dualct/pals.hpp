#pragma once

#include <cstdint>
#include <memory>
#include <utility>

#include <Eigen/Dense>

#include "dualct/projector.hpp"

namespace dualct {

/// Smoothed step: 0 below -eps, 1 above eps, 0.5 * (1 + x/eps + sin(pi x/eps)/pi) between.
double heaviside_eps(double x, double eps);
/// Exact derivative of heaviside_eps: (1 + cos(pi x/eps)) / (2 eps) on [-eps, eps].
double dirac_eps(double x, double eps);

/// Gaussian RBFs exp(-|r - r_i|^2 / sigma^2) sampled at the pixel centers.
class RbfBasis {
 public:
  RbfBasis(const ImageGrid& grid, Eigen::MatrixX2d centers, double width);

  /// Centers on a regular lattice: `count_x` x `count_y` points starting at
  /// (x0, y0) with the given spacings.
  static RbfBasis lattice(const ImageGrid& grid, int count_x, int count_y, double x0, double y0,
                          double spacing_x, double spacing_y, double width);

  const ImageGrid& grid() const { return grid_; }
  const Eigen::MatrixX2d& centers() const { return centers_; }
  double width() const { return width_; }
  Eigen::Index size() const { return centers_.rows(); }
  /// N_p x size() evaluation matrix.
  const Eigen::MatrixXd& matrix() const { return matrix_; }

 private:
  ImageGrid grid_;
  Eigen::MatrixX2d centers_;
  double width_;
  Eigen::MatrixXd matrix_;
};

using RbfBasisPtr = std::shared_ptr<const RbfBasis>;

/// Level-set bases and background bases matching a 100x100 layout of
/// 12x12 shape RBFs (width 10 dx) and 26x26 background RBFs (width 6 dx,
/// 4-pixel spacing). By default the layout follows the grid's own pixels;
/// a positive `reference_nx` lays the bases out as if the field were
/// sampled with that many pixels across (rows scaled to match), so coarse
/// grids keep the same physical basis as a finer one.
struct DefaultBases {
  RbfBasisPtr level_set;
  RbfBasisPtr background;
};
DefaultBases build_default_bases(const ImageGrid& grid, int reference_nx = 0);

/// Index ranges of each parameter block inside the flat vector
/// [c_a, p_a, a, beta, alpha].
struct ParameterLayout {
  Eigen::Index level_set = 0;
  Eigen::Index background = 0;

  Eigen::Index size() const { return 2 + level_set + 2 * background; }
  Eigen::Index ca() const { return 0; }
  Eigen::Index pa() const { return 1; }
  Eigen::Index a_begin() const { return 2; }
  Eigen::Index beta_begin() const { return 2 + level_set; }
  Eigen::Index alpha_begin() const { return 2 + level_set + background; }
};

struct SceneModel {
  double c_a = 0.0;
  double p_a = 0.0;
  Eigen::VectorXd a;
  Eigen::VectorXd beta;
  Eigen::VectorXd alpha;
  RbfBasisPtr level_set_basis;
  RbfBasisPtr background_basis;
  double heaviside_eps = 1.0;

  ParameterLayout layout() const;
  Eigen::VectorXd theta() const;
  void set_theta(const Eigen::VectorXd& theta);
  const ImageGrid& grid() const { return level_set_basis->grid(); }
  void validate() const;
};

/// Model with level-set weights drawn uniformly from [-1, 1] (then shifted
/// so the object function has zero mean), contrasts at (c_a, p_a) and flat
/// background weights.
SceneModel initial_model(const DefaultBases& bases, double c_a, double p_a, std::uint64_t seed,
                         double beta0 = 8e-3, double alpha0 = 80.0);

struct ComposedScene {
  Eigen::VectorXd c_image;
  Eigen::VectorXd p_image;
  Eigen::VectorXd chi;
  Eigen::VectorXd o_field;
  Eigen::VectorXd c_background;  // B beta
  Eigen::VectorXd p_background;  // B alpha
};

ComposedScene compose(const SceneModel& model);

/// Pixel derivatives of the composed images. Contrast derivatives are the
/// chi vector; background blocks are diag(1 - chi) B for both images;
/// level-set blocks are diag(delta(O) (contrast - background)) P.
struct ImageJacobians {
  Eigen::VectorXd dc_dca;
  Eigen::VectorXd dp_dpa;
  Eigen::MatrixXd dc_da;
  Eigen::MatrixXd dp_da;
  Eigen::MatrixXd d_background;  // dc/dbeta == dp/dalpha
};

ImageJacobians image_jacobians(const SceneModel& model);

}  // namespace dualct
