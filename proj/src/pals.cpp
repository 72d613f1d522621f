#include "dualct/pals.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

namespace dualct {

double heaviside_eps(double x, double eps) {
  if (!(eps > 0.0)) throw std::domain_error("heaviside_eps: eps must be positive");
  if (x > eps) return 1.0;
  if (x < -eps) return 0.0;
  const double t = x / eps;
  // Rounding can leave a few ulps outside [0, 1] next to the knots.
  return std::clamp(0.5 * (1.0 + t + std::sin(std::numbers::pi * t) / std::numbers::pi), 0.0, 1.0);
}

double dirac_eps(double x, double eps) {
  if (!(eps > 0.0)) throw std::domain_error("dirac_eps: eps must be positive");
  if (x > eps || x < -eps) return 0.0;
  return (1.0 + std::cos(std::numbers::pi * x / eps)) / (2.0 * eps);
}

RbfBasis::RbfBasis(const ImageGrid& grid, Eigen::MatrixX2d centers, double width)
    : grid_(grid), centers_(std::move(centers)), width_(width) {
  if (!(width_ > 0.0)) throw std::invalid_argument("RbfBasis: width must be positive");
  const Eigen::MatrixX2d px = grid_.pixel_centers();
  const double inv = 1.0 / (width_ * width_);
  matrix_.resize(px.rows(), centers_.rows());
  for (Eigen::Index k = 0; k < centers_.rows(); ++k) {
    for (Eigen::Index j = 0; j < px.rows(); ++j) {
      const double dx = px(j, 0) - centers_(k, 0);
      const double dy = px(j, 1) - centers_(k, 1);
      matrix_(j, k) = std::exp(-(dx * dx + dy * dy) * inv);
    }
  }
}

RbfBasis RbfBasis::lattice(const ImageGrid& grid, int count_x, int count_y, double x0, double y0,
                           double spacing_x, double spacing_y, double width) {
  if (count_x < 1 || count_y < 1) throw std::invalid_argument("RbfBasis::lattice: empty lattice");
  Eigen::MatrixX2d centers(Eigen::Index(count_x) * count_y, 2);
  for (int j = 0; j < count_y; ++j) {
    for (int i = 0; i < count_x; ++i) {
      centers(Eigen::Index(j) * count_x + i, 0) = x0 + i * spacing_x;
      centers(Eigen::Index(j) * count_x + i, 1) = y0 + j * spacing_y;
    }
  }
  return RbfBasis(grid, std::move(centers), width);
}

DefaultBases build_default_bases(const ImageGrid& grid, int reference_nx) {
  if (reference_nx < 0) throw std::invalid_argument("build_default_bases: reference_nx must be >= 0");
  const int nx = reference_nx > 0 ? reference_nx : grid.nx;
  const int ny = reference_nx > 0 ? std::max(1, int(std::lround(double(grid.ny) * nx / grid.nx))) : grid.ny;
  const double dx = grid.lx / nx;
  const double dy = grid.ly / ny;

  // Background: one RBF per 4x4 super-pixel, lattice centered in the domain.
  const int bx = nx / 4 + 1;
  const int by = ny / 4 + 1;
  const double sx = 4.0 * dx;
  const double sy = 4.0 * dy;
  const double bx0 = 0.5 * (grid.lx - (bx - 1) * sx);
  const double by0 = 0.5 * (grid.ly - (by - 1) * sy);

  // Level set: 12 per 100 pixels, cell-centered.
  const int lx = std::max(1, int(std::lround(12.0 * nx / 100.0)));
  const int ly = std::max(1, int(std::lround(12.0 * ny / 100.0)));
  const double lsx = grid.lx / lx;
  const double lsy = grid.ly / ly;

  DefaultBases out;
  out.background = std::make_shared<const RbfBasis>(
      RbfBasis::lattice(grid, bx, by, bx0, by0, sx, sy, 6.0 * dx));
  out.level_set = std::make_shared<const RbfBasis>(
      RbfBasis::lattice(grid, lx, ly, 0.5 * lsx, 0.5 * lsy, lsx, lsy, 10.0 * dx));
  return out;
}

ParameterLayout SceneModel::layout() const {
  return ParameterLayout{a.size(), beta.size()};
}

Eigen::VectorXd SceneModel::theta() const {
  const ParameterLayout l = layout();
  Eigen::VectorXd t(l.size());
  t(l.ca()) = c_a;
  t(l.pa()) = p_a;
  t.segment(l.a_begin(), l.level_set) = a;
  t.segment(l.beta_begin(), l.background) = beta;
  t.segment(l.alpha_begin(), l.background) = alpha;
  return t;
}

void SceneModel::set_theta(const Eigen::VectorXd& theta) {
  const ParameterLayout l = layout();
  if (theta.size() != l.size()) throw std::invalid_argument("SceneModel::set_theta: wrong length");
  c_a = theta(l.ca());
  p_a = theta(l.pa());
  a = theta.segment(l.a_begin(), l.level_set);
  beta = theta.segment(l.beta_begin(), l.background);
  alpha = theta.segment(l.alpha_begin(), l.background);
}

void SceneModel::validate() const {
  if (!level_set_basis || !background_basis) throw std::invalid_argument("SceneModel: missing basis");
  if (!(level_set_basis->grid() == background_basis->grid())) {
    throw std::invalid_argument("SceneModel: bases are built on different grids");
  }
  if (a.size() != level_set_basis->size()) {
    throw std::invalid_argument("SceneModel: level-set weight count does not match its basis");
  }
  if (beta.size() != background_basis->size() || alpha.size() != background_basis->size()) {
    throw std::invalid_argument("SceneModel: background weight count does not match its basis");
  }
  if (!(heaviside_eps > 0.0)) throw std::invalid_argument("SceneModel: heaviside eps must be positive");
  if (!std::isfinite(c_a) || !std::isfinite(p_a) || !a.allFinite() || !beta.allFinite() ||
      !alpha.allFinite()) {
    throw std::invalid_argument("SceneModel: non-finite parameter");
  }
}

SceneModel initial_model(const DefaultBases& bases, double c_a, double p_a, std::uint64_t seed,
                         double beta0, double alpha0) {
  SceneModel m;
  m.level_set_basis = bases.level_set;
  m.background_basis = bases.background;
  m.c_a = c_a;
  m.p_a = p_a;
  m.heaviside_eps = bases.level_set->grid().dx();

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  m.a.resize(bases.level_set->size());
  for (Eigen::Index i = 0; i < m.a.size(); ++i) m.a(i) = unif(rng);
  const Eigen::MatrixXd& p = bases.level_set->matrix();
  const double shift = -(p * m.a).mean() / p.rowwise().sum().mean();
  m.a.array() += shift;

  m.beta = Eigen::VectorXd::Constant(bases.background->size(), beta0);
  m.alpha = Eigen::VectorXd::Constant(bases.background->size(), alpha0);
  return m;
}

ComposedScene compose(const SceneModel& model) {
  model.validate();
  ComposedScene s;
  s.o_field = model.level_set_basis->matrix() * model.a;
  s.chi = s.o_field.unaryExpr([&](double o) { return heaviside_eps(o, model.heaviside_eps); });
  s.c_background = model.background_basis->matrix() * model.beta;
  s.p_background = model.background_basis->matrix() * model.alpha;
  const Eigen::ArrayXd chi = s.chi.array();
  s.c_image = chi * model.c_a + (1.0 - chi) * s.c_background.array();
  s.p_image = chi * model.p_a + (1.0 - chi) * s.p_background.array();
  return s;
}

ImageJacobians image_jacobians(const SceneModel& model) {
  const ComposedScene s = compose(model);
  ImageJacobians j;
  j.dc_dca = s.chi;
  j.dp_dpa = s.chi;
  const Eigen::ArrayXd delta =
      s.o_field.unaryExpr([&](double o) { return dirac_eps(o, model.heaviside_eps); }).array();
  const Eigen::VectorXd wc = (delta * (model.c_a - s.c_background.array())).matrix();
  const Eigen::VectorXd wp = (delta * (model.p_a - s.p_background.array())).matrix();
  const Eigen::MatrixXd& p = model.level_set_basis->matrix();
  j.dc_da = wc.asDiagonal() * p;
  j.dp_da = wp.asDiagonal() * p;
  j.d_background = (1.0 - s.chi.array()).matrix().asDiagonal() * model.background_basis->matrix();
  return j;
}

}  // namespace dualct
