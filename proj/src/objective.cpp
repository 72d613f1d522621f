#include "dualct/objective.hpp"

#include <cmath>
#include <optional>
#include <stdexcept>

namespace dualct {

void ContrastRegion::validate() const {
  if (!(sigma_c > 0.0) || !(sigma_p > 0.0)) {
    throw std::invalid_argument("ContrastRegion: semi-axes must be positive");
  }
}

bool ContrastRegion::contains(double c, double p) const { return g1(c, p, *this) <= 0.0; }

void ObjectiveConfig::validate() const {
  region.validate();
  if (lambda1 < 0.0 || lambda2 < 0.0) throw std::invalid_argument("ObjectiveConfig: lambdas must be >= 0");
  if (!(penalty_r >= 0.0)) throw std::invalid_argument("ObjectiveConfig: penalty must be >= 0");
  if (!(smooth_max_eps > 0.0)) throw std::invalid_argument("ObjectiveConfig: smooth-max eps must be > 0");
  if (!(sigma_weight > 0.0)) throw std::invalid_argument("ObjectiveConfig: sigma weight must be > 0");
}

double g1(double c_a, double p_a, const ContrastRegion& r) {
  const double dc = (c_a - r.c0) / r.sigma_c;
  const double dp = (p_a - r.p0) / r.sigma_p;
  return dc * dc + dp * dp - 1.0;
}

Eigen::VectorXd g2_images(const Eigen::VectorXd& cb, const Eigen::VectorXd& pb, const ContrastRegion& r) {
  const Eigen::ArrayXd dc = (cb.array() - r.c0) / r.sigma_c;
  const Eigen::ArrayXd dp = (pb.array() - r.p0) / r.sigma_p;
  return (1.0 - dc.square() - dp.square()).matrix();
}

Eigen::VectorXd g2(const Eigen::VectorXd& beta, const Eigen::VectorXd& alpha, const RbfBasis& background,
                   const ContrastRegion& region) {
  if (beta.size() != background.size() || alpha.size() != background.size()) {
    throw std::invalid_argument("g2: weight count does not match the background basis");
  }
  return g2_images(background.matrix() * beta, background.matrix() * alpha, region);
}

// For x < 0 both expressions are rewritten as 0.5 eps / (sqrt(x^2 + eps) - x)
// to avoid the cancellation in sqrt(x^2 + eps) + x.
double smooth_max(double x, double eps) {
  const double r = std::sqrt(x * x + eps);
  return x >= 0.0 ? 0.5 * (r + x) : 0.5 * eps / (r - x);
}

double smooth_max_derivative(double x, double eps) {
  const double r = std::sqrt(x * x + eps);
  return smooth_max(x, eps) / r;
}

Eigen::SparseMatrix<double> gradient_matrix(const ImageGrid& grid) {
  const Eigen::Index np = grid.pixel_count();
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(std::size_t(4 * np));
  for (int iy = 0; iy < grid.ny; ++iy) {
    for (int ix = 0; ix < grid.nx; ++ix) {
      const Eigen::Index j = grid.index(ix, iy);
      if (ix + 1 < grid.nx) {
        t.emplace_back(j, grid.index(ix + 1, iy), 1.0);
        t.emplace_back(j, j, -1.0);
      }
      if (iy + 1 < grid.ny) {
        t.emplace_back(np + j, grid.index(ix, iy + 1), 1.0);
        t.emplace_back(np + j, j, -1.0);
      }
    }
  }
  Eigen::SparseMatrix<double> d(2 * np, np);
  d.setFromTriplets(t.begin(), t.end());
  return d;
}

Eigen::VectorXd ResidualVector::concatenated() const {
  Eigen::VectorXd out(size());
  out << eps1, eps2, eps3, eps4;
  return out;
}

double ResidualVector::cost() const {
  return eps1.squaredNorm() + eps2.squaredNorm() + eps3 * eps3 + eps4.squaredNorm();
}

ResidualVector::Breakdown ResidualVector::breakdown() const {
  Breakdown b{};
  b.data = eps1.squaredNorm();
  b.area = eps2.squaredNorm();
  b.correlation = eps3 * eps3;
  b.penalty = eps4.squaredNorm();
  b.total = b.data + b.area + b.correlation + b.penalty;
  return b;
}

ResidualVector split_residual(const Eigen::VectorXd& flat, Eigen::Index rays, Eigen::Index pixels) {
  if (flat.size() != 2 * rays + 2 * pixels + 2) {
    throw std::invalid_argument("split_residual: length does not match the layout");
  }
  ResidualVector r;
  r.eps1 = flat.segment(0, 2 * rays);
  r.eps2 = flat.segment(2 * rays, pixels);
  r.eps3 = flat(2 * rays + pixels);
  r.eps4 = flat.segment(2 * rays + pixels + 1, pixels + 1);
  return r;
}

CorrelationTerm correlation_ratio(const Eigen::MatrixXd& db, const Eigen::VectorXd& beta,
                                  const Eigen::VectorXd& alpha, bool with_gradient) {
  CorrelationTerm out;
  const Eigen::VectorXd u = db * beta;
  const Eigen::VectorXd v = db * alpha;
  const double nu = u.squaredNorm();
  const double nv = v.squaredNorm();
  const double s = u.dot(v);
  if (with_gradient) {
    out.d_beta = Eigen::VectorXd::Zero(beta.size());
    out.d_alpha = Eigen::VectorXd::Zero(alpha.size());
  }
  if (std::sqrt(nu) < 1e-12 || std::sqrt(nv) < 1e-12) {
    out.ratio = 1.0;
    return out;
  }
  const double floor = 1e-12 * nu * nv;
  if (s * s < floor) {
    out.ratio = nu * nv / floor;
    return out;
  }
  out.active = true;
  out.ratio = nu * nv / (s * s);
  if (with_gradient) {
    const double s2 = s * s;
    const double s3 = s2 * s;
    const Eigen::VectorXd gu = (2.0 * nv / s2) * u - (2.0 * nu * nv / s3) * v;
    const Eigen::VectorXd gv = (2.0 * nu / s2) * v - (2.0 * nu * nv / s3) * u;
    out.d_beta = db.transpose() * gu;
    out.d_alpha = db.transpose() * gv;
  }
  return out;
}

Objective::Objective(std::shared_ptr<const SystemMatrix> a, const EnergySpectrum& spec_low,
                     const EnergySpectrum& spec_high, MeasurementSet data, ObjectiveConfig config,
                     const SceneModel& model_template)
    : a_(std::move(a)), low_(spec_low), high_(spec_high), data_(std::move(data)), config_(config) {
  config_.validate();
  data_.validate();
  model_template.validate();
  if (data_.ray_count() != a_->rows()) {
    throw std::invalid_argument("Objective: measurement count does not match the system matrix");
  }
  if (model_template.background_basis->matrix().rows() != a_->cols()) {
    throw std::invalid_argument("Objective: basis grid does not match the system matrix");
  }
  m_ = data_.stacked();
  db_ = gradient_matrix(a_->grid) * model_template.background_basis->matrix();
}

Eigen::VectorXd Objective::forward_operator(const SceneModel& model) const {
  const ComposedScene s = compose(model);
  const Eigen::VectorXd lc = a_->a * s.c_image;
  const Eigen::VectorXd lp = a_->a * s.p_image;
  const Eigen::Index n = lc.size();
  Eigen::VectorXd k(2 * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    k(i) = low_.log_projection(lc(i), lp(i));
    k(n + i) = high_.log_projection(lc(i), lp(i));
  }
  return k;
}

ResidualVector Objective::residuals(const SceneModel& model) const {
  const ComposedScene s = compose(model);
  const auto& cfg = config_;
  ResidualVector r;

  const Eigen::VectorXd lc = a_->a * s.c_image;
  const Eigen::VectorXd lp = a_->a * s.p_image;
  const Eigen::Index n = lc.size();
  const double sq_sigma = std::sqrt(cfg.sigma_weight);
  r.eps1.resize(2 * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    r.eps1(i) = sq_sigma * (low_.log_projection(lc(i), lp(i)) - m_(i));
    r.eps1(n + i) = sq_sigma * (high_.log_projection(lc(i), lp(i)) - m_(n + i));
  }

  r.eps2 = (cfg.lambda1 * s.chi.array()).sqrt().matrix();

  const CorrelationTerm corr = correlation_ratio(db_, model.beta, model.alpha, false);
  r.eps3 = std::sqrt(cfg.lambda2) * (corr.ratio - 1.0);

  const double sq_r = std::sqrt(cfg.penalty_r);
  const double eps = cfg.smooth_max_eps;
  const Eigen::VectorXd g2v = g2_images(s.c_background, s.p_background, cfg.region);
  r.eps4.resize(1 + g2v.size());
  r.eps4(0) = sq_r * std::sqrt(smooth_max(g1(model.c_a, model.p_a, cfg.region), eps));
  for (Eigen::Index i = 0; i < g2v.size(); ++i) {
    r.eps4(1 + i) = sq_r * std::sqrt(smooth_max(g2v(i), eps));
  }
  return r;
}

Eigen::MatrixXd Objective::jacobian(const SceneModel& model) const {
  std::vector<Eigen::Index> all(std::size_t(model.layout().size()));
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = Eigen::Index(i);
  return jacobian(model, all);
}

Eigen::MatrixXd Objective::jacobian(const SceneModel& model, const std::vector<Eigen::Index>& columns) const {
  const ParameterLayout lay = model.layout();
  const ComposedScene s = compose(model);
  const auto& cfg = config_;
  const Eigen::Index n = rays();
  const Eigen::Index np = pixels();
  const Eigen::MatrixXd& P = model.level_set_basis->matrix();
  const Eigen::MatrixXd& B = model.background_basis->matrix();

  bool need_contrast = false, need_a = false, need_bg = false;
  for (Eigen::Index c : columns) {
    if (c < 0 || c >= lay.size()) throw std::out_of_range("Objective::jacobian: column out of range");
    if (c < lay.a_begin()) need_contrast = true;
    else if (c < lay.beta_begin()) need_a = true;
    else need_bg = true;
  }

  // Per-ray derivative of m w.r.t. the Compton / photoelectric line integrals.
  const Eigen::VectorXd lc = a_->a * s.c_image;
  const Eigen::VectorXd lp = a_->a * s.p_image;
  const double sq_sigma = std::sqrt(cfg.sigma_weight);
  Eigen::VectorXd kl(n), pl(n), kh(n), ph(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto ml = low_.moments(lc(i), lp(i));
    const auto mh = high_.moments(lc(i), lp(i));
    kl(i) = sq_sigma * ml.kn / ml.counts;
    pl(i) = sq_sigma * ml.pe / ml.counts;
    kh(i) = sq_sigma * mh.kn / mh.counts;
    ph(i) = sq_sigma * mh.pe / mh.counts;
  }

  Eigen::VectorXd a_chi;
  Eigen::MatrixXd a_dc_da, a_dp_da, a_bg;
  Eigen::VectorXd delta;
  if (need_contrast) a_chi = a_->a * s.chi;
  if (need_a) {
    delta = s.o_field.unaryExpr([&](double o) { return dirac_eps(o, model.heaviside_eps); });
    const Eigen::VectorXd wc = (delta.array() * (model.c_a - s.c_background.array())).matrix();
    const Eigen::VectorXd wp = (delta.array() * (model.p_a - s.p_background.array())).matrix();
    a_dc_da = a_->a * (wc.asDiagonal() * P);
    a_dp_da = a_->a * (wp.asDiagonal() * P);
  }
  if (need_bg) {
    a_bg = a_->a * ((1.0 - s.chi.array()).matrix().asDiagonal() * B);
  }

  std::optional<CorrelationTerm> corr;
  Eigen::VectorXd g2_coef_beta, g2_coef_alpha;
  if (need_bg) {
    corr = correlation_ratio(db_, model.beta, model.alpha, true);
    const Eigen::VectorXd g2v = g2_images(s.c_background, s.p_background, cfg.region);
    g2_coef_beta.resize(np);
    g2_coef_alpha.resize(np);
    const double sq_r = std::sqrt(cfg.penalty_r);
    for (Eigen::Index i = 0; i < np; ++i) {
      const double sm = smooth_max(g2v(i), cfg.smooth_max_eps);
      const double outer = sq_r * smooth_max_derivative(g2v(i), cfg.smooth_max_eps) / (2.0 * std::sqrt(sm));
      g2_coef_beta(i) = outer * (-2.0 * (s.c_background(i) - cfg.region.c0) /
                                 (cfg.region.sigma_c * cfg.region.sigma_c));
      g2_coef_alpha(i) = outer * (-2.0 * (s.p_background(i) - cfg.region.p0) /
                                  (cfg.region.sigma_p * cfg.region.sigma_p));
    }
  }

  const Eigen::Index row_e2 = 2 * n;
  const Eigen::Index row_e3 = 2 * n + np;
  const Eigen::Index row_e4 = 2 * n + np + 1;
  const double sq_l1 = std::sqrt(cfg.lambda1);
  const double sq_l2 = std::sqrt(cfg.lambda2);
  const double sq_r = std::sqrt(cfg.penalty_r);

  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(residual_size(), Eigen::Index(columns.size()));
  for (std::size_t jj = 0; jj < columns.size(); ++jj) {
    const Eigen::Index c = columns[jj];
    auto col = J.col(Eigen::Index(jj));
    if (c == lay.ca() || c == lay.pa()) {
      const bool is_c = c == lay.ca();
      col.segment(0, n) = (is_c ? kl : pl).cwiseProduct(a_chi);
      col.segment(n, n) = (is_c ? kh : ph).cwiseProduct(a_chi);
      const double g = g1(model.c_a, model.p_a, cfg.region);
      const double sm = smooth_max(g, cfg.smooth_max_eps);
      const double dg = is_c ? 2.0 * (model.c_a - cfg.region.c0) / (cfg.region.sigma_c * cfg.region.sigma_c)
                             : 2.0 * (model.p_a - cfg.region.p0) / (cfg.region.sigma_p * cfg.region.sigma_p);
      col(row_e4) = sq_r * smooth_max_derivative(g, cfg.smooth_max_eps) / (2.0 * std::sqrt(sm)) * dg;
    } else if (c < lay.beta_begin()) {
      const Eigen::Index k = c - lay.a_begin();
      col.segment(0, n) = kl.cwiseProduct(a_dc_da.col(k)) + pl.cwiseProduct(a_dp_da.col(k));
      col.segment(n, n) = kh.cwiseProduct(a_dc_da.col(k)) + ph.cwiseProduct(a_dp_da.col(k));
      if (sq_l1 > 0.0) {
        for (Eigen::Index j = 0; j < np; ++j) {
          if (delta(j) == 0.0 || s.chi(j) <= 0.0) continue;
          col(row_e2 + j) = sq_l1 * delta(j) / (2.0 * std::sqrt(s.chi(j))) * P(j, k);
        }
      }
    } else {
      const bool is_beta = c < lay.alpha_begin();
      const Eigen::Index k = c - (is_beta ? lay.beta_begin() : lay.alpha_begin());
      col.segment(0, n) = (is_beta ? kl : pl).cwiseProduct(a_bg.col(k));
      col.segment(n, n) = (is_beta ? kh : ph).cwiseProduct(a_bg.col(k));
      if (corr->active) col(row_e3) = sq_l2 * (is_beta ? corr->d_beta(k) : corr->d_alpha(k));
      col.segment(row_e4 + 1, np) = (is_beta ? g2_coef_beta : g2_coef_alpha).cwiseProduct(B.col(k));
    }
  }
  return J;
}

namespace {

std::shared_ptr<const SystemMatrix> borrow(const SystemMatrix& a) {
  return std::shared_ptr<const SystemMatrix>(&a, [](const SystemMatrix*) {});
}

}  // namespace

Eigen::VectorXd forward_operator(const SceneModel& model, const SystemMatrix& a,
                                 const EnergySpectrum& spec_low, const EnergySpectrum& spec_high) {
  const ComposedScene s = compose(model);
  Eigen::VectorXd k(2 * a.rows());
  k << log_projections(a, s.c_image, s.p_image, spec_low), log_projections(a, s.c_image, s.p_image, spec_high);
  return k;
}

ResidualVector residuals(const SceneModel& model, const MeasurementSet& data, const ObjectiveConfig& config,
                         const SystemMatrix& a, const EnergySpectrum& spec_low,
                         const EnergySpectrum& spec_high) {
  return Objective(borrow(a), spec_low, spec_high, data, config, model).residuals(model);
}

Eigen::MatrixXd jacobian(const SceneModel& model, const MeasurementSet& data, const ObjectiveConfig& config,
                         const SystemMatrix& a, const EnergySpectrum& spec_low,
                         const EnergySpectrum& spec_high) {
  return Objective(borrow(a), spec_low, spec_high, data, config, model).jacobian(model);
}

}  // namespace dualct
