#include "dualct/defbp.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <stdexcept>

namespace dualct {

namespace {

// Residual and Jacobian of the two log projections in scaled variables
// u = (a_c * kbar, a_p * pbar), which puts both columns on the same footing.
struct RayModel {
  const SpectralKernel& low;
  const SpectralKernel& high;
  double m_low, m_high, kbar, pbar;

  Eigen::Vector2d residual(const Eigen::Vector2d& u, Eigen::Matrix2d* jac) const {
    const double ac = u(0) / kbar;
    const double ap = u(1) / pbar;
    const auto ml = low.moments(ac, ap);
    const auto mh = high.moments(ac, ap);
    Eigen::Vector2d r(-std::log(ml.counts / low.blank_scan()) - m_low,
                      -std::log(mh.counts / high.blank_scan()) - m_high);
    if (jac) {
      (*jac)(0, 0) = ml.kn / ml.counts / kbar;
      (*jac)(0, 1) = ml.pe / ml.counts / pbar;
      (*jac)(1, 0) = mh.kn / mh.counts / kbar;
      (*jac)(1, 1) = mh.pe / mh.counts / pbar;
    }
    return r;
  }
};

}  // namespace

RayDecomposition decompose_ray(double m_low, double m_high, const SpectralKernel& low, const SpectralKernel& high,
                               std::optional<Eigen::Vector2d> init, int max_iterations) {
  if (!std::isfinite(m_low) || !std::isfinite(m_high)) {
    throw std::invalid_argument("decompose_ray: non-finite measurement");
  }
  const RayModel model{low, high, m_low, m_high, low.mean_kn(), low.mean_pe()};
  Eigen::Vector2d u = init ? Eigen::Vector2d((*init)(0) * model.kbar, (*init)(1) * model.pbar)
                           : Eigen::Vector2d(m_low, 0.0);
  u = u.cwiseMax(0.0);

  RayDecomposition out;
  Eigen::Matrix2d j;
  Eigen::Vector2d r = model.residual(u, &j);
  double cost = r.squaredNorm();
  double mu = 0.0;
  const double tol = 1e-26 * (1.0 + m_low * m_low + m_high * m_high);

  for (int it = 1; it <= max_iterations; ++it) {
    out.iterations = it;
    if (cost <= tol) {
      out.converged = true;
      break;
    }
    const Eigen::Matrix2d jtj = j.transpose() * j;
    const Eigen::Vector2d g = j.transpose() * r;
    Eigen::Vector2d h;
    if (mu == 0.0 && std::abs(j.determinant()) > 1e-14 * j.squaredNorm()) {
      h = j.partialPivLu().solve(-r);  // plain Newton on the square system
    } else {
      h = (jtj + mu * Eigen::Matrix2d::Identity()).ldlt().solve(-g);
    }
    const Eigen::Vector2d u_new = (u + h).cwiseMax(0.0);
    Eigen::Matrix2d j_new;
    const Eigen::Vector2d r_new = model.residual(u_new, &j_new);
    const double cost_new = r_new.squaredNorm();
    const double moved = (u_new - u).norm();
    if (std::isfinite(cost_new) && cost_new < cost) {
      u = u_new;
      r = r_new;
      j = j_new;
      cost = cost_new;
      mu *= 0.1;
      if (mu < 1e-12 * jtj.trace()) mu = 0.0;
      if (moved <= 1e-14 * (1.0 + u.norm())) {
        out.converged = true;
        break;
      }
    } else {
      // Either the projection pinned us to the boundary (converged) or the
      // step overshot; grow the damping and retry.
      if (moved <= 1e-14 * (1.0 + u.norm())) {
        out.converged = true;
        break;
      }
      mu = mu == 0.0 ? 1e-3 * jtj.trace() : mu * 10.0;
      if (mu > 1e20 * (1.0 + jtj.trace())) {
        out.converged = true;  // no descent direction left: stationary point
        break;
      }
    }
  }
  out.residual = cost;
  if (out.converged) {
    out.a_c = u(0) / model.kbar;
    out.a_p = u(1) / model.pbar;
  }
  return out;
}

DecomposedSinograms decompose(const MeasurementSet& data, const ScanGeometry& geometry,
                              const EnergySpectrum& spec_low, const EnergySpectrum& spec_high) {
  data.validate();
  if (data.ray_count() != geometry.ray_count()) {
    throw std::invalid_argument("decompose: measurement count does not match the geometry");
  }
  const SpectralKernel low(spec_low);
  const SpectralKernel high(spec_high);
  const int views = int(geometry.angles_rad.size());
  const int dets = geometry.detectors_per_view;

  DecomposedSinograms d;
  d.ac = Sinogram{views, dets, Eigen::VectorXd::Zero(data.ray_count())};
  d.ap = Sinogram{views, dets, Eigen::VectorXd::Zero(data.ray_count())};
  d.residuals.resize(data.ray_count());
  d.iterations.resize(data.ray_count());
  d.flagged = Mask::Constant(data.ray_count(), false);
  for (Eigen::Index i = 0; i < data.ray_count(); ++i) {
    const RayDecomposition r = decompose_ray(data.m_low(i), data.m_high(i), low, high);
    d.ac.values(i) = r.a_c;
    d.ap.values(i) = r.a_p;
    d.residuals(i) = r.residual;
    d.iterations(i) = r.iterations;
    d.flagged(i) = !r.converged;
  }
  return d;
}

DefbpResult defbp_reconstruct(const MeasurementSet& data, const ScanGeometry& geometry, const ImageGrid& grid,
                              const EnergySpectrum& spec_low, const EnergySpectrum& spec_high,
                              const FbpOptions& fbp_options) {
  DefbpResult out;
  out.sinograms = decompose(data, geometry, spec_low, spec_high);
  out.c_image = fbp(out.sinograms.ac, geometry, grid, fbp_options);
  out.p_image = fbp(out.sinograms.ap, geometry, grid, fbp_options);
  out.flagged_fraction = data.ray_count() ? double(out.sinograms.flagged_count()) / double(data.ray_count()) : 0.0;
  return out;
}

Mask threshold_characteristic(const Eigen::VectorXd& c_image, const Eigen::VectorXd& p_image,
                              const ContrastRegion& region) {
  if (c_image.size() != p_image.size()) throw std::invalid_argument("threshold_characteristic: size mismatch");
  return ((c_image.array() - region.c0).abs() <= region.sigma_c) &&
         ((p_image.array() - region.p0).abs() <= region.sigma_p);
}

void write_ray_residuals_csv(std::ostream& os, const DecomposedSinograms& d) {
  os << "ray,view,detector,a_c,a_p,residual,iterations,flagged\n" << std::setprecision(12);
  for (Eigen::Index i = 0; i < d.residuals.size(); ++i) {
    os << i << ',' << i / d.ac.detectors << ',' << i % d.ac.detectors << ',' << d.ac.values(i) << ','
       << d.ap.values(i) << ',' << d.residuals(i) << ',' << d.iterations(i) << ',' << int(d.flagged(i)) << '\n';
  }
}

}  // namespace dualct
