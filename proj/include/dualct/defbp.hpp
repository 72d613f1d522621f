#pragma once

#include <iosfwd>
#include <optional>

#include <Eigen/Dense>

#include "dualct/forward.hpp"
#include "dualct/metrics.hpp"
#include "dualct/objective.hpp"
#include "dualct/projector.hpp"

namespace dualct {

struct RayDecomposition {
  double a_c = 0.0;
  double a_p = 0.0;
  double residual = 0.0;  // squared misfit of the two log projections
  int iterations = 0;
  bool converged = false;
};

/// Fits the Compton and photoelectric line integrals of one ray to its two
/// log measurements with a projected damped Newton iteration (both
/// integrals kept >= 0). Without `init` the iteration starts at
/// (m_low / mean f_KN, 0). A ray that does not converge falls back to
/// (0, 0) with its residual recorded and `converged` false.
RayDecomposition decompose_ray(double m_low, double m_high, const SpectralKernel& low, const SpectralKernel& high,
                               std::optional<Eigen::Vector2d> init = std::nullopt, int max_iterations = 200);

struct DecomposedSinograms {
  Sinogram ac;
  Sinogram ap;
  Eigen::VectorXd residuals;
  Eigen::VectorXi iterations;
  Mask flagged;

  Eigen::Index flagged_count() const { return flagged.count(); }
};

DecomposedSinograms decompose(const MeasurementSet& data, const ScanGeometry& geometry,
                              const EnergySpectrum& spec_low, const EnergySpectrum& spec_high);

struct DefbpResult {
  Eigen::VectorXd c_image;
  Eigen::VectorXd p_image;
  DecomposedSinograms sinograms;
  double flagged_fraction = 0.0;
};

/// Decompose every ray, then FBP (Ram-Lak x Hamming) each sinogram.
DefbpResult defbp_reconstruct(const MeasurementSet& data, const ScanGeometry& geometry, const ImageGrid& grid,
                              const EnergySpectrum& spec_low, const EnergySpectrum& spec_high,
                              const FbpOptions& fbp_options = {});

/// Pixel i is detected iff |c_i - c0| <= sigma_c and |p_i - p0| <= sigma_p.
/// The bands are rectangular, not the elliptical region itself.
Mask threshold_characteristic(const Eigen::VectorXd& c_image, const Eigen::VectorXd& p_image,
                              const ContrastRegion& region);

void write_ray_residuals_csv(std::ostream& os, const DecomposedSinograms& d);

}  // namespace dualct
