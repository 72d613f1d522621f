#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dualct/projector.hpp"
#include "dualct/spectra.hpp"

namespace dualct {

/// Beer-Lambert integrand of one spectrum restricted to non-empty bins.
/// Evaluates the polychromatic mean count of a ray from its Compton and
/// photoelectric line integrals, plus the spectrum moments needed for
/// derivatives.
class SpectralKernel {
 public:
  explicit SpectralKernel(const EnergySpectrum& spectrum);

  struct Moments {
    double counts = 0.0;   // sum w S exp(-fkn lc - fp lp)
    double kn = 0.0;       // sum w S fkn exp(...)
    double pe = 0.0;       // sum w S fp exp(...)
  };

  double mean_count(double line_c, double line_p) const;
  Moments moments(double line_c, double line_p) const;
  /// -ln(Ybar / Y0) for a noise-free ray.
  double log_projection(double line_c, double line_p) const;

  double blank_scan() const { return blank_; }
  /// Spectrum-weighted averages of f_KN and f_p over the unattenuated beam.
  double mean_kn() const { return mean_kn_; }
  double mean_pe() const { return mean_pe_; }

  const Eigen::VectorXd& weighted_counts() const { return w_; }
  const Eigen::VectorXd& kn() const { return kn_; }
  const Eigen::VectorXd& pe() const { return pe_; }

 private:
  Eigen::VectorXd w_;
  Eigen::VectorXd kn_;
  Eigen::VectorXd pe_;
  double blank_ = 0.0;
  double mean_kn_ = 0.0;
  double mean_pe_ = 0.0;
};

struct NoiseSpec {
  bool poisson_enabled = false;
  std::optional<double> background_snr_db;
  std::uint64_t rng_seed = 0;

  bool any() const { return poisson_enabled || background_snr_db.has_value(); }
};

struct NoiseMeta {
  bool poisson = false;
  std::optional<double> snr_db;
  std::uint64_t seed = 0;
  double sigma_low = 0.0;
  double sigma_high = 0.0;
  std::int64_t clamped_low = 0;
  std::int64_t clamped_high = 0;
  std::vector<std::string> warnings;
};

/// Stacked dual-energy log projections with their blank scans.
struct MeasurementSet {
  Eigen::VectorXd m_low;
  Eigen::VectorXd m_high;
  double blank_low = 1.0;
  double blank_high = 1.0;
  NoiseMeta noise;

  Eigen::Index ray_count() const { return m_low.size(); }
  /// [m_low; m_high]
  Eigen::VectorXd stacked() const;
  void validate() const;
};

/// Noise-free mean detector counts for images c, p under one spectrum.
Eigen::VectorXd mean_counts(const SystemMatrix& a, const Eigen::VectorXd& c, const Eigen::VectorXd& p,
                            const EnergySpectrum& spectrum);

/// Noise-free -ln(Ybar/Y0) for every ray.
Eigen::VectorXd log_projections(const SystemMatrix& a, const Eigen::VectorXd& c, const Eigen::VectorXd& p,
                                const EnergySpectrum& spectrum);

/// Simulated dual-energy scan. Poisson counting, then additive Gaussian
/// background with sigma = mean(Ybar) / 10^(snr/20), then the log transform.
/// Counts that end up <= 0 are clamped to 0.5.
MeasurementSet simulate(const SystemMatrix& a, const Eigen::VectorXd& c, const Eigen::VectorXd& p,
                        const EnergySpectrum& spec_low, const EnergySpectrum& spec_high,
                        const NoiseSpec& noise);

}  // namespace dualct
