#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace dualct {

/// Electron rest energy used to form the Klein-Nishina argument (keV).
inline constexpr double kElectronRestEnergyKeV = 510.95;

/// Material described by its Compton and photoelectric coefficients.
/// Units follow the convention where water is roughly (0.1907, 4939.2).
struct MaterialPoint {
  double c = 0.0;
  double p = 0.0;
};

/// Klein-Nishina energy factor f_KN(E). Throws std::domain_error for E <= 0.
double klein_nishina(double energy_kev);

/// Photoelectric energy factor E^-3. Throws std::domain_error for E <= 0.
double photoelectric_basis(double energy_kev);

/// Linear attenuation c*f_KN(E) + p*f_p(E).
double attenuation(const MaterialPoint& point, double energy_kev);

enum class QuadratureRule { Trapezoid, Midpoint };

/// Quadrature weights for integrating a function sampled at `energies`.
/// Trapezoid uses the composite rule; Midpoint assigns each bin the width of
/// the cell around its center.
Eigen::VectorXd quadrature_weights(const Eigen::VectorXd& energies, QuadratureRule rule);

/// Tabulated tube spectrum: photon counts per bin with integration weights.
class EnergySpectrum {
 public:
  EnergySpectrum(Eigen::VectorXd energies_kev, Eigen::VectorXd counts,
                 QuadratureRule rule = QuadratureRule::Trapezoid);

  const Eigen::VectorXd& energies() const { return energies_; }
  const Eigen::VectorXd& counts() const { return counts_; }
  const Eigen::VectorXd& weights() const { return weights_; }
  Eigen::Index size() const { return energies_.size(); }

  /// Y_0: weighted integral of the spectrum.
  double blank_scan() const;
  /// Plain sum of the per-bin counts.
  double total_counts() const;

  /// Same bins with every count multiplied by `factor`.
  EnergySpectrum scaled(double factor) const;

 private:
  Eigen::VectorXd energies_;
  Eigen::VectorXd counts_;
  Eigen::VectorXd weights_;
};

class SpectrumParseError : public std::runtime_error {
 public:
  SpectrumParseError(const std::string& source, int line, const std::string& what);
  int line() const { return line_; }

 private:
  int line_;
};

/// Reads `energy_keV,counts` CSV. A header line is accepted and skipped.
EnergySpectrum load_spectrum(const std::filesystem::path& path);
EnergySpectrum parse_spectrum(const std::string& text, const std::string& source = "<memory>");

void write_spectrum_csv(const EnergySpectrum& spectrum, const std::filesystem::path& path);

/// Clipped parabolic bremsstrahlung-like shape (E - e_min)(kvp - E) on 1-keV
/// bins from `e_min` to `e_max`, zero above `kvp`, scaled so the counts sum to
/// `total_counts`.
EnergySpectrum synthetic_spectrum(double kvp, double total_counts, double e_min = 20.0,
                                  double e_max = 140.0);

/// Low (80 kVp, 1.8e6 photons) and high (140 kVp, 3.6e6 photons) tube settings.
EnergySpectrum default_low_spectrum();
EnergySpectrum default_high_spectrum();

}  // namespace dualct
