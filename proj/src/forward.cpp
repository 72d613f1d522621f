#include "dualct/forward.hpp"

#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

namespace dualct {

SpectralKernel::SpectralKernel(const EnergySpectrum& spectrum) {
  std::vector<double> w;
  std::vector<double> kn;
  std::vector<double> pe;
  for (Eigen::Index b = 0; b < spectrum.size(); ++b) {
    const double wb = spectrum.weights()(b) * spectrum.counts()(b);
    if (wb <= 0.0) continue;
    w.push_back(wb);
    kn.push_back(klein_nishina(spectrum.energies()(b)));
    pe.push_back(photoelectric_basis(spectrum.energies()(b)));
  }
  const auto n = Eigen::Index(w.size());
  w_ = Eigen::Map<Eigen::VectorXd>(w.data(), n);
  kn_ = Eigen::Map<Eigen::VectorXd>(kn.data(), n);
  pe_ = Eigen::Map<Eigen::VectorXd>(pe.data(), n);
  blank_ = w_.sum();
  mean_kn_ = w_.dot(kn_) / blank_;
  mean_pe_ = w_.dot(pe_) / blank_;
}

double SpectralKernel::mean_count(double line_c, double line_p) const {
  double y = 0.0;
  for (Eigen::Index b = 0; b < w_.size(); ++b) {
    y += w_(b) * std::exp(-kn_(b) * line_c - pe_(b) * line_p);
  }
  return y;
}

SpectralKernel::Moments SpectralKernel::moments(double line_c, double line_p) const {
  Moments m;
  for (Eigen::Index b = 0; b < w_.size(); ++b) {
    const double t = w_(b) * std::exp(-kn_(b) * line_c - pe_(b) * line_p);
    m.counts += t;
    m.kn += t * kn_(b);
    m.pe += t * pe_(b);
  }
  return m;
}

double SpectralKernel::log_projection(double line_c, double line_p) const {
  return -std::log(mean_count(line_c, line_p) / blank_);
}

Eigen::VectorXd MeasurementSet::stacked() const {
  Eigen::VectorXd out(m_low.size() + m_high.size());
  out << m_low, m_high;
  return out;
}

void MeasurementSet::validate() const {
  if (m_low.size() != m_high.size()) {
    throw std::invalid_argument("MeasurementSet: low and high vectors differ in length");
  }
  if (!m_low.allFinite() || !m_high.allFinite()) {
    throw std::invalid_argument("MeasurementSet: non-finite log projection");
  }
  if (!(blank_low > 0.0) || !(blank_high > 0.0)) {
    throw std::invalid_argument("MeasurementSet: blank scans must be positive");
  }
}

namespace {

void check_images(const SystemMatrix& a, const Eigen::VectorXd& c, const Eigen::VectorXd& p) {
  if (c.size() != a.cols() || p.size() != a.cols()) {
    throw std::invalid_argument("forward model: image length does not match the system matrix");
  }
  if (!c.allFinite() || !p.allFinite()) {
    throw std::invalid_argument("forward model: non-finite pixel value");
  }
}

}  // namespace

Eigen::VectorXd mean_counts(const SystemMatrix& a, const Eigen::VectorXd& c, const Eigen::VectorXd& p,
                            const EnergySpectrum& spectrum) {
  check_images(a, c, p);
  const SpectralKernel kernel(spectrum);
  const Eigen::VectorXd lc = a.a * c;
  const Eigen::VectorXd lp = a.a * p;
  Eigen::VectorXd y(lc.size());
  for (Eigen::Index i = 0; i < y.size(); ++i) y(i) = kernel.mean_count(lc(i), lp(i));
  return y;
}

Eigen::VectorXd log_projections(const SystemMatrix& a, const Eigen::VectorXd& c, const Eigen::VectorXd& p,
                                const EnergySpectrum& spectrum) {
  check_images(a, c, p);
  const SpectralKernel kernel(spectrum);
  const Eigen::VectorXd lc = a.a * c;
  const Eigen::VectorXd lp = a.a * p;
  Eigen::VectorXd m(lc.size());
  for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = kernel.log_projection(lc(i), lp(i));
  return m;
}

namespace {

// Applies the configured noise to one energy channel and returns -ln(Y/Y0).
Eigen::VectorXd noisy_channel(const Eigen::VectorXd& ybar, double blank, const NoiseSpec& noise,
                              std::mt19937_64& rng, double& sigma, std::int64_t& clamped) {
  for (Eigen::Index i = 0; i < ybar.size(); ++i) {
    if (!(ybar(i) > 0.0) || !std::isfinite(ybar(i))) {
      throw std::runtime_error("simulate: non-positive mean count on ray " + std::to_string(i));
    }
  }
  Eigen::VectorXd y = ybar;
  if (noise.poisson_enabled) {
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      std::poisson_distribution<std::int64_t> pois(ybar(i));
      y(i) = double(pois(rng));
    }
  }
  sigma = 0.0;
  if (noise.background_snr_db) {
    sigma = ybar.mean() / std::pow(10.0, *noise.background_snr_db / 20.0);
    std::normal_distribution<double> gauss(0.0, sigma);
    for (Eigen::Index i = 0; i < y.size(); ++i) y(i) += gauss(rng);
  }
  clamped = 0;
  Eigen::VectorXd m(y.size());
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (y(i) <= 0.0) {
      y(i) = 0.5;
      ++clamped;
    }
    m(i) = -std::log(y(i) / blank);
  }
  return m;
}

}  // namespace

MeasurementSet simulate(const SystemMatrix& a, const Eigen::VectorXd& c, const Eigen::VectorXd& p,
                        const EnergySpectrum& spec_low, const EnergySpectrum& spec_high,
                        const NoiseSpec& noise) {
  if (noise.background_snr_db && !std::isfinite(*noise.background_snr_db)) {
    throw std::invalid_argument("simulate: SNR must be finite");
  }
  MeasurementSet out;
  out.blank_low = spec_low.blank_scan();
  out.blank_high = spec_high.blank_scan();
  out.noise.poisson = noise.poisson_enabled;
  out.noise.snr_db = noise.background_snr_db;
  out.noise.seed = noise.rng_seed;

  const Eigen::VectorXd y_low = mean_counts(a, c, p, spec_low);
  const Eigen::VectorXd y_high = mean_counts(a, c, p, spec_high);

  if (!noise.any()) {
    out.m_low = -(y_low / out.blank_low).array().log();
    out.m_high = -(y_high / out.blank_high).array().log();
    return out;
  }

  std::mt19937_64 rng(noise.rng_seed);
  out.m_low = noisy_channel(y_low, out.blank_low, noise, rng, out.noise.sigma_low, out.noise.clamped_low);
  out.m_high = noisy_channel(y_high, out.blank_high, noise, rng, out.noise.sigma_high, out.noise.clamped_high);

  const double limit = 1e-3 * double(y_low.size());
  auto warn = [&](const char* name, std::int64_t n) {
    if (double(n) > limit) {
      std::ostringstream msg;
      msg << name << " channel: " << n << " of " << y_low.size() << " samples clamped to 0.5 counts";
      out.noise.warnings.push_back(msg.str());
    }
  };
  warn("low", out.noise.clamped_low);
  warn("high", out.noise.clamped_high);
  return out;
}

}  // namespace dualct
