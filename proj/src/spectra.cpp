#include "dualct/spectra.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace dualct {

double klein_nishina(double energy_kev) {
  if (!(energy_kev > 0.0)) {
    throw std::domain_error("klein_nishina: energy must be positive");
  }
  const double a = energy_kev / kElectronRestEnergyKeV;
  const double l = std::log1p(2.0 * a);
  const double t1 = (1.0 + a) / (a * a) * (2.0 * (1.0 + a) / (1.0 + 2.0 * a) - l / a);
  const double t2 = l / (2.0 * a);
  const double t3 = (1.0 + 3.0 * a) / ((1.0 + 2.0 * a) * (1.0 + 2.0 * a));
  return t1 + t2 - t3;
}

double photoelectric_basis(double energy_kev) {
  if (!(energy_kev > 0.0)) {
    throw std::domain_error("photoelectric_basis: energy must be positive");
  }
  return 1.0 / (energy_kev * energy_kev * energy_kev);
}

double attenuation(const MaterialPoint& point, double energy_kev) {
  return point.c * klein_nishina(energy_kev) + point.p * photoelectric_basis(energy_kev);
}

Eigen::VectorXd quadrature_weights(const Eigen::VectorXd& e, QuadratureRule rule) {
  const Eigen::Index n = e.size();
  Eigen::VectorXd w = Eigen::VectorXd::Zero(n);
  if (n == 1) {
    // A single bin is a monoenergetic source: the integral is the sample itself.
    w(0) = 1.0;
    return w;
  }
  if (rule == QuadratureRule::Trapezoid) {
    for (Eigen::Index i = 0; i + 1 < n; ++i) {
      const double h = e(i + 1) - e(i);
      w(i) += 0.5 * h;
      w(i + 1) += 0.5 * h;
    }
  } else {
    for (Eigen::Index i = 0; i < n; ++i) {
      const double left = i == 0 ? e(1) - e(0) : e(i) - e(i - 1);
      const double right = i + 1 == n ? e(n - 1) - e(n - 2) : e(i + 1) - e(i);
      w(i) = 0.5 * (left + right);
    }
  }
  return w;
}

EnergySpectrum::EnergySpectrum(Eigen::VectorXd energies_kev, Eigen::VectorXd counts,
                               QuadratureRule rule)
    : energies_(std::move(energies_kev)), counts_(std::move(counts)) {
  if (energies_.size() == 0 || energies_.size() != counts_.size()) {
    throw std::invalid_argument("EnergySpectrum: energies and counts must be non-empty and equal length");
  }
  for (Eigen::Index i = 0; i < energies_.size(); ++i) {
    if (!(energies_(i) > 0.0) || !std::isfinite(energies_(i))) {
      throw std::invalid_argument("EnergySpectrum: energies must be positive and finite");
    }
    if (i > 0 && !(energies_(i) > energies_(i - 1))) {
      throw std::invalid_argument("EnergySpectrum: energies must be strictly increasing");
    }
    if (!(counts_(i) >= 0.0) || !std::isfinite(counts_(i))) {
      throw std::invalid_argument("EnergySpectrum: counts must be finite and non-negative");
    }
  }
  weights_ = quadrature_weights(energies_, rule);
  if (!(blank_scan() > 0.0)) {
    throw std::invalid_argument("EnergySpectrum: blank scan must be positive");
  }
}

double EnergySpectrum::blank_scan() const { return weights_.dot(counts_); }

double EnergySpectrum::total_counts() const { return counts_.sum(); }

EnergySpectrum EnergySpectrum::scaled(double factor) const {
  EnergySpectrum out = *this;
  out.counts_ *= factor;
  if (!(out.blank_scan() > 0.0)) {
    throw std::invalid_argument("EnergySpectrum::scaled: factor must be positive");
  }
  return out;
}

SpectrumParseError::SpectrumParseError(const std::string& source, int line, const std::string& what)
    : std::runtime_error(source + ":" + std::to_string(line) + ": " + what), line_(line) {}

EnergySpectrum parse_spectrum(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string row;
  std::vector<double> energies;
  std::vector<double> counts;
  int line_no = 0;
  while (std::getline(in, row)) {
    ++line_no;
    if (!row.empty() && row.back() == '\r') row.pop_back();
    if (row.empty()) continue;
    if (energies.empty() && std::isalpha(static_cast<unsigned char>(row.front()))) {
      continue;  // header
    }
    const auto comma = row.find(',');
    if (comma == std::string::npos) {
      throw SpectrumParseError(source, line_no, "expected two comma-separated columns");
    }
    double e = 0.0;
    double n = 0.0;
    try {
      std::size_t used = 0;
      e = std::stod(row.substr(0, comma), &used);
      const std::string rest = row.substr(comma + 1);
      const auto next = rest.find(',');
      n = std::stod(rest.substr(0, next), &used);
    } catch (const std::exception&) {
      throw SpectrumParseError(source, line_no, "malformed number");
    }
    if (!std::isfinite(e) || !(e > 0.0)) {
      throw SpectrumParseError(source, line_no, "energy must be positive");
    }
    if (!std::isfinite(n) || n < 0.0) {
      throw SpectrumParseError(source, line_no, "negative or non-finite count");
    }
    if (!energies.empty() && !(e > energies.back())) {
      throw SpectrumParseError(source, line_no, "energies must be strictly increasing");
    }
    energies.push_back(e);
    counts.push_back(n);
  }
  if (energies.empty()) {
    throw SpectrumParseError(source, line_no, "no spectrum rows");
  }
  return EnergySpectrum(Eigen::Map<Eigen::VectorXd>(energies.data(), Eigen::Index(energies.size())),
                        Eigen::Map<Eigen::VectorXd>(counts.data(), Eigen::Index(counts.size())));
}

EnergySpectrum load_spectrum(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open spectrum file " + path.string());
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_spectrum(buf.str(), path.string());
}

void write_spectrum_csv(const EnergySpectrum& spectrum, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot write spectrum file " + path.string());
  }
  out << "energy_keV,counts\n" << std::setprecision(17);
  for (Eigen::Index i = 0; i < spectrum.size(); ++i) {
    out << spectrum.energies()(i) << ',' << spectrum.counts()(i) << '\n';
  }
}

EnergySpectrum synthetic_spectrum(double kvp, double total_counts, double e_min, double e_max) {
  if (!(kvp > e_min) || !(e_max > e_min) || !(total_counts > 0.0)) {
    throw std::invalid_argument("synthetic_spectrum: need e_min < kvp, e_min < e_max, positive total");
  }
  const auto n = static_cast<Eigen::Index>(std::floor(e_max - e_min)) + 1;
  Eigen::VectorXd e(n);
  Eigen::VectorXd s(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    e(i) = e_min + double(i);
    s(i) = std::max(0.0, (e(i) - e_min) * (kvp - e(i)));
  }
  s *= total_counts / s.sum();
  return EnergySpectrum(std::move(e), std::move(s));
}

EnergySpectrum default_low_spectrum() { return synthetic_spectrum(80.0, 1.8e6); }

EnergySpectrum default_high_spectrum() { return synthetic_spectrum(140.0, 3.6e6); }

}  // namespace dualct
