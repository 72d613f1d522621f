#include "dualct/metrics.hpp"

#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace dualct {

double rel_l2(const Eigen::VectorXd& estimate, const Eigen::VectorXd& truth) {
  if (estimate.size() != truth.size()) throw std::invalid_argument("rel_l2: length mismatch");
  const double denom = truth.squaredNorm();
  if (denom == 0.0) throw std::domain_error("rel_l2: undefined for an all-zero reference image");
  return (estimate - truth).squaredNorm() / denom;
}

double dice(const Mask& estimate, const Mask& truth) {
  if (estimate.size() != truth.size()) throw std::invalid_argument("dice: mask size mismatch");
  const Eigen::Index ne = estimate.count();
  const Eigen::Index nt = truth.count();
  if (ne + nt == 0) return 1.0;
  const Eigen::Index both = (estimate && truth).count();
  return 2.0 * double(both) / double(ne + nt);
}

Mask binarize_chi(const Eigen::VectorXd& chi, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw std::invalid_argument("binarize_chi: threshold must be in (0, 1)");
  return chi.array() >= threshold;
}

EvalResult evaluate(const std::string& method, const Eigen::VectorXd& c_est, const Eigen::VectorXd& p_est,
                    const Mask& chi_est, const Eigen::VectorXd& c_true, const Eigen::VectorXd& p_true,
                    const Mask& chi_true) {
  EvalResult r;
  r.method = method;
  r.l2_compton = rel_l2(c_est, c_true);
  r.l2_photoelectric = rel_l2(p_est, p_true);
  r.detected_pixels = chi_est.count();
  if (chi_true.count() > 0 || chi_est.count() > 0) r.dice = dice(chi_est, chi_true);
  return r;
}

void write_results_csv(std::ostream& os, const std::vector<EvalResult>& rows) {
  os << "method,l2_compton,l2_photoelectric,dice,detected_pixels\n";
  for (const EvalResult& r : rows) {
    std::ostringstream line;
    line << std::setprecision(10) << r.method << ',' << r.l2_compton << ',' << r.l2_photoelectric << ',';
    if (r.dice) line << *r.dice;
    line << ',' << r.detected_pixels;
    os << line.str() << '\n';
  }
}

std::vector<EvalResult> read_results_csv(std::istream& is) {
  std::vector<EvalResult> rows;
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("results CSV: missing header");
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (line.back() == ',') f.emplace_back();
    if (f.size() < 4) throw std::runtime_error("results CSV: malformed row: " + line);
    EvalResult r;
    r.method = f[0];
    r.l2_compton = std::stod(f[1]);
    r.l2_photoelectric = std::stod(f[2]);
    if (!f[3].empty()) r.dice = std::stod(f[3]);
    if (f.size() > 4 && !f[4].empty()) r.detected_pixels = std::stoll(f[4]);
    rows.push_back(r);
  }
  return rows;
}

}  // namespace dualct
