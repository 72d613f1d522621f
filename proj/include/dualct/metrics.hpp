#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace dualct {

using Mask = Eigen::Array<bool, Eigen::Dynamic, 1>;

/// ||estimate - truth||^2 / ||truth||^2. Squared norms on purpose: this is
/// the error figure reported in the result tables.
double rel_l2(const Eigen::VectorXd& estimate, const Eigen::VectorXd& truth);

/// 2 |a & b| / (|a| + |b|); two empty masks count as perfect agreement.
double dice(const Mask& estimate, const Mask& truth);

Mask binarize_chi(const Eigen::VectorXd& chi, double threshold = 0.5);

struct EvalResult {
  std::string method;
  double l2_compton = 0.0;
  double l2_photoelectric = 0.0;
  std::optional<double> dice;  // empty for runs without an object of interest
  Eigen::Index detected_pixels = 0;
};

/// Scores one reconstruction. The Dice entry is left empty when the truth
/// holds no object and the estimate is empty too.
EvalResult evaluate(const std::string& method, const Eigen::VectorXd& c_est, const Eigen::VectorXd& p_est,
                    const Mask& chi_est, const Eigen::VectorXd& c_true, const Eigen::VectorXd& p_true,
                    const Mask& chi_true);

void write_results_csv(std::ostream& os, const std::vector<EvalResult>& rows);
std::vector<EvalResult> read_results_csv(std::istream& is);

}  // namespace dualct
