#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dualct/objective.hpp"
#include "dualct/pals.hpp"

namespace dualct {

struct LmConfig {
  double mu0 = 1e-3;  // relative to max diag(J^T J) at the first iterate
  double nu = 2.0;
  int max_inner_iters = 20;
  double step_tolerance = 1e-6;
  double gradient_tolerance = 1e-12;
  int max_rejections = 25;  // consecutive rejected steps before giving up

  void validate() const;
};

struct ScheduleConfig {
  double eps_stop = 1e-6;
  int k_max = 20;
  int max_outer_cycles = 30;
  bool shape_first = true;
  // Accepted-step budget for a final LM pass over all of theta once the
  // alternating cycles stop. The two blocks are strongly coupled, so plain
  // alternation creeps along the valley floor; 0 disables the pass.
  int joint_iters = 200;

  void validate() const;
};

/// ||x_k - x_prev|| < eps (1 + ||x_prev||)  or  k > k_max.
bool stop_check(const Eigen::VectorXd& x_k, const Eigen::VectorXd& x_prev, double eps_stop, int k, int k_max);

using ResidualFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;
/// Returns the Jacobian restricted to the given theta columns, in that order.
using JacobianFn = std::function<Eigen::MatrixXd(const Eigen::VectorXd&, const std::vector<Eigen::Index>&)>;
/// Called with (theta, residual, damping) after every accepted step.
using AcceptFn = std::function<void(const Eigen::VectorXd&, const Eigen::VectorXd&, double)>;

struct LmStep {
  int iteration = 0;     // accepted-step counter after this attempt
  double cost = 0.0;     // cost after the attempt (current cost if rejected)
  double mu = 0.0;
  double gain_ratio = 0.0;
  bool accepted = false;
};

struct LmResult {
  Eigen::VectorXd theta;
  double initial_cost = 0.0;
  double cost = 0.0;
  int iterations = 0;  // accepted steps
  std::string stop_reason;
  std::vector<LmStep> steps;
};

/// Levenberg-Marquardt on F = ||eps||^2 over the parameters where
/// `active_mask` is true; inactive entries of theta are copied through
/// untouched. `scale` (empty = ones) maps theta = scale .* z, and the step,
/// damping and stopping tests act on z. `on_accept` sees every accepted
/// iterate together with its residual vector and the updated damping.
LmResult lm_minimize(const ResidualFn& residual_fn, const JacobianFn& jacobian_fn, const Eigen::VectorXd& theta0,
                     const std::vector<bool>& active_mask, const LmConfig& config,
                     const Eigen::VectorXd& scale = {},
                     const AcceptFn& on_accept = {});

/// One row per accepted LM step (plus one initial row per solve).
struct TraceRow {
  int iteration = 0;  // global accepted-step counter
  int cycle = 0;
  std::string block;
  ResidualVector::Breakdown cost{};
  double mu = 0.0;
};

struct CycleRecord {
  int cycle = 0;
  std::string block;  // "shape", "contrast" or "joint"
  int iterations = 0;
  double cost_before = 0.0;
  double cost_after = 0.0;
  std::string stop_reason;
};

struct SolveReport {
  SceneModel model;
  std::vector<TraceRow> trace;
  std::vector<CycleRecord> cycles;
  int outer_cycles = 0;
  std::string stop_reason;
  double wall_seconds = 0.0;
  /// True when every accepted step lowered the cost.
  bool monotone = true;
};

/// Scaling used inside LM: photoelectric-like parameters (p_a, alpha) are
/// divided by p0 / c0 of the contrast region so both materials have
/// comparable magnitudes.
Eigen::VectorXd default_parameter_scale(const SceneModel& model, const ContrastRegion& region);

/// Alternating LM over the shape block (a) and the contrast block
/// (c_a, p_a, beta, alpha). Each block runs until its own stop rule fires;
/// the outer loop stops when the composed [c; p] images stop moving.
/// `on_cycle` is called after every completed outer cycle.
SolveReport coordinate_descent(const Objective& objective, const SceneModel& model0, const LmConfig& lm,
                               const ScheduleConfig& schedule,
                               const std::function<void(int, const SceneModel&)>& on_cycle = {});

void write_trace_csv(std::ostream& os, const std::vector<TraceRow>& trace);

}  // namespace dualct
