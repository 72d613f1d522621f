#include "dualct/solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <stdexcept>

#include <Eigen/Cholesky>

namespace dualct {

void LmConfig::validate() const {
  if (!(mu0 > 0.0)) throw std::invalid_argument("LmConfig: mu0 must be > 0");
  if (!(nu > 1.0)) throw std::invalid_argument("LmConfig: nu must be > 1");
  if (max_inner_iters < 1) throw std::invalid_argument("LmConfig: max_inner_iters must be >= 1");
  if (max_rejections < 1) throw std::invalid_argument("LmConfig: max_rejections must be >= 1");
}

void ScheduleConfig::validate() const {
  if (!(eps_stop > 0.0)) throw std::invalid_argument("ScheduleConfig: eps_stop must be > 0");
  if (k_max < 1) throw std::invalid_argument("ScheduleConfig: k_max must be >= 1");
  if (max_outer_cycles < 1) throw std::invalid_argument("ScheduleConfig: max_outer_cycles must be >= 1");
  if (joint_iters < 0) throw std::invalid_argument("ScheduleConfig: joint_iters must be >= 0");
}

bool stop_check(const Eigen::VectorXd& x_k, const Eigen::VectorXd& x_prev, double eps_stop, int k, int k_max) {
  if (x_k.size() != x_prev.size()) throw std::invalid_argument("stop_check: length mismatch");
  if (k > k_max) return true;
  return (x_k - x_prev).norm() < eps_stop * (1.0 + x_prev.norm());
}

LmResult lm_minimize(const ResidualFn& residual_fn, const JacobianFn& jacobian_fn, const Eigen::VectorXd& theta0,
                     const std::vector<bool>& active_mask, const LmConfig& config, const Eigen::VectorXd& scale,
                     const AcceptFn& on_accept) {
  config.validate();
  const Eigen::Index n = theta0.size();
  if (Eigen::Index(active_mask.size()) != n) throw std::invalid_argument("lm_minimize: mask length mismatch");
  if (scale.size() != 0 && scale.size() != n) throw std::invalid_argument("lm_minimize: scale length mismatch");
  const Eigen::VectorXd s = scale.size() ? scale : Eigen::VectorXd::Ones(n);
  if ((s.array() <= 0.0).any()) throw std::invalid_argument("lm_minimize: scale entries must be > 0");

  std::vector<Eigen::Index> cols;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (active_mask[std::size_t(i)]) cols.push_back(i);
  }
  const auto na = Eigen::Index(cols.size());
  Eigen::VectorXd s_act(na);
  for (Eigen::Index k = 0; k < na; ++k) s_act(k) = s(cols[std::size_t(k)]);

  LmResult out;
  out.theta = theta0;
  Eigen::VectorXd eps = residual_fn(out.theta);
  if (!eps.allFinite()) throw std::runtime_error("lm_minimize: non-finite residual at the initial point");
  out.initial_cost = out.cost = eps.squaredNorm();
  if (na == 0) {
    out.stop_reason = "no active parameters";
    return out;
  }

  auto z_of = [&](const Eigen::VectorXd& theta) {
    Eigen::VectorXd z(na);
    for (Eigen::Index k = 0; k < na; ++k) z(k) = theta(cols[std::size_t(k)]) / s_act(k);
    return z;
  };

  // Normal equations in scaled variables: J_z = J diag(s).
  Eigen::MatrixXd jtj;
  Eigen::VectorXd g;
  auto linearize = [&]() {
    Eigen::MatrixXd j = jacobian_fn(out.theta, cols);
    if (j.rows() != eps.size() || j.cols() != na) throw std::runtime_error("lm_minimize: Jacobian has wrong shape");
    // Each block leaves whole residual groups untouched (the area rows do not
    // see the backgrounds, the background penalty rows do not see the shape),
    // so only the rows with a nonzero entry enter the normal equations.
    std::vector<Eigen::Index> live;
    live.reserve(std::size_t(j.rows()));
    for (Eigen::Index i = 0; i < j.rows(); ++i) {
      if ((j.row(i).array() != 0.0).any()) live.push_back(i);
    }
    const Eigen::MatrixXd jl = j(live, Eigen::all) * s_act.asDiagonal();
    const Eigen::VectorXd el = eps(live);
    jtj.setZero(na, na);
    jtj.selfadjointView<Eigen::Lower>().rankUpdate(jl.transpose());
    jtj = jtj.selfadjointView<Eigen::Lower>();
    g = jl.transpose() * el;
  };

  linearize();
  double mu = config.mu0 * std::max(jtj.diagonal().maxCoeff(), 1e-300);
  double nu = config.nu;
  int rejections = 0;

  while (true) {
    if (g.lpNorm<Eigen::Infinity>() <= config.gradient_tolerance) {
      out.stop_reason = "gradient";
      break;
    }
    if (out.cost == 0.0) {
      out.stop_reason = "zero cost";
      break;
    }

    // Solve (J^T J + mu I) h = -g, escalating mu if the factorization fails.
    Eigen::VectorXd h;
    int escalations = 0;
    while (true) {
      Eigen::MatrixXd lhs = jtj;
      lhs.diagonal().array() += mu;
      Eigen::LLT<Eigen::MatrixXd> llt(lhs);
      if (llt.info() == Eigen::Success) {
        h = llt.solve(-g);
        if (h.allFinite()) break;
      }
      if (++escalations > 60) throw std::runtime_error("lm_minimize: damped normal equations could not be solved");
      mu *= nu;
      nu *= 2.0;
    }

    const Eigen::VectorXd z = z_of(out.theta);
    Eigen::VectorXd trial = out.theta;
    for (Eigen::Index k = 0; k < na; ++k) trial(cols[std::size_t(k)]) += s_act(k) * h(k);
    const Eigen::VectorXd eps_new = residual_fn(trial);
    const double cost_new = eps_new.allFinite() ? eps_new.squaredNorm() : INFINITY;
    const double predicted = h.dot(mu * h - g);
    const double rho = predicted > 0.0 ? (out.cost - cost_new) / predicted : -1.0;

    LmStep step;
    step.gain_ratio = rho;
    if (rho > 0.0 && cost_new < out.cost) {
      out.theta = trial;
      eps = eps_new;
      out.cost = cost_new;
      ++out.iterations;
      mu *= std::max(1.0 / 3.0, 1.0 - std::pow(2.0 * rho - 1.0, 3));
      nu = config.nu;
      rejections = 0;
      step.accepted = true;
      step.iteration = out.iterations;
      step.cost = out.cost;
      step.mu = mu;
      out.steps.push_back(step);
      if (on_accept) on_accept(out.theta, eps, mu);

      if (h.norm() < config.step_tolerance * (1.0 + z.norm())) {
        out.stop_reason = "step";
        break;
      }
      if (out.iterations >= config.max_inner_iters) {
        out.stop_reason = "iterations";
        break;
      }
      linearize();
    } else {
      mu *= nu;
      nu *= 2.0;
      step.iteration = out.iterations;
      step.cost = out.cost;
      step.mu = mu;
      out.steps.push_back(step);
      if (++rejections >= config.max_rejections) {
        out.stop_reason = "damping";
        break;
      }
      if (h.norm() < config.step_tolerance * (1.0 + z.norm()) * 1e-6) {
        out.stop_reason = "step";
        break;
      }
    }
  }
  return out;
}

Eigen::VectorXd default_parameter_scale(const SceneModel& model, const ContrastRegion& region) {
  const ParameterLayout l = model.layout();
  Eigen::VectorXd s = Eigen::VectorXd::Ones(l.size());
  const double kappa = std::abs(region.p0 / region.c0);
  if (std::isfinite(kappa) && kappa > 0.0) {
    s(l.pa()) = kappa;
    s.segment(l.alpha_begin(), l.background).setConstant(kappa);
  }
  return s;
}

namespace {

Eigen::VectorXd composed_images(const SceneModel& m) {
  const ComposedScene s = compose(m);
  Eigen::VectorXd x(s.c_image.size() + s.p_image.size());
  x << s.c_image, s.p_image;
  return x;
}

}  // namespace

SolveReport coordinate_descent(const Objective& objective, const SceneModel& model0, const LmConfig& lm,
                               const ScheduleConfig& schedule,
                               const std::function<void(int, const SceneModel&)>& on_cycle) {
  lm.validate();
  schedule.validate();
  const auto t0 = std::chrono::steady_clock::now();

  SolveReport rep;
  rep.model = model0;
  const ParameterLayout lay = model0.layout();
  const Eigen::VectorXd scale = default_parameter_scale(model0, objective.config().region);

  std::vector<bool> shape_mask(std::size_t(lay.size()), false);
  std::vector<bool> contrast_mask(std::size_t(lay.size()), true);
  for (Eigen::Index i = lay.a_begin(); i < lay.beta_begin(); ++i) {
    shape_mask[std::size_t(i)] = true;
    contrast_mask[std::size_t(i)] = false;
  }

  SceneModel work = model0;
  auto residual_fn = [&](const Eigen::VectorXd& th) {
    work.set_theta(th);
    return objective.residuals(work).concatenated();
  };
  auto jacobian_fn = [&](const Eigen::VectorXd& th, const std::vector<Eigen::Index>& cols) {
    work.set_theta(th);
    return objective.jacobian(work, cols);
  };

  int global_iter = 0;
  {
    TraceRow r;
    r.block = "initial";
    r.cost = objective.residuals(rep.model).breakdown();
    rep.trace.push_back(r);
  }

  LmConfig inner = lm;
  inner.max_inner_iters = schedule.k_max;
  inner.step_tolerance = schedule.eps_stop;

  Eigen::VectorXd images_prev = composed_images(rep.model);
  rep.stop_reason = "max outer cycles";
  std::vector<bool> all_mask(std::size_t(lay.size()), true);
  auto run_block = [&](int cycle, const std::string& block, const std::vector<bool>& mask, const LmConfig& cfg) {
    auto on_accept = [&](const Eigen::VectorXd&, const Eigen::VectorXd& eps, double mu) {
      TraceRow r;
      r.iteration = ++global_iter;
      r.cycle = cycle;
      r.block = block;
      r.cost = split_residual(eps, objective.rays(), objective.pixels()).breakdown();
      r.mu = mu;
      // LM accepts strictly smaller ||eps||^2; the slack only absorbs the
      // summation-order difference of the per-block breakdown.
      if (r.cost.total > rep.trace.back().cost.total * (1.0 + 1e-12)) rep.monotone = false;
      rep.trace.push_back(r);
    };
    const LmResult res = lm_minimize(residual_fn, jacobian_fn, rep.model.theta(), mask, cfg, scale, on_accept);
    rep.model.set_theta(res.theta);
    CycleRecord cr;
    cr.cycle = cycle;
    cr.block = block;
    cr.iterations = res.iterations;
    cr.cost_before = res.initial_cost;
    cr.cost_after = res.cost;
    cr.stop_reason = res.stop_reason;
    rep.cycles.push_back(cr);
  };

  for (int cycle = 1; cycle <= schedule.max_outer_cycles; ++cycle) {
    rep.outer_cycles = cycle;
    for (int half = 0; half < 2; ++half) {
      const bool shape = (half == 0) == schedule.shape_first;
      run_block(cycle, shape ? "shape" : "contrast", shape ? shape_mask : contrast_mask, inner);
    }
    if (on_cycle) on_cycle(cycle, rep.model);

    const Eigen::VectorXd images = composed_images(rep.model);
    if (stop_check(images, images_prev, schedule.eps_stop, cycle, schedule.max_outer_cycles)) {
      rep.stop_reason = "image change below tolerance";
      break;
    }
    images_prev = images;
  }
  if (schedule.joint_iters > 0) {
    LmConfig joint = inner;
    joint.max_inner_iters = schedule.joint_iters;
    run_block(rep.outer_cycles + 1, "joint", all_mask, joint);
    if (on_cycle) on_cycle(rep.outer_cycles + 1, rep.model);
  }
  rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

void write_trace_csv(std::ostream& os, const std::vector<TraceRow>& trace) {
  os << "iteration,cycle,block,cost,data,area,correlation,penalty,mu\n";
  os << std::setprecision(12);
  for (const TraceRow& r : trace) {
    os << r.iteration << ',' << r.cycle << ',' << r.block << ',' << r.cost.total << ',' << r.cost.data << ','
       << r.cost.area << ',' << r.cost.correlation << ',' << r.cost.penalty << ',' << r.mu << '\n';
  }
}

}  // namespace dualct
