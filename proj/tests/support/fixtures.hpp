#pragma once

// Small randomized instances shared by the unit and acceptance tests.

#include <cmath>
#include <memory>
#include <random>
#include <vector>

#include "dualct/forward.hpp"
#include "dualct/objective.hpp"
#include "dualct/pals.hpp"
#include "dualct/projector.hpp"

namespace dualct::fixtures {

struct SmallProblem {
  ImageGrid grid;
  std::shared_ptr<const SystemMatrix> a;
  EnergySpectrum low = default_low_spectrum();
  EnergySpectrum high = default_high_spectrum();
  SceneModel model;
  MeasurementSet data;
  ObjectiveConfig config;

  Objective objective() const { return Objective(a, low, high, data, config, model); }
};

// Random model whose level set crosses zero inside the field, backgrounds
// with independent ripples (so the correlation term is live) and data from
// a different random model with mild noise (so no residual block is zero).
inline SmallProblem small_problem(std::uint64_t seed, int n = 16) {
  SmallProblem s;
  s.grid = ImageGrid(20.0, 20.0, n, n);
  s.a = std::make_shared<SystemMatrix>(build_system_matrix(s.grid, ScanGeometry::parallel(s.grid, 10, 2 * n)));
  const DefaultBases bases = build_default_bases(s.grid);

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  auto randomize = [&](SceneModel& m) {
    for (auto& v : m.a) v = 2.0 * u(rng);
    for (auto& v : m.beta) v = 8e-3 * (1.0 + 0.3 * u(rng));
    for (auto& v : m.alpha) v = 80.0 * (1.0 + 0.3 * u(rng));
    m.c_a += 0.02 * u(rng);
    m.p_a += 300.0 * u(rng);
  };

  s.model = initial_model(bases, 0.19, 5000.0, seed, 8e-3, 80.0);
  randomize(s.model);
  SceneModel truth = initial_model(bases, 0.2, 5200.0, seed + 1000, 8e-3, 80.0);
  randomize(truth);
  const ComposedScene t = compose(truth);
  s.data = simulate(*s.a, t.c_image, t.p_image, s.low, s.high, {true, 60.0, seed});

  s.config.sigma_weight = 1.0;
  return s;
}

// Central differences of the concatenated residual. Steps are relative to
// each parameter's magnitude with a floor per material (photoelectric-like
// entries live on a scale ~25000 times larger).
inline Eigen::MatrixXd fd_jacobian(const Objective& obj, const SceneModel& model, double rel = 1e-6) {
  const Eigen::VectorXd theta = model.theta();
  const ParameterLayout lay = model.layout();
  Eigen::MatrixXd j(obj.residual_size(), theta.size());
  SceneModel m = model;
  for (Eigen::Index k = 0; k < theta.size(); ++k) {
    const bool photo = k == lay.pa() || k >= lay.alpha_begin();
    const bool shape = k >= lay.a_begin() && k < lay.beta_begin();
    const double floor = photo ? 100.0 : (shape ? 1.0 : 4e-3);
    const double h = rel * std::max(std::abs(theta(k)), floor);
    Eigen::VectorXd tp = theta, tm = theta;
    tp(k) += h;
    tm(k) -= h;
    m.set_theta(tp);
    const Eigen::VectorXd rp = obj.residuals(m).concatenated();
    m.set_theta(tm);
    const Eigen::VectorXd rm = obj.residuals(m).concatenated();
    j.col(k) = (rp - rm) / (2.0 * h);
  }
  return j;
}

struct BlockError {
  const char* name;
  double rel;
};

// ||J - FD||_F / ||FD||_F over the columns of each parameter block.
inline std::vector<BlockError> block_errors(const Eigen::MatrixXd& j, const Eigen::MatrixXd& fd,
                                            const ParameterLayout& lay) {
  auto err = [&](Eigen::Index c0, Eigen::Index n) {
    const double den = fd.middleCols(c0, n).norm();
    const double num = (j.middleCols(c0, n) - fd.middleCols(c0, n)).norm();
    return den > 0.0 ? num / den : num;
  };
  return {{"c_a", err(lay.ca(), 1)},
          {"p_a", err(lay.pa(), 1)},
          {"a", err(lay.a_begin(), lay.level_set)},
          {"beta", err(lay.beta_begin(), lay.background)},
          {"alpha", err(lay.alpha_begin(), lay.background)}};
}

// Same measure over the rows of each residual block.
inline std::vector<BlockError> residual_block_errors(const Eigen::MatrixXd& j, const Eigen::MatrixXd& fd,
                                                     Eigen::Index rays, Eigen::Index pixels) {
  auto err = [&](Eigen::Index r0, Eigen::Index n) {
    const double den = fd.middleRows(r0, n).norm();
    const double num = (j.middleRows(r0, n) - fd.middleRows(r0, n)).norm();
    return den > 0.0 ? num / den : num;
  };
  return {{"data", err(0, 2 * rays)},
          {"area", err(2 * rays, pixels)},
          {"correlation", err(2 * rays + pixels, 1)},
          {"penalty", err(2 * rays + pixels + 1, 1 + pixels)}};
}

}  // namespace dualct::fixtures
