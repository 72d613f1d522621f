#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dualct/defbp.hpp"
#include "dualct/forward.hpp"
#include "dualct/metrics.hpp"
#include "dualct/objective.hpp"
#include "dualct/phantoms.hpp"
#include "dualct/projector.hpp"
#include "dualct/solver.hpp"
#include "dualct/spectra.hpp"

namespace dualct {

enum class Method { Proposed, ProposedWithoutR2, Defbp };

std::string method_name(Method m);
Method method_from_name(const std::string& name);

/// Everything needed to regenerate one run. A default-constructed config is
/// the desk-scale analog of the first shape-phantom experiment.
struct ExperimentConfig {
  std::string name = "phantom1-60db";

  std::string phantom = "phantom1";  // "phantom1" or "clutter"
  std::uint64_t phantom_seed = 1;

  int nx = 64;
  int ny = 64;
  double lx = 20.0;
  double ly = 20.0;
  int views = 30;
  int detectors = 96;

  // Bases are laid out as if the field had this many pixels across, so a
  // coarse run uses the same physical RBF lattice as the 100x100 one.
  int basis_reference_nx = 100;

  // Empty paths select the built-in synthetic tube spectra.
  std::string spectrum_low;
  std::string spectrum_high;

  NoiseSpec noise{true, 60.0, 42};
  ObjectiveConfig objective = default_objective();
  LmConfig lm;
  ScheduleConfig schedule = default_schedule();
  FbpOptions fbp;

  std::uint64_t init_seed = 7;
  double beta0 = 8e-3;
  double alpha0 = 80.0;

  std::vector<Method> methods{Method::Proposed, Method::ProposedWithoutR2, Method::Defbp};

  void validate() const;

  static ObjectiveConfig default_objective();
  static ScheduleConfig default_schedule();
};

nlohmann::json to_json(const ExperimentConfig& cfg);
/// Missing keys keep their defaults; unknown keys are rejected so typos do
/// not silently fall back to a default.
ExperimentConfig experiment_from_json(const nlohmann::json& j);
ExperimentConfig load_experiment(const std::filesystem::path& path);

/// Built-in experiments: phantom1-60db, phantom1-40db, clutter-40db,
/// null-object.
ExperimentConfig preset(const std::string& name);
std::vector<std::string> preset_names();

/// "desk" (64x64, 96 detectors) or "full" (100x100, 150 detectors); the
/// number of views stays at 30.
void apply_scale(ExperimentConfig& cfg, const std::string& scale);

/// Hex digest of the canonical JSON dump.
std::string config_hash(const ExperimentConfig& cfg);

/// Grid, geometry, system matrix, spectra and ground truth of a config.
struct Scenario {
  ImageGrid grid;
  ScanGeometry geometry;
  std::shared_ptr<const SystemMatrix> system;
  EnergySpectrum low;
  EnergySpectrum high;
  PhantomSpec phantom;
  PhantomTruth truth;
};

Scenario build_scenario(const ExperimentConfig& cfg);
MeasurementSet simulate_measurements(const ExperimentConfig& cfg, const Scenario& scenario);

struct MethodOutput {
  Method method = Method::Proposed;
  Eigen::VectorXd c_image;
  Eigen::VectorXd p_image;
  Eigen::VectorXd chi;  // smooth chi for the proposed methods, 0/1 for DEFBP
  Mask chi_mask;
  std::optional<SolveReport> report;
  std::optional<DefbpResult> defbp;
  double seconds = 0.0;
};

/// Runs one method. `on_cycle` receives each outer-cycle model of the
/// proposed methods (used for checkpoints).
MethodOutput reconstruct(const ExperimentConfig& cfg, const Scenario& scenario, const MeasurementSet& data,
                         Method method, const std::function<void(int, const SceneModel&)>& on_cycle = {});

EvalResult score(const MethodOutput& out, const PhantomTruth& truth);

struct RunResult {
  bool ok = true;
  std::string failed_stage;
  std::string error;
  std::vector<EvalResult> metrics;
  std::vector<MethodOutput> outputs;
};

/// simulate -> reconstruct -> evaluate, writing every artifact under `out`
/// plus manifest.json. Never throws for stage failures: the failing stage is
/// named in the result and the manifest, and earlier artifacts are kept.
RunResult run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out, std::ostream* log = nullptr);

/// Writes ground truth and measurements of `cfg` under `out`.
void write_simulation(const ExperimentConfig& cfg, const Scenario& scenario, const MeasurementSet& data,
                      const std::filesystem::path& out);

/// Writes one method's images, traces and checkpoints under `out/<method>`.
void write_method_output(const MethodOutput& m, const ImageGrid& grid, const std::filesystem::path& out);

/// Rows of several runs' metrics tables, merged and ordered by SNR
/// (highest first, noise-free runs before all others).
struct CompareRow {
  std::string experiment;
  std::optional<double> snr_db;
  EvalResult result;
};
std::vector<CompareRow> compare_runs(const std::vector<std::filesystem::path>& run_dirs);
void write_compare_csv(std::ostream& os, const std::vector<CompareRow>& rows);
void write_compare_table(std::ostream& os, const std::vector<CompareRow>& rows);

}  // namespace dualct
