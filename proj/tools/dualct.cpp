// Command-line front end for the dual-energy reconstruction experiments.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dualct/experiment.hpp"
#include "dualct/io.hpp"
#include "dualct/sensitivity.hpp"

namespace fs = std::filesystem;
using namespace dualct;

namespace {

struct Common {
  std::string config = "phantom1-60db";
  std::string scale;
  std::string out;
  std::optional<std::uint64_t> seed;
};

// --config takes either a JSON file or the name of a built-in experiment.
ExperimentConfig resolve(const Common& o) {
  ExperimentConfig c = fs::exists(o.config) ? load_experiment(o.config) : preset(o.config);
  if (!o.scale.empty()) apply_scale(c, o.scale);
  if (o.seed) c.noise.rng_seed = *o.seed;
  c.validate();
  return c;
}

fs::path out_dir(const Common& o, const ExperimentConfig& c) {
  return o.out.empty() ? fs::path("runs") / c.name : fs::path(o.out);
}

void add_common(CLI::App* sub, Common& o) {
  sub->add_option("--config", o.config, "experiment JSON file or built-in name")->capture_default_str();
  sub->add_option("--scale", o.scale, "desk (64x64) or full (100x100)")
      ->check(CLI::IsMember({"desk", "full"}));
  sub->add_option("--seed", o.seed, "noise seed override");
  sub->add_option("--out", o.out, "output directory (default runs/<name>)");
}

// Re-reads a run directory's config so later stages see exactly what
// simulate wrote.
ExperimentConfig config_of(const fs::path& dir) {
  const fs::path p = dir / "config.json";
  if (!fs::exists(p)) throw std::runtime_error("no config.json in " + dir.string() + " (run simulate first)");
  return load_experiment(p);
}

int cmd_simulate(const Common& o) {
  const ExperimentConfig c = resolve(o);
  const fs::path out = out_dir(o, c);
  const Scenario s = build_scenario(c);
  const MeasurementSet data = simulate_measurements(c, s);
  for (const auto& w : data.noise.warnings) std::cerr << "warning: " << w << '\n';
  write_simulation(c, s, data, out);
  std::cout << "wrote truth and measurements to " << out.string() << '\n';
  return 0;
}

int cmd_reconstruct(const Common& o, const std::vector<std::string>& methods) {
  const fs::path out = o.out.empty() ? fs::path("runs") / resolve(o).name : fs::path(o.out);
  ExperimentConfig c = config_of(out);
  if (!methods.empty()) {
    c.methods.clear();
    for (const auto& m : methods) c.methods.push_back(method_from_name(m));
  }
  const Scenario s = build_scenario(c);
  std::string hash;
  const MeasurementSet data = read_measurements(out / "measurements", &hash);
  if (hash != geometry_hash(s.grid, s.geometry)) {
    throw std::runtime_error("measurements in " + out.string() + " were taken with a different geometry");
  }
  for (Method m : c.methods) {
    const MethodOutput mo = reconstruct(c, s, data, m);
    write_method_output(mo, s.grid, out);
    std::cout << method_name(m) << ": done in " << mo.seconds << " s\n";
  }
  return 0;
}

int cmd_evaluate(const Common& o) {
  const fs::path out = o.out.empty() ? fs::path("runs") / resolve(o).name : fs::path(o.out);
  const ExperimentConfig c = config_of(out);
  const ImageGrid grid(c.lx, c.ly, c.nx, c.ny);
  const Eigen::VectorXd c_true = read_image_csv(out / "truth" / "c.csv", grid);
  const Eigen::VectorXd p_true = read_image_csv(out / "truth" / "p.csv", grid);
  const Mask chi_true = binarize_chi(read_image_csv(out / "truth" / "chi.csv", grid));

  std::vector<EvalResult> rows;
  for (Method m : c.methods) {
    const fs::path dir = out / method_name(m);
    if (!fs::exists(dir / "c.csv")) {
      std::cerr << "skipping " << method_name(m) << ": no reconstruction in " << dir.string() << '\n';
      continue;
    }
    const Eigen::VectorXd ce = read_image_csv(dir / "c.csv", grid);
    const Eigen::VectorXd pe = read_image_csv(dir / "p.csv", grid);
    const Mask chi = binarize_chi(read_image_csv(dir / "chi.csv", grid));
    rows.push_back(evaluate(method_name(m), ce, pe, chi, c_true, p_true, chi_true));
  }
  std::ostringstream csv;
  write_results_csv(csv, rows);
  write_text(out / "metrics.csv", csv.str());
  std::cout << csv.str();
  return 0;
}

int cmd_run(const Common& o) {
  const ExperimentConfig c = resolve(o);
  const fs::path out = out_dir(o, c);
  const RunResult r = run_experiment(c, out, &std::cerr);
  if (!r.ok) {
    std::cerr << "run failed in stage '" << r.failed_stage << "': " << r.error << '\n';
    return 2;
  }
  std::cout << read_text(out / "metrics.csv");
  return 0;
}

int cmd_compare(const std::vector<std::string>& dirs, const std::string& out) {
  std::vector<fs::path> paths(dirs.begin(), dirs.end());
  const auto rows = compare_runs(paths);
  std::ostringstream csv;
  write_compare_csv(csv, rows);
  if (!out.empty()) write_text(out, csv.str());
  write_compare_table(std::cout, rows);
  return 0;
}

int cmd_sensitivity(const std::string& out, const std::string& spectrum_path) {
  const EnergySpectrum spectrum = spectrum_path.empty() ? default_low_spectrum() : load_spectrum(spectrum_path);
  const fs::path dir = out.empty() ? fs::path("runs") / "sensitivity" : fs::path(out);
  std::ostringstream table, report;
  write_material_table_csv(table, material_table(reference_materials(), spectrum));
  write_report_json(report, example_bounds(spectrum));
  write_text(dir / "material_table.csv", table.str());
  write_text(dir / "bounds.json", report.str());
  std::cout << table.str() << report.str();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dual-energy CT material reconstruction with parametric level sets"};
  app.require_subcommand(1);

  Common sim, rec, eval, run;
  std::vector<std::string> methods;
  auto* s_sim = app.add_subcommand("simulate", "rasterize the phantom and simulate the dual-energy scan");
  add_common(s_sim, sim);
  auto* s_rec = app.add_subcommand("reconstruct", "reconstruct from a simulated run directory");
  add_common(s_rec, rec);
  s_rec->add_option("--method", methods, "subset of methods to run");
  auto* s_eval = app.add_subcommand("evaluate", "score reconstructions against the ground truth");
  add_common(s_eval, eval);
  auto* s_run = app.add_subcommand("run", "simulate, reconstruct and evaluate in one go");
  add_common(s_run, run);

  std::vector<std::string> dirs;
  std::string compare_out;
  auto* s_cmp = app.add_subcommand("compare", "merge metrics of several runs, ordered by SNR");
  s_cmp->add_option("runs", dirs, "run directories")->required();
  s_cmp->add_option("--out", compare_out, "merged CSV path");

  std::string sens_out, sens_spectrum;
  auto* s_sens = app.add_subcommand("sensitivity", "material table and error bounds");
  s_sens->add_option("--out", sens_out, "output directory");
  s_sens->add_option("--spectrum", sens_spectrum, "spectrum CSV (default: built-in 80 kVp)");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*s_sim) return cmd_simulate(sim);
    if (*s_rec) return cmd_reconstruct(rec, methods);
    if (*s_eval) return cmd_evaluate(eval);
    if (*s_run) return cmd_run(run);
    if (*s_cmp) return cmd_compare(dirs, compare_out);
    if (*s_sens) return cmd_sensitivity(sens_out, sens_spectrum);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
