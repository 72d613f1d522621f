#include "dualct/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <limits>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "dualct/io.hpp"
#include "dualct/pals.hpp"

#ifndef DUALCT_VERSION
#define DUALCT_VERSION "0.0.0"
#endif

namespace dualct {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

std::string method_name(Method m) {
  switch (m) {
    case Method::Proposed: return "proposed";
    case Method::ProposedWithoutR2: return "proposed-without-R2";
    case Method::Defbp: return "defbp";
  }
  throw std::invalid_argument("method_name: unknown method");
}

Method method_from_name(const std::string& name) {
  if (name == "proposed") return Method::Proposed;
  if (name == "proposed-without-R2") return Method::ProposedWithoutR2;
  if (name == "defbp") return Method::Defbp;
  throw std::invalid_argument("unknown method '" + name + "' (expected proposed, proposed-without-R2 or defbp)");
}

ObjectiveConfig ExperimentConfig::default_objective() {
  ObjectiveConfig o;
  o.sigma_weight = 10.0;
  return o;
}

ScheduleConfig ExperimentConfig::default_schedule() {
  ScheduleConfig s;
  s.max_outer_cycles = 3;
  s.shape_first = false;
  return s;
}

void ExperimentConfig::validate() const {
  if (name.empty()) throw std::invalid_argument("config: name must not be empty");
  if (phantom != "phantom1" && phantom != "clutter") {
    throw std::invalid_argument("config: phantom must be 'phantom1' or 'clutter'");
  }
  if (nx < 1 || ny < 1 || !(lx > 0.0) || !(ly > 0.0)) throw std::invalid_argument("config: invalid grid");
  if (views < 1 || detectors < 1) throw std::invalid_argument("config: invalid geometry");
  if (basis_reference_nx < 0) throw std::invalid_argument("config: basis_reference_nx must be >= 0");
  for (const std::string* path : {&spectrum_low, &spectrum_high}) {
    if (!path->empty() && !fs::exists(*path)) throw std::invalid_argument("config: spectrum file not found: " + *path);
  }
  if (methods.empty()) throw std::invalid_argument("config: method list is empty");
  objective.validate();
  lm.validate();
  schedule.validate();
}

namespace {

std::string apodization_name(Apodization a) {
  switch (a) {
    case Apodization::None: return "none";
    case Apodization::Hamming: return "hamming";
    case Apodization::Hann: return "hann";
  }
  return "hamming";
}

Apodization apodization_from_name(const std::string& s) {
  if (s == "none") return Apodization::None;
  if (s == "hamming") return Apodization::Hamming;
  if (s == "hann") return Apodization::Hann;
  throw std::invalid_argument("config: unknown fbp window '" + s + "'");
}

// Reads keys of one JSON object into existing values and rejects anything
// it was not asked about.
class Reader {
 public:
  Reader(const nlohmann::json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw std::invalid_argument("config: '" + where_ + "' must be an object");
  }

  template <class T>
  void get(const char* key, T& value) {
    seen_.insert(key);
    if (j_.contains(key)) {
      try {
        value = j_.at(key).get<T>();
      } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument("config: bad value for '" + where_ + "." + key + "': " + e.what());
      }
    }
  }

  const nlohmann::json* child(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) throw std::invalid_argument("config: unknown key '" + where_ + "." + k + "'");
    }
  }

 private:
  const nlohmann::json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hex64(std::uint64_t h) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

}  // namespace

nlohmann::json to_json(const ExperimentConfig& c) {
  json j;
  j["name"] = c.name;
  j["phantom"] = {{"kind", c.phantom}, {"seed", c.phantom_seed}};
  j["grid"] = {{"nx", c.nx}, {"ny", c.ny}, {"lx", c.lx}, {"ly", c.ly}};
  j["geometry"] = {{"views", c.views}, {"detectors", c.detectors}};
  j["basis_reference_nx"] = c.basis_reference_nx;
  j["spectra"] = {{"low", c.spectrum_low}, {"high", c.spectrum_high}};
  j["noise"] = {{"poisson", c.noise.poisson_enabled},
                {"snr_db", c.noise.background_snr_db ? json(*c.noise.background_snr_db) : json()},
                {"seed", c.noise.rng_seed}};
  const ObjectiveConfig& o = c.objective;
  j["objective"] = {{"lambda1", o.lambda1},
                    {"lambda2", o.lambda2},
                    {"penalty_r", o.penalty_r},
                    {"smooth_max_eps", o.smooth_max_eps},
                    {"sigma_weight", o.sigma_weight},
                    {"region",
                     {{"c0", o.region.c0}, {"p0", o.region.p0}, {"sigma_c", o.region.sigma_c},
                      {"sigma_p", o.region.sigma_p}}}};
  j["lm"] = {{"mu0", c.lm.mu0},
             {"nu", c.lm.nu},
             {"step_tolerance", c.lm.step_tolerance},
             {"gradient_tolerance", c.lm.gradient_tolerance},
             {"max_rejections", c.lm.max_rejections}};
  j["schedule"] = {{"eps_stop", c.schedule.eps_stop},
                   {"k_max", c.schedule.k_max},
                   {"max_outer_cycles", c.schedule.max_outer_cycles},
                   {"shape_first", c.schedule.shape_first},
                   {"joint_iters", c.schedule.joint_iters}};
  j["fbp"] = {{"window", apodization_name(c.fbp.window)}};
  j["init"] = {{"seed", c.init_seed}, {"beta0", c.beta0}, {"alpha0", c.alpha0}};
  json methods = json::array();
  for (Method m : c.methods) methods.push_back(method_name(m));
  j["methods"] = methods;
  return j;
}

ExperimentConfig experiment_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  Reader top(j, "config");
  top.get("name", c.name);
  if (const auto* p = top.child("phantom")) {
    Reader r(*p, "phantom");
    r.get("kind", c.phantom);
    r.get("seed", c.phantom_seed);
    r.finish();
  }
  if (const auto* p = top.child("grid")) {
    Reader r(*p, "grid");
    r.get("nx", c.nx);
    r.get("ny", c.ny);
    r.get("lx", c.lx);
    r.get("ly", c.ly);
    r.finish();
  }
  if (const auto* p = top.child("geometry")) {
    Reader r(*p, "geometry");
    r.get("views", c.views);
    r.get("detectors", c.detectors);
    r.finish();
  }
  top.get("basis_reference_nx", c.basis_reference_nx);
  if (const auto* p = top.child("spectra")) {
    Reader r(*p, "spectra");
    r.get("low", c.spectrum_low);
    r.get("high", c.spectrum_high);
    r.finish();
  }
  if (const auto* p = top.child("noise")) {
    Reader r(*p, "noise");
    r.get("poisson", c.noise.poisson_enabled);
    if (const auto* s = r.child("snr_db")) {
      c.noise.background_snr_db = s->is_null() ? std::nullopt : std::optional<double>(s->get<double>());
    }
    r.get("seed", c.noise.rng_seed);
    r.finish();
  }
  if (const auto* p = top.child("objective")) {
    Reader r(*p, "objective");
    r.get("lambda1", c.objective.lambda1);
    r.get("lambda2", c.objective.lambda2);
    r.get("penalty_r", c.objective.penalty_r);
    r.get("smooth_max_eps", c.objective.smooth_max_eps);
    r.get("sigma_weight", c.objective.sigma_weight);
    if (const auto* g = r.child("region")) {
      Reader rg(*g, "objective.region");
      rg.get("c0", c.objective.region.c0);
      rg.get("p0", c.objective.region.p0);
      rg.get("sigma_c", c.objective.region.sigma_c);
      rg.get("sigma_p", c.objective.region.sigma_p);
      rg.finish();
    }
    r.finish();
  }
  if (const auto* p = top.child("lm")) {
    Reader r(*p, "lm");
    r.get("mu0", c.lm.mu0);
    r.get("nu", c.lm.nu);
    r.get("step_tolerance", c.lm.step_tolerance);
    r.get("gradient_tolerance", c.lm.gradient_tolerance);
    r.get("max_rejections", c.lm.max_rejections);
    r.finish();
  }
  if (const auto* p = top.child("schedule")) {
    Reader r(*p, "schedule");
    r.get("eps_stop", c.schedule.eps_stop);
    r.get("k_max", c.schedule.k_max);
    r.get("max_outer_cycles", c.schedule.max_outer_cycles);
    r.get("shape_first", c.schedule.shape_first);
    r.get("joint_iters", c.schedule.joint_iters);
    r.finish();
  }
  if (const auto* p = top.child("fbp")) {
    Reader r(*p, "fbp");
    std::string w = apodization_name(c.fbp.window);
    r.get("window", w);
    c.fbp.window = apodization_from_name(w);
    r.finish();
  }
  if (const auto* p = top.child("init")) {
    Reader r(*p, "init");
    r.get("seed", c.init_seed);
    r.get("beta0", c.beta0);
    r.get("alpha0", c.alpha0);
    r.finish();
  }
  if (const auto* p = top.child("methods")) {
    c.methods.clear();
    for (const auto& m : *p) c.methods.push_back(method_from_name(m.get<std::string>()));
  }
  top.finish();
  return c;
}

ExperimentConfig load_experiment(const fs::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
  ExperimentConfig c = experiment_from_json(j);
  // Relative spectrum paths are resolved against the config file.
  for (std::string* s : {&c.spectrum_low, &c.spectrum_high}) {
    if (!s->empty() && fs::path(*s).is_relative()) *s = (path.parent_path() / *s).lexically_normal().string();
  }
  return c;
}

std::vector<std::string> preset_names() { return {"phantom1-60db", "phantom1-40db", "clutter-40db", "null-object"}; }

ExperimentConfig preset(const std::string& name) {
  ExperimentConfig c;
  c.name = name;
  if (name == "phantom1-60db") return c;
  if (name == "phantom1-40db") {
    c.noise.background_snr_db = 40.0;
    return c;
  }
  if (name == "clutter-40db") {
    c.phantom = "clutter";
    c.noise.background_snr_db = 40.0;
    c.objective.region = ContrastRegion{0.30, 5000.0, 0.05, 500.0};
    return c;
  }
  if (name == "null-object") {
    c.objective.region = ContrastRegion{0.12, 3000.0, 0.05, 500.0};
    c.methods = {Method::Proposed, Method::Defbp};
    return c;
  }
  throw std::invalid_argument("unknown experiment '" + name + "'");
}

void apply_scale(ExperimentConfig& c, const std::string& scale) {
  if (scale == "desk") {
    c.nx = c.ny = 64;
    c.detectors = 96;
  } else if (scale == "full") {
    c.nx = c.ny = 100;
    c.detectors = 150;
  } else {
    throw std::invalid_argument("unknown scale '" + scale + "' (expected desk or full)");
  }
  c.views = 30;
}

std::string config_hash(const ExperimentConfig& c) { return hex64(fnv1a(to_json(c).dump())); }

Scenario build_scenario(const ExperimentConfig& c) {
  c.validate();
  const ImageGrid grid(c.lx, c.ly, c.nx, c.ny);
  ScanGeometry geom = ScanGeometry::parallel(grid, c.views, c.detectors);
  auto system = std::make_shared<const SystemMatrix>(build_system_matrix(grid, geom));
  EnergySpectrum low = c.spectrum_low.empty() ? default_low_spectrum() : load_spectrum(c.spectrum_low);
  EnergySpectrum high = c.spectrum_high.empty() ? default_high_spectrum() : load_spectrum(c.spectrum_high);
  PhantomSpec spec = c.phantom == "clutter" ? clutter_phantom(grid, c.phantom_seed) : shape_phantom(grid);
  PhantomTruth truth = rasterize(spec);
  // The object is whatever the scene holds inside the contrast region. For
  // the shipped phantoms this is the designated shape, and it is empty when
  // the region is moved off every contrast.
  for (Eigen::Index j = 0; j < truth.chi.size(); ++j) truth.chi(j) = g1(truth.c(j), truth.p(j), c.objective.region) < 0.0;
  return Scenario{grid, std::move(geom), std::move(system), std::move(low), std::move(high), std::move(spec),
                  std::move(truth)};
}

MeasurementSet simulate_measurements(const ExperimentConfig& c, const Scenario& s) {
  return simulate(*s.system, s.truth.c, s.truth.p, s.low, s.high, c.noise);
}

MethodOutput reconstruct(const ExperimentConfig& c, const Scenario& s, const MeasurementSet& data, Method method,
                         const std::function<void(int, const SceneModel&)>& on_cycle) {
  const auto t0 = std::chrono::steady_clock::now();
  MethodOutput out;
  out.method = method;
  if (method == Method::Defbp) {
    DefbpResult r = defbp_reconstruct(data, s.geometry, s.grid, s.low, s.high, c.fbp);
    out.c_image = r.c_image;
    out.p_image = r.p_image;
    out.chi_mask = threshold_characteristic(r.c_image, r.p_image, c.objective.region);
    out.chi = out.chi_mask.cast<double>().matrix();
    out.defbp = std::move(r);
  } else {
    ObjectiveConfig oc = c.objective;
    if (method == Method::ProposedWithoutR2) oc.lambda2 = 0.0;
    const DefaultBases bases = build_default_bases(s.grid, c.basis_reference_nx);
    const SceneModel m0 = initial_model(bases, oc.region.c0, oc.region.p0, c.init_seed, c.beta0, c.alpha0);
    const Objective objective(s.system, s.low, s.high, data, oc, m0);
    SolveReport rep = coordinate_descent(objective, m0, c.lm, c.schedule, on_cycle);
    const ComposedScene scene = compose(rep.model);
    out.c_image = scene.c_image;
    out.p_image = scene.p_image;
    out.chi = scene.chi;
    out.chi_mask = binarize_chi(scene.chi);
    out.report = std::move(rep);
  }
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

EvalResult score(const MethodOutput& out, const PhantomTruth& truth) {
  return evaluate(method_name(out.method), out.c_image, out.p_image, out.chi_mask, truth.c, truth.p, truth.chi);
}

namespace {

void write_images(const fs::path& dir, const std::string& stem, const Eigen::VectorXd& img, const ImageGrid& grid) {
  write_image_csv(dir / (stem + ".csv"), img, grid);
  write_image_pgm(dir / (stem + ".pgm"), img, grid);
}

void write_stream(const fs::path& path, const std::function<void(std::ostream&)>& body) {
  std::ostringstream os;
  body(os);
  write_text(path, os.str());
}

// Every regular file under `root` except the manifest itself and the
// timing file, which is the one artifact that differs between reruns.
json file_list(const fs::path& root) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    const fs::path rel = fs::relative(e.path(), root);
    if (rel == "manifest.json" || rel == "timing.json") continue;
    files.push_back(rel);
  }
  std::sort(files.begin(), files.end());
  json arr = json::array();
  for (const fs::path& f : files) {
    arr.push_back({{"path", f.generic_string()}, {"fnv1a64", hex64(fnv1a(read_text(root / f)))}});
  }
  return arr;
}

}  // namespace

void write_simulation(const ExperimentConfig& c, const Scenario& s, const MeasurementSet& data, const fs::path& out) {
  const fs::path truth = out / "truth";
  write_images(truth, "c", s.truth.c, s.grid);
  write_images(truth, "p", s.truth.p, s.grid);
  write_images(truth, "chi", s.truth.chi.cast<double>().matrix(), s.grid);
  write_text(truth / "phantom.json", to_json(s.phantom).dump(2) + "\n");
  write_measurements(out / "measurements", data, s.grid, s.geometry);
  write_text(out / "config.json", to_json(c).dump(2) + "\n");
}

void write_method_output(const MethodOutput& m, const ImageGrid& grid, const fs::path& out) {
  const fs::path dir = out / method_name(m.method);
  write_images(dir, "c", m.c_image, grid);
  write_images(dir, "p", m.p_image, grid);
  write_images(dir, "chi", m.chi, grid);
  json summary;
  summary["method"] = method_name(m.method);
  summary["detected_pixels"] = m.chi_mask.count();
  if (m.report) {
    const SolveReport& r = *m.report;
    write_stream(dir / "trace.csv", [&](std::ostream& os) { write_trace_csv(os, r.trace); });
    write_stream(dir / "cycles.csv", [&](std::ostream& os) {
      os << "cycle,block,iterations,cost_before,cost_after,stop_reason\n" << std::setprecision(12);
      for (const CycleRecord& cr : r.cycles) {
        os << cr.cycle << ',' << cr.block << ',' << cr.iterations << ',' << cr.cost_before << ',' << cr.cost_after
           << ',' << cr.stop_reason << '\n';
      }
    });
    write_text(dir / "model.json", scene_to_json(r.model).dump() + "\n");
    summary["outer_cycles"] = r.outer_cycles;
    summary["stop_reason"] = r.stop_reason;
    summary["monotone"] = r.monotone;
    summary["accepted_steps"] = r.trace.empty() ? 0 : r.trace.size() - 1;
  }
  if (m.defbp) {
    write_stream(dir / "ray_residuals.csv", [&](std::ostream& os) { write_ray_residuals_csv(os, m.defbp->sinograms); });
    summary["flagged_rays"] = m.defbp->sinograms.flagged_count();
    summary["flagged_fraction"] = m.defbp->flagged_fraction;
  }
  write_text(dir / "summary.json", summary.dump(2) + "\n");
}

RunResult run_experiment(const ExperimentConfig& c, const fs::path& out, std::ostream* log) {
  RunResult res;
  std::string stage = "configure";
  json timing;
  auto say = [&](const std::string& msg) {
    if (log) *log << "[" << c.name << "] " << msg << std::endl;
  };
  auto manifest = [&](const std::string& status) {
    json m;
    m["name"] = c.name;
    m["version"] = DUALCT_VERSION;
    m["config_hash"] = config_hash(c);
    m["status"] = status;
    if (!res.ok) {
      m["failed_stage"] = res.failed_stage;
      m["error"] = res.error;
    }
    m["seeds"] = {{"phantom", c.phantom_seed}, {"noise", c.noise.rng_seed}, {"init", c.init_seed}};
    m["config"] = to_json(c);
    m["files"] = fs::exists(out) ? file_list(out) : json::array();
    write_text(out / "manifest.json", m.dump(2) + "\n");
  };

  try {
    c.validate();
    fs::create_directories(out);

    stage = "simulate";
    say("simulating " + std::to_string(c.nx) + "x" + std::to_string(c.ny) + " scan");
    const Scenario scenario = build_scenario(c);
    const MeasurementSet data = simulate_measurements(c, scenario);
    for (const std::string& w : data.noise.warnings) say("warning: " + w);
    write_simulation(c, scenario, data, out);

    for (Method method : c.methods) {
      stage = "reconstruct:" + method_name(method);
      say("running " + method_name(method));
      const fs::path ckpt = out / method_name(method) / "checkpoints";
      auto on_cycle = [&](int cycle, const SceneModel& m) {
        char name[32];
        std::snprintf(name, sizeof name, "cycle_%02d.json", cycle);
        write_text(ckpt / name, scene_to_json(m).dump() + "\n");
      };
      MethodOutput mo = reconstruct(c, scenario, data, method, on_cycle);
      write_method_output(mo, scenario.grid, out);
      timing[method_name(method)] = mo.seconds;

      stage = "evaluate:" + method_name(method);
      res.metrics.push_back(score(mo, scenario.truth));
      const EvalResult& e = res.metrics.back();
      std::ostringstream line;
      line << std::setprecision(4) << method_name(method) << ": E_c " << e.l2_compton << ", E_p "
           << e.l2_photoelectric << ", Dice " << (e.dice ? std::to_string(*e.dice) : std::string("-")) << " ("
           << mo.seconds << " s)";
      say(line.str());
      res.outputs.push_back(std::move(mo));
    }

    stage = "report";
    write_stream(out / "metrics.csv", [&](std::ostream& os) { write_results_csv(os, res.metrics); });
    write_text(out / "timing.json", timing.dump(2) + "\n");
    manifest("complete");
  } catch (const std::exception& e) {
    res.ok = false;
    res.failed_stage = stage;
    res.error = e.what();
    say("failed during " + stage + ": " + e.what());
    try {
      fs::create_directories(out);
      manifest("failed");
    } catch (...) {
      // The original error is the one worth reporting.
    }
  }
  return res;
}

std::vector<CompareRow> compare_runs(const std::vector<fs::path>& dirs) {
  if (dirs.empty()) throw std::invalid_argument("compare: no run directories given");
  std::vector<CompareRow> rows;
  for (const fs::path& d : dirs) {
    const fs::path metrics = d / "metrics.csv";
    const fs::path man = d / "manifest.json";
    if (!fs::exists(metrics)) throw std::runtime_error("compare: missing metrics file " + metrics.string());
    if (!fs::exists(man)) throw std::runtime_error("compare: missing manifest " + man.string());
    const auto m = nlohmann::json::parse(read_text(man));
    const auto& noise = m.at("config").at("noise");
    std::optional<double> snr;
    if (noise.contains("snr_db") && !noise["snr_db"].is_null()) snr = noise["snr_db"].get<double>();
    std::istringstream is(read_text(metrics));
    for (EvalResult& r : read_results_csv(is)) rows.push_back({m.at("name").get<std::string>(), snr, std::move(r)});
  }
  // Noise-free first, then by SNR from clean to harsh; ties keep input order.
  auto key = [](const CompareRow& r) { return r.snr_db ? *r.snr_db : std::numeric_limits<double>::infinity(); };
  std::stable_sort(rows.begin(), rows.end(), [&](const CompareRow& a, const CompareRow& b) { return key(a) > key(b); });
  return rows;
}

void write_compare_csv(std::ostream& os, const std::vector<CompareRow>& rows) {
  os << "experiment,snr_db,method,l2_compton,l2_photoelectric,dice,detected_pixels\n" << std::setprecision(10);
  for (const CompareRow& r : rows) {
    os << r.experiment << ',';
    if (r.snr_db) os << *r.snr_db;
    os << ',' << r.result.method << ',' << r.result.l2_compton << ',' << r.result.l2_photoelectric << ',';
    if (r.result.dice) os << *r.result.dice;
    os << ',' << r.result.detected_pixels << '\n';
  }
}

void write_compare_table(std::ostream& os, const std::vector<CompareRow>& rows) {
  os << std::left << std::setw(16) << "experiment" << std::setw(8) << "SNR" << std::setw(22) << "method"
     << std::right << std::setw(12) << "E_L2 c" << std::setw(12) << "E_L2 p" << std::setw(9) << "Dice" << '\n';
  for (const CompareRow& r : rows) {
    std::ostringstream snr, dice;
    if (r.snr_db) snr << *r.snr_db << " dB";
    else snr << "clean";
    if (r.result.dice) dice << std::fixed << std::setprecision(4) << *r.result.dice;
    else dice << "-";
    os << std::left << std::setw(16) << r.experiment << std::setw(8) << snr.str() << std::setw(22) << r.result.method
       << std::right << std::fixed << std::setprecision(4) << std::setw(12) << r.result.l2_compton << std::setw(12)
       << r.result.l2_photoelectric << std::setw(9) << dice.str() << '\n';
    os.unsetf(std::ios::fixed);
  }
}

}  // namespace dualct
