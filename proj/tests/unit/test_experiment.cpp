#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "dualct/experiment.hpp"
#include "dualct/io.hpp"

using namespace dualct;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("dualct_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

ExperimentConfig tiny(const std::string& name = "tiny") {
  ExperimentConfig c;
  c.name = name;
  c.nx = c.ny = 16;
  c.views = 8;
  c.detectors = 24;
  c.basis_reference_nx = 0;
  c.lm.max_inner_iters = 2;
  c.schedule.max_outer_cycles = 1;
  c.schedule.joint_iters = 2;
  c.methods = {Method::Proposed, Method::Defbp};
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(ExperimentConfig, JsonRoundTrip) {
  ExperimentConfig c = preset("clutter-40db");
  c.noise.background_snr_db.reset();
  c.objective.lambda2 = 3.5;
  c.methods = {Method::Defbp};
  const ExperimentConfig back = experiment_from_json(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
  EXPECT_EQ(config_hash(back), config_hash(c));
  EXPECT_FALSE(back.noise.background_snr_db.has_value());
}

TEST(ExperimentConfig, RejectsUnknownKeys) {
  nlohmann::json j = to_json(ExperimentConfig{});
  j["objective"]["lamda2"] = 1.0;
  EXPECT_THROW(experiment_from_json(j), std::invalid_argument);
  nlohmann::json top = to_json(ExperimentConfig{});
  top["typo"] = 1;
  EXPECT_THROW(experiment_from_json(top), std::invalid_argument);
}

TEST(ExperimentConfig, MissingKeysKeepDefaults) {
  const ExperimentConfig c = experiment_from_json(nlohmann::json{{"name", "x"}});
  EXPECT_EQ(c.name, "x");
  EXPECT_EQ(c.nx, ExperimentConfig{}.nx);
}

TEST(ExperimentConfig, PresetsAndScales) {
  for (const auto& n : preset_names()) {
    ExperimentConfig c = preset(n);
    EXPECT_EQ(c.name, n);
    EXPECT_NO_THROW(c.validate());
    apply_scale(c, "full");
    EXPECT_EQ(c.nx, 100);
    EXPECT_EQ(c.detectors, 150);
    EXPECT_EQ(c.views, 30);
  }
  EXPECT_THROW(preset("nope"), std::invalid_argument);
  ExperimentConfig c;
  EXPECT_THROW(apply_scale(c, "huge"), std::invalid_argument);
  EXPECT_NE(config_hash(preset("phantom1-60db")), config_hash(preset("phantom1-40db")));
}

TEST(ExperimentConfig, ShippedConfigsMatchPresets) {
  for (const auto& n : preset_names()) {
    const fs::path p = fs::path(DUALCT_SOURCE_DIR) / "data" / "configs" / (n + ".json");
    ASSERT_TRUE(fs::exists(p)) << p;
    ExperimentConfig shipped = load_experiment(p);
    ExperimentConfig built = preset(n);
    // Shipped files reference the spectrum CSVs, which equal the built-ins.
    shipped.spectrum_low.clear();
    shipped.spectrum_high.clear();
    built.spectrum_low.clear();
    built.spectrum_high.clear();
    EXPECT_EQ(to_json(shipped), to_json(built)) << n;
  }
}

TEST(MethodNames, RoundTrip) {
  for (Method m : {Method::Proposed, Method::ProposedWithoutR2, Method::Defbp}) {
    EXPECT_EQ(method_from_name(method_name(m)), m);
  }
  EXPECT_THROW(method_from_name("fbp"), std::invalid_argument);
}

TEST(Io, ImageCsvRoundTripAndOrientation) {
  const fs::path dir = scratch("image");
  const ImageGrid g(4.0, 3.0, 4, 3);
  Eigen::VectorXd img(12);
  for (int i = 0; i < 12; ++i) img(i) = 0.1 * i + 1e-17 * i;
  write_image_csv(dir / "a.csv", img, g);
  EXPECT_EQ(read_image_csv(dir / "a.csv", g), img);
  // Top row of the file is the largest y.
  std::ifstream in(dir / "a.csv");
  std::string first;
  std::getline(in, first);
  std::istringstream ss(first);
  std::string cell;
  std::getline(ss, cell, ',');
  EXPECT_DOUBLE_EQ(std::stod(cell), img(g.index(0, 2)));
  EXPECT_THROW(read_image_csv(dir / "a.csv", ImageGrid(4.0, 4.0, 4, 4)), std::runtime_error);
}

TEST(Io, MeasurementsRoundTripWithHash) {
  const fs::path dir = scratch("meas");
  const ExperimentConfig cfg = tiny();
  const Scenario s = build_scenario(cfg);
  const MeasurementSet data = simulate_measurements(cfg, s);
  write_measurements(dir / "m", data, s.grid, s.geometry);
  std::string hash;
  const MeasurementSet back = read_measurements(dir / "m", &hash);
  EXPECT_EQ(back.m_low, data.m_low);
  EXPECT_EQ(back.m_high, data.m_high);
  EXPECT_EQ(hash, geometry_hash(s.grid, s.geometry));
  ScanGeometry other = s.geometry;
  other.angles_rad.pop_back();
  EXPECT_NE(hash, geometry_hash(s.grid, other));
}

TEST(Io, SceneRoundTripRecomposesExactly) {
  const ImageGrid g(20.0, 20.0, 24, 24);
  SceneModel m = initial_model(build_default_bases(g, 100), 0.2, 5100.0, 11);
  const SceneModel back = scene_from_json(scene_to_json(m));
  EXPECT_EQ(back.theta(), m.theta());
  EXPECT_EQ(compose(back).c_image, compose(m).c_image);
  EXPECT_EQ(compose(back).chi, compose(m).chi);
}

TEST(Run, TinyRunWritesArtifactsDeterministically) {
  const fs::path a = scratch("run_a"), b = scratch("run_b");
  const RunResult ra = run_experiment(tiny(), a);
  const RunResult rb = run_experiment(tiny(), b);
  ASSERT_TRUE(ra.ok) << ra.failed_stage << ": " << ra.error;
  ASSERT_TRUE(rb.ok);
  ASSERT_EQ(ra.metrics.size(), 2u);
  for (const char* f : {"metrics.csv", "proposed/c.csv", "proposed/p.csv", "proposed/trace.csv", "defbp/c.csv"}) {
    ASSERT_TRUE(fs::exists(a / f)) << f;
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  }
  EXPECT_TRUE(fs::exists(a / "manifest.json"));
}

TEST(Compare, OrdersBySnr) {
  const fs::path hi = scratch("cmp_hi"), lo = scratch("cmp_lo");
  ExperimentConfig h = tiny("hi"), l = tiny("lo");
  h.methods = l.methods = {Method::Defbp};
  l.noise.background_snr_db = 30.0;
  ASSERT_TRUE(run_experiment(l, lo).ok);
  ASSERT_TRUE(run_experiment(h, hi).ok);
  const auto rows = compare_runs({lo, hi});
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].experiment, "hi");
  EXPECT_EQ(rows[1].experiment, "lo");
  std::ostringstream os;
  write_compare_table(os, rows);
  EXPECT_NE(os.str().find("defbp"), std::string::npos);
}

TEST(Scenario, TruthMaskFollowsContrastRegion) {
  ExperimentConfig c = tiny();
  c.nx = c.ny = 32;
  const Scenario on = build_scenario(c);
  EXPECT_TRUE((on.truth.chi == rasterize(shape_phantom(on.grid)).chi).all());
  c.objective.region = preset("null-object").objective.region;
  EXPECT_FALSE(build_scenario(c).truth.chi.any());
}
