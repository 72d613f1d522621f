#include "dualct/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace dualct {

namespace fs = std::filesystem;

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << text;
  if (!os) throw std::runtime_error("write failed for " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_image_csv(const fs::path& path, const Eigen::VectorXd& image, const ImageGrid& grid) {
  if (image.size() != grid.pixel_count()) throw std::invalid_argument("write_image_csv: size mismatch");
  std::ostringstream os;
  os << std::setprecision(17);
  for (int iy = grid.ny - 1; iy >= 0; --iy) {
    for (int ix = 0; ix < grid.nx; ++ix) {
      if (ix) os << ',';
      os << image(grid.index(ix, iy));
    }
    os << '\n';
  }
  write_text(path, os.str());
}

Eigen::VectorXd read_image_csv(const fs::path& path, const ImageGrid& grid) {
  std::istringstream is(read_text(path));
  Eigen::VectorXd img(grid.pixel_count());
  std::string line;
  for (int iy = grid.ny - 1; iy >= 0; --iy) {
    if (!std::getline(is, line)) throw std::runtime_error(path.string() + ": too few rows");
    std::stringstream row(line);
    std::string cell;
    for (int ix = 0; ix < grid.nx; ++ix) {
      if (!std::getline(row, cell, ',')) throw std::runtime_error(path.string() + ": too few columns");
      img(grid.index(ix, iy)) = std::stod(cell);
    }
  }
  return img;
}

void write_image_pgm(const fs::path& path, const Eigen::VectorXd& image, const ImageGrid& grid) {
  write_image_pgm(path, image, grid, image.minCoeff(), image.maxCoeff());
}

void write_image_pgm(const fs::path& path, const Eigen::VectorXd& image, const ImageGrid& grid, double lo,
                     double hi) {
  if (image.size() != grid.pixel_count()) throw std::invalid_argument("write_image_pgm: size mismatch");
  const double span = hi > lo ? hi - lo : 1.0;
  std::ostringstream os;
  os << "P5\n" << grid.nx << ' ' << grid.ny << "\n65535\n";
  for (int iy = grid.ny - 1; iy >= 0; --iy) {
    for (int ix = 0; ix < grid.nx; ++ix) {
      const double t = std::clamp((image(grid.index(ix, iy)) - lo) / span, 0.0, 1.0);
      const auto v = std::uint16_t(std::lround(t * 65535.0));
      os.put(char(v >> 8));
      os.put(char(v & 0xff));
    }
  }
  write_text(path, os.str());

  nlohmann::ordered_json side;
  side["width"] = grid.nx;
  side["height"] = grid.ny;
  side["extent_cm"] = {grid.lx, grid.ly};
  side["value_at_0"] = lo;
  side["value_at_65535"] = lo + span;
  side["row_order"] = "top row is largest y";
  write_text(fs::path(path.string() + ".json"), side.dump(2) + "\n");
}

std::string geometry_hash(const ImageGrid& grid, const ScanGeometry& geometry) {
  std::ostringstream canon;
  canon << std::setprecision(17) << grid.lx << ' ' << grid.ly << ' ' << grid.nx << ' ' << grid.ny << ' '
        << geometry.detectors_per_view << ' ' << geometry.detector_spacing;
  for (double a : geometry.angles_rad) canon << ' ' << a;
  // 64-bit FNV-1a: stable across platforms, unlike std::hash.
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : canon.str()) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  std::ostringstream hex;
  hex << std::hex << std::setw(16) << std::setfill('0') << h;
  return hex.str();
}

void write_measurements(const fs::path& stem, const MeasurementSet& data, const ImageGrid& grid,
                        const ScanGeometry& geometry) {
  data.validate();
  nlohmann::ordered_json h;
  h["geometry_hash"] = geometry_hash(grid, geometry);
  h["rays"] = data.ray_count();
  h["views"] = geometry.angles_rad.size();
  h["detectors_per_view"] = geometry.detectors_per_view;
  h["blank_low"] = data.blank_low;
  h["blank_high"] = data.blank_high;
  h["poisson"] = data.noise.poisson;
  h["snr_db"] = data.noise.snr_db ? nlohmann::ordered_json(*data.noise.snr_db) : nlohmann::ordered_json();
  h["seed"] = data.noise.seed;
  h["sigma_low"] = data.noise.sigma_low;
  h["sigma_high"] = data.noise.sigma_high;
  h["clamped_low"] = data.noise.clamped_low;
  h["clamped_high"] = data.noise.clamped_high;
  h["warnings"] = data.noise.warnings;
  h["payload"] = stem.filename().string() + ".csv";
  write_text(fs::path(stem.string() + ".json"), h.dump(2) + "\n");

  std::ostringstream os;
  os << "ray_index,m_low,m_high\n" << std::setprecision(17);
  for (Eigen::Index i = 0; i < data.ray_count(); ++i) os << i << ',' << data.m_low(i) << ',' << data.m_high(i) << '\n';
  write_text(fs::path(stem.string() + ".csv"), os.str());
}

MeasurementSet read_measurements(const fs::path& stem, std::string* hash) {
  const auto h = nlohmann::json::parse(read_text(fs::path(stem.string() + ".json")));
  MeasurementSet m;
  m.blank_low = h.at("blank_low").get<double>();
  m.blank_high = h.at("blank_high").get<double>();
  m.noise.poisson = h.value("poisson", false);
  if (h.contains("snr_db") && !h["snr_db"].is_null()) m.noise.snr_db = h["snr_db"].get<double>();
  m.noise.seed = h.value("seed", std::uint64_t(0));
  m.noise.sigma_low = h.value("sigma_low", 0.0);
  m.noise.sigma_high = h.value("sigma_high", 0.0);
  m.noise.clamped_low = h.value("clamped_low", std::int64_t(0));
  m.noise.clamped_high = h.value("clamped_high", std::int64_t(0));
  if (h.contains("warnings")) m.noise.warnings = h["warnings"].get<std::vector<std::string>>();
  if (hash) *hash = h.value("geometry_hash", std::string());

  const auto rays = h.at("rays").get<Eigen::Index>();
  m.m_low.resize(rays);
  m.m_high.resize(rays);
  std::istringstream is(read_text(fs::path(stem.string() + ".csv")));
  std::string line;
  std::getline(is, line);
  Eigen::Index seen = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream row(line);
    std::string a, b, c;
    std::getline(row, a, ',');
    std::getline(row, b, ',');
    std::getline(row, c, ',');
    const Eigen::Index i = std::stoll(a);
    if (i < 0 || i >= rays) throw std::runtime_error("measurement CSV: ray index out of range");
    m.m_low(i) = std::stod(b);
    m.m_high(i) = std::stod(c);
    ++seen;
  }
  if (seen != rays) throw std::runtime_error("measurement CSV: expected " + std::to_string(rays) + " rows");
  m.validate();
  return m;
}

namespace {

nlohmann::json basis_json(const RbfBasis& b) {
  nlohmann::json centers = nlohmann::json::array();
  for (Eigen::Index k = 0; k < b.centers().rows(); ++k) centers.push_back({b.centers()(k, 0), b.centers()(k, 1)});
  return {{"width", b.width()}, {"centers", centers}};
}

RbfBasisPtr basis_from_json(const nlohmann::json& j, const ImageGrid& grid) {
  const auto& c = j.at("centers");
  Eigen::MatrixX2d centers(Eigen::Index(c.size()), 2);
  for (std::size_t k = 0; k < c.size(); ++k) {
    centers(Eigen::Index(k), 0) = c[k][0].get<double>();
    centers(Eigen::Index(k), 1) = c[k][1].get<double>();
  }
  return std::make_shared<const RbfBasis>(grid, std::move(centers), j.at("width").get<double>());
}

std::vector<double> to_vec(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

Eigen::VectorXd from_vec(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), Eigen::Index(v.size()));
}

}  // namespace

nlohmann::json scene_to_json(const SceneModel& m) {
  nlohmann::json j;
  const ImageGrid& g = m.grid();
  j["grid"] = {{"lx", g.lx}, {"ly", g.ly}, {"nx", g.nx}, {"ny", g.ny}};
  j["heaviside_eps"] = m.heaviside_eps;
  j["c_a"] = m.c_a;
  j["p_a"] = m.p_a;
  j["a"] = to_vec(m.a);
  j["beta"] = to_vec(m.beta);
  j["alpha"] = to_vec(m.alpha);
  j["level_set_basis"] = basis_json(*m.level_set_basis);
  j["background_basis"] = basis_json(*m.background_basis);
  return j;
}

SceneModel scene_from_json(const nlohmann::json& j) {
  const auto& g = j.at("grid");
  const ImageGrid grid(g.at("lx").get<double>(), g.at("ly").get<double>(), g.at("nx").get<int>(),
                       g.at("ny").get<int>());
  SceneModel m;
  m.level_set_basis = basis_from_json(j.at("level_set_basis"), grid);
  m.background_basis = basis_from_json(j.at("background_basis"), grid);
  m.heaviside_eps = j.at("heaviside_eps").get<double>();
  m.c_a = j.at("c_a").get<double>();
  m.p_a = j.at("p_a").get<double>();
  m.a = from_vec(j.at("a"));
  m.beta = from_vec(j.at("beta"));
  m.alpha = from_vec(j.at("alpha"));
  m.validate();
  return m;
}

}  // namespace dualct
