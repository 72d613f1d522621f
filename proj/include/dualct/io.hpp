#pragma once

#include <filesystem>
#include <string>

#include <Eigen/Dense>
#include <json.hpp>

#include "dualct/forward.hpp"
#include "dualct/pals.hpp"
#include "dualct/projector.hpp"

namespace dualct {

/// ny rows of nx comma-separated values; the first line is the top row
/// (largest y) so the file reads like the picture.
void write_image_csv(const std::filesystem::path& path, const Eigen::VectorXd& image, const ImageGrid& grid);
Eigen::VectorXd read_image_csv(const std::filesystem::path& path, const ImageGrid& grid);

/// 16-bit binary PGM linearly mapped from [lo, hi] (defaults to the image
/// range), plus `<path>.json` recording the mapping and grid.
void write_image_pgm(const std::filesystem::path& path, const Eigen::VectorXd& image, const ImageGrid& grid);
void write_image_pgm(const std::filesystem::path& path, const Eigen::VectorXd& image, const ImageGrid& grid,
                     double lo, double hi);

/// Hex digest identifying a scan geometry and grid, stored with measurements.
std::string geometry_hash(const ImageGrid& grid, const ScanGeometry& geometry);

/// JSON header `<stem>.json` plus CSV payload `<stem>.csv` with
/// ray_index, m_low, m_high.
void write_measurements(const std::filesystem::path& stem, const MeasurementSet& data, const ImageGrid& grid,
                        const ScanGeometry& geometry);
MeasurementSet read_measurements(const std::filesystem::path& stem, std::string* hash = nullptr);

/// Theta plus the lattice description of both bases; enough to rebuild and
/// recompose the model exactly.
nlohmann::json scene_to_json(const SceneModel& model);
SceneModel scene_from_json(const nlohmann::json& j);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace dualct
