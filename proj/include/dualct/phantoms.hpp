#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "dualct/metrics.hpp"
#include "dualct/projector.hpp"
#include "dualct/spectra.hpp"

namespace dualct {

enum class ShapeKind { Ellipse, Rectangle, Polygon };

/// One constant-contrast region in physical coordinates (cm). Ellipses use
/// center / semi-axes / rotation, rectangles are axis aligned [x0, x1] x
/// [y0, y1], polygons are simple vertex loops.
struct Shape {
  ShapeKind kind = ShapeKind::Ellipse;
  std::string name;
  MaterialPoint material;
  double cx = 0.0, cy = 0.0, rx = 0.0, ry = 0.0, angle_rad = 0.0;
  double x0 = 0.0, y0 = 0.0, x1 = 0.0, y1 = 0.0;
  std::vector<std::pair<double, double>> vertices;

  static Shape ellipse(std::string name, MaterialPoint m, double cx, double cy, double rx, double ry,
                       double angle_rad = 0.0);
  static Shape rectangle(std::string name, MaterialPoint m, double x0, double y0, double x1, double y1);
  static Shape polygon(std::string name, MaterialPoint m, std::vector<std::pair<double, double>> vertices);

  bool contains(double x, double y) const;
  /// Axis-aligned bounding box (xmin, ymin, xmax, ymax).
  Eigen::Vector4d bounds() const;
};

struct PhantomSpec {
  std::string name;
  ImageGrid grid;
  MaterialPoint background;
  std::vector<Shape> shapes;  // painted in order
  std::optional<int> object_index;
  std::optional<std::uint64_t> clutter_seed;

  void validate() const;
};

struct PhantomTruth {
  Eigen::VectorXd c;
  Eigen::VectorXd p;
  Mask chi;
};

/// Pixel-center rasterization; later shapes overwrite earlier ones and the
/// object mask is whatever the object shape still owns after painting.
PhantomTruth rasterize(const PhantomSpec& spec);

/// Multi-shape scene with a concave boomerang in the lower left at
/// (c, p) = (0.2, 5000) plus an ellipse, a rectangle and a disk whose
/// contrasts stay outside both contrast regions used by the experiments.
PhantomSpec shape_phantom(const ImageGrid& grid);

/// Seeded low-contrast clutter around a central disk at (0.3, 5000).
PhantomSpec clutter_phantom(const ImageGrid& grid, std::uint64_t seed);

nlohmann::json to_json(const PhantomSpec& spec);
PhantomSpec phantom_from_json(const nlohmann::json& j);

}  // namespace dualct
