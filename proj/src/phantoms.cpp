#include "dualct/phantoms.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

#include "dualct/objective.hpp"

namespace dualct {

Shape Shape::ellipse(std::string name, MaterialPoint m, double cx, double cy, double rx, double ry,
                     double angle_rad) {
  Shape s;
  s.kind = ShapeKind::Ellipse;
  s.name = std::move(name);
  s.material = m;
  s.cx = cx;
  s.cy = cy;
  s.rx = rx;
  s.ry = ry;
  s.angle_rad = angle_rad;
  return s;
}

Shape Shape::rectangle(std::string name, MaterialPoint m, double x0, double y0, double x1, double y1) {
  Shape s;
  s.kind = ShapeKind::Rectangle;
  s.name = std::move(name);
  s.material = m;
  s.x0 = std::min(x0, x1);
  s.x1 = std::max(x0, x1);
  s.y0 = std::min(y0, y1);
  s.y1 = std::max(y0, y1);
  return s;
}

Shape Shape::polygon(std::string name, MaterialPoint m, std::vector<std::pair<double, double>> vertices) {
  Shape s;
  s.kind = ShapeKind::Polygon;
  s.name = std::move(name);
  s.material = m;
  s.vertices = std::move(vertices);
  return s;
}

bool Shape::contains(double x, double y) const {
  switch (kind) {
    case ShapeKind::Ellipse: {
      const double c = std::cos(angle_rad), s = std::sin(angle_rad);
      const double u = (x - cx) * c + (y - cy) * s;
      const double v = -(x - cx) * s + (y - cy) * c;
      return (u * u) / (rx * rx) + (v * v) / (ry * ry) <= 1.0;
    }
    case ShapeKind::Rectangle:
      return x >= x0 && x <= x1 && y >= y0 && y <= y1;
    case ShapeKind::Polygon: {
      // even-odd crossing test
      bool inside = false;
      const std::size_t n = vertices.size();
      for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
        const auto [xi, yi] = vertices[i];
        const auto [xj, yj] = vertices[j];
        if ((yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi) inside = !inside;
      }
      return inside;
    }
  }
  return false;
}

Eigen::Vector4d Shape::bounds() const {
  switch (kind) {
    case ShapeKind::Ellipse: {
      const double c = std::cos(angle_rad), s = std::sin(angle_rad);
      const double hx = std::sqrt(rx * rx * c * c + ry * ry * s * s);
      const double hy = std::sqrt(rx * rx * s * s + ry * ry * c * c);
      return {cx - hx, cy - hy, cx + hx, cy + hy};
    }
    case ShapeKind::Rectangle:
      return {x0, y0, x1, y1};
    case ShapeKind::Polygon: {
      Eigen::Vector4d b(INFINITY, INFINITY, -INFINITY, -INFINITY);
      for (const auto& [x, y] : vertices) {
        b(0) = std::min(b(0), x);
        b(1) = std::min(b(1), y);
        b(2) = std::max(b(2), x);
        b(3) = std::max(b(3), y);
      }
      return b;
    }
  }
  return Eigen::Vector4d::Zero();
}

void PhantomSpec::validate() const {
  if (grid.nx < 1 || grid.ny < 1 || !(grid.lx > 0.0) || !(grid.ly > 0.0)) {
    throw std::invalid_argument("PhantomSpec: invalid grid");
  }
  for (const Shape& s : shapes) {
    if (s.kind == ShapeKind::Ellipse && !(s.rx > 0.0 && s.ry > 0.0)) {
      throw std::invalid_argument("PhantomSpec: ellipse '" + s.name + "' needs positive semi-axes");
    }
    if (s.kind == ShapeKind::Polygon && s.vertices.size() < 3) {
      throw std::invalid_argument("PhantomSpec: polygon '" + s.name + "' needs at least 3 vertices");
    }
    const Eigen::Vector4d b = s.bounds();
    if (b(0) < 0.0 || b(1) < 0.0 || b(2) > grid.lx || b(3) > grid.ly) {
      throw std::invalid_argument("PhantomSpec: shape '" + s.name + "' leaves the grid");
    }
  }
  if (object_index && (*object_index < 0 || *object_index >= int(shapes.size()))) {
    throw std::invalid_argument("PhantomSpec: object index out of range");
  }
}

PhantomTruth rasterize(const PhantomSpec& spec) {
  spec.validate();
  const ImageGrid& g = spec.grid;
  const Eigen::Index np = g.pixel_count();
  PhantomTruth t;
  t.c = Eigen::VectorXd::Constant(np, spec.background.c);
  t.p = Eigen::VectorXd::Constant(np, spec.background.p);
  Eigen::VectorXi owner = Eigen::VectorXi::Constant(np, -1);
  for (int k = 0; k < int(spec.shapes.size()); ++k) {
    const Shape& s = spec.shapes[std::size_t(k)];
    for (int iy = 0; iy < g.ny; ++iy) {
      for (int ix = 0; ix < g.nx; ++ix) {
        if (!s.contains(g.center_x(ix), g.center_y(iy))) continue;
        const Eigen::Index j = g.index(ix, iy);
        t.c(j) = s.material.c;
        t.p(j) = s.material.p;
        owner(j) = k;
      }
    }
  }
  t.chi = spec.object_index ? Mask(owner.array() == *spec.object_index) : Mask::Constant(np, false);
  return t;
}

PhantomSpec shape_phantom(const ImageGrid& grid) {
  // Layout is defined on a 20 x 20 cm field and scaled to the grid extent.
  const double sx = grid.lx / 20.0;
  const double sy = grid.ly / 20.0;
  auto pt = [&](double x, double y) { return std::pair<double, double>{x * sx, y * sy}; };

  PhantomSpec s;
  s.name = "phantom1";
  s.grid = grid;
  s.background = {0.10, 4500.0};
  s.shapes.push_back(Shape::polygon(
      "boomerang", {0.20, 5000.0},
      {pt(2.5, 3.0), pt(8.5, 2.5), pt(9.5, 4.5), pt(5.0, 5.0), pt(4.5, 9.5), pt(2.5, 8.5)}));
  s.shapes.push_back(Shape::ellipse("ellipse", {0.30, 9000.0}, 14.0 * sx, 14.0 * sy, 3.5 * sx, 2.0 * sy,
                                    std::numbers::pi / 6.0));
  s.shapes.push_back(Shape::rectangle("rectangle", {0.15, 8000.0}, 11.5 * sx, 3.0 * sy, 17.0 * sx, 7.0 * sy));
  s.shapes.push_back(Shape::ellipse("disk", {0.06, 9000.0}, 5.5 * sx, 14.5 * sy, 1.8 * sx, 1.8 * sy));
  s.object_index = 0;
  return s;
}

PhantomSpec clutter_phantom(const ImageGrid& grid, std::uint64_t seed) {
  const ContrastRegion gamma{0.30, 5000.0, 0.05, 500.0};
  const MaterialPoint background{0.08, 2500.0};
  const double sx = grid.lx / 20.0;
  const double sy = grid.ly / 20.0;

  PhantomSpec s;
  s.name = "clutter";
  s.grid = grid;
  s.background = background;
  s.clutter_seed = seed;

  const double disk_x = 10.5 * sx, disk_y = 9.5 * sy, disk_r = 2.2 * std::min(sx, sy);

  // The whole segment from the background to a clutter contrast must stay
  // outside the region, so blurred edges never look like the target either.
  auto acceptable = [&](const MaterialPoint& m) {
    for (int k = 0; k <= 50; ++k) {
      const double t = k / 50.0;
      if (g1(background.c + t * (m.c - background.c), background.p + t * (m.p - background.p), gamma) <= 0.25) {
        return false;
      }
    }
    return true;
  };

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uc(0.03, 0.22);
  std::uniform_real_distribution<double> up(1000.0, 7000.0);
  std::uniform_real_distribution<double> ux(1.5, 18.5);
  std::uniform_real_distribution<double> ur(0.8, 2.2);
  std::uniform_real_distribution<double> ua(0.0, std::numbers::pi);
  std::bernoulli_distribution is_rect(0.4);

  const int wanted = 10;
  int made = 0;
  for (int attempt = 0; attempt < 10000 && made < wanted; ++attempt) {
    MaterialPoint m{uc(rng), up(rng)};
    const double x = ux(rng), y = ux(rng), rx = ur(rng), ry = ur(rng), ang = ua(rng);
    const bool rect = is_rect(rng);
    if (!acceptable(m)) continue;
    Shape sh = rect ? Shape::rectangle("clutter" + std::to_string(made), m, (x - rx) * sx, (y - ry) * sy,
                                       (x + rx) * sx, (y + ry) * sy)
                    : Shape::ellipse("clutter" + std::to_string(made), m, x * sx, y * sy, rx * sx, ry * sy, ang);
    const Eigen::Vector4d b = sh.bounds();
    if (b(0) < 0.0 || b(1) < 0.0 || b(2) > grid.lx || b(3) > grid.ly) continue;
    // keep a clear margin around the central object
    const double qx = std::clamp(disk_x, b(0), b(2));
    const double qy = std::clamp(disk_y, b(1), b(3));
    if (std::hypot(qx - disk_x, qy - disk_y) < disk_r + 1.0 * std::min(sx, sy)) continue;
    s.shapes.push_back(std::move(sh));
    ++made;
  }
  s.shapes.push_back(Shape::ellipse("target", {0.31, 5100.0}, disk_x, disk_y, disk_r, disk_r));
  s.object_index = int(s.shapes.size()) - 1;
  return s;
}

namespace {

const char* kind_name(ShapeKind k) {
  switch (k) {
    case ShapeKind::Ellipse: return "ellipse";
    case ShapeKind::Rectangle: return "rectangle";
    case ShapeKind::Polygon: return "polygon";
  }
  return "?";
}

}  // namespace

nlohmann::json to_json(const PhantomSpec& spec) {
  nlohmann::json j;
  j["name"] = spec.name;
  j["grid"] = {{"lx", spec.grid.lx}, {"ly", spec.grid.ly}, {"nx", spec.grid.nx}, {"ny", spec.grid.ny}};
  j["background"] = {{"c", spec.background.c}, {"p", spec.background.p}};
  j["object_index"] = spec.object_index ? nlohmann::json(*spec.object_index) : nlohmann::json();
  j["clutter_seed"] = spec.clutter_seed ? nlohmann::json(*spec.clutter_seed) : nlohmann::json();
  nlohmann::json shapes = nlohmann::json::array();
  for (const Shape& s : spec.shapes) {
    nlohmann::json o;
    o["kind"] = kind_name(s.kind);
    o["name"] = s.name;
    o["c"] = s.material.c;
    o["p"] = s.material.p;
    switch (s.kind) {
      case ShapeKind::Ellipse:
        o["center"] = {s.cx, s.cy};
        o["semi_axes"] = {s.rx, s.ry};
        o["angle_rad"] = s.angle_rad;
        break;
      case ShapeKind::Rectangle:
        o["min"] = {s.x0, s.y0};
        o["max"] = {s.x1, s.y1};
        break;
      case ShapeKind::Polygon: {
        nlohmann::json v = nlohmann::json::array();
        for (const auto& [x, y] : s.vertices) v.push_back({x, y});
        o["vertices"] = v;
        break;
      }
    }
    shapes.push_back(o);
  }
  j["shapes"] = shapes;
  return j;
}

PhantomSpec phantom_from_json(const nlohmann::json& j) {
  PhantomSpec s;
  s.name = j.value("name", std::string());
  const auto& g = j.at("grid");
  s.grid = ImageGrid(g.at("lx").get<double>(), g.at("ly").get<double>(), g.at("nx").get<int>(), g.at("ny").get<int>());
  s.background = {j.at("background").at("c").get<double>(), j.at("background").at("p").get<double>()};
  if (j.contains("object_index") && !j["object_index"].is_null()) s.object_index = j["object_index"].get<int>();
  if (j.contains("clutter_seed") && !j["clutter_seed"].is_null()) {
    s.clutter_seed = j["clutter_seed"].get<std::uint64_t>();
  }
  for (const auto& o : j.at("shapes")) {
    const std::string kind = o.at("kind").get<std::string>();
    const MaterialPoint m{o.at("c").get<double>(), o.at("p").get<double>()};
    const std::string name = o.value("name", std::string());
    if (kind == "ellipse") {
      s.shapes.push_back(Shape::ellipse(name, m, o.at("center")[0], o.at("center")[1], o.at("semi_axes")[0],
                                        o.at("semi_axes")[1], o.value("angle_rad", 0.0)));
    } else if (kind == "rectangle") {
      s.shapes.push_back(Shape::rectangle(name, m, o.at("min")[0], o.at("min")[1], o.at("max")[0], o.at("max")[1]));
    } else if (kind == "polygon") {
      std::vector<std::pair<double, double>> v;
      for (const auto& p : o.at("vertices")) v.emplace_back(p[0].get<double>(), p[1].get<double>());
      s.shapes.push_back(Shape::polygon(name, m, std::move(v)));
    } else {
      throw std::invalid_argument("phantom JSON: unknown shape kind '" + kind + "'");
    }
  }
  s.validate();
  return s;
}

}  // namespace dualct
