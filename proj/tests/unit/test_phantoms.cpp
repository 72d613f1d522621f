#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "dualct/objective.hpp"
#include "dualct/phantoms.hpp"

using namespace dualct;

namespace {

using Pt = std::pair<double, double>;

double cross(const Pt& o, const Pt& a, const Pt& b) {
  return (a.first - o.first) * (b.second - o.second) - (a.second - o.second) * (b.first - o.first);
}

// Andrew's monotone chain.
std::vector<Pt> hull(std::vector<Pt> p) {
  std::sort(p.begin(), p.end());
  std::vector<Pt> h(2 * p.size());
  std::size_t k = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    while (k >= 2 && cross(h[k - 2], h[k - 1], p[i]) <= 0) --k;
    h[k++] = p[i];
  }
  for (std::size_t i = p.size() - 1, t = k + 1; i-- > 0;) {
    while (k >= t && cross(h[k - 2], h[k - 1], p[i]) <= 0) --k;
    h[k++] = p[i];
  }
  h.resize(k - 1);
  return h;
}

bool inside_hull(const std::vector<Pt>& h, const Pt& q) {
  for (std::size_t i = 0; i < h.size(); ++i) {
    if (cross(h[i], h[(i + 1) % h.size()], q) < -1e-12) return false;
  }
  return true;
}

}  // namespace

TEST(Rasterize, EmptySpecIsHomogeneous) {
  PhantomSpec s;
  s.grid = ImageGrid(20.0, 20.0, 16, 16);
  s.background = {0.1, 3000.0};
  const PhantomTruth t = rasterize(s);
  EXPECT_TRUE((t.c.array() == 0.1).all());
  EXPECT_TRUE((t.p.array() == 3000.0).all());
  EXPECT_FALSE(t.chi.any());
}

TEST(Rasterize, FullGridRectangle) {
  PhantomSpec s;
  s.grid = ImageGrid(20.0, 20.0, 16, 16);
  s.shapes.push_back(Shape::rectangle("all", {0.2, 5000.0}, 0.0, 0.0, 20.0, 20.0));
  s.object_index = 0;
  const PhantomTruth t = rasterize(s);
  EXPECT_TRUE((t.c.array() == 0.2).all());
  EXPECT_TRUE((t.p.array() == 5000.0).all());
  EXPECT_TRUE(t.chi.all());
}

TEST(Rasterize, DiskAreaWithinPerimeterBand) {
  const ImageGrid g(20.0, 20.0, 128, 128);
  PhantomSpec s;
  s.grid = g;
  const double r = 6.3;
  s.shapes.push_back(Shape::ellipse("disk", {0.2, 5000.0}, 10.0, 10.0, r, r));
  s.object_index = 0;
  const double area = double(rasterize(s).chi.count()) * g.pixel_area();
  const double band = 2 * std::numbers::pi * r * g.dx();
  EXPECT_NEAR(area, std::numbers::pi * r * r, band);
}

TEST(Rasterize, OverpaintingAndDisjointOrder) {
  const ImageGrid g(20.0, 20.0, 32, 32);
  PhantomSpec a;
  a.grid = g;
  a.shapes.push_back(Shape::ellipse("left", {0.2, 5000.0}, 5.0, 10.0, 3.0, 3.0));
  a.shapes.push_back(Shape::rectangle("right", {0.3, 7000.0}, 12.0, 5.0, 18.0, 15.0));
  PhantomSpec b = a;
  std::swap(b.shapes[0], b.shapes[1]);
  EXPECT_EQ(rasterize(a).c, rasterize(b).c);

  // Overlap: the later shape wins and trims the object mask.
  PhantomSpec o;
  o.grid = g;
  o.shapes.push_back(Shape::rectangle("obj", {0.2, 5000.0}, 4.0, 4.0, 12.0, 12.0));
  o.shapes.push_back(Shape::rectangle("cover", {0.3, 7000.0}, 8.0, 4.0, 12.0, 12.0));
  o.object_index = 0;
  const PhantomTruth t = rasterize(o);
  for (Eigen::Index j = 0; j < t.chi.size(); ++j) {
    if (t.chi(j)) {
      EXPECT_EQ(t.c(j), 0.2);
      EXPECT_EQ(t.p(j), 5000.0);
    }
  }
  EXPECT_GT(t.chi.count(), 0);
}

TEST(ShapePhantom, ObjectInsideRegionOthersOutside) {
  const PhantomSpec s = shape_phantom(ImageGrid(20.0, 20.0, 64, 64));
  const ContrastRegion gamma;  // (0.19, 5000) with semi-axes (0.05, 500)
  ASSERT_TRUE(s.object_index.has_value());
  const MaterialPoint obj = s.shapes[std::size_t(*s.object_index)].material;
  EXPECT_NEAR(g1(obj.c, obj.p, gamma), -0.96, 1e-12);
  for (std::size_t k = 0; k < s.shapes.size(); ++k) {
    if (int(k) == *s.object_index) continue;
    EXPECT_GT(g1(s.shapes[k].material.c, s.shapes[k].material.p, gamma), 0.0) << s.shapes[k].name;
  }
  EXPECT_GT(g1(s.background.c, s.background.p, gamma), 0.0);
  // The null-detection region sits away from every contrast in the scene.
  const ContrastRegion off{0.12, 3000.0, 0.05, 500.0};
  EXPECT_GT(g1(s.background.c, s.background.p, off), 0.0);
  for (const Shape& sh : s.shapes) EXPECT_GT(g1(sh.material.c, sh.material.p, off), 0.0) << sh.name;
}

TEST(ShapePhantom, ObjectMaskIsNonEmptyAndConcave) {
  const ImageGrid g(20.0, 20.0, 64, 64);
  const PhantomTruth t = rasterize(shape_phantom(g));
  ASSERT_GT(t.chi.count(), 50);
  const auto c = g.pixel_centers();
  std::vector<Pt> pts;
  for (Eigen::Index j = 0; j < t.chi.size(); ++j) {
    if (t.chi(j)) pts.emplace_back(c(j, 0), c(j, 1));
  }
  const auto h = hull(pts);
  Eigen::Index in_hull = 0;
  for (Eigen::Index j = 0; j < t.chi.size(); ++j) in_hull += inside_hull(h, {c(j, 0), c(j, 1)});
  EXPECT_GT(in_hull, t.chi.count() + 20);
}

TEST(ClutterPhantom, SeededAndSeparatedFromTarget) {
  const ImageGrid g(20.0, 20.0, 64, 64);
  const PhantomSpec a = clutter_phantom(g, 5), b = clutter_phantom(g, 5), c = clutter_phantom(g, 6);
  EXPECT_EQ(to_json(a), to_json(b));
  EXPECT_NE(to_json(a), to_json(c));

  const ContrastRegion gamma{0.30, 5000.0, 0.05, 500.0};
  ASSERT_TRUE(a.object_index.has_value());
  const MaterialPoint target = a.shapes[std::size_t(*a.object_index)].material;
  EXPECT_LT(g1(target.c, target.p, gamma), 0.0);
  for (std::size_t k = 0; k < a.shapes.size(); ++k) {
    if (int(k) == *a.object_index) continue;
    EXPECT_GT(g1(a.shapes[k].material.c, a.shapes[k].material.p, gamma), 0.0);
  }
  EXPECT_GE(a.shapes.size(), 8u);
}

TEST(PhantomJson, RoundTrip) {
  const PhantomSpec s = shape_phantom(ImageGrid(20.0, 20.0, 48, 48));
  const PhantomSpec back = phantom_from_json(to_json(s));
  const PhantomTruth a = rasterize(s), b = rasterize(back);
  EXPECT_EQ(a.c, b.c);
  EXPECT_EQ(a.p, b.p);
  EXPECT_TRUE((a.chi == b.chi).all());
}

TEST(PhantomSpec, RejectsShapesLeavingTheGrid) {
  PhantomSpec s;
  s.grid = ImageGrid(20.0, 20.0, 16, 16);
  s.shapes.push_back(Shape::ellipse("out", {0.2, 5000.0}, 19.0, 10.0, 3.0, 3.0));
  EXPECT_THROW(s.validate(), std::invalid_argument);
}
