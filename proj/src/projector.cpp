#include "dualct/projector.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>

#include <unsupported/Eigen/FFT>

namespace dualct {

namespace {

constexpr double kParallelTol = 1e-14;

struct Ray {
  double px, py;  // point on the ray closest to the domain center
  double ux, uy;  // unit direction
};

Ray make_ray(const ImageGrid& grid, double angle, double offset) {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  return {0.5 * grid.lx + offset * c, 0.5 * grid.ly + offset * s, -s, c};
}

// Parameter interval where the ray is inside [0,lx]x[0,ly]; empty if t0 >= t1.
std::pair<double, double> clip_to_box(const ImageGrid& grid, const Ray& r) {
  double t0 = -std::numeric_limits<double>::infinity();
  double t1 = std::numeric_limits<double>::infinity();
  auto slab = [&](double p, double u, double hi) {
    if (std::abs(u) < kParallelTol) {
      if (p < 0.0 || p > hi) {
        t0 = 1.0;
        t1 = 0.0;
      }
      return;
    }
    double a = (0.0 - p) / u;
    double b = (hi - p) / u;
    if (a > b) std::swap(a, b);
    t0 = std::max(t0, a);
    t1 = std::min(t1, b);
  };
  slab(r.px, r.ux, grid.lx);
  slab(r.py, r.uy, grid.ly);
  return {t0, t1};
}

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

}  // namespace

ImageGrid::ImageGrid(double lx_, double ly_, int nx_, int ny_) : lx(lx_), ly(ly_), nx(nx_), ny(ny_) {
  if (!(lx > 0.0) || !(ly > 0.0) || nx < 1 || ny < 1) {
    throw std::invalid_argument("ImageGrid: extents must be positive and pixel counts >= 1");
  }
}

Eigen::MatrixX2d ImageGrid::pixel_centers() const {
  Eigen::MatrixX2d out(pixel_count(), 2);
  for (int iy = 0; iy < ny; ++iy) {
    for (int ix = 0; ix < nx; ++ix) {
      out(index(ix, iy), 0) = center_x(ix);
      out(index(ix, iy), 1) = center_y(iy);
    }
  }
  return out;
}

ScanGeometry ScanGeometry::parallel(const ImageGrid& grid, int views, int detectors) {
  if (views < 1 || detectors < 1) {
    throw std::invalid_argument("ScanGeometry::parallel: need at least one view and one detector");
  }
  ScanGeometry g;
  g.angles_rad.resize(std::size_t(views));
  for (int k = 0; k < views; ++k) {
    g.angles_rad[std::size_t(k)] = std::numbers::pi * k / views;
  }
  g.detectors_per_view = detectors;
  g.detector_spacing = std::hypot(grid.lx, grid.ly) / detectors;
  return g;
}

void ScanGeometry::validate() const {
  if (angles_rad.empty() || detectors_per_view < 1 || !(detector_spacing > 0.0)) {
    throw std::invalid_argument("ScanGeometry: need views, detectors >= 1 and positive spacing");
  }
  std::vector<double> sorted = angles_rad;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw std::invalid_argument("ScanGeometry: view angles must be distinct");
  }
}

double chord_length(const ImageGrid& grid, double angle_rad, double offset) {
  const auto [t0, t1] = clip_to_box(grid, make_ray(grid, angle_rad, offset));
  return t1 > t0 ? t1 - t0 : 0.0;
}

SystemMatrix build_system_matrix(const ImageGrid& grid, const ScanGeometry& geometry) {
  geometry.validate();
  const Eigen::Index rows = geometry.ray_count();
  const Eigen::Index cols = grid.pixel_count();
  const double dx = grid.dx();
  const double dy = grid.dy();

  SparseMatrixR a(rows, cols);
  a.reserve(Eigen::VectorXi::Constant(rows, 2 * (grid.nx + grid.ny)));

  std::vector<double> ts;
  std::vector<std::pair<Eigen::Index, double>> row_entries;
  for (std::size_t k = 0; k < geometry.angles_rad.size(); ++k) {
    for (int d = 0; d < geometry.detectors_per_view; ++d) {
      const Eigen::Index row = Eigen::Index(k) * geometry.detectors_per_view + d;
      const Ray r = make_ray(grid, geometry.angles_rad[k], geometry.detector_offset(d));
      const auto [t0, t1] = clip_to_box(grid, r);
      if (!(t1 > t0)) continue;

      ts.clear();
      ts.push_back(t0);
      ts.push_back(t1);
      if (std::abs(r.ux) >= kParallelTol) {
        for (int i = 0; i <= grid.nx; ++i) {
          const double t = (i * dx - r.px) / r.ux;
          if (t > t0 && t < t1) ts.push_back(t);
        }
      }
      if (std::abs(r.uy) >= kParallelTol) {
        for (int i = 0; i <= grid.ny; ++i) {
          const double t = (i * dy - r.py) / r.uy;
          if (t > t0 && t < t1) ts.push_back(t);
        }
      }
      std::sort(ts.begin(), ts.end());

      row_entries.clear();
      for (std::size_t i = 0; i + 1 < ts.size(); ++i) {
        const double len = ts[i + 1] - ts[i];
        if (len <= 1e-12 * (t1 - t0)) continue;
        const double tm = 0.5 * (ts[i] + ts[i + 1]);
        const int ix = std::clamp(int(std::floor((r.px + tm * r.ux) / dx)), 0, grid.nx - 1);
        const int iy = std::clamp(int(std::floor((r.py + tm * r.uy) / dy)), 0, grid.ny - 1);
        row_entries.emplace_back(grid.index(ix, iy), len);
      }
      std::sort(row_entries.begin(), row_entries.end(),
                [](const auto& l, const auto& rr) { return l.first < rr.first; });
      for (std::size_t i = 0; i < row_entries.size();) {
        double sum = 0.0;
        std::size_t j = i;
        for (; j < row_entries.size() && row_entries[j].first == row_entries[i].first; ++j) {
          sum += row_entries[j].second;
        }
        a.insert(row, row_entries[i].first) = sum;
        i = j;
      }
    }
  }
  a.makeCompressed();
  return SystemMatrix{std::move(a), grid, geometry};
}

Sinogram forward_project(const SystemMatrix& a, const Eigen::VectorXd& image) {
  if (image.size() != a.cols()) {
    throw std::invalid_argument("forward_project: image length does not match the system matrix");
  }
  Sinogram s;
  s.views = int(a.geometry.angles_rad.size());
  s.detectors = a.geometry.detectors_per_view;
  s.values = a.a * image;
  return s;
}

Eigen::VectorXd back_project(const SystemMatrix& a, const Eigen::VectorXd& values) {
  if (values.size() != a.rows()) {
    throw std::invalid_argument("back_project: sinogram length does not match the system matrix");
  }
  return a.a.transpose() * values;
}

Eigen::VectorXd fbp(const Sinogram& sino, const ScanGeometry& geometry, const ImageGrid& grid,
                    const FbpOptions& options) {
  const int views = int(geometry.angles_rad.size());
  const int n = geometry.detectors_per_view;
  if (views < 2) {
    throw std::invalid_argument("fbp: at least two view angles are required");
  }
  if (sino.views != views || sino.detectors != n || sino.values.size() != Eigen::Index(views) * n) {
    throw std::invalid_argument("fbp: sinogram shape does not match the geometry");
  }
  const double tau = geometry.detector_spacing;
  const std::size_t len = next_pow2(std::size_t(2 * n));

  // Band-limited ramp built in the spatial domain so the zero-frequency term
  // is correct, then transformed.
  std::vector<std::complex<double>> kernel(len, 0.0);
  kernel[0] = 1.0 / (4.0 * tau * tau);
  for (std::size_t k = 1; k < len / 2; k += 2) {
    const double v = -1.0 / (std::numbers::pi * std::numbers::pi * double(k * k) * tau * tau);
    kernel[k] = v;
    kernel[len - k] = v;
  }
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> filter;
  fft.fwd(filter, kernel);
  for (std::size_t k = 0; k < len; ++k) {
    const double f = double(std::min(k, len - k)) / double(len / 2);  // 0..1 of Nyquist
    double w = 1.0;
    switch (options.window) {
      case Apodization::None: break;
      case Apodization::Hamming: w = 0.54 + 0.46 * std::cos(std::numbers::pi * f); break;
      case Apodization::Hann: w = 0.5 + 0.5 * std::cos(std::numbers::pi * f); break;
    }
    filter[k] = filter[k].real() * w * tau;
  }

  Eigen::MatrixXd filtered(views, n);
  std::vector<std::complex<double>> buf(len);
  std::vector<std::complex<double>> spec;
  std::vector<std::complex<double>> back;
  for (int v = 0; v < views; ++v) {
    std::fill(buf.begin(), buf.end(), 0.0);
    for (int d = 0; d < n; ++d) buf[std::size_t(d)] = sino(v, d);
    fft.fwd(spec, buf);
    for (std::size_t k = 0; k < len; ++k) spec[k] *= filter[k];
    fft.inv(back, spec);
    for (int d = 0; d < n; ++d) filtered(v, d) = back[std::size_t(d)].real();
  }

  Eigen::VectorXd image = Eigen::VectorXd::Zero(grid.pixel_count());
  const double cx = 0.5 * grid.lx;
  const double cy = 0.5 * grid.ly;
  const double half = 0.5 * (n - 1);
  for (int v = 0; v < views; ++v) {
    const double c = std::cos(geometry.angles_rad[std::size_t(v)]);
    const double s = std::sin(geometry.angles_rad[std::size_t(v)]);
    for (int iy = 0; iy < grid.ny; ++iy) {
      const double y = grid.center_y(iy) - cy;
      for (int ix = 0; ix < grid.nx; ++ix) {
        const double x = grid.center_x(ix) - cx;
        const double u = (x * c + y * s) / tau + half;
        const int i0 = int(std::floor(u));
        if (i0 < 0 || i0 + 1 > n - 1) {
          if (i0 == n - 1 && u == double(n - 1)) image(grid.index(ix, iy)) += filtered(v, n - 1);
          continue;
        }
        const double frac = u - i0;
        image(grid.index(ix, iy)) += (1.0 - frac) * filtered(v, i0) + frac * filtered(v, i0 + 1);
      }
    }
  }
  image *= std::numbers::pi / views;
  return image;
}

}  // namespace dualct
