#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

namespace dualct {

/// Rectangular reconstruction domain [0, lx] x [0, ly] split into nx x ny
/// pixels. Pixel j = iy * nx + ix (x fastest).
struct ImageGrid {
  double lx = 20.0;
  double ly = 20.0;
  int nx = 64;
  int ny = 64;

  ImageGrid() = default;
  ImageGrid(double lx_, double ly_, int nx_, int ny_);

  double dx() const { return lx / nx; }
  double dy() const { return ly / ny; }
  Eigen::Index pixel_count() const { return Eigen::Index(nx) * ny; }
  double pixel_area() const { return dx() * dy(); }

  double center_x(int ix) const { return (ix + 0.5) * dx(); }
  double center_y(int iy) const { return (iy + 0.5) * dy(); }
  Eigen::Index index(int ix, int iy) const { return Eigen::Index(iy) * nx + ix; }

  /// (x, y) of every pixel center, row j = pixel j.
  Eigen::MatrixX2d pixel_centers() const;

  bool operator==(const ImageGrid&) const = default;
};

/// Parallel-beam geometry. Ray (view k, detector d) is the line
/// (x - cx) cos(phi_k) + (y - cy) sin(phi_k) = s_d with (cx, cy) the domain
/// center and s_d = (d - (n - 1) / 2) * spacing. Ray index = k * n + d.
struct ScanGeometry {
  std::vector<double> angles_rad;
  int detectors_per_view = 1;
  double detector_spacing = 1.0;

  Eigen::Index ray_count() const {
    return Eigen::Index(angles_rad.size()) * detectors_per_view;
  }
  double detector_offset(int d) const {
    return (d - 0.5 * (detectors_per_view - 1)) * detector_spacing;
  }

  /// `views` equally spaced angles in [0, 180) degrees with a detector array
  /// whose span covers the grid diagonal.
  static ScanGeometry parallel(const ImageGrid& grid, int views, int detectors);

  void validate() const;
};

using SparseMatrixR = Eigen::SparseMatrix<double, Eigen::RowMajor, std::int64_t>;

/// Ray/pixel intersection lengths; rows = rays, columns = pixels.
struct SystemMatrix {
  SparseMatrixR a;
  ImageGrid grid;
  ScanGeometry geometry;

  Eigen::Index rows() const { return a.rows(); }
  Eigen::Index cols() const { return a.cols(); }
};

/// Line integrals of one image laid out view-major (angle, detector).
struct Sinogram {
  int views = 0;
  int detectors = 0;
  Eigen::VectorXd values;

  double operator()(int view, int det) const { return values(Eigen::Index(view) * detectors + det); }
  double& operator()(int view, int det) { return values(Eigen::Index(view) * detectors + det); }
};

/// Exact pixel-boundary traversal of every ray through the grid.
SystemMatrix build_system_matrix(const ImageGrid& grid, const ScanGeometry& geometry);

/// Chord length of a single ray through the rectangular domain.
double chord_length(const ImageGrid& grid, double angle_rad, double offset);

Sinogram forward_project(const SystemMatrix& a, const Eigen::VectorXd& image);
/// Adjoint A^T y.
Eigen::VectorXd back_project(const SystemMatrix& a, const Eigen::VectorXd& values);

enum class Apodization { None, Hamming, Hann };

struct FbpOptions {
  Apodization window = Apodization::Hamming;
};

/// Filtered back projection: ramp filter times window applied per view in the
/// frequency domain, then pixel-driven backprojection with linear
/// interpolation along the detector axis.
Eigen::VectorXd fbp(const Sinogram& sino, const ScanGeometry& geometry, const ImageGrid& grid,
                    const FbpOptions& options = {});

}  // namespace dualct
