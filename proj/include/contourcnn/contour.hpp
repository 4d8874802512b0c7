#pragma once

// Raster glyph -> closed contour -> Cartesian / polar encodings.
//
// Point sets are N x 2 Eigen matrices, one (x, y) row per vertex. Contours are
// oriented counter-clockwise in the raw (x, y) frame, i.e. their shoelace area
// is positive; with y pointing down on screen that reads as clockwise.

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "contourcnn/errors.hpp"
#include "contourcnn/tensor.hpp"

namespace contourcnn {

template <typename Scalar>
using PointsX = Eigen::Matrix<Scalar, Eigen::Dynamic, 2, Eigen::RowMajor>;
using Points = PointsX<double>;
using PixelPoints = PointsX<int>;

struct GrayImage {
  Index width = 0;
  Index height = 0;
  std::vector<std::uint8_t> pixels;  // row-major

  std::uint8_t at(Index x, Index y) const { return pixels[static_cast<std::size_t>(y * width + x)]; }
};

struct Bitmap {
  Index width = 0;
  Index height = 0;
  std::vector<std::uint8_t> bits;  // row-major, 0 or 1

  Bitmap() = default;
  Bitmap(Index w, Index h) : width(w), height(h), bits(static_cast<std::size_t>(w * h), 0) {}

  bool at(Index x, Index y) const {
    return x >= 0 && y >= 0 && x < width && y < height &&
           bits[static_cast<std::size_t>(y * width + x)] != 0;
  }
  void set(Index x, Index y, bool on = true) {
    bits[static_cast<std::size_t>(y * width + x)] = on ? 1 : 0;
  }
  Index count() const;
};

struct ContourPoints {
  PixelPoints points;
  Index width = 0;
  Index height = 0;

  Index size() const { return points.rows(); }
};

/// Vertices with x, y in [0, 1].
struct CartesianContour {
  Points vertices;
};

/// Rows are (alpha, L): signed turning angle in [-pi, pi] and segment length
/// to the next vertex as a fraction of the perimeter.
struct PolarContour {
  Points vertices;
};

/// Bit set iff pixel >= threshold.
Bitmap binarize(const GrayImage& image, int threshold = 128);

/// Outer border of the largest 8-connected foreground component, traced by
/// Moore-neighbour border following. Holes are ignored. Consecutive duplicates
/// are removed. Throws ExtractionError with reason "empty" for a blank bitmap
/// and "degenerate" when fewer than 3 border points remain.
ContourPoints trace_outer_contour(const Bitmap& bitmap);

/// Empty string if the contour satisfies the closed 8-neighbour chain
/// invariants, otherwise a description of the first violation.
std::string check_contour(const ContourPoints& contour);

/// x / (width - 1), y / (height - 1).
CartesianContour encode_cartesian(const ContourPoints& contour);
/// Inverse of encode_cartesian on pixel-grid contours.
ContourPoints decode_cartesian(const CartesianContour& contour, Index width, Index height);

PolarContour encode_polar(const ContourPoints& contour);

/// Twice the signed area (shoelace).
template <typename Derived>
typename Derived::Scalar signed_area2(const Eigen::MatrixBase<Derived>& p) {
  typename Derived::Scalar acc = 0;
  const Index n = p.rows();
  for (Index i = 0; i < n; ++i) {
    const Index j = (i + 1) % n;
    acc += p(i, 0) * p(j, 1) - p(j, 0) * p(i, 1);
  }
  return acc;
}

/// Polar encoding of an arbitrary closed polygon (N >= 3, no zero-length edge).
/// alpha_i = atan2(cross, dot) of the incoming and outgoing edge vectors.
template <typename Derived>
PointsX<double> polar_encoding(const Eigen::MatrixBase<Derived>& points) {
  const Index n = points.rows();
  if (n < 3) throw UsageError("polar encoding needs at least 3 points, got " + std::to_string(n));
  const PointsX<double> p = points.template cast<double>();
  PointsX<double> edges(n, 2);
  for (Index i = 0; i < n; ++i) edges.row(i) = p.row((i + 1) % n) - p.row(i);

  PointsX<double> out(n, 2);
  double perimeter = 0.0;
  for (Index i = 0; i < n; ++i) {
    const double len = edges.row(i).norm();
    if (!(len > 0.0)) {
      throw UsageError("polar encoding: zero-length segment at vertex " + std::to_string(i));
    }
    out(i, 1) = len;
    perimeter += len;
  }
  for (Index i = 0; i < n; ++i) {
    const auto in = edges.row((i + n - 1) % n);
    const auto outgoing = edges.row(i);
    const double cross = in(0) * outgoing(1) - in(1) * outgoing(0);
    const double dot = in(0) * outgoing(0) + in(1) * outgoing(1);
    out(i, 0) = std::atan2(cross, dot);
    out(i, 1) /= perimeter;
  }
  return out;
}

/// Integrates a polar encoding into a polyline. `heading` is the direction of
/// the first edge and `scale` the total perimeter of the result. Vertex i+1 is
/// vertex i plus scale * L_i along the current heading, which then turns by
/// alpha_{i+1}.
template <typename Derived>
PointsX<double> reconstruct_points(const Eigen::MatrixBase<Derived>& polar,
                                   const Eigen::Vector2d& start, double heading, double scale) {
  const Index n = polar.rows();
  PointsX<double> out(n, 2);
  if (n == 0) return out;
  out.row(0) = start.transpose();
  double h = heading;
  for (Index i = 0; i + 1 < n; ++i) {
    const double step = scale * static_cast<double>(polar(i, 1));
    out(i + 1, 0) = out(i, 0) + step * std::cos(h);
    out(i + 1, 1) = out(i, 1) + step * std::sin(h);
    h += static_cast<double>(polar(i + 1, 0));
  }
  return out;
}

/// Rigid rotation by `angle` about the origin, then translation.
template <typename Derived>
PointsX<double> transform_points(const Eigen::MatrixBase<Derived>& p, double angle, double scale,
                                 const Eigen::Vector2d& offset) {
  Eigen::Matrix2d rot;
  rot << std::cos(angle), -std::sin(angle), std::sin(angle), std::cos(angle);
  PointsX<double> out = (p.template cast<double>() * rot.transpose()) * scale;
  out.rowwise() += offset.transpose();
  return out;
}

}  // namespace contourcnn
