#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "contourcnn/contour.hpp"

using namespace contourcnn;

namespace {

Bitmap filled_rect(Index w, Index h, Index x0, Index y0, Index bw, Index bh) {
  Bitmap b(w, h);
  for (Index y = y0; y < y0 + bh; ++y)
    for (Index x = x0; x < x0 + bw; ++x) b.set(x, y);
  return b;
}

Points regular_polygon(Index n, double radius) {
  Points p(n, 2);
  for (Index i = 0; i < n; ++i) {
    const double t = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n);
    p(i, 0) = radius * std::cos(t);
    p(i, 1) = radius * std::sin(t);
  }
  return p;
}

// Star-shaped random polygon, counter-clockwise.
Points random_polygon(std::mt19937_64& rng, Index n) {
  std::uniform_real_distribution<double> r(0.5, 2.0);
  Points p(n, 2);
  for (Index i = 0; i < n; ++i) {
    const double t = 2.0 * std::numbers::pi * (static_cast<double>(i) + 0.3) / static_cast<double>(n);
    const double rad = r(rng);
    p(i, 0) = rad * std::cos(t);
    p(i, 1) = rad * std::sin(t);
  }
  return p;
}

bool is_cyclic_shift(const Points& a, const Points& b, double tol) {
  if (a.rows() != b.rows()) return false;
  for (Index s = 0; s < a.rows(); ++s) {
    if ((roll(a, s) - b).cwiseAbs().maxCoeff() < tol) return true;
  }
  return false;
}

}  // namespace

TEST_CASE("binarize threshold convention") {
  GrayImage img{3, 1, {0, 128, 255}};
  const Bitmap b = binarize(img);
  CHECK(!b.at(0, 0));
  CHECK(b.at(1, 0));
  CHECK(b.at(2, 0));
  CHECK(binarize(GrayImage{2, 2, {0, 0, 0, 0}}).count() == 0);
  CHECK(binarize(GrayImage{2, 2, {255, 255, 255, 255}}).count() == 4);
  CHECK(binarize(img, 200).count() == 1);
}

TEST_CASE("trace: central 2x2 block") {
  const ContourPoints c = trace_outer_contour(filled_rect(4, 4, 1, 1, 2, 2));
  PixelPoints expected(4, 2);
  expected << 1, 1, 2, 1, 2, 2, 1, 2;
  CHECK(c.points == expected);
  CHECK(check_contour(c).empty());
}

TEST_CASE("trace: rectangle border length") {
  for (Index w = 2; w <= 12; ++w) {
    for (Index h = 2; h <= 12; ++h) {
      const ContourPoints c = trace_outer_contour(filled_rect(16, 16, 2, 1, w, h));
      CHECK(c.size() == 2 * (w + h) - 4);
      CHECK(check_contour(c).empty());
    }
  }
}

TEST_CASE("trace: degenerate and empty inputs") {
  Bitmap one(5, 5);
  one.set(2, 2);
  CHECK_THROWS_AS(trace_outer_contour(one), ExtractionError);
  try {
    trace_outer_contour(Bitmap(5, 5));
  } catch (const ExtractionError& e) {
    CHECK(e.reason() == "empty");
  }
  try {
    trace_outer_contour(one);
  } catch (const ExtractionError& e) {
    CHECK(e.reason() == "degenerate");
  }
}

TEST_CASE("trace: thin line walks out and back") {
  Bitmap line(6, 3);
  for (Index x = 1; x <= 3; ++x) line.set(x, 1);
  const ContourPoints c = trace_outer_contour(line);
  CHECK(c.size() == 4);
  CHECK(check_contour(c).empty());
}

TEST_CASE("trace: largest component wins and holes are ignored") {
  Bitmap b = filled_rect(20, 20, 2, 2, 8, 8);
  b.set(5, 5, false);  // hole
  b.set(15, 15);
  b.set(16, 15);
  b.set(15, 16);
  const ContourPoints c = trace_outer_contour(b);
  CHECK(c.size() == 28);
  for (Index i = 0; i < c.size(); ++i) CHECK(c.points(i, 0) < 10);
}

TEST_CASE("trace: 180 degree rotation gives a cyclic shift of the polar encoding") {
  Bitmap b(12, 12);
  // An L shape plus a diagonal notch.
  for (Index y = 2; y < 10; ++y) b.set(2, y), b.set(3, y);
  for (Index x = 2; x < 9; ++x) b.set(x, 8), b.set(x, 9);
  b.set(4, 7);
  b.set(5, 7);
  Bitmap r(12, 12);
  for (Index y = 0; y < 12; ++y)
    for (Index x = 0; x < 12; ++x)
      if (b.at(x, y)) r.set(11 - x, 11 - y);
  const PolarContour pa = encode_polar(trace_outer_contour(b));
  const PolarContour pb = encode_polar(trace_outer_contour(r));
  CHECK(is_cyclic_shift(pa.vertices, pb.vertices, 1e-12));
}

TEST_CASE("cartesian encoding") {
  ContourPoints c;
  c.width = c.height = 28;
  c.points.resize(3, 2);
  c.points << 0, 0, 27, 27, 13, 27;
  const CartesianContour e = encode_cartesian(c);
  CHECK(e.vertices(0, 0) == 0.0);
  CHECK(e.vertices(0, 1) == 0.0);
  CHECK(e.vertices(1, 0) == 1.0);
  CHECK(e.vertices(1, 1) == 1.0);
  CHECK(e.vertices(2, 0) == doctest::Approx(0.48148148148));
  CHECK(decode_cartesian(e, 28, 28).points == c.points);

  ContourPoints thin = c;
  thin.width = 1;
  CHECK_THROWS_AS(encode_cartesian(thin), UsageError);
}

TEST_CASE("cartesian decode is exact on every pixel") {
  ContourPoints c;
  c.width = 28;
  c.height = 17;
  c.points.resize(28 * 17, 2);
  for (int y = 0; y < 17; ++y)
    for (int x = 0; x < 28; ++x) c.points.row(y * 28 + x) << x, y;
  CHECK(decode_cartesian(encode_cartesian(c), 28, 17).points == c.points);
}

TEST_CASE("polar encoding: square and hexagon") {
  Points sq(4, 2);
  sq << 0, 0, 1, 0, 1, 1, 0, 1;
  const Points p = polar_encoding(sq);
  for (Index i = 0; i < 4; ++i) {
    CHECK(p(i, 0) == doctest::Approx(std::numbers::pi / 2));
    CHECK(p(i, 1) == doctest::Approx(0.25));
  }
  const Points h = polar_encoding(regular_polygon(6, 3.0));
  for (Index i = 0; i < 6; ++i) {
    CHECK(h(i, 0) == doctest::Approx(std::numbers::pi / 3));
    CHECK(h(i, 1) == doctest::Approx(1.0 / 6));
  }
}

TEST_CASE("polar encoding: errors") {
  Points dup(4, 2);
  dup << 0, 0, 1, 0, 1, 0, 0, 1;
  CHECK_THROWS_AS(polar_encoding(dup), UsageError);
  CHECK_THROWS_AS(polar_encoding(Points(2, 2)), UsageError);
}

TEST_CASE("polar encoding: rigid motion and scale invariance") {
  std::mt19937_64 rng(30);
  std::uniform_real_distribution<double> u(-5, 5);
  for (int t = 0; t < 50; ++t) {
    const Points p = random_polygon(rng, 5 + t % 20);
    const Points q = transform_points(p, u(rng), 0.1 + std::abs(u(rng)), Eigen::Vector2d(u(rng), u(rng)));
    const Points a = polar_encoding(p);
    const Points b = polar_encoding(q);
    CHECK((a - b).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(std::abs(a.col(1).sum() - 1.0) < 1e-9);
    CHECK(a.col(0).cwiseAbs().maxCoeff() <= std::numbers::pi);
  }
}

TEST_CASE("reconstruct_points") {
  Points sq(4, 2);
  sq << 0, 0, 1, 0, 1, 1, 0, 1;
  const Points r = reconstruct_points(polar_encoding(sq), Eigen::Vector2d::Zero(), 0.0, 4.0);
  CHECK((r - sq).cwiseAbs().maxCoeff() < 1e-9);

  Points straight = Points::Zero(5, 2);
  straight.col(1).setConstant(0.2);
  const Points line = reconstruct_points(straight, Eigen::Vector2d(1, 1), 0.5, 10.0);
  for (Index i = 1; i < 5; ++i) {
    const Eigen::Vector2d d = (line.row(i) - line.row(0)).transpose();
    CHECK(std::abs(std::atan2(d(1), d(0)) - 0.5) < 1e-12);
  }

  std::mt19937_64 rng(31);
  for (int t = 0; t < 50; ++t) {
    const Points p = random_polygon(rng, 3 + t % 30);
    const Points enc = polar_encoding(p);
    const Points back = reconstruct_points(enc, Eigen::Vector2d(0.3, -2), 1.1, 7.0);
    CHECK((polar_encoding(back) - enc).cwiseAbs().maxCoeff() < 1e-6);
  }
}
