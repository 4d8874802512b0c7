#include "contourcnn/contour.hpp"

#include <array>
#include <cmath>
#include <cstdlib>
#include <deque>
#include <string>

namespace contourcnn {

Index Bitmap::count() const {
  Index n = 0;
  for (auto b : bits) n += b != 0;
  return n;
}

Bitmap binarize(const GrayImage& image, int threshold) {
  Bitmap out(image.width, image.height);
  for (std::size_t i = 0; i < image.pixels.size(); ++i) out.bits[i] = image.pixels[i] >= threshold;
  return out;
}

namespace {

// Clockwise on screen (y down), starting west.
constexpr std::array<std::array<int, 2>, 8> kRing = {{
    {-1, 0}, {-1, -1}, {0, -1}, {1, -1}, {1, 0}, {1, 1}, {0, 1}, {-1, 1},
}};

int ring_index(int dx, int dy) {
  for (int k = 0; k < 8; ++k) {
    if (kRing[k][0] == dx && kRing[k][1] == dy) return k;
  }
  return 0;
}

// Largest 8-connected component, ties to the one found first in raster order.
Bitmap largest_component(const Bitmap& bitmap) {
  std::vector<int> label(bitmap.bits.size(), -1);
  int best_label = -1;
  Index best_size = 0;
  int next_label = 0;
  std::deque<std::pair<Index, Index>> queue;
  for (Index y = 0; y < bitmap.height; ++y) {
    for (Index x = 0; x < bitmap.width; ++x) {
      const auto idx = static_cast<std::size_t>(y * bitmap.width + x);
      if (!bitmap.bits[idx] || label[idx] >= 0) continue;
      const int id = next_label++;
      Index size = 0;
      label[idx] = id;
      queue.emplace_back(x, y);
      while (!queue.empty()) {
        const auto [cx, cy] = queue.front();
        queue.pop_front();
        ++size;
        for (const auto& off : kRing) {
          const Index nx = cx + off[0];
          const Index ny = cy + off[1];
          if (!bitmap.at(nx, ny)) continue;
          const auto nidx = static_cast<std::size_t>(ny * bitmap.width + nx);
          if (label[nidx] >= 0) continue;
          label[nidx] = id;
          queue.emplace_back(nx, ny);
        }
      }
      if (size > best_size) {
        best_size = size;
        best_label = id;
      }
    }
  }
  Bitmap out(bitmap.width, bitmap.height);
  for (std::size_t i = 0; i < label.size(); ++i) out.bits[i] = label[i] == best_label && best_label >= 0;
  return out;
}

}  // namespace

ContourPoints trace_outer_contour(const Bitmap& bitmap) {
  if (bitmap.count() == 0) throw ExtractionError("empty", "trace_outer_contour: empty bitmap");
  const Bitmap blob = largest_component(bitmap);

  Index sx = -1, sy = -1;
  for (Index y = 0; y < blob.height && sx < 0; ++y) {
    for (Index x = 0; x < blob.width; ++x) {
      if (blob.at(x, y)) {
        sx = x;
        sy = y;
        break;
      }
    }
  }

  std::vector<std::array<Index, 2>> pts;
  Index cx = sx, cy = sy;
  Index bx = sx - 1, by = sy;  // west of the first pixel in raster order is background
  bool first = true;
  std::array<Index, 2> second{};
  const Index cap = 4 * blob.count() + 8;
  for (Index iter = 0; iter < cap; ++iter) {
    const int start = ring_index(static_cast<int>(bx - cx), static_cast<int>(by - cy));
    int found = -1;
    for (int k = 1; k <= 8; ++k) {
      const int r = (start + k) % 8;
      if (blob.at(cx + kRing[r][0], cy + kRing[r][1])) {
        found = r;
        break;
      }
    }
    if (found < 0) {  // isolated pixel
      pts.push_back({cx, cy});
      break;
    }
    const std::array<Index, 2> nxt{cx + kRing[found][0], cy + kRing[found][1]};
    if (first) {
      second = nxt;
      first = false;
    } else if (cx == sx && cy == sy && nxt == second) {
      break;
    }
    pts.push_back({cx, cy});
    const int prev = (found + 7) % 8;
    bx = cx + kRing[prev][0];
    by = cy + kRing[prev][1];
    cx = nxt[0];
    cy = nxt[1];
  }

  // Drop consecutive duplicates, including across the wrap.
  std::vector<std::array<Index, 2>> dedup;
  for (const auto& p : pts) {
    if (dedup.empty() || dedup.back() != p) dedup.push_back(p);
  }
  while (dedup.size() > 1 && dedup.front() == dedup.back()) dedup.pop_back();

  if (dedup.size() < 3) {
    throw ExtractionError("degenerate", "trace_outer_contour: contour has " +
                                            std::to_string(dedup.size()) + " points, need 3");
  }

  ContourPoints out;
  out.width = bitmap.width;
  out.height = bitmap.height;
  out.points.resize(static_cast<Index>(dedup.size()), 2);
  for (std::size_t i = 0; i < dedup.size(); ++i) {
    out.points(static_cast<Index>(i), 0) = static_cast<int>(dedup[i][0]);
    out.points(static_cast<Index>(i), 1) = static_cast<int>(dedup[i][1]);
  }
  if (signed_area2(out.points) < 0) {
    // Keep the start vertex, reverse the rest.
    out.points.bottomRows(out.points.rows() - 1).colwise().reverseInPlace();
  }
  return out;
}

std::string check_contour(const ContourPoints& contour) {
  const Index n = contour.size();
  if (n < 3) return "contour has " + std::to_string(n) + " points, need at least 3";
  for (Index i = 0; i < n; ++i) {
    const Index j = (i + 1) % n;
    const int dx = std::abs(contour.points(j, 0) - contour.points(i, 0));
    const int dy = std::abs(contour.points(j, 1) - contour.points(i, 1));
    if (dx == 0 && dy == 0) return "repeated point at " + std::to_string(i);
    if (dx > 1 || dy > 1) return "points " + std::to_string(i) + " and " + std::to_string(j) +
                                 " are not 8-neighbours";
  }
  if (signed_area2(contour.points) < 0) return "contour is clockwise";
  return {};
}

CartesianContour encode_cartesian(const ContourPoints& contour) {
  if (contour.width < 2 || contour.height < 2) {
    throw UsageError("encode_cartesian: source dimensions must be at least 2x2");
  }
  CartesianContour out;
  out.vertices = contour.points.cast<double>();
  out.vertices.col(0) /= static_cast<double>(contour.width - 1);
  out.vertices.col(1) /= static_cast<double>(contour.height - 1);
  return out;
}

ContourPoints decode_cartesian(const CartesianContour& contour, Index width, Index height) {
  if (width < 2 || height < 2) throw UsageError("decode_cartesian: dimensions must be at least 2x2");
  ContourPoints out;
  out.width = width;
  out.height = height;
  out.points.resize(contour.vertices.rows(), 2);
  for (Index i = 0; i < contour.vertices.rows(); ++i) {
    out.points(i, 0) = static_cast<int>(std::lround(contour.vertices(i, 0) * static_cast<double>(width - 1)));
    out.points(i, 1) = static_cast<int>(std::lround(contour.vertices(i, 1) * static_cast<double>(height - 1)));
  }
  return out;
}

PolarContour encode_polar(const ContourPoints& contour) { return {polar_encoding(contour.points)}; }

}  // namespace contourcnn
