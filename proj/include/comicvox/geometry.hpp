#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>

namespace comicvox {

/// Axis-aligned box in page pixels, origin top-left. Valid boxes satisfy
/// 0 <= xmin < xmax and 0 <= ymin < ymax.
struct BBox {
  int xmin = 0;
  int ymin = 0;
  int xmax = 0;
  int ymax = 0;

  [[nodiscard]] bool valid() const {
    return xmin >= 0 && ymin >= 0 && xmin < xmax && ymin < ymax;
  }
  [[nodiscard]] int width() const { return xmax - xmin; }
  [[nodiscard]] int height() const { return ymax - ymin; }
  [[nodiscard]] std::int64_t area() const {
    return static_cast<std::int64_t>(width()) * height();
  }
  [[nodiscard]] double cx() const { return (xmin + xmax) / 2.0; }
  [[nodiscard]] double cy() const { return (ymin + ymax) / 2.0; }

  [[nodiscard]] bool contains(double x, double y) const {
    return x >= xmin && x <= xmax && y >= ymin && y <= ymax;
  }

  [[nodiscard]] BBox translated(int dx, int dy) const {
    return {xmin + dx, ymin + dy, xmax + dx, ymax + dy};
  }

  friend bool operator==(const BBox&, const BBox&) = default;
};

inline std::int64_t intersection_area(const BBox& a, const BBox& b) {
  const int w = std::min(a.xmax, b.xmax) - std::max(a.xmin, b.xmin);
  const int h = std::min(a.ymax, b.ymax) - std::max(a.ymin, b.ymin);
  if (w <= 0 || h <= 0) return 0;
  return static_cast<std::int64_t>(w) * h;
}

inline double iou(const BBox& a, const BBox& b) {
  const auto inter = intersection_area(a, b);
  if (inter == 0) return 0.0;
  return static_cast<double>(inter) /
         static_cast<double>(a.area() + b.area() - inter);
}

inline BBox bounding_union(const BBox& a, const BBox& b) {
  return {std::min(a.xmin, b.xmin), std::min(a.ymin, b.ymin),
          std::max(a.xmax, b.xmax), std::max(a.ymax, b.ymax)};
}

inline double center_distance(const BBox& a, const BBox& b) {
  return std::hypot(a.cx() - b.cx(), a.cy() - b.cy());
}

// Zero when the boxes touch or overlap.
inline double edge_distance(const BBox& a, const BBox& b) {
  const int dx = std::max({0, a.xmin - b.xmax, b.xmin - a.xmax});
  const int dy = std::max({0, a.ymin - b.ymax, b.ymin - a.ymax});
  return std::hypot(static_cast<double>(dx), static_cast<double>(dy));
}

/// Squared center distance in half-pixel units. Integer valued, so equal
/// distances compare equal and tie-breaks are exact.
inline std::int64_t center_distance_key(const BBox& a, const BBox& b) {
  const std::int64_t dx = (std::int64_t{a.xmin} + a.xmax) - (std::int64_t{b.xmin} + b.xmax);
  const std::int64_t dy = (std::int64_t{a.ymin} + a.ymax) - (std::int64_t{b.ymin} + b.ymax);
  return dx * dx + dy * dy;
}

/// Squared edge distance in the same units as center_distance_key.
inline std::int64_t edge_distance_key(const BBox& a, const BBox& b) {
  const std::int64_t dx = 2 * std::int64_t{std::max({0, a.xmin - b.xmax, b.xmin - a.xmax})};
  const std::int64_t dy = 2 * std::int64_t{std::max({0, a.ymin - b.ymax, b.ymin - a.ymax})};
  return dx * dx + dy * dy;
}

}  // namespace comicvox
