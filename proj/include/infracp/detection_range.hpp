#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

#include "infracp/geometry.hpp"

namespace infracp {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  double extent() const { return hi - lo; }
  bool contains(double v) const { return v >= lo && v <= hi; }
  friend bool operator==(const Interval&, const Interval&) = default;
};

enum class RangeShape { Rectangle, Square };

inline std::string to_string(RangeShape s) { return s == RangeShape::Rectangle ? "Rectangle" : "Square"; }

inline RangeShape range_shape_from_string(const std::string& s) {
  if (s == "Rectangle") return RangeShape::Rectangle;
  if (s == "Square") return RangeShape::Square;
  throw std::invalid_argument("unknown range shape: " + s);
}

/// Axis-aligned region of the ego sensor frame inside which objects are
/// predicted and scored.
struct DetectionRange {
  Interval x;
  Interval y;
  Interval z;
  RangeShape shape = RangeShape::Rectangle;

  static DetectionRange make(Interval x, Interval y, Interval z, RangeShape shape) {
    if (!(x.hi > x.lo && y.hi > y.lo && z.hi > z.lo)) throw std::invalid_argument("DetectionRange: empty interval");
    if (shape == RangeShape::Square && std::abs(x.extent() - y.extent()) > 1e-9)
      throw std::invalid_argument("DetectionRange: square range needs equal x and y extents");
    return {x, y, z, shape};
  }

  bool contains_xy(double px, double py) const { return x.contains(px) && y.contains(py); }
  bool contains(Vec3 p) const { return x.contains(p.x) && y.contains(p.y) && z.contains(p.z); }

  friend bool operator==(const DetectionRange&, const DetectionRange&) = default;
};

// Published ranges. z is relative to the ego sensor, so the infrastructure
// intervals sit lower to account for its elevated mount.
namespace ranges {

inline constexpr Interval kVehicleZ{-3.0, 1.0};
inline constexpr Interval kInfraZ{-5.0, -1.0};
inline constexpr Interval kSimVehicleZ{-3.0, 2.0};
inline constexpr Interval kSimInfraZ{-8.5, -3.5};

inline DetectionRange rectangle(Interval z) {
  return DetectionRange::make({-140.8, 140.8}, {-38.4, 38.4}, z, RangeShape::Rectangle);
}
inline DetectionRange square(Interval z) {
  return DetectionRange::make({-76.8, 76.8}, {-76.8, 76.8}, z, RangeShape::Square);
}
inline DetectionRange sim_square(Interval z) {
  return DetectionRange::make({-32.0, 32.0}, {-32.0, 32.0}, z, RangeShape::Square);
}

}  // namespace ranges

}  // namespace infracp
