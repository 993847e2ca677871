#pragma once

// Geometric primitives shared by every stage of the pipeline: poses, oriented
// boxes, rays, bird's-eye-view (BEV) polygon overlap and suppression.
//
// Frames follow the usual right-handed convention with +z up. A Pose places a
// local frame in its parent frame: local +x is rotated by `yaw` about +z and
// the origin sits at (x, y, z).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

namespace infracp {

inline constexpr double kPi = std::numbers::pi;

inline double deg_to_rad(double deg) { return deg * kPi / 180.0; }
inline double rad_to_deg(double rad) { return rad * 180.0 / kPi; }

/// Wraps an angle into (-pi, pi].
inline double normalize_angle(double a) {
  if (!std::isfinite(a)) throw std::invalid_argument("normalize_angle: non-finite angle");
  if (a > -kPi && a <= kPi) return a;
  double r = std::remainder(a, 2.0 * kPi);  // in [-pi, pi]
  if (r <= -kPi) r += 2.0 * kPi;
  return r;
}

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  friend bool operator==(const Vec2&, const Vec2&) = default;
};

inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  friend Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
  friend Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
  friend Vec3 operator*(double s, Vec3 a) { return {s * a.x, s * a.y, s * a.z}; }
  friend bool operator==(const Vec3&, const Vec3&) = default;
};

inline double dot(Vec3 a, Vec3 b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline double norm(Vec3 a) { return std::sqrt(dot(a, a)); }

/// Rigid placement of a frame: translation plus rotation about +z.
struct Pose {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double yaw = 0.0;  // radians, kept in (-pi, pi]

  Pose() = default;
  Pose(double x_, double y_, double z_, double yaw_) : x(x_), y(y_), z(z_), yaw(normalize_angle(yaw_)) {
    if (!std::isfinite(x) || !std::isfinite(y) || !std::isfinite(z))
      throw std::invalid_argument("Pose: non-finite coordinate");
  }

  Vec3 position() const { return {x, y, z}; }

  /// Maps a point expressed in this frame into the parent frame.
  Vec3 to_parent(Vec3 p) const {
    const double c = std::cos(yaw), s = std::sin(yaw);
    return {c * p.x - s * p.y + x, s * p.x + c * p.y + y, p.z + z};
  }

  /// Maps a parent-frame point into this frame.
  Vec3 to_local(Vec3 p) const {
    const double c = std::cos(yaw), s = std::sin(yaw);
    const double dx = p.x - x, dy = p.y - y;
    return {c * dx + s * dy, -s * dx + c * dy, p.z - z};
  }

  friend bool operator==(const Pose&, const Pose&) = default;
};

/// Re-expresses points given in the `from` frame in the `to` frame. Both poses
/// are relative to the same parent (world) frame.
inline std::vector<Vec3> transform_to_frame(std::span<const Vec3> points, const Pose& from, const Pose& to) {
  std::vector<Vec3> out;
  out.reserve(points.size());
  if (from == to) {
    out.assign(points.begin(), points.end());
    return out;
  }
  // Compose once: p_to = R(-to.yaw) (R(from.yaw) p + t_from - t_to)
  const double dyaw = from.yaw - to.yaw;
  const double c = std::cos(dyaw), s = std::sin(dyaw);
  const double ct = std::cos(to.yaw), st = std::sin(to.yaw);
  const double dx = from.x - to.x, dy = from.y - to.y;
  const double tx = ct * dx + st * dy;
  const double ty = -st * dx + ct * dy;
  const double tz = from.z - to.z;
  for (const Vec3& p : points) out.push_back({c * p.x - s * p.y + tx, s * p.x + c * p.y + ty, p.z + tz});
  return out;
}

enum class Label { Vehicle, NotVehicle };

inline std::string to_string(Label l) { return l == Label::Vehicle ? "Vehicle" : "NotVehicle"; }

/// Object hypothesis as produced by the detection head: center, size, heading
/// and label. `length` runs along the heading, `width` across it.
struct OrientedBox3D {
  Vec3 center;
  double width = 1.0;
  double length = 1.0;
  double height = 1.0;
  double yaw = 0.0;
  Label label = Label::Vehicle;
  double confidence = 1.0;

  static OrientedBox3D make(Vec3 center, double width, double length, double height, double yaw,
                            Label label = Label::Vehicle, double confidence = 1.0) {
    if (!(width > 0.0 && length > 0.0 && height > 0.0))
      throw std::invalid_argument("OrientedBox3D: sizes must be positive");
    if (!(confidence >= 0.0 && confidence <= 1.0))
      throw std::invalid_argument("OrientedBox3D: confidence outside [0,1]");
    return {center, width, length, height, normalize_angle(yaw), label, confidence};
  }

  /// Footprint corners, counter-clockwise.
  std::array<Vec2, 4> bev_corners() const {
    const double c = std::cos(yaw), s = std::sin(yaw);
    const double hl = 0.5 * length, hw = 0.5 * width;
    const Vec2 ax{c * hl, s * hl};
    const Vec2 ay{-s * hw, c * hw};
    const Vec2 o{center.x, center.y};
    return {o + ax - ay, o + ax + ay, o - ax + ay, o - ax - ay};
  }

  double bev_area() const { return width * length; }

  /// Point containment with every half-extent grown by `margin`.
  bool contains(Vec3 p, double margin = 0.0) const {
    const double c = std::cos(yaw), s = std::sin(yaw);
    const double dx = p.x - center.x, dy = p.y - center.y;
    const double lx = c * dx + s * dy;
    const double ly = -s * dx + c * dy;
    return std::abs(lx) <= 0.5 * length + margin && std::abs(ly) <= 0.5 * width + margin &&
           std::abs(p.z - center.z) <= 0.5 * height + margin;
  }

  friend bool operator==(const OrientedBox3D&, const OrientedBox3D&) = default;
};

/// Re-expresses a box given in the `from` frame in the `to` frame.
inline OrientedBox3D transform_box(const OrientedBox3D& b, const Pose& from, const Pose& to) {
  OrientedBox3D out = b;
  out.center = to.to_local(from.to_parent(b.center));
  out.yaw = normalize_angle(b.yaw + from.yaw - to.yaw);
  return out;
}

struct Ray {
  Vec3 origin;
  Vec3 direction;  // unit length

  static Ray make(Vec3 origin, Vec3 direction) {
    const double n = norm(direction);
    if (!(n > 0.0) || !std::isfinite(n)) throw std::invalid_argument("Ray: zero or non-finite direction");
    return {origin, (1.0 / n) * direction};
  }

  Vec3 at(double t) const { return origin + t * direction; }
};

// ---------------------------------------------------------------------------
// Polygons

using Polygon = std::vector<Vec2>;

/// Shoelace area; positive for counter-clockwise vertex order.
inline double signed_area(std::span<const Vec2> poly) {
  const std::size_t n = poly.size();
  if (n < 3) return 0.0;
  double a = 0.0;
  for (std::size_t i = 0; i < n; ++i) a += cross(poly[i], poly[(i + 1) % n]);
  return 0.5 * a;
}

/// Sutherland-Hodgman: clips `subject` against the convex counter-clockwise
/// polygon `clip`.
inline Polygon clip_convex(const Polygon& subject, std::span<const Vec2> clip) {
  Polygon out = subject;
  const std::size_t m = clip.size();
  for (std::size_t e = 0; e < m && !out.empty(); ++e) {
    const Vec2 a = clip[e];
    const Vec2 b = clip[(e + 1) % m];
    const Vec2 edge = b - a;
    Polygon in;
    in.swap(out);
    const std::size_t n = in.size();
    for (std::size_t i = 0; i < n; ++i) {
      const Vec2 p = in[i];
      const Vec2 q = in[(i + 1) % n];
      const double sp = cross(edge, p - a);
      const double sq = cross(edge, q - a);
      if (sp >= 0.0) out.push_back(p);
      if ((sp >= 0.0) != (sq >= 0.0)) {
        const double t = sp / (sp - sq);
        out.push_back(p + t * (q - p));
      }
    }
  }
  return out;
}

inline double bev_intersection_area(const OrientedBox3D& a, const OrientedBox3D& b) {
  const auto ca = a.bev_corners();
  const auto cb = b.bev_corners();
  const Polygon inter = clip_convex(Polygon(ca.begin(), ca.end()), cb);
  return std::max(0.0, signed_area(inter));
}

/// Intersection-over-union of the two footprints.
inline double bev_iou(const OrientedBox3D& a, const OrientedBox3D& b) {
  // Order the arguments canonically so iou(a,b) and iou(b,a) take the same path.
  const bool swap = std::tie(b.center.x, b.center.y, b.yaw, b.length, b.width) <
                    std::tie(a.center.x, a.center.y, a.yaw, a.length, a.width);
  const OrientedBox3D& p = swap ? b : a;
  const OrientedBox3D& q = swap ? a : b;
  const double inter = bev_intersection_area(p, q);
  if (inter <= 0.0) return 0.0;
  const double uni = p.bev_area() + q.bev_area() - inter;
  return std::clamp(inter / uni, 0.0, 1.0);
}

/// Andrew's monotone chain. Returns the hull counter-clockwise without the
/// closing vertex; collinear points are dropped.
inline Polygon convex_hull(std::vector<Vec2> pts) {
  std::sort(pts.begin(), pts.end(), [](Vec2 a, Vec2 b) { return a.x < b.x || (a.x == b.x && a.y < b.y); });
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() < 3) return pts;
  Polygon hull(2 * pts.size());
  std::size_t k = 0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    while (k >= 2 && cross(hull[k - 1] - hull[k - 2], pts[i] - hull[k - 2]) <= 0.0) --k;
    hull[k++] = pts[i];
  }
  for (std::size_t i = pts.size() - 1, t = k + 1; i > 0; --i) {
    while (k >= t && cross(hull[k - 1] - hull[k - 2], pts[i - 1] - hull[k - 2]) <= 0.0) --k;
    hull[k++] = pts[i - 1];
  }
  hull.resize(k - 1);
  return hull;
}

struct Rect2 {
  Vec2 center;
  Vec2 axis;          // unit vector along `extent_major`
  double extent_major = 0.0;  // full side length along `axis`
  double extent_minor = 0.0;  // full side length across `axis`
};

/// Enclosing rectangles flush with each hull edge, the candidate set of the
/// rotating-calipers method. Degenerate inputs (one point, collinear points)
/// yield a single zero-width rectangle.
inline std::vector<Rect2> caliper_rects(std::span<const Vec2> points) {
  if (points.empty()) throw std::invalid_argument("caliper_rects: no points");
  const Polygon hull = convex_hull(std::vector<Vec2>(points.begin(), points.end()));
  if (hull.size() == 1) return {{hull[0], {1.0, 0.0}, 0.0, 0.0}};
  if (hull.size() == 2) {
    const Vec2 d = hull[1] - hull[0];
    const double len = norm(d);
    return {{0.5 * (hull[0] + hull[1]), (1.0 / len) * d, len, 0.0}};
  }
  std::vector<Rect2> out;
  const std::size_t n = hull.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 e = hull[(i + 1) % n] - hull[i];
    const double len = norm(e);
    if (len == 0.0) continue;
    const Vec2 u = (1.0 / len) * e;
    const Vec2 v{-u.y, u.x};
    double umin = std::numeric_limits<double>::infinity(), umax = -umin;
    double vmin = umin, vmax = -umin;
    for (const Vec2& p : hull) {
      const double pu = dot(p, u), pv = dot(p, v);
      umin = std::min(umin, pu);
      umax = std::max(umax, pu);
      vmin = std::min(vmin, pv);
      vmax = std::max(vmax, pv);
    }
    const Vec2 c = (0.5 * (umin + umax)) * u + (0.5 * (vmin + vmax)) * v;
    if (umax - umin >= vmax - vmin)
      out.push_back({c, u, umax - umin, vmax - vmin});
    else
      out.push_back({c, v, vmax - vmin, umax - umin});
  }
  return out;
}

/// Minimum-area enclosing rectangle by rotating calipers over the hull edges.
/// Ties go to the first hull edge in counter-clockwise order.
inline Rect2 min_area_rect(std::span<const Vec2> points) {
  const std::vector<Rect2> cands = caliper_rects(points);
  const Rect2* best = &cands.front();
  for (const Rect2& r : cands)
    if (r.extent_major * r.extent_minor < best->extent_major * best->extent_minor - 1e-12) best = &r;
  return *best;
}

// ---------------------------------------------------------------------------
// Rays

namespace detail {

/// Slab test against an axis-aligned box of half-extents `half` centred at the
/// origin, for a ray already expressed in the box frame.
inline std::optional<double> slab_hit(const std::array<double, 3>& o, const std::array<double, 3>& dir,
                                      const std::array<double, 3>& half) {
  double t_near = -std::numeric_limits<double>::infinity();
  double t_far = std::numeric_limits<double>::infinity();
  for (int k = 0; k < 3; ++k) {
    if (dir[k] == 0.0) {
      if (o[k] < -half[k] || o[k] > half[k]) return std::nullopt;
      continue;
    }
    const double inv = 1.0 / dir[k];
    double t0 = (-half[k] - o[k]) * inv;
    double t1 = (half[k] - o[k]) * inv;
    if (t0 > t1) std::swap(t0, t1);
    t_near = std::max(t_near, t0);
    t_far = std::min(t_far, t1);
    if (t_near > t_far) return std::nullopt;
  }
  if (t_far < 0.0) return std::nullopt;
  return t_near >= 0.0 ? t_near : t_far;
}

}  // namespace detail

/// Box with its rotation precomputed, for repeated ray queries.
struct PreparedBox {
  Vec3 center;
  double cos_yaw = 1.0;
  double sin_yaw = 0.0;
  std::array<double, 3> half{};

  explicit PreparedBox(const OrientedBox3D& b)
      : center(b.center),
        cos_yaw(std::cos(b.yaw)),
        sin_yaw(std::sin(b.yaw)),
        half{0.5 * b.length, 0.5 * b.width, 0.5 * b.height} {}

  std::optional<double> hit(const Vec3& origin, const Vec3& direction) const {
    const double dx = origin.x - center.x, dy = origin.y - center.y;
    const std::array<double, 3> o{cos_yaw * dx + sin_yaw * dy, -sin_yaw * dx + cos_yaw * dy, origin.z - center.z};
    const std::array<double, 3> d{cos_yaw * direction.x + sin_yaw * direction.y,
                                  -sin_yaw * direction.x + cos_yaw * direction.y, direction.z};
    return detail::slab_hit(o, d, half);
  }
};

/// Smallest non-negative distance at which `ray` meets the surface of `box`.
/// A ray starting inside the box reports its exit distance.
inline std::optional<double> ray_box_intersect(const Ray& ray, const OrientedBox3D& box) {
  return PreparedBox(box).hit(ray.origin, ray.direction);
}

// ---------------------------------------------------------------------------
// Suppression

/// Greedy non-maximum suppression on BEV IoU. Survivors come out in order of
/// descending confidence; equal confidences keep their input order.
inline std::vector<OrientedBox3D> nms(std::span<const OrientedBox3D> boxes, double iou_threshold) {
  if (!(iou_threshold > 0.0 && iou_threshold < 1.0))
    throw std::invalid_argument("nms: iou_threshold must lie in (0,1)");
  std::vector<std::size_t> order(boxes.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return boxes[a].confidence > boxes[b].confidence; });
  std::vector<OrientedBox3D> kept;
  for (std::size_t idx : order) {
    const OrientedBox3D& cand = boxes[idx];
    bool suppressed = false;
    for (const OrientedBox3D& k : kept) {
      if (bev_iou(k, cand) >= iou_threshold) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(cand);
  }
  return kept;
}

}  // namespace infracp
