#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "infracp/geometry.hpp"
#include "oracles.hpp"

using namespace infracp;

namespace {

Vec3 random_point(std::mt19937_64& g, double r = 50.0) {
  return {oracle::uni(g, -r, r), oracle::uni(g, -r, r), oracle::uni(g, -r, r)};
}

Pose random_pose(std::mt19937_64& g) {
  return Pose(oracle::uni(g, -100, 100), oracle::uni(g, -100, 100), oracle::uni(g, -5, 5), oracle::uni(g, -4, 4));
}

}  // namespace

TEST(Pose, YawIsNormalized) {
  EXPECT_NEAR(Pose(0, 0, 0, 3 * kPi).yaw, kPi, 1e-12);
  EXPECT_NEAR(Pose(0, 0, 0, -kPi).yaw, kPi, 1e-12);
  EXPECT_NEAR(Pose(0, 0, 0, 0.25).yaw, 0.25, 0.0);
}

TEST(Pose, RejectsNonFinite) { EXPECT_THROW(Pose(NAN, 0, 0, 0), std::invalid_argument); }

TEST(Pose, ToFrameAndBackRoundTrips) {
  std::mt19937_64 g(11);
  for (int trial = 0; trial < 200; ++trial) {
    const Pose a = random_pose(g), b = random_pose(g);
    std::vector<Vec3> pts;
    for (int i = 0; i < 20; ++i) pts.push_back(random_point(g));
    const auto there = transform_to_frame(pts, a, b);
    const auto back = transform_to_frame(there, b, a);
    for (std::size_t i = 0; i < pts.size(); ++i) {
      EXPECT_NEAR(back[i].x, pts[i].x, 1e-9);
      EXPECT_NEAR(back[i].y, pts[i].y, 1e-9);
      EXPECT_NEAR(back[i].z, pts[i].z, 1e-9);
    }
  }
}

TEST(Pose, TransformAgreesWithParentComposition) {
  std::mt19937_64 g(12);
  for (int trial = 0; trial < 100; ++trial) {
    const Pose a = random_pose(g), b = random_pose(g);
    const Vec3 p = random_point(g);
    const Vec3 want = b.to_local(a.to_parent(p));
    const Vec3 got = transform_to_frame(std::vector<Vec3>{p}, a, b)[0];
    EXPECT_NEAR(got.x, want.x, 1e-9);
    EXPECT_NEAR(got.y, want.y, 1e-9);
    EXPECT_NEAR(got.z, want.z, 1e-9);
  }
}

TEST(Box, TransformRoundTrips) {
  std::mt19937_64 g(13);
  for (int trial = 0; trial < 100; ++trial) {
    const Pose a = random_pose(g), b = random_pose(g);
    const OrientedBox3D box = oracle::random_box(g, 20.0);
    const OrientedBox3D back = transform_box(transform_box(box, a, b), b, a);
    EXPECT_NEAR(back.center.x, box.center.x, 1e-9);
    EXPECT_NEAR(back.center.y, box.center.y, 1e-9);
    EXPECT_NEAR(back.center.z, box.center.z, 1e-9);
    EXPECT_NEAR(normalize_angle(back.yaw - box.yaw), 0.0, 1e-9);
  }
}

TEST(Box, RejectsBadSizesAndConfidence) {
  EXPECT_THROW(OrientedBox3D::make({}, 0.0, 1, 1, 0), std::invalid_argument);
  EXPECT_THROW(OrientedBox3D::make({}, 1, 1, -1, 0), std::invalid_argument);
  EXPECT_THROW(OrientedBox3D::make({}, 1, 1, 1, 0, Label::Vehicle, 1.5), std::invalid_argument);
}

TEST(Box, ContainsMatchesFootprintOracle) {
  std::mt19937_64 g(14);
  for (int trial = 0; trial < 50; ++trial) {
    const OrientedBox3D b = oracle::random_box(g);
    const oracle::Footprint fp(b);
    for (int i = 0; i < 200; ++i) {
      const double x = oracle::uni(g, -6, 6), y = oracle::uni(g, -6, 6);
      EXPECT_EQ(b.contains({x, y, b.center.z}), fp.contains(x, y));
    }
  }
}

// ---------------------------------------------------------------------------
// BEV IoU

TEST(BevIou, IdenticalAndDisjoint) {
  const auto a = OrientedBox3D::make({0, 0, 0}, 2, 4, 1, 0.3);
  EXPECT_NEAR(bev_iou(a, a), 1.0, 1e-12);
  const auto far = OrientedBox3D::make({50, 0, 0}, 2, 4, 1, 0.3);
  EXPECT_EQ(bev_iou(a, far), 0.0);
}

TEST(BevIou, TouchingEdgesGiveZero) {
  const auto a = OrientedBox3D::make({0, 0, 0}, 2, 2, 1, 0);
  const auto b = OrientedBox3D::make({2, 0, 0}, 2, 2, 1, 0);
  EXPECT_NEAR(bev_iou(a, b), 0.0, 1e-12);
}

TEST(BevIou, IgnoresHeightAndZ) {
  const auto a = OrientedBox3D::make({0, 0, 0}, 2, 4, 1, 0.2);
  const auto b = OrientedBox3D::make({0.5, 0.2, 10}, 2, 4, 7, 0.4);
  auto b_flat = b;
  b_flat.center.z = 0;
  b_flat.height = 1;
  EXPECT_DOUBLE_EQ(bev_iou(a, b), bev_iou(a, b_flat));
}

TEST(BevIou, RotatedSquareMatchesClosedFormAndSampling) {
  // Square and the same square turned 45 degrees: the overlap is a regular
  // octagon of area 8(sqrt2 - 1), so IoU = 1/sqrt2.
  const auto a = OrientedBox3D::make({0, 0, 0}, 2, 2, 1, 0);
  const auto b = OrientedBox3D::make({0, 0, 0}, 2, 2, 1, kPi / 4);
  EXPECT_NEAR(bev_iou(a, b), 1.0 / std::sqrt(2.0), 1e-12);
  EXPECT_NEAR(bev_iou(a, b), oracle::sampled_iou(a, b), 1e-3);
}

TEST(BevIou, SymmetricAndBounded) {
  std::mt19937_64 g(15);
  for (int trial = 0; trial < 500; ++trial) {
    const auto a = oracle::random_box(g, 1.5), b = oracle::random_box(g, 1.5);
    const double ab = bev_iou(a, b);
    EXPECT_DOUBLE_EQ(ab, bev_iou(b, a));
    EXPECT_GE(ab, 0.0);
    EXPECT_LE(ab, 1.0);
  }
}

TEST(BevIou, MatchesSampledAreaOn200Pairs) {
  std::mt19937_64 g(16);
  for (int trial = 0; trial < 200; ++trial) {
    const auto a = oracle::random_box(g, 1.0), b = oracle::random_box(g, 1.0);
    EXPECT_NEAR(bev_iou(a, b), oracle::sampled_iou(a, b), 1e-3) << "pair " << trial;
  }
}

// ---------------------------------------------------------------------------
// Hulls and rectangles

TEST(Hull, DropsInteriorAndCollinearPoints) {
  std::vector<Vec2> pts{{0, 0}, {2, 0}, {2, 2}, {0, 2}, {1, 1}, {1, 0}, {0.5, 1.5}};
  const Polygon h = convex_hull(pts);
  EXPECT_EQ(h.size(), 4u);
  EXPECT_NEAR(signed_area(h), 4.0, 1e-12);
}

TEST(MinAreaRect, RecoversRotatedRectangle) {
  std::mt19937_64 g(17);
  for (int trial = 0; trial < 50; ++trial) {
    const auto b = oracle::random_box(g);
    const auto c = b.bev_corners();
    std::vector<Vec2> pts(c.begin(), c.end());
    for (int i = 0; i < 30; ++i) {  // interior filler
      const double u = oracle::uni(g, 0, 1), v = oracle::uni(g, 0, 1);
      pts.push_back(c[0] + u * (c[1] - c[0]) + v * (c[3] - c[0]));
    }
    const Rect2 r = min_area_rect(pts);
    EXPECT_NEAR(r.extent_major * r.extent_minor, b.length * b.width, 1e-9);
    EXPECT_NEAR(r.center.x, b.center.x, 1e-9);
    EXPECT_NEAR(r.center.y, b.center.y, 1e-9);
  }
}

TEST(MinAreaRect, NoSweptOrientationDoesBetter) {
  // Oracle: bounding rectangles at 3600 sampled orientations.
  std::mt19937_64 g(18);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<Vec2> pts;
    for (int i = 0; i < 12; ++i) pts.push_back({oracle::uni(g, -3, 3), oracle::uni(g, -1, 1)});
    const Rect2 r = min_area_rect(pts);
    double best = std::numeric_limits<double>::infinity();
    for (int k = 0; k < 3600; ++k) {
      const double th = kPi * k / 3600.0;
      const Vec2 u{std::cos(th), std::sin(th)}, v{-u.y, u.x};
      double u0 = 1e300, u1 = -1e300, v0 = 1e300, v1 = -1e300;
      for (const Vec2& p : pts) {
        u0 = std::min(u0, dot(p, u)), u1 = std::max(u1, dot(p, u));
        v0 = std::min(v0, dot(p, v)), v1 = std::max(v1, dot(p, v));
      }
      best = std::min(best, (u1 - u0) * (v1 - v0));
    }
    EXPECT_LE(r.extent_major * r.extent_minor, best + 1e-9);
    EXPECT_GE(r.extent_major * r.extent_minor, best - 0.05 * best);
    EXPECT_GE(r.extent_major, r.extent_minor);
  }
}

TEST(MinAreaRect, DegenerateInputs) {
  std::vector<Vec2> one{{1, 2}};
  EXPECT_EQ(min_area_rect(one).extent_major, 0.0);
  std::vector<Vec2> line{{0, 0}, {1, 1}, {3, 3}};
  const Rect2 r = min_area_rect(line);
  EXPECT_NEAR(r.extent_major, 3 * std::sqrt(2.0), 1e-12);
  EXPECT_EQ(r.extent_minor, 0.0);
  EXPECT_THROW(min_area_rect(std::vector<Vec2>{}), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Rays

TEST(Ray, RejectsZeroDirection) { EXPECT_THROW(Ray::make({}, {0, 0, 0}), std::invalid_argument); }

TEST(Ray, AxisAlignedHit) {
  const auto box = OrientedBox3D::make({10, 0, 0}, 2, 2, 2, 0);
  const auto t = ray_box_intersect(Ray::make({0, 0, 0}, {1, 0, 0}), box);
  ASSERT_TRUE(t);
  EXPECT_NEAR(*t, 9.0, 1e-12);
  EXPECT_FALSE(ray_box_intersect(Ray::make({0, 0, 0}, {-1, 0, 0}), box));
  EXPECT_FALSE(ray_box_intersect(Ray::make({0, 5, 0}, {1, 0, 0}), box));
}

TEST(Ray, StartingInsideReportsExit) {
  const auto box = OrientedBox3D::make({0, 0, 0}, 2, 4, 2, 0);
  const auto t = ray_box_intersect(Ray::make({0, 0, 0}, {1, 0, 0}), box);
  ASSERT_TRUE(t);
  EXPECT_NEAR(*t, 2.0, 1e-12);
}

TEST(Ray, MatchesRayMarchOn1000Pairs) {
  std::mt19937_64 g(19);
  int hits = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto box = oracle::random_box(g, 5.0);
    const Vec3 origin{oracle::uni(g, -15, 15), oracle::uni(g, -15, 15), oracle::uni(g, -3, 5)};
    Vec3 target = box.center;
    if (trial % 2) target = target + Vec3{oracle::uni(g, -3, 3), oracle::uni(g, -3, 3), oracle::uni(g, -2, 2)};
    if (norm(target - origin) < 1e-6) continue;
    const Ray ray = Ray::make(origin, target - origin);
    const auto got = ray_box_intersect(ray, box);
    const auto want = oracle::march(ray.origin, ray.direction, box, 60.0, 1e-3);
    ASSERT_EQ(got.has_value(), want.has_value()) << "trial " << trial;
    if (got) {
      ++hits;
      EXPECT_NEAR(*got, *want, 1e-3) << "trial " << trial;
    }
  }
  EXPECT_GT(hits, 400);
}

// ---------------------------------------------------------------------------
// NMS

TEST(Nms, MatchesQuadraticReferenceOn100Sets) {
  std::mt19937_64 g(20);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = static_cast<int>(oracle::uni(g, 0, 16));
    std::vector<OrientedBox3D> boxes;
    for (int i = 0; i < n; ++i) {
      auto b = oracle::random_box(g, 2.0);
      if (i % 4 == 3) b.confidence = boxes.front().confidence;  // exercise ties
      boxes.push_back(b);
    }
    const double thr = oracle::uni(g, 0.05, 0.7);
    EXPECT_EQ(nms(boxes, thr), oracle::reference_nms(boxes, thr)) << "set " << trial;
  }
}

TEST(Nms, SurvivorsAreSeparatedAndOrdered) {
  std::mt19937_64 g(21);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<OrientedBox3D> boxes;
    for (int i = 0; i < 12; ++i) boxes.push_back(oracle::random_box(g, 2.0));
    const auto kept = nms(boxes, 0.3);
    for (std::size_t i = 0; i < kept.size(); ++i)
      for (std::size_t j = i + 1; j < kept.size(); ++j) {
        EXPECT_LT(bev_iou(kept[i], kept[j]), 0.3);
        EXPECT_GE(kept[i].confidence, kept[j].confidence);
      }
  }
}

TEST(Nms, RejectsBadThreshold) {
  EXPECT_THROW(nms(std::vector<OrientedBox3D>{}, 0.0), std::invalid_argument);
  EXPECT_THROW(nms(std::vector<OrientedBox3D>{}, 1.0), std::invalid_argument);
}
