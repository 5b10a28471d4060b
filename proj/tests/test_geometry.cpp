#include <doctest.h>

#include <stdexcept>

#include <cmath>

#include "ffsim/common.hpp"
#include "ffsim/geometry.hpp"

using namespace ffsim;

namespace {

Box3D make_box(double cx, double cy, double cz, double w, double l, double h,
               double yaw) {
  Box3D b;
  b.cx = cx;
  b.cy = cy;
  b.cz = cz;
  b.w = w;
  b.l = l;
  b.h = h;
  b.yaw = yaw;
  return b;
}

// Independent Monte-Carlo area oracle for BEV IoU: sample the union's
// bounding box, classify each sample against both rectangles directly.
bool inside_rect(const Box3D& b, double x, double y) {
  const double c = std::cos(b.yaw), s = std::sin(b.yaw);
  const double dx = x - b.cx, dy = y - b.cy;
  const double lx = c * dx + s * dy;
  const double ly = -s * dx + c * dy;
  return std::fabs(lx) <= 0.5 * b.l && std::fabs(ly) <= 0.5 * b.w;
}

double mc_bev_iou(const Box3D& a, const Box3D& b, int samples, uint64_t seed) {
  double xmin = 1e18, xmax = -1e18, ymin = 1e18, ymax = -1e18;
  for (const Box3D* bb : {&a, &b}) {
    for (const auto& [x, y] : box_corners_bev(*bb)) {
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
    }
  }
  Rng rng(seed);
  int64_t n_inter = 0, n_union = 0;
  for (int i = 0; i < samples; ++i) {
    const double x = rng.uniform(xmin, xmax);
    const double y = rng.uniform(ymin, ymax);
    const bool ia = inside_rect(a, x, y);
    const bool ib = inside_rect(b, x, y);
    if (ia && ib) ++n_inter;
    if (ia || ib) ++n_union;
  }
  if (n_union == 0) return 0.0;
  return static_cast<double>(n_inter) / static_cast<double>(n_union);
}

}  // namespace

TEST_CASE("pose normalization and inverse") {
  CHECK(normalize_angle(3.0 * kPi) == doctest::Approx(kPi));
  CHECK(normalize_angle(-kPi) == doctest::Approx(kPi));  // (-pi, pi]
  Rng rng(7);
  for (int i = 0; i < 50; ++i) {
    const Pose2 p = make_pose(rng.uniform(-10, 10), rng.uniform(-10, 10),
                              rng.uniform(-4, 4));
    const Pose2 id = compose(p, inverse(p));
    CHECK(std::fabs(id.x) < 1e-9);
    CHECK(std::fabs(id.y) < 1e-9);
    CHECK(std::fabs(normalize_angle(id.yaw)) < 1e-9);
  }
}

TEST_CASE("transform_box basic cases") {
  const Box3D b = make_box(1, 0, 0, 1, 1, 1, 0);
  SUBCASE("identity") {
    const Box3D r = transform_box(b, make_pose(0, 0, 0));
    CHECK(r.cx == doctest::Approx(1.0));
    CHECK(r.cy == doctest::Approx(0.0));
    CHECK(r.yaw == doctest::Approx(0.0));
  }
  SUBCASE("pure translation") {
    const Box3D r = transform_box(b, make_pose(2, 3, 0));
    CHECK(r.cx == doctest::Approx(3.0));
    CHECK(r.cy == doctest::Approx(3.0));
    CHECK(r.cz == doctest::Approx(0.0));
  }
  SUBCASE("90 degree rotation") {
    const Box3D r = transform_box(b, make_pose(0, 0, kPi / 2));
    CHECK(r.cx == doctest::Approx(0.0));
    CHECK(r.cy == doctest::Approx(1.0));
    CHECK(r.yaw == doctest::Approx(kPi / 2));
  }
}

TEST_CASE("transform_box round trip") {
  Rng rng(11);
  for (int i = 0; i < 100; ++i) {
    const Box3D b = make_box(rng.uniform(-20, 20), rng.uniform(-20, 20),
                             rng.uniform(-2, 2), rng.uniform(0.5, 3),
                             rng.uniform(0.5, 5), rng.uniform(0.5, 2),
                             rng.uniform(-3, 3));
    const Pose2 p = make_pose(rng.uniform(-10, 10), rng.uniform(-10, 10),
                              rng.uniform(-3, 3));
    const Box3D r = transform_box(transform_box(b, p), inverse(p));
    CHECK(std::fabs(r.cx - b.cx) < 1e-6);
    CHECK(std::fabs(r.cy - b.cy) < 1e-6);
    CHECK(std::fabs(normalize_angle(r.yaw - b.yaw)) < 1e-6);
  }
}

TEST_CASE("bev_iou exact cases") {
  const Box3D unit = make_box(0, 0, 0, 1, 1, 1, 0);
  CHECK(bev_iou(unit, unit) == doctest::Approx(1.0));
  const Box3D shifted = make_box(0.5, 0, 0, 1, 1, 1, 0);
  CHECK(bev_iou(unit, shifted) == doctest::Approx(1.0 / 3.0));
  // unit square vs same square rotated 45 degrees: regular octagon overlap
  const Box3D rot = make_box(0, 0, 0, 1, 1, 1, kPi / 4);
  const double mc = mc_bev_iou(unit, rot, 10'000'000, 99);
  CHECK(bev_iou(unit, rot) == doctest::Approx(0.7071).epsilon(0.002));
  CHECK(std::fabs(bev_iou(unit, rot) - mc) < 0.001);
}

TEST_CASE("bev_iou degenerate box errors") {
  const Box3D unit = make_box(0, 0, 0, 1, 1, 1, 0);
  Box3D flat = unit;
  flat.w = 0.0;
  CHECK_THROWS_AS(bev_iou(unit, flat), std::invalid_argument);
  CHECK_THROWS_AS(iou_3d(unit, flat), std::invalid_argument);
}

TEST_CASE("bev_iou yaw periodicity and symmetry") {
  Rng rng(13);
  for (int i = 0; i < 200; ++i) {
    const Box3D a = make_box(rng.uniform(-3, 3), rng.uniform(-3, 3), 0,
                             rng.uniform(0.5, 3), rng.uniform(0.5, 3), 1,
                             rng.uniform(-3, 3));
    const Box3D b = make_box(rng.uniform(-3, 3), rng.uniform(-3, 3), 0,
                             rng.uniform(0.5, 3), rng.uniform(0.5, 3), 1,
                             rng.uniform(-3, 3));
    const double iou = bev_iou(a, b);
    CHECK(iou >= 0.0);
    CHECK(iou <= 1.0);
    CHECK(bev_iou(b, a) == doctest::Approx(iou).epsilon(1e-9));
    Box3D a_pi = a;
    a_pi.yaw = normalize_angle(a.yaw + kPi);
    CHECK(bev_iou(a_pi, b) == doctest::Approx(iou).epsilon(1e-9));
  }
}

TEST_CASE("bev_iou matches Monte-Carlo oracle on random pairs") {
  Rng rng(17);
  for (int i = 0; i < 50; ++i) {
    const Box3D a = make_box(rng.uniform(-2, 2), rng.uniform(-2, 2), 0,
                             rng.uniform(0.5, 4), rng.uniform(0.5, 4), 1,
                             rng.uniform(-3, 3));
    const Box3D b = make_box(rng.uniform(-2, 2), rng.uniform(-2, 2), 0,
                             rng.uniform(0.5, 4), rng.uniform(0.5, 4), 1,
                             rng.uniform(-3, 3));
    const double mc = mc_bev_iou(a, b, 1'000'000, 1000 + i);
    CHECK(std::fabs(bev_iou(a, b) - mc) < 0.005);
  }
}

TEST_CASE("iou_3d exact cases") {
  const Box3D a = make_box(0, 0, 0, 2, 3, 1, 0.3);
  CHECK(iou_3d(a, a) == doctest::Approx(1.0));
  Box3D above = a;
  above.cz = a.cz + a.h;  // no vertical overlap
  CHECK(iou_3d(a, above) == doctest::Approx(0.0));
  Box3D half = a;
  half.cz = a.cz + a.h / 2;  // I = 0.5 V, U = 1.5 V
  CHECK(iou_3d(a, half) == doctest::Approx(1.0 / 3.0));
}
