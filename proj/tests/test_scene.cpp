#include <doctest.h>

#include <stdexcept>

#include <cmath>

#include "ffsim/scene.hpp"

using namespace ffsim;

namespace {

Scenario basic_scenario() {
  Scenario s;
  s.seed = 123;
  s.num_frames = 20;
  s.frame_period_ms = 100;
  s.infra = SensorSpec{1, make_pose(0, 10, -kPi / 2), 50.0, 40, 10, 0.0};
  s.vehicle = SensorSpec{2, make_pose(0, 0, 0), 15.0, 40, 10, 0.0};
  s.trajectory = {{0.0, make_pose(0, 0, 0)}, {2.0, make_pose(4, 0, 0)}};
  Actor a;
  a.box0 = Box3D{5, 0, 0.75, 2, 4.5, 1.5, 0.0, 0, 1.0};
  a.vx = 2.0;
  s.actors.push_back(a);
  return s;
}

bool clouds_equal(const PointCloud& a, const PointCloud& b) {
  if (a.size() != b.size()) return false;
  for (size_t i = 0; i < a.points.size(); ++i) {
    if (a.points[i].x != b.points[i].x || a.points[i].y != b.points[i].y ||
        a.points[i].z != b.points[i].z ||
        a.points[i].intensity != b.points[i].intensity) {
      return false;
    }
  }
  return true;
}

}  // namespace

TEST_CASE("actor_box_at kinematics") {
  Actor a;
  a.box0 = Box3D{1, 2, 0.5, 2, 4, 1.5, 0.2, 0, 1.0};
  SUBCASE("static actor") {
    const Box3D b = actor_box_at(a, 3.0);
    CHECK(b.cx == doctest::Approx(1.0));
    CHECK(b.cy == doctest::Approx(2.0));
    CHECK(b.yaw == doctest::Approx(0.2));
  }
  SUBCASE("constant velocity") {
    a.vx = 2.0;
    const Box3D b = actor_box_at(a, 1.0);
    CHECK(b.cx == doctest::Approx(3.0));
  }
  SUBCASE("yaw rate") {
    a.yaw_rate = 0.1;
    const Box3D b = actor_box_at(a, 10.0);
    CHECK(b.yaw == doctest::Approx(1.2));
  }
}

TEST_CASE("sample_frame determinism and counting") {
  const Scenario s = basic_scenario();
  const auto [c1, g1] = sample_frame(s, s.vehicle, 0.3);
  const auto [c2, g2] = sample_frame(s, s.vehicle, 0.3);
  CHECK(clouds_equal(c1, c2));
  CHECK(g1.size() == g2.size());
  // one actor in range, dropout 0
  CHECK(c1.size() == static_cast<size_t>(s.vehicle.points_per_actor +
                                         s.vehicle.clutter_points));
  CHECK(g1.size() == 1);
}

TEST_CASE("sample_frame empty scenario") {
  Scenario s = basic_scenario();
  s.actors.clear();
  s.infra.clutter_points = 0;
  const auto [cloud, gt] = sample_frame(s, s.infra, 0.0);
  CHECK(cloud.size() == 0);
  CHECK(gt.empty());
}

TEST_CASE("sample_frame horizon check") {
  const Scenario s = basic_scenario();
  CHECK_THROWS_AS(sample_frame(s, s.infra, -0.5), std::out_of_range);
  CHECK_THROWS_AS(sample_frame(s, s.infra, 100.0), std::out_of_range);
}

TEST_CASE("sample_frame points lie on the actor surface") {
  Scenario s = basic_scenario();
  s.vehicle.clutter_points = 0;
  const auto [cloud, gt] = sample_frame(s, s.vehicle, 0.0);
  REQUIRE(gt.size() == 1);
  const Box3D& b = gt[0];
  for (const Point4& p : cloud.points) {
    const double c = std::cos(b.yaw), sn = std::sin(b.yaw);
    const double dx = p.x - b.cx, dy = p.y - b.cy;
    const double lx = c * dx + sn * dy, ly = -sn * dx + c * dy;
    CHECK(std::fabs(lx) <= 0.5 * b.l + 1e-5);
    CHECK(std::fabs(ly) <= 0.5 * b.w + 1e-5);
    CHECK(p.z >= b.cz - 0.5 * b.h - 1e-5);
    CHECK(p.z <= b.cz + 0.5 * b.h + 1e-5);
  }
}

TEST_CASE("ground_truth_ego transforms") {
  Scenario s = basic_scenario();
  SUBCASE("identity ego pose") {
    s.trajectory = {{0.0, make_pose(0, 0, 0)}, {2.0, make_pose(0, 0, 0)}};
    const auto gt = ground_truth_ego(s, 0.0);
    REQUIRE(gt.size() == 1);
    CHECK(gt[0].cx == doctest::Approx(5.0));
  }
  SUBCASE("translated ego") {
    s.trajectory = {{0.0, make_pose(10, 0, 0)}, {2.0, make_pose(10, 0, 0)}};
    const auto gt = ground_truth_ego(s, 0.0);
    REQUIRE(gt.size() == 1);
    CHECK(gt[0].cx == doctest::Approx(-5.0));
  }
  SUBCASE("actor outside every sensor range still in GT") {
    Actor far;
    far.box0 = Box3D{500, 500, 0.75, 2, 4.5, 1.5, 0, 0, 1.0};
    s.actors.push_back(far);
    const auto gt = ground_truth_ego(s, 0.0);
    CHECK(gt.size() == 2);
  }
}

TEST_CASE("GT consistency: actor_box_at composed with ego transform") {
  const Scenario s = basic_scenario();
  for (int i = 0; i < s.num_frames; ++i) {
    const double t = i * s.frame_period_ms / 1000.0;
    const auto gt = ground_truth_ego(s, t);
    const Pose2 inv = inverse(vehicle_pose_at(s, t));
    REQUIRE(gt.size() == s.actors.size());
    for (size_t a = 0; a < s.actors.size(); ++a) {
      const Box3D expect = transform_box(actor_box_at(s.actors[a], t), inv);
      CHECK(gt[a].cx == doctest::Approx(expect.cx));
      CHECK(gt[a].cy == doctest::Approx(expect.cy));
      CHECK(gt[a].yaw == doctest::Approx(expect.yaw));
    }
  }
}

TEST_CASE("occlusion asymmetry: infra sees more than the vehicle") {
  Scenario s = basic_scenario();
  s.vehicle.range = 8.0;
  Actor far;
  far.box0 = Box3D{0, 18, 0.75, 2, 4.5, 1.5, 0, 0, 1.0};  // near infra only
  s.actors.push_back(far);
  const auto [ci, gi] = sample_frame(s, s.infra, 0.0);
  const auto [cv, gv] = sample_frame(s, s.vehicle, 0.0);
  CHECK(gi.size() > gv.size());
}
