#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "ffsim/geometry.hpp"

namespace ffsim {

struct Point4 {
  float x = 0.f, y = 0.f, z = 0.f, intensity = 0.f;
};

struct PointCloud {
  std::vector<Point4> points;
  size_t size() const { return points.size(); }
};

// Constant-velocity, constant-yaw-rate traffic participant.
struct Actor {
  Box3D box0;           // pose at t = 0, world frame
  double vx = 0.0;      // m/s
  double vy = 0.0;      // m/s
  double yaw_rate = 0.0;  // rad/s
};

struct SensorSpec {
  uint32_t id = 0;
  Pose2 pose;              // sensor -> world
  double range = 50.0;     // meters
  int points_per_actor = 0;
  int clutter_points = 0;
  double dropout = 0.0;    // in [0, 1)
};

struct Waypoint {
  double t = 0.0;  // seconds
  Pose2 pose;
};

struct Scenario {
  std::vector<Actor> actors;
  SensorSpec infra;
  SensorSpec vehicle;  // pose field is the t=0 pose; use vehicle_pose_at
  std::vector<Waypoint> trajectory;  // piecewise-linear, sorted by t
  double frame_period_ms = 100.0;
  int num_frames = 0;
  uint64_t seed = 0;
};

Box3D actor_box_at(const Actor& actor, double t);

Pose2 vehicle_pose_at(const Scenario& s, double t);

// Point cloud and visible ground-truth boxes in the sensor frame at time t.
// Deterministic: the RNG is derived from (scenario seed, sensor id, frame
// index), so frames can be sampled in any order.
std::pair<PointCloud, std::vector<Box3D>> sample_frame(const Scenario& s,
                                                       const SensorSpec& sensor,
                                                       double t);

// All actors (regardless of visibility) in the ego frame at time t.
std::vector<Box3D> ground_truth_ego(const Scenario& s, double t);

}  // namespace ffsim
