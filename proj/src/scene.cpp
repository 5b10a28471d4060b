#include "ffsim/scene.hpp"

#include <cmath>
#include <stdexcept>

#include "ffsim/common.hpp"

namespace ffsim {

Box3D actor_box_at(const Actor& actor, double t) {
  Box3D b = actor.box0;
  b.cx += t * actor.vx;
  b.cy += t * actor.vy;
  b.yaw = normalize_angle(b.yaw + t * actor.yaw_rate);
  return b;
}

Pose2 vehicle_pose_at(const Scenario& s, double t) {
  const auto& wp = s.trajectory;
  if (wp.empty()) return s.vehicle.pose;
  if (t <= wp.front().t) return wp.front().pose;
  if (t >= wp.back().t) return wp.back().pose;
  for (size_t i = 1; i < wp.size(); ++i) {
    if (t <= wp[i].t) {
      const auto& a = wp[i - 1];
      const auto& b = wp[i];
      const double u = (t - a.t) / (b.t - a.t);
      Pose2 p;
      p.x = a.pose.x + u * (b.pose.x - a.pose.x);
      p.y = a.pose.y + u * (b.pose.y - a.pose.y);
      const double dyaw = normalize_angle(b.pose.yaw - a.pose.yaw);
      p.yaw = normalize_angle(a.pose.yaw + u * dyaw);
      return p;
    }
  }
  return wp.back().pose;
}

namespace {

// Sample one point on the box surface (four vertical faces plus top face),
// area-weighted, in world coordinates.
Point4 sample_surface_point(const Box3D& b, Rng& rng) {
  const double a_front = b.w * b.h;  // x = +l/2
  const double a_side = b.l * b.h;   // y = +/- w/2
  const double a_top = b.w * b.l;
  const double total = 2.0 * a_front + 2.0 * a_side + a_top;
  double pick = rng.uniform() * total;
  double lx, ly, lz;
  const double u = rng.uniform(), v = rng.uniform();
  if (pick < a_front) {
    lx = 0.5 * b.l;
    ly = (u - 0.5) * b.w;
    lz = (v - 0.5) * b.h;
  } else if (pick < 2.0 * a_front) {
    lx = -0.5 * b.l;
    ly = (u - 0.5) * b.w;
    lz = (v - 0.5) * b.h;
  } else if (pick < 2.0 * a_front + a_side) {
    lx = (u - 0.5) * b.l;
    ly = 0.5 * b.w;
    lz = (v - 0.5) * b.h;
  } else if (pick < 2.0 * a_front + 2.0 * a_side) {
    lx = (u - 0.5) * b.l;
    ly = -0.5 * b.w;
    lz = (v - 0.5) * b.h;
  } else {
    lx = (u - 0.5) * b.l;
    ly = (v - 0.5) * b.w;
    lz = 0.5 * b.h;
  }
  const double c = std::cos(b.yaw), s = std::sin(b.yaw);
  Point4 p;
  p.x = static_cast<float>(b.cx + c * lx - s * ly);
  p.y = static_cast<float>(b.cy + s * lx + c * ly);
  p.z = static_cast<float>(b.cz + lz);
  p.intensity = static_cast<float>(rng.uniform());
  return p;
}

}  // namespace

std::pair<PointCloud, std::vector<Box3D>> sample_frame(const Scenario& s,
                                                       const SensorSpec& sensor,
                                                       double t) {
  const double period_s = s.frame_period_ms / 1000.0;
  const double horizon = s.num_frames * period_s;
  if (t < 0.0 || t > horizon) {
    throw std::out_of_range("sample_frame: t outside scenario horizon");
  }
  const int64_t frame_index = std::llround(t / period_s);
  Rng rng(hash_combine(hash_combine(s.seed, sensor.id),
                       static_cast<uint64_t>(frame_index)));

  const Pose2 world_to_sensor = inverse(sensor.pose);

  PointCloud cloud;
  std::vector<Box3D> gt;
  for (const Actor& actor : s.actors) {
    const Box3D wb = actor_box_at(actor, t);
    const double dx = wb.cx - sensor.pose.x, dy = wb.cy - sensor.pose.y;
    if (std::hypot(dx, dy) > sensor.range) continue;
    gt.push_back(transform_box(wb, world_to_sensor));
    for (int i = 0; i < sensor.points_per_actor; ++i) {
      Point4 p = sample_surface_point(wb, rng);
      const bool drop = rng.uniform() < sensor.dropout;
      if (drop) continue;
      double sx, sy;
      apply_pose(world_to_sensor, p.x, p.y, sx, sy);
      p.x = static_cast<float>(sx);
      p.y = static_cast<float>(sy);
      cloud.points.push_back(p);
    }
  }
  // Ground clutter, uniform in a disc around the sensor.
  for (int i = 0; i < sensor.clutter_points; ++i) {
    const double ang = rng.uniform(0.0, 2.0 * kPi);
    const double rad = sensor.range * std::sqrt(rng.uniform());
    Point4 p;
    p.x = static_cast<float>(rad * std::cos(ang));
    p.y = static_cast<float>(rad * std::sin(ang));
    p.z = static_cast<float>(rng.uniform(0.0, 0.3));
    p.intensity = static_cast<float>(rng.uniform());
    const bool drop = rng.uniform() < sensor.dropout;
    if (drop) continue;
    cloud.points.push_back(p);
  }
  return {std::move(cloud), std::move(gt)};
}

std::vector<Box3D> ground_truth_ego(const Scenario& s, double t) {
  const Pose2 world_to_ego = inverse(vehicle_pose_at(s, t));
  std::vector<Box3D> out;
  out.reserve(s.actors.size());
  for (const Actor& actor : s.actors) {
    out.push_back(transform_box(actor_box_at(actor, t), world_to_ego));
  }
  return out;
}

}  // namespace ffsim
