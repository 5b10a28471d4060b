#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace ffsim {

inline constexpr double kPi = 3.14159265358979323846;

// Normalize an angle to (-pi, pi].
double normalize_angle(double a);

// Planar rigid transform mapping local coordinates into the parent frame:
// p' = R(yaw) * p + (x, y).
struct Pose2 {
  double x = 0.0;
  double y = 0.0;
  double yaw = 0.0;
};

Pose2 make_pose(double x, double y, double yaw);
Pose2 compose(const Pose2& a, const Pose2& b);  // apply b, then a
Pose2 inverse(const Pose2& p);
void apply_pose(const Pose2& p, double x, double y, double& ox, double& oy);

// Oriented 3D box. l runs along the heading (yaw) axis, w is lateral.
struct Box3D {
  double cx = 0.0, cy = 0.0, cz = 0.0;
  double w = 0.0, l = 0.0, h = 0.0;
  double yaw = 0.0;
  int class_id = 0;
  double confidence = 1.0;
};

bool box_valid(const Box3D& b);

Box3D transform_box(const Box3D& box, const Pose2& pose);

// Footprint corners in BEV, counter-clockwise.
std::vector<std::pair<double, double>> box_corners_bev(const Box3D& b);

// Rotated-rectangle IoU in bird's-eye view via polygon clipping.
// Throws std::invalid_argument for degenerate (zero-area) boxes.
double bev_iou(const Box3D& a, const Box3D& b);

// Full 3D IoU: BEV intersection area times vertical overlap.
double iou_3d(const Box3D& a, const Box3D& b);

}  // namespace ffsim
