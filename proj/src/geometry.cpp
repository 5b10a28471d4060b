#include "ffsim/geometry.hpp"

#include <algorithm>
#include <stdexcept>

namespace ffsim {

namespace {
constexpr double kClipEps = 1e-9;  // on-edge classification epsilon, meters
}

double normalize_angle(double a) {
  a = std::fmod(a, 2.0 * kPi);
  if (a <= -kPi) a += 2.0 * kPi;
  if (a > kPi) a -= 2.0 * kPi;
  return a;
}

Pose2 make_pose(double x, double y, double yaw) {
  return Pose2{x, y, normalize_angle(yaw)};
}

Pose2 compose(const Pose2& a, const Pose2& b) {
  const double c = std::cos(a.yaw), s = std::sin(a.yaw);
  Pose2 r;
  r.x = a.x + c * b.x - s * b.y;
  r.y = a.y + s * b.x + c * b.y;
  r.yaw = normalize_angle(a.yaw + b.yaw);
  return r;
}

Pose2 inverse(const Pose2& p) {
  const double c = std::cos(p.yaw), s = std::sin(p.yaw);
  Pose2 r;
  r.x = -(c * p.x + s * p.y);
  r.y = -(-s * p.x + c * p.y);
  r.yaw = normalize_angle(-p.yaw);
  return r;
}

void apply_pose(const Pose2& p, double x, double y, double& ox, double& oy) {
  const double c = std::cos(p.yaw), s = std::sin(p.yaw);
  ox = p.x + c * x - s * y;
  oy = p.y + s * x + c * y;
}

bool box_valid(const Box3D& b) {
  return b.w > 0.0 && b.l > 0.0 && b.h > 0.0 && b.confidence >= 0.0 &&
         b.confidence <= 1.0;
}

Box3D transform_box(const Box3D& box, const Pose2& pose) {
  Box3D r = box;
  apply_pose(pose, box.cx, box.cy, r.cx, r.cy);
  r.yaw = normalize_angle(box.yaw + pose.yaw);
  return r;
}

std::vector<std::pair<double, double>> box_corners_bev(const Box3D& b) {
  const double c = std::cos(b.yaw), s = std::sin(b.yaw);
  const double hl = 0.5 * b.l, hw = 0.5 * b.w;
  // local corners CCW: (+hl,+hw), (-hl,+hw), (-hl,-hw), (+hl,-hw)
  const double lx[4] = {hl, -hl, -hl, hl};
  const double ly[4] = {hw, hw, -hw, -hw};
  std::vector<std::pair<double, double>> out(4);
  for (int i = 0; i < 4; ++i) {
    out[i] = {b.cx + c * lx[i] - s * ly[i], b.cy + s * lx[i] + c * ly[i]};
  }
  return out;
}

namespace {

using Poly = std::vector<std::pair<double, double>>;

double shoelace(const Poly& p) {
  double a = 0.0;
  const size_t n = p.size();
  for (size_t i = 0; i < n; ++i) {
    const auto& u = p[i];
    const auto& v = p[(i + 1) % n];
    a += u.first * v.second - v.first * u.second;
  }
  return 0.5 * a;
}

// Sutherland-Hodgman: clip polygon `poly` against the half-plane on the left
// of directed edge (a -> b).
Poly clip_edge(const Poly& poly, std::pair<double, double> a,
               std::pair<double, double> b) {
  Poly out;
  const size_t n = poly.size();
  if (n == 0) return out;
  const double ex = b.first - a.first, ey = b.second - a.second;
  auto side = [&](const std::pair<double, double>& p) {
    return ex * (p.second - a.second) - ey * (p.first - a.first);
  };
  for (size_t i = 0; i < n; ++i) {
    const auto& cur = poly[i];
    const auto& nxt = poly[(i + 1) % n];
    const double sc = side(cur), sn = side(nxt);
    if (sc >= -kClipEps) out.push_back(cur);
    if ((sc > kClipEps && sn < -kClipEps) || (sc < -kClipEps && sn > kClipEps)) {
      const double t = sc / (sc - sn);
      out.push_back({cur.first + t * (nxt.first - cur.first),
                     cur.second + t * (nxt.second - cur.second)});
    }
  }
  return out;
}

double intersection_area(const Box3D& a, const Box3D& b) {
  Poly p = box_corners_bev(a);
  const Poly q = box_corners_bev(b);
  for (int i = 0; i < 4 && !p.empty(); ++i) {
    p = clip_edge(p, q[i], q[(i + 1) % 4]);
  }
  if (p.size() < 3) return 0.0;
  return std::max(0.0, shoelace(p));
}

void require_nondegenerate(const Box3D& b, bool need_h) {
  if (b.w <= 0.0 || b.l <= 0.0 || (need_h && b.h <= 0.0)) {
    throw std::invalid_argument("degenerate box");
  }
}

}  // namespace

double bev_iou(const Box3D& a, const Box3D& b) {
  require_nondegenerate(a, false);
  require_nondegenerate(b, false);
  const double inter = intersection_area(a, b);
  const double uni = a.w * a.l + b.w * b.l - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

double iou_3d(const Box3D& a, const Box3D& b) {
  require_nondegenerate(a, true);
  require_nondegenerate(b, true);
  const double inter_area = intersection_area(a, b);
  const double top = std::min(a.cz + 0.5 * a.h, b.cz + 0.5 * b.h);
  const double bot = std::max(a.cz - 0.5 * a.h, b.cz - 0.5 * b.h);
  const double zov = std::max(0.0, top - bot);
  const double inter_vol = inter_area * zov;
  const double uni = a.w * a.l * a.h + b.w * b.l * b.h - inter_vol;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter_vol / uni, 0.0, 1.0);
}

}  // namespace ffsim
