#include "r1sim/geometry.hpp"

#include <algorithm>
#include <limits>

namespace r1sim {

double normalize_angle(double a) {
  const double two_pi = 2.0 * M_PI;
  a = std::fmod(a, two_pi);
  if (a > M_PI) a -= two_pi;
  if (a <= -M_PI) a += two_pi;
  return a;
}

std::array<Vec2, 4> box_corners(const OrientedBox& box) {
  const double c = std::cos(box.center.yaw);
  const double s = std::sin(box.center.yaw);
  const double hl = 0.5 * box.length;
  const double hw = 0.5 * box.width;
  const Vec2 fwd{c, s};
  const Vec2 left{-s, c};
  const Vec2 ctr = box.center.position();
  return {
      ctr + hl * fwd + hw * left,   // front-left
      ctr - hl * fwd + hw * left,   // rear-left
      ctr - hl * fwd - hw * left,   // rear-right
      ctr + hl * fwd - hw * left,   // front-right
  };
}

namespace {

// Projection gap of the two boxes along `axis` (unit length not required; a
// consistent scale per axis is enough for the sign).
double axis_gap(const std::array<Vec2, 4>& ca, const std::array<Vec2, 4>& cb, Vec2 axis) {
  double amin = std::numeric_limits<double>::infinity(), amax = -amin;
  double bmin = amin, bmax = amax;
  for (const Vec2& p : ca) {
    const double v = dot(p, axis);
    amin = std::min(amin, v);
    amax = std::max(amax, v);
  }
  for (const Vec2& p : cb) {
    const double v = dot(p, axis);
    bmin = std::min(bmin, v);
    bmax = std::max(bmax, v);
  }
  return std::max(bmin - amax, amin - bmax);
}

}  // namespace

double min_axis_separation(const OrientedBox& a, const OrientedBox& b) {
  const auto ca = box_corners(a);
  const auto cb = box_corners(b);
  const std::array<Vec2, 4> axes = {
      Vec2{std::cos(a.center.yaw), std::sin(a.center.yaw)},
      Vec2{-std::sin(a.center.yaw), std::cos(a.center.yaw)},
      Vec2{std::cos(b.center.yaw), std::sin(b.center.yaw)},
      Vec2{-std::sin(b.center.yaw), std::cos(b.center.yaw)},
  };
  double sep = -std::numeric_limits<double>::infinity();
  for (const Vec2& axis : axes) sep = std::max(sep, axis_gap(ca, cb, axis));
  return sep;
}

bool sat_overlap(const OrientedBox& a, const OrientedBox& b) {
  // Boundary contact counts as collision, hence <= 0.
  return min_axis_separation(a, b) <= 0.0;
}

Pose2D apply_delta(const Pose2D& pose, const MotionDelta& delta) {
  const double c = std::cos(pose.yaw);
  const double s = std::sin(pose.yaw);
  Pose2D out;
  out.x = pose.x + c * delta.dx - s * delta.dy;
  out.y = pose.y + s * delta.dx + c * delta.dy;
  out.yaw = normalize_angle(pose.yaw + delta.dyaw);
  return out;
}

}  // namespace r1sim
