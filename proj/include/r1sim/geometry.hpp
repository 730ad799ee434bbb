#pragma once

#include <array>
#include <cmath>

namespace r1sim {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator*(double s, Vec2 v) { return {s * v.x, s * v.y}; }
inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double norm(Vec2 v) { return std::hypot(v.x, v.y); }

// Maps any angle into (-pi, pi]. Single normalization branch used project-wide
// so pose equality stays testable.
double normalize_angle(double a);

// Agent-frame pose delta over one simulation step: dx longitudinal, dy
// lateral, dyaw heading change.
struct MotionDelta {
  double dx = 0.0;
  double dy = 0.0;
  double dyaw = 0.0;
};

struct Pose2D {
  double x = 0.0;
  double y = 0.0;
  double yaw = 0.0;  // normalized to (-pi, pi]

  Vec2 position() const { return {x, y}; }
};

struct OrientedBox {
  Pose2D center;
  double length = 0.0;  // extent along heading
  double width = 0.0;
};

// Corners in counter-clockwise order starting front-left.
std::array<Vec2, 4> box_corners(const OrientedBox& box);

// Rectangle-rectangle intersection via the Separating Axis Theorem over the
// 4 candidate edge-normal axes. Shared boundary counts as overlap.
bool sat_overlap(const OrientedBox& a, const OrientedBox& b);

// Signed minimum axis separation: the largest projection gap over the 4
// candidate axes. Positive means separated, <= 0 means overlapping.
// sat_overlap(a, b) == (min_axis_separation(a, b) <= 0).
double min_axis_separation(const OrientedBox& a, const OrientedBox& b);

// Applies an agent-frame delta: the translation (dx, dy) is rotated by the
// current yaw before being added, then yaw advances by dyaw.
Pose2D apply_delta(const Pose2D& pose, const MotionDelta& delta);

}  // namespace r1sim
