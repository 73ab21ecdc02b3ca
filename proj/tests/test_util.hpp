#pragma once
// Shared fixtures for solver tests: small tasks with known physics.

#include <vector>

#include "dpm/cto.hpp"
#include "dpm/geometry.hpp"
#include "dpm/mechanics.hpp"

namespace dpm::testutil {

inline Polygon unit_square(double half = 0.1) {
  Polygon p;
  p.vertices = {{-half, -half}, {half, -half}, {half, half}, {-half, half}};
  return p;
}

inline std::vector<HalfPlane> ground_env() { return {{{0.0, 1.0}, 0.0}}; }

/// y offset that rests the polygon on the ground at a given rotation.
inline double resting_height(const Polygon& poly, double theta) {
  double min_y = 1e30;
  for (const Vec2& v : poly.vertices) {
    min_y = std::min(min_y, rotate(theta, v).y);
  }
  return -min_y;
}

/// Object sitting still on the ground for t_count steps.
inline CtoTask static_task(int t_count = 5, double half = 0.1) {
  CtoTask task;
  task.object = unit_square(half);
  task.body = mass_properties(task.object, unit_mass_density(task.object));
  task.environment = ground_env();
  const double y = resting_height(task.object, 0.0);
  task.trajectory.assign(t_count, Pose2{0.0, y, 0.0});
  return task;
}

/// Horizontal ground slide with constant velocity (zero interior
/// acceleration, one-sided stencils see zero too).
inline CtoTask slide_task(int t_count = 5, double step = 0.02, double half = 0.1) {
  CtoTask task = static_task(t_count, half);
  for (int t = 0; t < t_count; ++t) task.trajectory[t].x = step * t;
  return task;
}

/// Accelerating slide: curved position path, so facet motion pins the
/// min-acceleration finger solution (well-conditioned argmin).
inline CtoTask accel_task(int t_count = 5, double accel = 1.0, double half = 0.1) {
  CtoTask task = static_task(t_count, half);
  for (int t = 0; t < t_count; ++t) {
    const double s = t * task.dt;
    task.trajectory[t].x = 0.5 * accel * s * s;
    task.trajectory[t].theta = 0.6 * s * s;  // rotation pins the slide freedom
    task.trajectory[t].y = resting_height(task.object, task.trajectory[t].theta);
  }
  return task;
}

inline ModeSequence all_no_contact(int n_fingers, int t_count) {
  ModeSequence m;
  m.assignment.assign(n_fingers, std::vector<int>(t_count, kNoContact));
  return m;
}

}  // namespace dpm::testutil
