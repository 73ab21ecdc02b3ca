#include "dpm/mechanics.hpp"

#include <cmath>
#include <stdexcept>

namespace dpm {

RigidBody mass_properties(const Polygon& poly, double density) {
  const double area = polygon_signed_area(poly);
  if (area <= 1e-12) throw std::invalid_argument("mass_properties: degenerate polygon");
  const Vec2 c = polygon_centroid(poly);

  // Second moment about the origin via the standard shoelace extension,
  // then shifted to the centroid with the parallel axis theorem.
  double ixx = 0.0, iyy = 0.0;
  const int n = poly.size();
  for (int i = 0; i < n; ++i) {
    const Vec2& p = poly.vertex(i);
    const Vec2& q = poly.vertex_wrapped(i + 1);
    const double w = p.cross(q);
    ixx += w * (p.y * p.y + p.y * q.y + q.y * q.y);
    iyy += w * (p.x * p.x + p.x * q.x + q.x * q.x);
  }
  const double i_origin = density * (ixx + iyy) / 12.0;
  const double mass = density * area;
  RigidBody body;
  body.mass = mass;
  body.inertia = i_origin - mass * c.squared_norm();
  if (body.inertia <= 0.0) throw std::invalid_argument("mass_properties: non-positive inertia");
  return body;
}

double unit_mass_density(const Polygon& poly) {
  const double area = polygon_signed_area(poly);
  if (area <= 1e-12) throw std::invalid_argument("unit_mass_density: degenerate polygon");
  return 1.0 / area;
}

Wrench gravity_wrench(const RigidBody& body, const Pose2&) {
  return {0.0, -body.mass * kGravity, 0.0};
}

Eigen::Matrix<double, 3, 2> contact_jacobian(const Pose2& pose, const Vec2& contact_world) {
  const Vec2 r{contact_world.x - pose.x, contact_world.y - pose.y};
  Eigen::Matrix<double, 3, 2> j;
  j << 1.0, 0.0,
       0.0, 1.0,
       -r.y, r.x;
  return j;
}

Eigen::MatrixXd acceleration_stencil(int t_count, double dt) {
  if (t_count < 3) throw std::invalid_argument("acceleration_stencil: need at least 3 samples");
  const double inv = 1.0 / (dt * dt);
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(t_count, t_count);
  for (int t = 1; t + 1 < t_count; ++t) {
    s(t, t - 1) = inv;
    s(t, t) = -2.0 * inv;
    s(t, t + 1) = inv;
  }
  if (t_count == 3) {
    // Only three samples: the central stencil is the best available at the
    // ends too (still exact on quadratics).
    s.row(0) = s.row(1);
    s.row(2) = s.row(1);
  } else {
    s(0, 0) = 2.0 * inv;  s(0, 1) = -5.0 * inv;  s(0, 2) = 4.0 * inv;  s(0, 3) = -inv;
    const int t = t_count - 1;
    s(t, t) = 2.0 * inv;  s(t, t - 1) = -5.0 * inv;  s(t, t - 2) = 4.0 * inv;  s(t, t - 3) = -inv;
  }
  return s;
}

Trajectory differentiate_trajectory(const std::vector<Pose2>& poses, double dt) {
  const int t_count = static_cast<int>(poses.size());
  if (t_count < 3) throw std::invalid_argument("differentiate_trajectory: need T >= 3");
  if (dt <= 0.0) throw std::invalid_argument("differentiate_trajectory: dt must be positive");

  Trajectory traj;
  traj.poses = poses;
  traj.dt = dt;
  traj.velocities.resize(poses.size());
  traj.accelerations.resize(poses.size());

  Eigen::MatrixXd r(3, t_count);
  for (int t = 0; t < t_count; ++t) r.col(t) << poses[t].x, poses[t].y, poses[t].theta;

  for (int t = 0; t < t_count; ++t) {
    Eigen::Vector3d v;
    if (t == 0) {
      v = (-3.0 * r.col(0) + 4.0 * r.col(1) - r.col(2)) / (2.0 * dt);
    } else if (t == t_count - 1) {
      v = (3.0 * r.col(t) - 4.0 * r.col(t - 1) + r.col(t - 2)) / (2.0 * dt);
    } else {
      v = (r.col(t + 1) - r.col(t - 1)) / (2.0 * dt);
    }
    traj.velocities[t] = v;
  }

  const Eigen::MatrixXd s = acceleration_stencil(t_count, dt);
  const Eigen::MatrixXd acc = r * s.transpose();
  for (int t = 0; t < t_count; ++t) traj.accelerations[t] = acc.col(t);
  return traj;
}

}  // namespace dpm
