#pragma once
/// Planar Newton-Euler quantities: mass matrix, gravity wrench, contact
/// Jacobians and trajectory differentiation. Pure functions, thread-safe.

#include <Eigen/Dense>
#include <vector>

#include "dpm/geometry.hpp"

namespace dpm {

inline constexpr double kGravity = 9.81;  // m/s^2

/// Rigid body with the body frame at the centroid, so the mass matrix is
/// diag(m, m, I) and gravity produces no torque.
struct RigidBody {
  double mass = 1.0;      // kg
  double inertia = 1.0;   // kg m^2, about the centroid

  Eigen::Matrix3d mass_matrix() const {
    Eigen::Matrix3d m = Eigen::Matrix3d::Zero();
    m(0, 0) = mass;
    m(1, 1) = mass;
    m(2, 2) = inertia;
    return m;
  }
};

struct Wrench {
  double fx = 0.0;
  double fy = 0.0;
  double tau = 0.0;
};

/// Pose sequence with velocities/accelerations from the shared stencil.
struct Trajectory {
  std::vector<Pose2> poses;
  std::vector<Eigen::Vector3d> velocities;
  std::vector<Eigen::Vector3d> accelerations;
  double dt = 0.0;
};

/// Mass and second moment of a simple polygon at uniform density. The
/// polygon is expected to be centred on its centroid (as produced by
/// random_polygon); inertia is computed about that centroid either way.
RigidBody mass_properties(const Polygon& poly, double density);

/// Density that makes the polygon weigh exactly 1 kg.
double unit_mass_density(const Polygon& poly);

Wrench gravity_wrench(const RigidBody& body, const Pose2& pose);

/// 3x2 map from a contact force at a world point to a wrench about the
/// centroid: columns are the unit force directions, last row the moment arm
/// [-(c-com).y, (c-com).x].
Eigen::Matrix<double, 3, 2> contact_jacobian(const Pose2& pose, const Vec2& contact_world);

/// Central differences inside, second-order one-sided at the ends (3-point
/// fallback for T == 3). Exact for pose polynomials up to degree 2.
Trajectory differentiate_trajectory(const std::vector<Pose2>& poses, double dt);

/// The acceleration stencil as a T x T matrix acting on each pose coordinate.
Eigen::MatrixXd acceleration_stencil(int t_count, double dt);

}  // namespace dpm
