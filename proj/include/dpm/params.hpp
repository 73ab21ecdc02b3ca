#pragma once
/// The mechanical-parameter schema shared by the derenderer, the inverse
/// dynamics layer and the expert, plus task (de)serialization.
///
/// Flattened layout, per timestep (37 values at N = 2), repeated T times:
///   [0..2]   pose x, y, theta
///   [3..2+6N] finger Jacobian, row-major 3 x 2N (finger c owns columns
///            2c, 2c+1; each 3x2 block maps its force to a wrench)
///   then per finger: facet vertices v1.x v1.y v2.x v2.y        (4N values)
///   then per finger: cone rays g1.x g1.y g2.x g2.y             (4N values)
///   then environment contact point p_e.x p_e.y                 (2 values)
///   then environment cone rays e1.x e1.y e2.x e2.y             (4 values)
///
/// No-contact sentinel: a finger (or the environment) that is out of contact
/// at time t stores all-zero facet and cone entries; consumers treat
/// zero-norm rays as "force constrained to zero".

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "dpm/geometry.hpp"
#include "dpm/mechanics.hpp"
#include "dpm/rasterizer.hpp"

namespace dpm {

inline constexpr int kTaskFormatVersion = 1;

/// assignment[c][t]: facet index, or kNoContact.
inline constexpr int kNoContact = -1;
using ModeMatrix = std::vector<std::vector<int>>;

struct FingerContactParams {
  Eigen::Matrix<double, 3, 2> jacobian = Eigen::Matrix<double, 3, 2>::Zero();
  Vec2 facet_v1, facet_v2;   // world frame
  Vec2 cone_ray1, cone_ray2; // unit when in contact, zero sentinel otherwise

  bool in_contact(double tol = 1e-9) const {
    return cone_ray1.norm() > tol || cone_ray2.norm() > tol;
  }
};

struct MechanicalParameters {
  int t_count = 0;
  int n_fingers = 0;
  std::vector<Pose2> poses;                             // T
  std::vector<std::vector<FingerContactParams>> finger; // [t][c]
  std::vector<Vec2> env_point;                          // T
  std::vector<Vec2> env_ray1, env_ray2;                 // T, zero sentinel

  bool env_in_contact(int t, double tol = 1e-9) const {
    return env_ray1[t].norm() > tol || env_ray2[t].norm() > tol;
  }
  static int values_per_step(int n_fingers) { return 3 + 6 * n_fingers + 8 * n_fingers + 6; }
};

struct RobotActions {
  int t_count = 0;
  int n_fingers = 0;
  std::vector<std::vector<Vec2>> finger_pos;    // [t][c], meters
  std::vector<std::vector<Vec2>> finger_force;  // [t][c], newtons
  std::vector<Vec2> env_force;                  // [t]

  static RobotActions zeros(int t_count, int n_fingers);
  static int values_per_step(int n_fingers) { return 4 * n_fingers + 2; }
};

MechanicalParameters make_empty_parameters(int t_count, int n_fingers);

std::vector<double> flatten(const MechanicalParameters& p);
/// Inverse of flatten; throws on a length mismatch.
MechanicalParameters unflatten(const std::vector<double>& v, int t_count, int n_fingers);

std::vector<double> flatten_actions(const RobotActions& a);
RobotActions unflatten_actions(const std::vector<double>& v, int t_count, int n_fingers);

/// Sum over all flattened entries of the squared difference (summed over
/// timesteps, not averaged), so identical shapes compare at 0 and an
/// all-ones offset scores exactly the flattened length.
double parameter_loss(const MechanicalParameters& pred, const MechanicalParameters& truth);

struct TaskMeta {
  std::uint64_t seed = 0;
  std::string kind = "custom";
  double dt = 0.1;
  double mu_finger = 0.5;
  double mu_env = 0.5;
  double density = 1.0;
  double expert_objective = 0.0;
  double expert_solve_seconds = 0.0;
  int resamples = 0;
};

struct TaskRecord {
  std::vector<Frame> video;
  Polygon object;
  RigidBody body;
  std::vector<HalfPlane> environment;
  CameraWindow camera;
  MechanicalParameters parameters;
  RobotActions expert;
  ModeMatrix expert_modes;  // [c][t]
  TaskMeta meta;

  int t_count() const { return parameters.t_count; }
  int n_fingers() const { return parameters.n_fingers; }
};

/// Builds the stored parameter set from task geometry and an expert solution.
///
/// Facets are the assigned facets in the world frame; finger cones sit at the
/// expert contact point around the inward facet normal; the stored Jacobian
/// uses the facet midpoint as its moment-arm point (the convention the expert
/// QP itself uses). The environment point is the force-weighted centre of
/// pressure reconstructed from the torque balance, or the contact centroid
/// when the environment force vanishes; out of contact it falls back to the
/// ground projection of the centroid with zero-ray sentinels.
///
/// Throws if an assigned finger is farther than `boundary_tol` from its facet.
MechanicalParameters extract_parameters(const Polygon& object, const RigidBody& body,
                                        const std::vector<HalfPlane>& environment,
                                        const std::vector<Pose2>& trajectory, double dt,
                                        const RobotActions& expert, const ModeMatrix& modes,
                                        double mu_finger, double mu_env,
                                        double boundary_tol = 1e-4);

/// || M r_ddot + G - J^T Lambda ||_inf per timestep, with the stored
/// Jacobians and the environment block rebuilt from p_e.
std::vector<double> dynamics_residuals(const MechanicalParameters& params, const RigidBody& body,
                                       const RobotActions& actions, double dt);

/// Task directory layout: meta.json, frames/NNN.ppm, params.bin, actions.bin.
void save_task(const TaskRecord& task, const std::string& dir);
TaskRecord load_task(const std::string& dir);

}  // namespace dpm
