#pragma once
/// The differentiable convex inverse-dynamics layer.
///
/// Given per-timestep mechanical parameters, builds a QP over finger
/// positions, cone-coordinate contact forces and (optionally) dynamics slack:
///
///   minimize  sum_t  lambda_c'Q_lambda lambda_c + pdd_c'Q_accel pdd_c
///             + q_eps |eps|_1 + reg_position |p_c - park|^2
///             + reg_env_force |lambda_e|^2
///   s.t.      J_c lambda_c + J_e lambda_e + eps = M rdd + G     (per t)
///             p_c = v1 + s (v2 - v1), 0 <= s <= 1               (in contact)
///             lambda = a1 g1 + a2 g2, a >= 0, a1 + a2 <= cap    (in contact)
///             |p_c| <= box                                      (free flight)
///
/// Variable order: finger positions (finger-major, then time; 1 var `s` when
/// in contact, 2 free coordinates otherwise), then finger cone coordinates
/// (2 per contact), then environment cone coordinates (2 per contact point),
/// then eps+ / eps- triples per timestep when slack is enabled.
///
/// Zero-norm cone rays in the parameters are the no-contact sentinel: the
/// finger's force is dropped from the problem and its position becomes a free
/// regularized variable. Nonzero rays are normalized before use.

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "dpm/params.hpp"
#include "dpm/qp_solver.hpp"

namespace dpm {

struct QpWeights {
  Eigen::Matrix2d q_lambda = Eigen::Matrix2d::Identity();
  Eigen::Matrix2d q_accel = Eigen::Matrix2d::Identity();
  /// QP-internal slack penalty. Large enough to act as an exact L1 penalty,
  /// so consistent parameters solve with eps identically zero.
  double q_eps = 1e4;
  double reg_position = 1e-6;
  double reg_env_force = 1e-6;
};

struct IdQpOptions {
  double dt = 0.1;
  bool with_slack = true;
  double force_cap = 2000.0;   // per-contact a1 + a2 bound, newtons
  double position_box = 2.0;   // free-position bound, meters
  double sentinel_tol = 1e-9;  // ray norm below this means "no contact"
  QpSettings solver;
};

/// Parking targets for the free-position regularizer, outside the workspace
/// so unused fingers never sit inside the scene.
std::vector<Vec2> default_parks(int n_fingers);

/// One finger-timestep slot of the assembled problem.
struct ContactSlot {
  bool in_contact = false;
  Vec2 facet_v1, facet_v2;
  Vec2 ray1, ray2;  // unit
  Eigen::Matrix<double, 3, 2> jacobian = Eigen::Matrix<double, 3, 2>::Zero();
};

/// Environment contact for one timestep; several points form a patch (used
/// by the expert), one point is the aggregated derendered model. Sliding
/// points carry a collapsed kinetic-friction ray (ray1 == ray2).
struct EnvSlot {
  std::vector<Vec2> points;
  std::vector<Vec2> ray1, ray2;  // unit, per point
  std::vector<Eigen::Matrix<double, 3, 2>> jacobians;
};

/// Fully assembled problem plus the maps from the solver vector back to
/// physical actions.
struct QpProblem {
  int t_count = 0;
  int n_fingers = 0;
  DenseQp qp;
  IdQpOptions options;
  QpWeights weights;
  std::vector<std::vector<ContactSlot>> finger;  // [t][c]
  std::vector<EnvSlot> env;                      // [t]
  std::vector<Eigen::Vector3d> rhs;              // M rdd + G per t

  // x -> stacked positions (x,y per finger-major, time-minor), affine.
  Eigen::MatrixXd pos_map;
  Eigen::VectorXd pos_base;
  Eigen::MatrixXd force_map;      // x -> stacked finger forces
  Eigen::MatrixXd env_force_map;  // x -> stacked per-t aggregate env force
  Eigen::MatrixXd eps_map;        // x -> stacked eps (3 per t), zero rows if no slack
  Eigen::VectorXd eps_cost;       // linear slack-penalty coefficients on x
  /// Constant cost term dropped by the solver form; add it back whenever
  /// objectives of different problems are compared.
  double objective_offset = 0.0;
};

struct QpLayerSolution {
  RobotActions actions;
  Eigen::MatrixXd eps;  // 3 x T
  QpResult raw;
  /// Objective without the slack penalty term (the physically meaningful
  /// part; identical to raw.objective when eps == 0).
  double action_objective = 0.0;

  bool ok() const { return raw.ok(); }
  double eps_inf_norm() const { return eps.size() ? eps.cwiseAbs().maxCoeff() : 0.0; }
  double eps_l1() const { return eps.size() ? eps.cwiseAbs().sum() : 0.0; }
};

/// Contact structure frozen independently of the parameter values, so data
/// can be perturbed without flipping sentinel decisions.
struct ContactStructure {
  std::vector<std::vector<bool>> finger_contact;  // [t][c]
  std::vector<bool> env_contact;                  // [t]
};

ContactStructure detect_structure(const MechanicalParameters& p, double sentinel_tol = 1e-9);

/// Low-level assembler shared with the fixed-mode expert path; `rhs` holds
/// M rdd + G per timestep.
QpProblem assemble_idqp(int t_count, int n_fingers,
                        const std::vector<Eigen::Vector3d>& rhs,
                        const std::vector<std::vector<ContactSlot>>& finger,
                        const std::vector<EnvSlot>& env, const QpWeights& w,
                        const IdQpOptions& opt);

/// Assemble the QP from derendered (or ground-truth) parameters.
QpProblem build_qp(const MechanicalParameters& p, const RigidBody& body, const QpWeights& w,
                   const IdQpOptions& options = {});
QpProblem build_qp(const MechanicalParameters& p, const RigidBody& body, const QpWeights& w,
                   const IdQpOptions& options, const ContactStructure& structure);

/// The hard-constrained variant (eps pinned to zero); may be infeasible.
QpProblem set_eps_zero(const QpProblem& prob);

QpLayerSolution solve_qp(const QpProblem& prob);

struct QpGradients {
  // Rows: flattened actions / eps entries; columns: flattened parameters.
  Eigen::MatrixXd d_positions;   // (2NT) x (37T per schema)
  Eigen::MatrixXd d_forces;      // (2NT) x P
  Eigen::MatrixXd d_env_force;   // (2T) x P
  Eigen::MatrixXd d_eps;         // (3T) x P
  Eigen::VectorXd d_objective;   // P
  bool degenerate = false;
  std::string degenerate_reason;
};

/// Implicit differentiation of the KKT conditions at the frozen active set.
/// Weakly active constraints or a singular KKT matrix set `degenerate`;
/// callers then fall back to finite differences or skip the step.
QpGradients differentiate_qp(const MechanicalParameters& p, const RigidBody& body,
                             const QpWeights& w, const IdQpOptions& options,
                             const QpLayerSolution& sol, double active_tol = 1e-7);

/// Supervision loss on a solved QP:
///   q_eps |eps|_1 + |p*_c - p_c|^2 + |lambda*_c - lambda_c|^2.
double qp_loss(const QpLayerSolution& sol, const RobotActions& expert, double q_eps);

}  // namespace dpm
