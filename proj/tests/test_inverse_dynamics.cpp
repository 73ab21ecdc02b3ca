#include <cmath>

#include "doctest.h"
#include "dpm/cto.hpp"
#include "dpm/inverse_dynamics.hpp"
#include "dpm/rng.hpp"
#include "test_util.hpp"

using namespace dpm;
using namespace dpm::testutil;

namespace {

// Ground-truth parameters of the static resting-square task, extracted by
// hand: both fingers out of contact, environment holding the weight.
MechanicalParameters static_ground_truth(const CtoTask& task, int n_fingers) {
  const int t_count = static_cast<int>(task.trajectory.size());
  MechanicalParameters p = make_empty_parameters(t_count, n_fingers);
  p.poses = task.trajectory;
  const FrictionCone cone = friction_cone_at({0, 0}, {0, 1}, task.mu_env);
  for (int t = 0; t < t_count; ++t) {
    p.env_point[t] = {task.trajectory[t].x, 0.0};
    p.env_ray1[t] = cone.ray1;
    p.env_ray2[t] = cone.ray2;
  }
  return p;
}

}  // namespace

TEST_CASE("static resting task: zero forces, zero slack, near-zero objective") {
  CtoTask task = static_task();
  MechanicalParameters p = static_ground_truth(task, 2);
  QpWeights w;
  IdQpOptions opt;
  opt.dt = task.dt;
  QpProblem prob = build_qp(p, task.body, w, opt);
  QpLayerSolution sol = solve_qp(prob);
  REQUIRE(sol.ok());
  CHECK(sol.eps_inf_norm() <= 1e-6);
  for (int t = 0; t < 5; ++t) {
    for (int c = 0; c < 2; ++c) {
      CHECK(sol.actions.finger_force[t][c].norm() <= 1e-7);
    }
    // Environment supports the weight.
    CHECK(sol.actions.env_force[t].y == doctest::Approx(9.81).epsilon(1e-5));
  }
  CHECK(sol.action_objective <= 1e-3);  // only the tiny regularizers remain
}

TEST_CASE("problem dimensions match the documented layout") {
  CtoTask task = static_task();
  MechanicalParameters p = static_ground_truth(task, 2);
  // Add finger contacts at every step so all blocks are present.
  for (int t = 0; t < 5; ++t) {
    for (int c = 0; c < 2; ++c) {
      const Facet f = polygon_facet_world(task.object, task.trajectory[t], c == 0 ? 3 : 1);
      FingerContactParams& fc = p.finger[t][c];
      fc.facet_v1 = f.v1;
      fc.facet_v2 = f.v2;
      const FrictionCone cone = friction_cone_at(f.midpoint(), -f.outward_normal, 0.5);
      fc.cone_ray1 = cone.ray1;
      fc.cone_ray2 = cone.ray2;
      fc.jacobian = contact_jacobian(task.trajectory[t], f.midpoint());
    }
  }
  QpWeights w;
  QpProblem prob = build_qp(p, task.body, w, {});
  // T=5, N=2, all contacts + env active: s 10, a 20, env 10, eps 30 = 70 vars;
  // 15 dynamics rows; 20 s bounds + 30 force rows + 10 env + 30 eps = 90.
  CHECK(prob.qp.num_vars() == 70);
  CHECK(prob.qp.b.size() == 15);
  CHECK(prob.qp.h.size() == 90);

  // Zero-sentinel variant drops the finger blocks.
  MechanicalParameters p0 = static_ground_truth(task, 2);
  QpProblem prob0 = build_qp(p0, task.body, w, {});
  // free positions 20, env 10, eps 30 = 60 vars; boxes 40 + env 10 + eps 30.
  CHECK(prob0.qp.num_vars() == 60);
  CHECK(prob0.qp.h.size() == 80);
}

TEST_CASE("zero-norm cone sentinel forces the finger force to zero") {
  CtoTask task = static_task();
  MechanicalParameters p = static_ground_truth(task, 2);
  QpLayerSolution sol = solve_qp(build_qp(p, task.body, QpWeights{}, {}));
  REQUIRE(sol.ok());
  for (int t = 0; t < 5; ++t) {
    for (int c = 0; c < 2; ++c) {
      CHECK(sol.actions.finger_force[t][c].norm() == doctest::Approx(0.0));
    }
  }
}

TEST_CASE("inconsistent parameters keep the QP feasible through slack") {
  CtoTask task = static_task();
  MechanicalParameters p = static_ground_truth(task, 2);
  // Demand an acceleration no available cone can produce: strong downward
  // pull plus a spin, with only the ground cone present.
  for (int t = 0; t < 5; ++t) {
    p.poses[t].theta = 0.3 * t * t;
    p.poses[t].y += -0.2 * t * t;
  }
  QpLayerSolution sol = solve_qp(build_qp(p, task.body, QpWeights{}, {}));
  REQUIRE(sol.ok());
  CHECK(sol.eps_inf_norm() > 1e-3);

  // The eps = 0 variant must be infeasible.
  QpProblem hard = set_eps_zero(build_qp(p, task.body, QpWeights{}, {}));
  QpLayerSolution hsol = solve_qp(hard);
  CHECK(!hsol.ok());
}

TEST_CASE("hard variant matches the relaxed one on feasible data") {
  // A sliding object needs a pusher now that ground friction is kinetic:
  // the no-contact slide is infeasible, the pushed one is fine.
  CtoTask task = slide_task();
  ModeQpResult bare = qp_for_modes(task, all_no_contact(2, 5), QpWeights{}, {});
  CHECK(!bare.feasible);
  ModeSequence modes;
  modes.assignment = {{3, 3, 3, 3, 3}, {1, 1, 1, 1, 1}};
  ModeQpResult r = qp_for_modes(task, modes, QpWeights{}, {});
  REQUIRE(r.feasible);
  CHECK(r.solution.eps_inf_norm() <= 1e-7);

  // Objective of the hard variant >= the relaxed variant when both feasible.
  CtoTask task2 = static_task();
  MechanicalParameters p = static_ground_truth(task2, 2);
  QpProblem relaxed = build_qp(p, task2.body, QpWeights{}, {});
  QpLayerSolution rsol = solve_qp(relaxed);
  QpLayerSolution hsol = solve_qp(set_eps_zero(relaxed));
  REQUIRE(rsol.ok());
  REQUIRE(hsol.ok());
  CHECK(hsol.raw.objective >= rsol.action_objective - 1e-7);
  CHECK(hsol.raw.objective == doctest::Approx(rsol.action_objective).epsilon(1e-4));
}

TEST_CASE("qp_loss basics") {
  CtoTask task = static_task();
  MechanicalParameters p = static_ground_truth(task, 2);
  QpLayerSolution sol = solve_qp(build_qp(p, task.body, QpWeights{}, {}));
  REQUIRE(sol.ok());

  RobotActions expert = sol.actions;
  CHECK(qp_loss(sol, expert, 0.1) <= 1e-8);  // identical actions, eps ~ 0

  // One unit of slack at one timestep with exact actions costs q_eps.
  QpLayerSolution fake = sol;
  fake.eps.setZero();
  fake.eps(0, 0) = 1.0;
  CHECK(qp_loss(fake, expert, 0.1) == doctest::Approx(0.1));

  // Nonnegative in general.
  RobotActions other = expert;
  other.finger_pos[0][0].x += 0.3;
  CHECK(qp_loss(sol, other, 0.1) >= 0.0);
}

TEST_CASE("QP weight scaling leaves the argmin unchanged") {
  CtoTask task = accel_task();
  ModeSequence modes;
  modes.assignment = {{3, 3, 3, 3, 3}, {1, 1, 1, 1, 1}};
  QpWeights w;
  ModeQpResult a = qp_for_modes(task, modes, w, {});
  QpWeights w2;
  const double k = 7.5;
  w2.q_lambda *= k;
  w2.q_accel *= k;
  w2.q_eps *= k;
  w2.reg_position *= k;
  w2.reg_env_force *= k;
  ModeQpResult b = qp_for_modes(task, modes, w2, {});
  REQUIRE(a.feasible);
  REQUIRE(b.feasible);
  CHECK(b.objective == doctest::Approx(k * a.objective).epsilon(1e-6));
  for (int t = 0; t < 5; ++t) {
    for (int c = 0; c < 2; ++c) {
      CHECK((a.solution.actions.finger_pos[t][c] - b.solution.actions.finger_pos[t][c]).norm() <=
            1e-7);
      CHECK((a.solution.actions.finger_force[t][c] - b.solution.actions.finger_force[t][c])
                .norm() <= 1e-6);
    }
  }
}

TEST_CASE("global optimality probe: feasible perturbations never improve") {
  CtoTask task = slide_task();
  ModeSequence modes;
  modes.assignment = {{3, 3, 3, 3, 3}, {1, 1, 1, 1, 1}};
  ModeQpResult r = qp_for_modes(task, modes, QpWeights{}, {});
  REQUIRE(r.feasible);
  const DenseQp& qp = r.problem.qp;
  const Eigen::VectorXd& x = r.solution.raw.x;
  const double fx = r.solution.raw.objective;

  // Null-space basis of the equalities.
  Eigen::FullPivLU<Eigen::MatrixXd> lu(qp.a);
  const Eigen::MatrixXd null_basis = lu.kernel();
  REQUIRE(null_basis.cols() > 0);

  Rng rng(17);
  int checked = 0;
  for (int k = 0; k < 300 && checked < 100; ++k) {
    Eigen::VectorXd coef(null_basis.cols());
    for (int i = 0; i < coef.size(); ++i) coef[i] = rng.gaussian();
    Eigen::VectorXd d = null_basis * coef;
    if (d.norm() < 1e-12) continue;
    d *= 1e-3 / d.norm();
    // Shrink toward x until all inequalities hold.
    Eigen::VectorXd cand = x + d;
    int backtrack = 0;
    while ((qp.g * cand - qp.h).maxCoeff() > 0.0 && backtrack < 60) {
      d *= 0.5;
      cand = x + d;
      ++backtrack;
    }
    if ((qp.g * cand - qp.h).maxCoeff() > 0.0) continue;
    ++checked;
    const double fc = 0.5 * cand.dot(qp.p * cand) + qp.c.dot(cand);
    CHECK(fc >= fx - 1e-9);
  }
  CHECK(checked >= 100);
}
