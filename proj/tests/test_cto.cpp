#include <cmath>

#include "doctest.h"
#include "dpm/cto.hpp"
#include "dpm/rng.hpp"
#include "test_util.hpp"

using namespace dpm;
using namespace dpm::testutil;

TEST_CASE("static task with no contacts is feasible at near-zero objective") {
  CtoTask task = static_task();
  ModeQpResult r = qp_for_modes(task, all_no_contact(2, 5), QpWeights{}, {});
  REQUIRE(r.feasible);
  CHECK(r.objective <= 1e-3);
}

TEST_CASE("a frictionless finger cannot pull: leftward acceleration infeasible") {
  CtoTask task = static_task();
  task.mu_finger = 0.0;
  task.environment.clear();
  task.environment.push_back({{0.0, 1.0}, -10.0});  // ground far below: free flight
  for (int t = 0; t < 5; ++t) {
    const double s = t * task.dt;
    task.trajectory[t].x = -2.0 * s * s;  // accelerate left
    task.trajectory[t].y = 0.5;
  }
  // Single finger on the left facet (outward normal -x): it can only push
  // the object rightward, and without friction nothing balances gravity.
  ModeSequence modes;
  modes.assignment = {{3, 3, 3, 3, 3}};
  ModeQpResult r = qp_for_modes(task, modes, QpWeights{}, {});
  CHECK(!r.feasible);
}

TEST_CASE("zero-motion resting task: all-no-contact modes are optimal") {
  CtoTask task = static_task(3);
  CtoSettings settings;
  CtoSolution sol = solve_cto_bnb(task, 1, settings);
  REQUIRE(sol.ok());
  CHECK(sol.objective <= 1e-3);
  for (int t = 0; t < 3; ++t) CHECK(sol.modes.assignment[0][t] == kNoContact);
  CHECK(sol.bounds_monotone);
}

TEST_CASE("enumeration oracle equals the definition on a single-finger instance") {
  CtoTask task = slide_task(3, 0.015);
  CtoSettings settings;
  CtoSolution oracle = enumerate_modes_oracle(task, 1, settings);
  REQUIRE(oracle.ok());

  // Recompute the minimum straight from the definition.
  const int n_facets = task.object.size();
  double best = 1e30;
  std::vector<int> seq(3, kNoContact);
  std::function<void(int)> walk = [&](int t) {
    if (t == 3) {
      ModeSequence m;
      m.assignment = {seq};
      ModeQpResult r = qp_for_modes(task, m, settings.weights, settings.options);
      if (r.feasible) best = std::min(best, r.objective);
      return;
    }
    for (int mode = kNoContact; mode < n_facets; ++mode) {
      if (t > 0 && mode != kNoContact && seq[t - 1] != kNoContact && seq[t - 1] != mode) continue;
      seq[t] = mode;
      walk(t + 1);
    }
    seq[t] = kNoContact;
  };
  walk(0);
  CHECK(oracle.objective == doctest::Approx(best).epsilon(1e-9));
}

TEST_CASE("branch and bound matches exhaustive enumeration on tiny tasks") {
  Rng rng(2024);
  int matched = 0;
  for (int trial = 0; trial < 6; ++trial) {
    Polygon poly = random_polygon(3 + trial % 2, 500 + trial, 0.12);
    CtoTask task;
    task.object = poly;
    task.body = mass_properties(poly, unit_mass_density(poly));
    task.environment = ground_env();
    const double y0 = resting_height(poly, 0.0);
    for (int t = 0; t < 3; ++t) {
      const double s = t * task.dt;
      task.trajectory.push_back(
          {0.4 * s * s + 0.01 * t * rng.uniform(-1, 1), y0 + 0.002 * t, 0.0});
    }
    const int n_fingers = 1 + trial % 2;
    CtoSettings settings;
    CtoSolution bnb = solve_cto_bnb(task, n_fingers, settings);
    CtoSolution oracle = enumerate_modes_oracle(task, n_fingers, settings);
    REQUIRE(bnb.status != CtoStatus::kBudgetExhausted);
    CHECK(bnb.ok() == oracle.ok());
    if (bnb.ok() && oracle.ok()) {
      CHECK(bnb.objective == doctest::Approx(oracle.objective).epsilon(1e-6));
      ++matched;
    }
    CHECK(bnb.bounds_monotone);
  }
  CHECK(matched >= 4);  // most random draws must be solvable
}

TEST_CASE("pushing a square: some finger touches a side facet while moving") {
  CtoTask task = accel_task(5, 1.0);
  CtoSettings settings;
  CtoSolution sol = solve_cto_bnb(task, 2, settings);
  REQUIRE(sol.ok());
  // The motion needs horizontal force; a side facet (1 = right, 3 = left)
  // must be engaged at the accelerating timesteps.
  bool side_contact = false;
  for (int c = 0; c < 2; ++c) {
    for (int t = 0; t < 5; ++t) {
      const int m = sol.modes.assignment[c][t];
      if (m == 1 || m == 3) side_contact = true;
    }
  }
  CHECK(side_contact);
}

TEST_CASE("bnb objective is a lower bound for random admissible sequences") {
  CtoTask task = slide_task(3, 0.01);
  CtoSettings settings;
  CtoSolution sol = solve_cto_bnb(task, 1, settings);
  REQUIRE(sol.ok());
  Rng rng(9);
  const int n_facets = task.object.size();
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<int> seq;
    int prev = kNoContact;
    for (int t = 0; t < 3; ++t) {
      std::vector<int> choices{kNoContact};
      for (int f = 0; f < n_facets; ++f) {
        if (prev == kNoContact || prev == f) choices.push_back(f);
      }
      prev = choices[rng.uniform_index(choices.size())];
      seq.push_back(prev);
    }
    ModeSequence m;
    m.assignment = {seq};
    ModeQpResult r = qp_for_modes(task, m, settings.weights, settings.options);
    if (r.feasible) CHECK(sol.objective <= r.objective + 1e-8);
  }
}

TEST_CASE("solutions respect cones and facet intervals") {
  CtoTask task = accel_task(5, 0.8);
  CtoSettings settings;
  CtoSolution sol = solve_cto_bnb(task, 2, settings);
  REQUIRE(sol.ok());
  ModeQpResult r = qp_for_modes(task, sol.modes, settings.weights, settings.options);
  REQUIRE(r.feasible);
  // Hard equality residual of the solved program.
  const DenseQp& qp = r.problem.qp;
  const Eigen::VectorXd& x = r.solution.raw.x;
  CHECK((qp.a * x - qp.b).lpNorm<Eigen::Infinity>() <= 1e-6);
  CHECK((qp.g * x - qp.h).maxCoeff() <= 1e-8);

  for (int t = 0; t < 5; ++t) {
    for (int c = 0; c < 2; ++c) {
      const int mode = sol.modes.assignment[c][t];
      if (mode == kNoContact) {
        CHECK(sol.actions.finger_force[t][c].norm() <= 1e-9);
        continue;
      }
      // Finger on its facet.
      const Facet f = polygon_facet_world(task.object, task.trajectory[t], mode);
      CHECK(point_facet_distance(sol.actions.finger_pos[t][c], f).distance <= 1e-8);
      // Force in the cone: nonnegative dot with the inward normal and within
      // the friction angle.
      const Vec2 lam = sol.actions.finger_force[t][c];
      if (lam.norm() > 1e-9) {
        const Vec2 inward = -f.outward_normal;
        const double normal_part = lam.dot(inward);
        CHECK(normal_part >= -1e-8);
        const double tangential = std::abs(lam.dot(inward.perp()));
        CHECK(tangential <= task.mu_finger * normal_part + 1e-8);
      }
    }
  }
}
