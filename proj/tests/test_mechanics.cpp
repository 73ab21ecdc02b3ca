#include <cmath>

#include "doctest.h"
#include "dpm/mechanics.hpp"
#include "dpm/rng.hpp"

using namespace dpm;

namespace {

Polygon unit_square() {
  Polygon p;
  p.vertices = {{-0.5, -0.5}, {0.5, -0.5}, {0.5, 0.5}, {-0.5, 0.5}};
  return p;
}

}  // namespace

TEST_CASE("unit square mass properties") {
  const RigidBody body = mass_properties(unit_square(), 1.0);
  CHECK(body.mass == doctest::Approx(1.0));
  CHECK(body.inertia == doctest::Approx(1.0 / 6.0));
}

TEST_CASE("mass and inertia are linear in density") {
  Polygon poly = random_polygon(7, 5, 0.2);
  const RigidBody a = mass_properties(poly, 1.0);
  const RigidBody b = mass_properties(poly, 2.0);
  CHECK(b.mass == doctest::Approx(2.0 * a.mass));
  CHECK(b.inertia == doctest::Approx(2.0 * a.inertia));
}

TEST_CASE("mass properties match Monte Carlo integration") {
  Polygon poly = random_polygon(9, 77, 0.2);
  const RigidBody body = mass_properties(poly, 3.0);

  Rng rng(123);
  const double r = polygon_bounding_radius(poly);
  const double box_area = (2 * r) * (2 * r);
  const int samples = 1000000;
  int hits = 0;
  double second_moment = 0.0;
  for (int i = 0; i < samples; ++i) {
    const Vec2 p{rng.uniform(-r, r), rng.uniform(-r, r)};
    if (signed_distance(p, poly, {}) < 0.0) {
      ++hits;
      second_moment += p.squared_norm();
    }
  }
  const double mc_mass = 3.0 * box_area * hits / samples;
  const double mc_inertia = 3.0 * box_area * second_moment / samples;
  CHECK(body.mass == doctest::Approx(mc_mass).epsilon(0.005));
  CHECK(body.inertia == doctest::Approx(mc_inertia).epsilon(0.01));
}

TEST_CASE("mass matrix is symmetric positive definite for generated objects") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Polygon poly = random_polygon(4 + static_cast<int>(seed % 9), seed, 0.2);
    const RigidBody body = mass_properties(poly, unit_mass_density(poly));
    CHECK(body.mass == doctest::Approx(1.0));
    const Eigen::Matrix3d m = body.mass_matrix();
    CHECK((m - m.transpose()).norm() == doctest::Approx(0.0));
    Eigen::LLT<Eigen::Matrix3d> llt(m);
    CHECK(llt.info() == Eigen::Success);
  }
}

TEST_CASE("gravity wrench") {
  RigidBody body;
  body.mass = 1.0;
  Wrench w = gravity_wrench(body, {});
  CHECK(w.fx == doctest::Approx(0.0));
  CHECK(w.fy == doctest::Approx(-9.81));
  CHECK(w.tau == doctest::Approx(0.0));

  w = gravity_wrench(body, {0.3, -0.1, 2.4});
  CHECK(w.fy == doctest::Approx(-9.81));  // independent of theta

  body.mass = 2.5;
  CHECK(gravity_wrench(body, {}).fy == doctest::Approx(-24.525));
}

TEST_CASE("contact Jacobian basics") {
  const Pose2 pose{0.2, 0.1, 0.7};
  SUBCASE("contact at the centroid has a zero torque row") {
    const auto j = contact_jacobian(pose, {0.2, 0.1});
    CHECK(j(2, 0) == doctest::Approx(0.0));
    CHECK(j(2, 1) == doctest::Approx(0.0));
  }
  SUBCASE("unit force one meter right of the centroid gives +1 torque") {
    const auto j = contact_jacobian({0, 0, 0}, {1.0, 0.0});
    const Eigen::Vector2d f(0.0, 1.0);
    const Eigen::Vector3d wrench = j * f;
    CHECK(wrench[0] == doctest::Approx(0.0));
    CHECK(wrench[1] == doctest::Approx(1.0));
    CHECK(wrench[2] == doctest::Approx(1.0));
  }
  SUBCASE("coincident points share a Jacobian and the map is linear in offset") {
    const auto j1 = contact_jacobian(pose, {0.5, 0.4});
    const auto j2 = contact_jacobian(pose, {0.5, 0.4});
    CHECK((j1 - j2).norm() == doctest::Approx(0.0));
  }
}

TEST_CASE("contact Jacobian matches finite differences of the point map") {
  Rng rng(9);
  for (int trial = 0; trial < 30; ++trial) {
    const Pose2 pose{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-3, 3)};
    const Vec2 contact{rng.uniform(-1, 1), rng.uniform(-1, 1)};
    const Vec2 local = world_to_body(pose, contact);
    const auto j = contact_jacobian(pose, contact);

    // World position of the body point as a function of the pose; its
    // derivative transposed is the force-to-wrench map.
    const double h = 1e-7;
    Eigen::Matrix<double, 2, 3> vel_map;
    for (int k = 0; k < 3; ++k) {
      Pose2 plus = pose, minus = pose;
      (k == 0 ? plus.x : k == 1 ? plus.y : plus.theta) += h;
      (k == 0 ? minus.x : k == 1 ? minus.y : minus.theta) -= h;
      const Vec2 a = body_to_world(plus, local);
      const Vec2 b = body_to_world(minus, local);
      vel_map(0, k) = (a.x - b.x) / (2 * h);
      vel_map(1, k) = (a.y - b.y) / (2 * h);
    }
    CHECK((j - vel_map.transpose()).lpNorm<Eigen::Infinity>() <= 1e-6);
  }
}

TEST_CASE("trajectory differentiation stencils") {
  const double dt = 0.1;
  SUBCASE("constant poses give zero velocity and acceleration") {
    std::vector<Pose2> poses(5, Pose2{0.2, 0.3, 0.4});
    const Trajectory traj = differentiate_trajectory(poses, dt);
    for (int t = 0; t < 5; ++t) {
      CHECK(traj.velocities[t].norm() == doctest::Approx(0.0));
      CHECK(traj.accelerations[t].norm() == doctest::Approx(0.0));
    }
  }
  SUBCASE("linear poses give constant velocity, zero acceleration") {
    std::vector<Pose2> poses;
    for (int t = 0; t < 5; ++t) poses.push_back({0.1 * t, -0.2 * t, 0.05 * t});
    const Trajectory traj = differentiate_trajectory(poses, dt);
    for (int t = 0; t < 5; ++t) {
      CHECK(traj.velocities[t][0] == doctest::Approx(1.0));
      CHECK(traj.velocities[t][1] == doctest::Approx(-2.0));
      CHECK(traj.velocities[t][2] == doctest::Approx(0.5));
      CHECK(traj.accelerations[t].norm() == doctest::Approx(0.0).epsilon(1e-9));
    }
  }
  SUBCASE("quadratic poses recover the exact acceleration at every sample") {
    const Eigen::Vector3d acc(0.8, -1.4, 2.2);
    for (int t_count : {3, 4, 5, 7}) {
      std::vector<Pose2> poses;
      for (int t = 0; t < t_count; ++t) {
        const double s = t * dt;
        poses.push_back({0.5 * acc[0] * s * s, 0.5 * acc[1] * s * s, 0.5 * acc[2] * s * s});
      }
      const Trajectory traj = differentiate_trajectory(poses, dt);
      for (int t = 0; t < t_count; ++t) {
        CHECK(traj.accelerations[t][0] == doctest::Approx(acc[0]).epsilon(1e-8));
        CHECK(traj.accelerations[t][1] == doctest::Approx(acc[1]).epsilon(1e-8));
        CHECK(traj.accelerations[t][2] == doctest::Approx(acc[2]).epsilon(1e-8));
      }
    }
  }
  SUBCASE("T < 3 is rejected") {
    std::vector<Pose2> poses(2);
    CHECK_THROWS(differentiate_trajectory(poses, dt));
  }
}
