#include <cmath>

#include "doctest.h"
#include "dpm/geometry.hpp"
#include "dpm/rng.hpp"

using namespace dpm;

namespace {

// O(n^2) pairwise segment-intersection oracle, independent of the library's
// simplicity test.
bool brute_force_simple(const Polygon& poly) {
  const int n = poly.size();
  auto seg_intersect = [](Vec2 p1, Vec2 p2, Vec2 p3, Vec2 p4) {
    auto d = [](Vec2 a, Vec2 b, Vec2 c) { return (b - a).cross(c - a); };
    double d1 = d(p3, p4, p1), d2 = d(p3, p4, p2), d3 = d(p1, p2, p3), d4 = d(p1, p2, p4);
    if (((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) &&
        ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0)))
      return true;
    return false;
  };
  for (int i = 0; i < n; ++i) {
    for (int j = i + 2; j < n; ++j) {
      if (i == 0 && j == n - 1) continue;  // adjacent via wrap
      if (seg_intersect(poly.vertex(i), poly.vertex_wrapped(i + 1), poly.vertex(j),
                        poly.vertex_wrapped(j + 1)))
        return false;
    }
  }
  return true;
}

// Winding-number inside test for the signed-distance oracle.
bool winding_inside(const Vec2& p, const Polygon& poly, const Pose2& pose) {
  double angle = 0.0;
  const int n = poly.size();
  for (int i = 0; i < n; ++i) {
    const Vec2 a = body_to_world(pose, poly.vertex(i)) - p;
    const Vec2 b = body_to_world(pose, poly.vertex_wrapped(i + 1)) - p;
    angle += std::atan2(a.cross(b), a.dot(b));
  }
  return std::abs(angle) > M_PI;
}

double oracle_signed_distance(const Vec2& p, const Polygon& poly, const Pose2& pose) {
  double best = 1e30;
  for (int i = 0; i < poly.size(); ++i) {
    best = std::min(best, point_facet_distance(p, polygon_facet_world(poly, pose, i)).distance);
  }
  return winding_inside(p, poly, pose) ? -best : best;
}

}  // namespace

TEST_CASE("triangles are always simple and CCW") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Polygon p = random_polygon(3, seed, 0.2);
    CHECK(p.size() == 3);
    CHECK(polygon_is_simple(p));
    CHECK(polygon_signed_area(p) > 0.0);
  }
}

TEST_CASE("polygon vertices stay within the requested radius") {
  for (int n = 4; n <= 6; ++n) {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
      Polygon p = random_polygon(n, seed * 7 + n, 0.2);
      CHECK(p.size() == n);
      for (const Vec2& v : p.vertices) CHECK(v.norm() <= 0.2 + 1e-12);
    }
  }
}

TEST_CASE("1000 twelve-facet polygons pass the brute-force simplicity oracle") {
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    Polygon p = random_polygon(12, seed, 0.2);
    CHECK(brute_force_simple(p));
    CHECK(polygon_signed_area(p) > 0.0);
  }
}

TEST_CASE("random_polygon is deterministic under a fixed seed") {
  Polygon a = random_polygon(6, 1234, 0.2);
  Polygon b = random_polygon(6, 1234, 0.2);
  REQUIRE(a.size() == b.size());
  for (int i = 0; i < a.size(); ++i) {
    CHECK(a.vertex(i).x == b.vertex(i).x);
    CHECK(a.vertex(i).y == b.vertex(i).y);
  }
}

TEST_CASE("point-facet distance basics") {
  Facet f;
  f.v1 = {0, -1};
  f.v2 = {0, 1};
  f.outward_normal = {1, 0};

  auto r = point_facet_distance({0, 0}, f);
  CHECK(r.distance == doctest::Approx(0.0));
  CHECK(r.s == doctest::Approx(0.5));

  r = point_facet_distance({1, 0}, f);
  CHECK(r.distance == doctest::Approx(1.0));
  CHECK(r.closest.x == doctest::Approx(0.0));
  CHECK(r.closest.y == doctest::Approx(0.0));
}

TEST_CASE("point-facet distance matches a dense sampling oracle") {
  Rng rng(99);
  for (int trial = 0; trial < 20; ++trial) {
    Facet f;
    f.v1 = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
    f.v2 = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
    const Vec2 p{rng.uniform(-1, 1), rng.uniform(-1, 1)};
    double best = 1e30;
    const int samples = 100000;
    for (int i = 0; i <= samples; ++i) {
      const Vec2 q = f.v1 + (f.v2 - f.v1) * (static_cast<double>(i) / samples);
      best = std::min(best, (p - q).norm());
    }
    CHECK(point_facet_distance(p, f).distance == doctest::Approx(best).epsilon(1e-4));
  }
}

TEST_CASE("signed distance sign conventions") {
  Polygon square;
  square.vertices = {{-0.5, -0.5}, {0.5, -0.5}, {0.5, 0.5}, {-0.5, 0.5}};
  CHECK(signed_distance({0, 0}, square, {}) < 0.0);
  CHECK(std::abs(signed_distance({0.5, 0.5}, square, {})) <= 1e-9);
  CHECK(signed_distance({2, 0}, square, {}) == doctest::Approx(1.5));
}

TEST_CASE("signed distance agrees with the winding-number oracle") {
  Rng rng(7);
  for (int trial = 0; trial < 25; ++trial) {
    Polygon poly = random_polygon(3 + static_cast<int>(rng.uniform_index(8)), 100 + trial, 0.2);
    Pose2 pose{rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), rng.uniform(-3, 3)};
    for (int k = 0; k < 40; ++k) {
      const Vec2 p{rng.uniform(-0.6, 0.6), rng.uniform(-0.6, 0.6)};
      const double expect = oracle_signed_distance(p, poly, pose);
      CHECK(signed_distance(p, poly, pose) == doctest::Approx(expect).epsilon(1e-6));
    }
  }
}

TEST_CASE("signed distance is 1-Lipschitz on sampled pairs") {
  Rng rng(21);
  Polygon poly = random_polygon(8, 55, 0.2);
  for (int k = 0; k < 300; ++k) {
    const Vec2 p{rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5)};
    const Vec2 q{rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5)};
    const double dp = signed_distance(p, poly, {});
    const double dq = signed_distance(q, poly, {});
    CHECK(std::abs(dp - dq) <= (p - q).norm() + 1e-9);
  }
}

TEST_CASE("friction cone construction") {
  SUBCASE("mu = 0 collapses to the normal ray") {
    FrictionCone fc = friction_cone_at({0, 0}, {0, 1}, 0.0);
    CHECK(fc.ray1.x == doctest::Approx(0.0));
    CHECK(fc.ray1.y == doctest::Approx(1.0));
    CHECK(fc.ray2.x == doctest::Approx(0.0));
    CHECK(fc.ray2.y == doctest::Approx(1.0));
  }
  SUBCASE("mu = 1 gives a 45 degree half-angle") {
    FrictionCone fc = friction_cone_at({0, 0}, {0, 1}, 1.0);
    CHECK(fc.ray1.x == doctest::Approx(-std::sqrt(0.5)));
    CHECK(fc.ray1.y == doctest::Approx(std::sqrt(0.5)));
    CHECK(fc.ray2.x == doctest::Approx(std::sqrt(0.5)));
    CHECK(fc.ray2.y == doctest::Approx(std::sqrt(0.5)));
  }
  SUBCASE("rays make angle atan(mu) with the normal") {
    Rng rng(3);
    for (int k = 0; k < 100; ++k) {
      const Vec2 n = Vec2{rng.gaussian(), rng.gaussian()}.normalized();
      const double mu = rng.uniform(0.05, 2.0);
      FrictionCone fc = friction_cone_at({0, 0}, n, mu);
      CHECK(fc.ray1.norm() == doctest::Approx(1.0).epsilon(1e-9));
      CHECK(fc.ray2.norm() == doctest::Approx(1.0).epsilon(1e-9));
      CHECK(std::acos(fc.ray1.dot(n)) == doctest::Approx(std::atan(mu)).epsilon(1e-9));
      CHECK(std::acos(fc.ray2.dot(n)) == doctest::Approx(std::atan(mu)).epsilon(1e-9));
    }
  }
  SUBCASE("nonnegative combinations stay on the normal side") {
    Rng rng(4);
    for (int k = 0; k < 100; ++k) {
      const Vec2 n = Vec2{rng.gaussian(), rng.gaussian()}.normalized();
      FrictionCone fc = friction_cone_at({0, 0}, n, rng.uniform(0.0, 1.5));
      const Vec2 f = fc.ray1 * rng.uniform(0, 5) + fc.ray2 * rng.uniform(0, 5);
      CHECK(f.dot(n) >= -1e-12);
    }
  }
}

TEST_CASE("body/world transforms") {
  SUBCASE("identity pose") {
    const Vec2 p{0.3, -0.2};
    const Vec2 w = body_to_world({}, p);
    CHECK(w.x == doctest::Approx(p.x));
    CHECK(w.y == doctest::Approx(p.y));
  }
  SUBCASE("quarter rotation") {
    const Vec2 w = body_to_world({1, 2, M_PI / 2}, {1, 0});
    CHECK(w.x == doctest::Approx(1.0));
    CHECK(w.y == doctest::Approx(3.0));
  }
  SUBCASE("round-trip is the identity to 1e-12") {
    Rng rng(11);
    for (int k = 0; k < 200; ++k) {
      const Pose2 pose{rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-7, 7)};
      const Vec2 p{rng.uniform(-2, 2), rng.uniform(-2, 2)};
      const Vec2 back = world_to_body(pose, body_to_world(pose, p));
      CHECK(std::abs(back.x - p.x) <= 1e-12);
      CHECK(std::abs(back.y - p.y) <= 1e-12);
    }
  }
}

TEST_CASE("polygon text IO round-trips and validates") {
  Polygon poly = random_polygon(5, 42, 0.2);
  const std::string path = "test_polygon_io.txt";
  save_polygon_text(poly, path);
  Polygon loaded = load_polygon_text(path);
  REQUIRE(loaded.size() == poly.size());
  for (int i = 0; i < poly.size(); ++i) {
    CHECK(loaded.vertex(i).x == doctest::Approx(poly.vertex(i).x).epsilon(1e-15));
    CHECK(loaded.vertex(i).y == doctest::Approx(poly.vertex(i).y).epsilon(1e-15));
  }
  std::remove(path.c_str());
}
