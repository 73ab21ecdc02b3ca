#pragma once
/// Planar geometry: vectors, poses, polygons, facets and friction cones.
///
/// All lengths are meters, angles radians. Polygons are stored in the body
/// frame with the centroid at the origin and counter-clockwise vertex order.
/// Everything here is a pure function on immutable values and safe to call
/// concurrently.

#include <string>
#include <vector>

#include "dpm/rng.hpp"

namespace dpm {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  constexpr Vec2() = default;
  constexpr Vec2(double x_, double y_) : x(x_), y(y_) {}

  constexpr Vec2 operator+(const Vec2& r) const { return {x + r.x, y + r.y}; }
  constexpr Vec2 operator-(const Vec2& r) const { return {x - r.x, y - r.y}; }
  constexpr Vec2 operator*(double s) const { return {x * s, y * s}; }
  constexpr Vec2 operator-() const { return {-x, -y}; }
  friend constexpr Vec2 operator*(double s, const Vec2& v) { return {v.x * s, v.y * s}; }
  Vec2& operator+=(const Vec2& r) { x += r.x; y += r.y; return *this; }
  Vec2& operator-=(const Vec2& r) { x -= r.x; y -= r.y; return *this; }

  constexpr double dot(const Vec2& r) const { return x * r.x + y * r.y; }
  /// 2D cross product (z component of the 3D cross).
  constexpr double cross(const Vec2& r) const { return x * r.y - y * r.x; }
  double norm() const;
  double squared_norm() const { return x * x + y * y; }
  Vec2 normalized(double eps = 1e-15) const;
  /// Rotate by +90 degrees.
  constexpr Vec2 perp() const { return {-y, x}; }
};

/// SE(2) pose. theta is stored unwrapped: no modular reduction is ever
/// applied, so pose differences along a trajectory are well defined.
struct Pose2 {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;

  constexpr Pose2() = default;
  constexpr Pose2(double x_, double y_, double t_) : x(x_), y(y_), theta(t_) {}
};

Vec2 body_to_world(const Pose2& pose, const Vec2& p_body);
Vec2 world_to_body(const Pose2& pose, const Vec2& p_world);
/// Rotate a direction (no translation).
Vec2 rotate(double theta, const Vec2& v);

/// Simple CCW polygon in the body frame.
struct Polygon {
  std::vector<Vec2> vertices;

  int size() const { return static_cast<int>(vertices.size()); }
  const Vec2& vertex(int i) const { return vertices[static_cast<size_t>(i)]; }
  /// Vertex with wrap-around indexing.
  const Vec2& vertex_wrapped(int i) const {
    const int n = size();
    return vertices[static_cast<size_t>(((i % n) + n) % n)];
  }
};

/// One polygon edge in a given frame, with its outward unit normal.
struct Facet {
  Vec2 v1;
  Vec2 v2;
  Vec2 outward_normal;

  Vec2 midpoint() const { return (v1 + v2) * 0.5; }
  Vec2 direction() const { return v2 - v1; }
};

/// Planar friction cone as two unit rays from the apex. The rays span every
/// force the contact can transmit: any a1*ray1 + a2*ray2 with a >= 0.
struct FrictionCone {
  Vec2 apex;
  Vec2 ray1;
  Vec2 ray2;
};

/// A half-plane obstacle: free space satisfies normal . x >= offset.
struct HalfPlane {
  Vec2 normal;    // unit, points into free space
  double offset = 0.0;

  double distance(const Vec2& p) const { return normal.dot(p) - offset; }
};

double polygon_signed_area(const Polygon& poly);
Vec2 polygon_centroid(const Polygon& poly);
bool polygon_is_simple(const Polygon& poly);
bool polygon_is_ccw(const Polygon& poly);

/// Facet i connects vertex i to vertex i+1 (in the polygon's own frame).
Facet polygon_facet(const Polygon& poly, int i);
/// Same facet mapped through a pose into the world frame.
Facet polygon_facet_world(const Polygon& poly, const Pose2& pose, int i);

/// Random simple CCW polygon with n_facets vertices fitting inside the given
/// radius. Vertices are sampled on sorted random angles at random radii, the
/// shape is recentred on its centroid and rescaled so max |v| == radius.
/// Deterministic for a fixed seed.
Polygon random_polygon(int n_facets, std::uint64_t rng_seed, double radius);

struct PointFacetResult {
  double distance = 0.0;
  Vec2 closest;
  double s = 0.0;  // closest = v1 + s*(v2-v1), s in [0,1]
};

PointFacetResult point_facet_distance(const Vec2& p, const Facet& f);

/// Signed distance of a world point to the polygon at the given pose:
/// negative inside, positive outside, zero on the boundary. Inside values are
/// -(min facet distance).
double signed_distance(const Vec2& p, const Polygon& poly, const Pose2& pose);

struct BoundaryPoint {
  double distance = 0.0;   // signed
  Vec2 closest;            // closest boundary point, world frame
  Vec2 outward_normal;     // outward direction at that point, world frame
  int facet_index = 0;
};

/// Closest boundary point and outward normal for a world-frame query point.
BoundaryPoint closest_boundary_point(const Vec2& p, const Polygon& poly, const Pose2& pose);

/// Friction cone at a contact: rays are normalize(n +/- mu*t) for the unit
/// inward force direction n and tangent t. mu = 0 collapses both rays onto n.
FrictionCone friction_cone_at(const Vec2& contact, const Vec2& inward_normal, double mu);

/// Coulomb cone aware of sliding: while the contact slips, the transmissible
/// force collapses to the kinetic ray normalize(n - mu*sign(v_t)*t), which
/// both rays then share. |v_t| <= stick_tol keeps the full static cone.
FrictionCone friction_cone_sliding(const Vec2& contact, const Vec2& inward_normal, double mu,
                                   double tangential_velocity, double stick_tol = 1e-6);

/// Largest |v| over vertices; used as the rotation length scale.
double polygon_bounding_radius(const Polygon& poly);

/// Plain-text polygon IO: one "x y" pair per line, CCW order.
/// load validates simplicity and orientation and throws on bad input.
Polygon load_polygon_text(const std::string& path);
void save_polygon_text(const Polygon& poly, const std::string& path);

}  // namespace dpm
