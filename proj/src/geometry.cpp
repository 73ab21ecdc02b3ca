#include "dpm/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace dpm {

double Vec2::norm() const { return std::sqrt(x * x + y * y); }

Vec2 Vec2::normalized(double eps) const {
  const double n = norm();
  if (n <= eps) return {0.0, 0.0};
  return {x / n, y / n};
}

Vec2 rotate(double theta, const Vec2& v) {
  const double c = std::cos(theta), s = std::sin(theta);
  return {c * v.x - s * v.y, s * v.x + c * v.y};
}

Vec2 body_to_world(const Pose2& pose, const Vec2& p_body) {
  return rotate(pose.theta, p_body) + Vec2{pose.x, pose.y};
}

Vec2 world_to_body(const Pose2& pose, const Vec2& p_world) {
  return rotate(-pose.theta, p_world - Vec2{pose.x, pose.y});
}

double polygon_signed_area(const Polygon& poly) {
  double a = 0.0;
  const int n = poly.size();
  for (int i = 0; i < n; ++i) {
    a += poly.vertex(i).cross(poly.vertex_wrapped(i + 1));
  }
  return 0.5 * a;
}

Vec2 polygon_centroid(const Polygon& poly) {
  double a = 0.0;
  Vec2 c{0.0, 0.0};
  const int n = poly.size();
  for (int i = 0; i < n; ++i) {
    const Vec2& p = poly.vertex(i);
    const Vec2& q = poly.vertex_wrapped(i + 1);
    const double w = p.cross(q);
    a += w;
    c += (p + q) * w;
  }
  a *= 0.5;
  if (std::abs(a) < 1e-14) throw std::invalid_argument("polygon_centroid: degenerate polygon");
  return c * (1.0 / (6.0 * a));
}

bool polygon_is_ccw(const Polygon& poly) { return polygon_signed_area(poly) > 0.0; }

namespace {

bool segments_properly_intersect(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d) {
  auto orient = [](const Vec2& p, const Vec2& q, const Vec2& r) {
    return (q - p).cross(r - p);
  };
  const double o1 = orient(a, b, c);
  const double o2 = orient(a, b, d);
  const double o3 = orient(c, d, a);
  const double o4 = orient(c, d, b);
  return ((o1 > 0) != (o2 > 0)) && ((o3 > 0) != (o4 > 0)) &&
         o1 != 0 && o2 != 0 && o3 != 0 && o4 != 0;
}

}  // namespace

bool polygon_is_simple(const Polygon& poly) {
  const int n = poly.size();
  if (n < 3) return false;
  for (int i = 0; i < n; ++i) {
    const Vec2& a = poly.vertex(i);
    const Vec2& b = poly.vertex_wrapped(i + 1);
    if ((b - a).norm() < 1e-12) return false;
    for (int j = i + 1; j < n; ++j) {
      if (j == i || (j + 1) % n == i || (i + 1) % n == j) continue;
      const Vec2& c = poly.vertex(j);
      const Vec2& d = poly.vertex_wrapped(j + 1);
      if (segments_properly_intersect(a, b, c, d)) return false;
    }
  }
  return true;
}

Facet polygon_facet(const Polygon& poly, int i) {
  Facet f;
  f.v1 = poly.vertex(i);
  f.v2 = poly.vertex_wrapped(i + 1);
  // CCW order puts the interior on the left, so the outward normal is the
  // edge direction rotated by -90 degrees.
  const Vec2 dir = (f.v2 - f.v1).normalized();
  f.outward_normal = {dir.y, -dir.x};
  return f;
}

Facet polygon_facet_world(const Polygon& poly, const Pose2& pose, int i) {
  Facet body = polygon_facet(poly, i);
  Facet f;
  f.v1 = body_to_world(pose, body.v1);
  f.v2 = body_to_world(pose, body.v2);
  f.outward_normal = rotate(pose.theta, body.outward_normal);
  return f;
}

Polygon random_polygon(int n_facets, std::uint64_t rng_seed, double radius) {
  if (n_facets < 3 || n_facets > 16) {
    throw std::invalid_argument("random_polygon: n_facets must be in [3, 16]");
  }
  if (radius <= 0.0) throw std::invalid_argument("random_polygon: radius must be positive");
  Rng rng(rng_seed);
  const int n = n_facets;
  for (int attempt = 0; attempt < 1000; ++attempt) {
    std::vector<double> angles(n);
    for (double& a : angles) a = rng.uniform(0.0, 2.0 * M_PI);
    std::sort(angles.begin(), angles.end());

    // Reject clustered angles: they produce slivers that are numerically
    // useless as contact facets.
    double min_gap = angles[0] + 2.0 * M_PI - angles[n - 1];
    for (int i = 1; i < n; ++i) min_gap = std::min(min_gap, angles[i] - angles[i - 1]);
    if (min_gap < 0.15) continue;

    Polygon poly;
    poly.vertices.reserve(n);
    for (int i = 0; i < n; ++i) {
      const double r = rng.uniform(0.3, 1.0);
      poly.vertices.push_back({r * std::cos(angles[i]), r * std::sin(angles[i])});
    }
    if (!polygon_is_simple(poly) || !polygon_is_ccw(poly)) continue;
    if (std::abs(polygon_signed_area(poly)) < 0.05) continue;

    const Vec2 c = polygon_centroid(poly);
    double max_norm = 0.0;
    for (Vec2& v : poly.vertices) {
      v -= c;
      max_norm = std::max(max_norm, v.norm());
    }
    const double scale = radius / max_norm;
    for (Vec2& v : poly.vertices) v = v * scale;
    if (!polygon_is_simple(poly)) continue;
    return poly;
  }
  throw std::runtime_error("random_polygon: failed to draw a usable polygon");
}

PointFacetResult point_facet_distance(const Vec2& p, const Facet& f) {
  PointFacetResult out;
  const Vec2 d = f.v2 - f.v1;
  const double len2 = d.squared_norm();
  double s = 0.0;
  if (len2 > 0.0) s = std::clamp((p - f.v1).dot(d) / len2, 0.0, 1.0);
  out.s = s;
  out.closest = f.v1 + d * s;
  out.distance = (p - out.closest).norm();
  return out;
}

namespace {

bool point_inside(const Vec2& p_body, const Polygon& poly) {
  // Even-odd crossing test in the body frame.
  bool inside = false;
  const int n = poly.size();
  for (int i = 0; i < n; ++i) {
    const Vec2& a = poly.vertex(i);
    const Vec2& b = poly.vertex_wrapped(i + 1);
    if ((a.y > p_body.y) != (b.y > p_body.y)) {
      const double x_cross = a.x + (p_body.y - a.y) / (b.y - a.y) * (b.x - a.x);
      if (p_body.x < x_cross) inside = !inside;
    }
  }
  return inside;
}

}  // namespace

BoundaryPoint closest_boundary_point(const Vec2& p, const Polygon& poly, const Pose2& pose) {
  const Vec2 p_body = world_to_body(pose, p);
  const int n = poly.size();
  BoundaryPoint best;
  best.distance = std::numeric_limits<double>::infinity();
  double best_abs = std::numeric_limits<double>::infinity();
  Vec2 best_closest_body;
  int best_facet = 0;
  double best_s = 0.0;
  for (int i = 0; i < n; ++i) {
    const Facet f = polygon_facet(poly, i);
    const PointFacetResult r = point_facet_distance(p_body, f);
    if (r.distance < best_abs) {
      best_abs = r.distance;
      best_closest_body = r.closest;
      best_facet = i;
      best_s = r.s;
    }
  }
  const bool inside = point_inside(p_body, poly);
  best.distance = inside ? -best_abs : best_abs;
  best.closest = body_to_world(pose, best_closest_body);
  best.facet_index = best_facet;
  // Interior-of-edge contacts use the facet normal. At a vertex (s at either
  // end) the point-to-set normal is better behaved for an outside query.
  const Facet fw = polygon_facet_world(poly, pose, best_facet);
  Vec2 normal = fw.outward_normal;
  if (!inside && best_abs > 1e-12 && (best_s <= 0.0 || best_s >= 1.0)) {
    normal = (p - best.closest).normalized();
  }
  best.outward_normal = normal;
  return best;
}

double signed_distance(const Vec2& p, const Polygon& poly, const Pose2& pose) {
  return closest_boundary_point(p, poly, pose).distance;
}

FrictionCone friction_cone_at(const Vec2& contact, const Vec2& inward_normal, double mu) {
  if (mu < 0.0) throw std::invalid_argument("friction_cone_at: mu must be >= 0");
  FrictionCone fc;
  fc.apex = contact;
  const Vec2 n = inward_normal.normalized();
  const Vec2 t = n.perp();
  fc.ray1 = (n + t * mu).normalized();
  fc.ray2 = (n - t * mu).normalized();
  return fc;
}

FrictionCone friction_cone_sliding(const Vec2& contact, const Vec2& inward_normal, double mu,
                                   double tangential_velocity, double stick_tol) {
  if (std::abs(tangential_velocity) <= stick_tol) {
    return friction_cone_at(contact, inward_normal, mu);
  }
  const Vec2 n = inward_normal.normalized();
  const Vec2 t = n.perp();
  const double dir = tangential_velocity > 0.0 ? 1.0 : -1.0;
  FrictionCone fc;
  fc.apex = contact;
  fc.ray1 = (n - t * (mu * dir)).normalized();
  fc.ray2 = fc.ray1;
  return fc;
}

double polygon_bounding_radius(const Polygon& poly) {
  double r = 0.0;
  for (const Vec2& v : poly.vertices) r = std::max(r, v.norm());
  return r;
}

Polygon load_polygon_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_polygon_text: cannot open " + path);
  Polygon poly;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    double x, y;
    if (ss >> x >> y) poly.vertices.push_back({x, y});
  }
  if (poly.size() < 3) throw std::runtime_error("load_polygon_text: fewer than 3 vertices");
  if (!polygon_is_ccw(poly)) throw std::runtime_error("load_polygon_text: vertices not CCW");
  if (!polygon_is_simple(poly)) throw std::runtime_error("load_polygon_text: polygon not simple");
  return poly;
}

void save_polygon_text(const Polygon& poly, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_polygon_text: cannot open " + path);
  out.precision(17);
  for (const Vec2& v : poly.vertices) out << v.x << " " << v.y << "\n";
}

}  // namespace dpm
