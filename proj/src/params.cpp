#include "dpm/params.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "dpm/io_util.hpp"
#include "json.hpp"

namespace dpm {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

RobotActions RobotActions::zeros(int t_count, int n_fingers) {
  RobotActions a;
  a.t_count = t_count;
  a.n_fingers = n_fingers;
  a.finger_pos.assign(t_count, std::vector<Vec2>(n_fingers));
  a.finger_force.assign(t_count, std::vector<Vec2>(n_fingers));
  a.env_force.assign(t_count, Vec2{});
  return a;
}

MechanicalParameters make_empty_parameters(int t_count, int n_fingers) {
  MechanicalParameters p;
  p.t_count = t_count;
  p.n_fingers = n_fingers;
  p.poses.assign(t_count, Pose2{});
  p.finger.assign(t_count, std::vector<FingerContactParams>(n_fingers));
  p.env_point.assign(t_count, Vec2{});
  p.env_ray1.assign(t_count, Vec2{});
  p.env_ray2.assign(t_count, Vec2{});
  return p;
}

std::vector<double> flatten(const MechanicalParameters& p) {
  std::vector<double> v;
  v.reserve(static_cast<size_t>(p.t_count) * MechanicalParameters::values_per_step(p.n_fingers));
  for (int t = 0; t < p.t_count; ++t) {
    v.push_back(p.poses[t].x);
    v.push_back(p.poses[t].y);
    v.push_back(p.poses[t].theta);
    for (int row = 0; row < 3; ++row) {
      for (int c = 0; c < p.n_fingers; ++c) {
        v.push_back(p.finger[t][c].jacobian(row, 0));
        v.push_back(p.finger[t][c].jacobian(row, 1));
      }
    }
    for (int c = 0; c < p.n_fingers; ++c) {
      const FingerContactParams& f = p.finger[t][c];
      v.insert(v.end(), {f.facet_v1.x, f.facet_v1.y, f.facet_v2.x, f.facet_v2.y});
    }
    for (int c = 0; c < p.n_fingers; ++c) {
      const FingerContactParams& f = p.finger[t][c];
      v.insert(v.end(), {f.cone_ray1.x, f.cone_ray1.y, f.cone_ray2.x, f.cone_ray2.y});
    }
    v.push_back(p.env_point[t].x);
    v.push_back(p.env_point[t].y);
    v.insert(v.end(), {p.env_ray1[t].x, p.env_ray1[t].y, p.env_ray2[t].x, p.env_ray2[t].y});
  }
  return v;
}

MechanicalParameters unflatten(const std::vector<double>& v, int t_count, int n_fingers) {
  const size_t expected =
      static_cast<size_t>(t_count) * MechanicalParameters::values_per_step(n_fingers);
  if (v.size() != expected) {
    throw std::invalid_argument("unflatten: got " + std::to_string(v.size()) +
                                " values, expected " + std::to_string(expected));
  }
  MechanicalParameters p = make_empty_parameters(t_count, n_fingers);
  size_t k = 0;
  auto next = [&]() { return v[k++]; };
  for (int t = 0; t < t_count; ++t) {
    p.poses[t].x = next();
    p.poses[t].y = next();
    p.poses[t].theta = next();
    for (int row = 0; row < 3; ++row) {
      for (int c = 0; c < n_fingers; ++c) {
        p.finger[t][c].jacobian(row, 0) = next();
        p.finger[t][c].jacobian(row, 1) = next();
      }
    }
    for (int c = 0; c < n_fingers; ++c) {
      FingerContactParams& f = p.finger[t][c];
      f.facet_v1 = {next(), next()};
      f.facet_v2 = {next(), next()};
    }
    for (int c = 0; c < n_fingers; ++c) {
      FingerContactParams& f = p.finger[t][c];
      f.cone_ray1 = {next(), next()};
      f.cone_ray2 = {next(), next()};
    }
    p.env_point[t] = {next(), next()};
    p.env_ray1[t] = {next(), next()};
    p.env_ray2[t] = {next(), next()};
  }
  return p;
}

std::vector<double> flatten_actions(const RobotActions& a) {
  std::vector<double> v;
  v.reserve(static_cast<size_t>(a.t_count) * RobotActions::values_per_step(a.n_fingers));
  for (int t = 0; t < a.t_count; ++t) {
    for (int c = 0; c < a.n_fingers; ++c) {
      v.push_back(a.finger_pos[t][c].x);
      v.push_back(a.finger_pos[t][c].y);
    }
    for (int c = 0; c < a.n_fingers; ++c) {
      v.push_back(a.finger_force[t][c].x);
      v.push_back(a.finger_force[t][c].y);
    }
    v.push_back(a.env_force[t].x);
    v.push_back(a.env_force[t].y);
  }
  return v;
}

RobotActions unflatten_actions(const std::vector<double>& v, int t_count, int n_fingers) {
  const size_t expected =
      static_cast<size_t>(t_count) * RobotActions::values_per_step(n_fingers);
  if (v.size() != expected) {
    throw std::invalid_argument("unflatten_actions: got " + std::to_string(v.size()) +
                                " values, expected " + std::to_string(expected));
  }
  RobotActions a = RobotActions::zeros(t_count, n_fingers);
  size_t k = 0;
  for (int t = 0; t < t_count; ++t) {
    for (int c = 0; c < n_fingers; ++c) a.finger_pos[t][c] = {v[k], v[k + 1]}, k += 2;
    for (int c = 0; c < n_fingers; ++c) a.finger_force[t][c] = {v[k], v[k + 1]}, k += 2;
    a.env_force[t] = {v[k], v[k + 1]};
    k += 2;
  }
  return a;
}

double parameter_loss(const MechanicalParameters& pred, const MechanicalParameters& truth) {
  if (pred.t_count != truth.t_count || pred.n_fingers != truth.n_fingers) {
    throw std::invalid_argument("parameter_loss: shape mismatch");
  }
  const std::vector<double> a = flatten(pred);
  const std::vector<double> b = flatten(truth);
  double loss = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    loss += d * d;
  }
  return loss;
}

MechanicalParameters extract_parameters(const Polygon& object, const RigidBody& body,
                                        const std::vector<HalfPlane>& environment,
                                        const std::vector<Pose2>& trajectory, double dt,
                                        const RobotActions& expert, const ModeMatrix& modes,
                                        double mu_finger, double mu_env, double boundary_tol) {
  const int t_count = static_cast<int>(trajectory.size());
  const int n_fingers = expert.n_fingers;
  if (static_cast<int>(modes.size()) != n_fingers) {
    throw std::invalid_argument("extract_parameters: modes shape mismatch");
  }
  if (environment.empty()) throw std::invalid_argument("extract_parameters: no environment");
  MechanicalParameters p = make_empty_parameters(t_count, n_fingers);
  p.poses = trajectory;

  const Trajectory traj = differentiate_trajectory(trajectory, dt);
  const HalfPlane& ground = environment.front();
  const Vec2 tangent = ground.normal.perp();

  for (int t = 0; t < t_count; ++t) {
    const Pose2& pose = trajectory[t];
    const Vec2 com{pose.x, pose.y};

    for (int c = 0; c < n_fingers; ++c) {
      const int mode = modes[c][t];
      if (mode == kNoContact) continue;  // zero sentinel stays
      const Facet facet = polygon_facet_world(object, pose, mode);
      const Vec2 finger = expert.finger_pos[t][c];
      const PointFacetResult pf = point_facet_distance(finger, facet);
      if (pf.distance > boundary_tol) {
        throw std::runtime_error("extract_parameters: finger " + std::to_string(c) +
                                 " is off its assigned facet at t=" + std::to_string(t));
      }
      FingerContactParams& f = p.finger[t][c];
      f.facet_v1 = facet.v1;
      f.facet_v2 = facet.v2;
      const FrictionCone cone = friction_cone_at(finger, -facet.outward_normal, mu_finger);
      f.cone_ray1 = cone.ray1;
      f.cone_ray2 = cone.ray2;
      f.jacobian = contact_jacobian(pose, facet.midpoint());
    }

    // Environment block: contact vertices of the polygon against the ground.
    std::vector<Vec2> contacts;
    for (const Vec2& v : object.vertices) {
      const Vec2 w = body_to_world(pose, v);
      if (ground.distance(w) <= boundary_tol) contacts.push_back(w);
    }
    if (contacts.empty()) {
      // Ground projection of the centroid, zero-ray sentinel.
      p.env_point[t] = com - ground.normal * ground.distance(com);
      continue;
    }
    // Sliding contacts collapse to the kinetic ray; a patch whose vertices
    // disagree on the sliding direction keeps the full static cone.
    const Eigen::Vector3d vel = traj.velocities[t];
    FrictionCone env_cone = friction_cone_at({0, 0}, ground.normal, mu_env);
    bool first = true, uniform = true;
    FrictionCone candidate;
    for (const Vec2& q : contacts) {
      const Vec2 arm = q - com;
      const Vec2 v_pt{vel[0] - vel[2] * arm.y, vel[1] + vel[2] * arm.x};
      const FrictionCone cone =
          friction_cone_sliding(q, ground.normal, mu_env, tangent.dot(v_pt));
      if (first) {
        candidate = cone;
        first = false;
      } else if ((cone.ray1 - candidate.ray1).norm() > 1e-12 ||
                 (cone.ray2 - candidate.ray2).norm() > 1e-12) {
        uniform = false;
      }
    }
    if (uniform) env_cone = candidate;
    p.env_ray1[t] = env_cone.ray1;
    p.env_ray2[t] = env_cone.ray2;

    const Vec2 lambda_e = expert.env_force[t];
    const double normal_force = ground.normal.dot(lambda_e);
    if (normal_force < 1e-9) {
      Vec2 centroid{0, 0};
      for (const Vec2& q : contacts) centroid += q;
      p.env_point[t] = centroid * (1.0 / contacts.size());
      continue;
    }
    // Centre of pressure from the torque balance: the environment must supply
    // whatever torque the fingers (midpoint arms) and inertia leave over.
    const Eigen::Vector3d acc = traj.accelerations[t];
    const Wrench g = gravity_wrench(body, pose);
    double tau_needed = body.inertia * acc[2] - g.tau;
    for (int c = 0; c < n_fingers; ++c) {
      const Eigen::Vector2d f(expert.finger_force[t][c].x, expert.finger_force[t][c].y);
      tau_needed -= p.finger[t][c].jacobian.row(2).dot(f);
    }
    const Vec2 q = com - ground.normal * ground.distance(com);
    const double denom = tangent.cross(lambda_e);
    double s = 0.0;
    if (std::abs(denom) > 1e-12) s = (tau_needed - (q - com).cross(lambda_e)) / denom;
    p.env_point[t] = q + tangent * s;
  }
  return p;
}

std::vector<double> dynamics_residuals(const MechanicalParameters& params, const RigidBody& body,
                                       const RobotActions& actions, double dt) {
  const Trajectory traj = differentiate_trajectory(params.poses, dt);
  std::vector<double> residuals(params.t_count, 0.0);
  for (int t = 0; t < params.t_count; ++t) {
    const Pose2& pose = params.poses[t];
    Eigen::Vector3d lhs = body.mass_matrix() * traj.accelerations[t];
    const Wrench g = gravity_wrench(body, pose);
    lhs += Eigen::Vector3d(-g.fx, -g.fy, -g.tau);
    Eigen::Vector3d rhs = Eigen::Vector3d::Zero();
    for (int c = 0; c < params.n_fingers; ++c) {
      const Eigen::Vector2d f(actions.finger_force[t][c].x, actions.finger_force[t][c].y);
      rhs += params.finger[t][c].jacobian * f;
    }
    const Eigen::Vector2d fe(actions.env_force[t].x, actions.env_force[t].y);
    rhs += contact_jacobian(pose, params.env_point[t]) * fe;
    residuals[t] = (lhs - rhs).lpNorm<Eigen::Infinity>();
  }
  return residuals;
}

namespace {

ordered_json vec2_json(const Vec2& v) { return ordered_json::array({v.x, v.y}); }
Vec2 vec2_from(const ordered_json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

std::string frame_name(int i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%03d.ppm", i);
  return buf;
}

}  // namespace

void save_task(const TaskRecord& task, const std::string& dir) {
  fs::create_directories(fs::path(dir) / "frames");

  ordered_json meta;
  meta["format_version"] = kTaskFormatVersion;
  meta["kind"] = task.meta.kind;
  meta["seed"] = task.meta.seed;
  meta["t_count"] = task.t_count();
  meta["n_fingers"] = task.n_fingers();
  meta["dt"] = task.meta.dt;
  meta["mu_finger"] = task.meta.mu_finger;
  meta["mu_env"] = task.meta.mu_env;
  meta["density"] = task.meta.density;
  meta["expert_objective"] = task.meta.expert_objective;
  meta["expert_solve_seconds"] = task.meta.expert_solve_seconds;
  meta["resamples"] = task.meta.resamples;
  ordered_json verts = ordered_json::array();
  for (const Vec2& v : task.object.vertices) verts.push_back(vec2_json(v));
  meta["polygon"] = verts;
  ordered_json planes = ordered_json::array();
  for (const HalfPlane& pl : task.environment) {
    planes.push_back({{"normal", vec2_json(pl.normal)}, {"offset", pl.offset}});
  }
  meta["environment"] = planes;
  meta["camera"] = {{"center", vec2_json(task.camera.center)},
                    {"width", task.camera.width},
                    {"height", task.camera.height}};
  ordered_json modes = ordered_json::array();
  for (const std::vector<int>& row : task.expert_modes) modes.push_back(row);
  meta["expert_modes"] = modes;
  write_text_file((fs::path(dir) / "meta.json").string(), meta.dump(2) + "\n");

  write_doubles((fs::path(dir) / "params.bin").string(), flatten(task.parameters));
  write_doubles((fs::path(dir) / "actions.bin").string(), flatten_actions(task.expert));
  for (size_t i = 0; i < task.video.size(); ++i) {
    write_ppm(task.video[i], (fs::path(dir) / "frames" / frame_name(static_cast<int>(i))).string());
  }
}

TaskRecord load_task(const std::string& dir) {
  const fs::path root(dir);
  if (!fs::exists(root / "meta.json")) {
    throw std::runtime_error("load_task: missing meta.json in " + dir);
  }
  ordered_json meta = ordered_json::parse(read_text_file((root / "meta.json").string()));
  const int version = meta.at("format_version").get<int>();
  if (version != kTaskFormatVersion) {
    throw std::runtime_error("load_task: format version " + std::to_string(version) +
                             " is not supported (expected " +
                             std::to_string(kTaskFormatVersion) + ")");
  }

  TaskRecord task;
  task.meta.kind = meta.at("kind").get<std::string>();
  task.meta.seed = meta.at("seed").get<std::uint64_t>();
  const int t_count = meta.at("t_count").get<int>();
  const int n_fingers = meta.at("n_fingers").get<int>();
  task.meta.dt = meta.at("dt").get<double>();
  task.meta.mu_finger = meta.at("mu_finger").get<double>();
  task.meta.mu_env = meta.at("mu_env").get<double>();
  task.meta.density = meta.at("density").get<double>();
  task.meta.expert_objective = meta.at("expert_objective").get<double>();
  task.meta.expert_solve_seconds = meta.at("expert_solve_seconds").get<double>();
  task.meta.resamples = meta.at("resamples").get<int>();

  for (const auto& v : meta.at("polygon")) task.object.vertices.push_back(vec2_from(v));
  for (const auto& pl : meta.at("environment")) {
    task.environment.push_back({vec2_from(pl.at("normal")), pl.at("offset").get<double>()});
  }
  task.camera.center = vec2_from(meta.at("camera").at("center"));
  task.camera.width = meta.at("camera").at("width").get<double>();
  task.camera.height = meta.at("camera").at("height").get<double>();
  for (const auto& row : meta.at("expert_modes")) {
    task.expert_modes.push_back(row.get<std::vector<int>>());
  }

  task.body = mass_properties(task.object, task.meta.density);
  task.parameters = unflatten(
      read_doubles_checked((root / "params.bin").string(),
                           static_cast<size_t>(t_count) *
                               MechanicalParameters::values_per_step(n_fingers)),
      t_count, n_fingers);
  task.expert = unflatten_actions(
      read_doubles_checked((root / "actions.bin").string(),
                           static_cast<size_t>(t_count) * RobotActions::values_per_step(n_fingers)),
      t_count, n_fingers);
  task.video.reserve(t_count);
  for (int i = 0; i < t_count; ++i) {
    task.video.push_back(read_ppm((root / "frames" / frame_name(i)).string()));
  }
  return task;
}

}  // namespace dpm
