#include "dpm/inverse_dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dpm/mechanics.hpp"

namespace dpm {

std::vector<Vec2> default_parks(int n_fingers) {
  std::vector<Vec2> parks;
  parks.reserve(n_fingers);
  for (int c = 0; c < n_fingers; ++c) {
    const double side = (c % 2 == 0) ? -1.0 : 1.0;
    parks.push_back({side * (0.6 + 0.2 * (c / 2)), 0.45});
  }
  return parks;
}

ContactStructure detect_structure(const MechanicalParameters& p, double sentinel_tol) {
  ContactStructure s;
  s.finger_contact.assign(p.t_count, std::vector<bool>(p.n_fingers, false));
  s.env_contact.assign(p.t_count, false);
  for (int t = 0; t < p.t_count; ++t) {
    for (int c = 0; c < p.n_fingers; ++c) {
      s.finger_contact[t][c] = p.finger[t][c].in_contact(sentinel_tol);
    }
    s.env_contact[t] = p.env_in_contact(t, sentinel_tol);
  }
  return s;
}

namespace {

Eigen::Matrix2d ray_matrix(const Vec2& r1, const Vec2& r2) {
  Eigen::Matrix2d r;
  r << r1.x, r2.x,
       r1.y, r2.y;
  return r;
}

}  // namespace

/// Shared assembler behind the derendered path (build_qp) and the expert's
/// fixed-mode path (qp_for_modes). `rhs` holds M rdd + G per timestep.
QpProblem assemble_idqp(int t_count, int n_fingers,
                        const std::vector<Eigen::Vector3d>& rhs,
                        const std::vector<std::vector<ContactSlot>>& finger,
                        const std::vector<EnvSlot>& env, const QpWeights& w,
                        const IdQpOptions& opt) {
  QpProblem prob;
  prob.t_count = t_count;
  prob.n_fingers = n_fingers;
  prob.options = opt;
  prob.weights = w;
  prob.finger = finger;
  prob.env = env;
  prob.rhs = rhs;

  std::vector<std::vector<int>> pos_index(n_fingers, std::vector<int>(t_count, -1));
  std::vector<std::vector<int>> force_index(n_fingers, std::vector<int>(t_count, -1));
  std::vector<std::vector<int>> env_index(t_count);
  std::vector<int> eps_index(t_count, -1);

  int n = 0;
  for (int c = 0; c < n_fingers; ++c) {
    for (int t = 0; t < t_count; ++t) {
      pos_index[c][t] = n;
      n += finger[t][c].in_contact ? 1 : 2;
    }
  }
  for (int c = 0; c < n_fingers; ++c) {
    for (int t = 0; t < t_count; ++t) {
      if (finger[t][c].in_contact) {
        force_index[c][t] = n;
        n += 2;
      }
    }
  }
  auto env_coords = [&](const EnvSlot& es, size_t k) {
    return (es.ray1[k] - es.ray2[k]).norm() <= 1e-12 ? 1 : 2;
  };
  for (int t = 0; t < t_count; ++t) {
    for (size_t k = 0; k < env[t].points.size(); ++k) {
      env_index[t].push_back(n);
      n += env_coords(env[t], k);
    }
  }
  if (opt.with_slack) {
    for (int t = 0; t < t_count; ++t) {
      eps_index[t] = n;
      n += 6;
    }
  }

  int mi = 0;
  for (int c = 0; c < n_fingers; ++c) {
    for (int t = 0; t < t_count; ++t) mi += finger[t][c].in_contact ? 5 : 4;
  }
  for (int t = 0; t < t_count; ++t) {
    for (size_t k = 0; k < env[t].points.size(); ++k) mi += env_coords(env[t], k);
  }
  if (opt.with_slack) mi += 6 * t_count;

  Eigen::MatrixXd quad = Eigen::MatrixXd::Zero(n, n);  // math form x'Qx + lin'x
  Eigen::VectorXd lin = Eigen::VectorXd::Zero(n);
  Eigen::MatrixXd a_eq = Eigen::MatrixXd::Zero(3 * t_count, n);
  Eigen::VectorXd b_eq = Eigen::VectorXd::Zero(3 * t_count);
  Eigen::MatrixXd g_in = Eigen::MatrixXd::Zero(mi, n);
  Eigen::VectorXd h_in = Eigen::VectorXd::Zero(mi);

  prob.pos_map = Eigen::MatrixXd::Zero(2 * n_fingers * t_count, n);
  prob.pos_base = Eigen::VectorXd::Zero(2 * n_fingers * t_count);
  prob.force_map = Eigen::MatrixXd::Zero(2 * n_fingers * t_count, n);
  prob.env_force_map = Eigen::MatrixXd::Zero(2 * t_count, n);
  prob.eps_map = Eigen::MatrixXd::Zero(3 * t_count, n);
  prob.eps_cost = Eigen::VectorXd::Zero(n);

  // accel_kernel = (S (x) I2)' (I_T (x) Q_accel) (S (x) I2): the quadratic
  // form of the finger-acceleration cost on a stacked position path.
  const Eigen::MatrixXd stencil = acceleration_stencil(t_count, opt.dt);
  Eigen::MatrixXd accel_kernel(2 * t_count, 2 * t_count);
  {
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(2 * t_count, 2 * t_count);
    for (int i = 0; i < t_count; ++i) {
      for (int j = 0; j < t_count; ++j) {
        d.block<2, 2>(2 * i, 2 * j) = stencil(i, j) * Eigen::Matrix2d::Identity();
      }
    }
    Eigen::MatrixXd wq = Eigen::MatrixXd::Zero(2 * t_count, 2 * t_count);
    const Eigen::Matrix2d q_sym = 0.5 * (w.q_accel + w.q_accel.transpose());
    for (int i = 0; i < t_count; ++i) wq.block<2, 2>(2 * i, 2 * i) = q_sym;
    accel_kernel = d.transpose() * wq * d;
  }
  const std::vector<Vec2> parks = default_parks(n_fingers);

  for (int c = 0; c < n_fingers; ++c) {
    Eigen::MatrixXd b_map = Eigen::MatrixXd::Zero(2 * t_count, n);
    Eigen::VectorXd base = Eigen::VectorXd::Zero(2 * t_count);
    for (int t = 0; t < t_count; ++t) {
      const ContactSlot& slot = finger[t][c];
      const int idx = pos_index[c][t];
      if (slot.in_contact) {
        base[2 * t] = slot.facet_v1.x;
        base[2 * t + 1] = slot.facet_v1.y;
        b_map(2 * t, idx) = slot.facet_v2.x - slot.facet_v1.x;
        b_map(2 * t + 1, idx) = slot.facet_v2.y - slot.facet_v1.y;
      } else {
        b_map(2 * t, idx) = 1.0;
        b_map(2 * t + 1, idx + 1) = 1.0;
      }
    }
    Eigen::MatrixXd kernel = accel_kernel;
    kernel.diagonal().array() += w.reg_position;
    Eigen::VectorXd lin_pos = Eigen::VectorXd::Zero(2 * t_count);
    for (int t = 0; t < t_count; ++t) {
      lin_pos[2 * t] = -2.0 * w.reg_position * parks[c].x;
      lin_pos[2 * t + 1] = -2.0 * w.reg_position * parks[c].y;
    }
    quad.noalias() += b_map.transpose() * kernel * b_map;
    lin.noalias() += b_map.transpose() * (2.0 * kernel * base + lin_pos);
    prob.objective_offset += base.dot(kernel * base) + lin_pos.dot(base) +
                             t_count * w.reg_position * parks[c].squared_norm();

    for (int t = 0; t < t_count; ++t) {
      const int row = (c * t_count + t) * 2;
      prob.pos_map.row(row) = b_map.row(2 * t);
      prob.pos_map.row(row + 1) = b_map.row(2 * t + 1);
      prob.pos_base[row] = base[2 * t];
      prob.pos_base[row + 1] = base[2 * t + 1];
    }
  }

  const Eigen::Matrix2d q_lambda_sym = 0.5 * (w.q_lambda + w.q_lambda.transpose());
  for (int t = 0; t < t_count; ++t) {
    for (int c = 0; c < n_fingers; ++c) {
      const ContactSlot& slot = finger[t][c];
      if (!slot.in_contact) continue;
      const int fi = force_index[c][t];
      const Eigen::Matrix2d rays = ray_matrix(slot.ray1, slot.ray2);
      quad.block<2, 2>(fi, fi) += rays.transpose() * q_lambda_sym * rays;
      a_eq.block<3, 2>(3 * t, fi) = slot.jacobian * rays;
      prob.force_map.block<2, 2>((c * t_count + t) * 2, fi) = rays;
    }
    const EnvSlot& es = env[t];
    if (!es.points.empty()) {
      auto rays_of = [&](size_t k) {
        const int cols = env_coords(es, k);
        Eigen::MatrixXd r(2, cols);
        r.col(0) << es.ray1[k].x, es.ray1[k].y;
        if (cols == 2) r.col(1) << es.ray2[k].x, es.ray2[k].y;
        return r;
      };
      for (size_t k = 0; k < es.points.size(); ++k) {
        const int bi = env_index[t][k];
        const Eigen::MatrixXd rays_k = rays_of(k);
        a_eq.block(3 * t, bi, 3, rays_k.cols()) = es.jacobians[k] * rays_k;
        prob.env_force_map.block(2 * t, bi, 2, rays_k.cols()) = rays_k;
        for (size_t k2 = 0; k2 < es.points.size(); ++k2) {
          const Eigen::MatrixXd rays_k2 = rays_of(k2);
          quad.block(bi, env_index[t][k2], rays_k.cols(), rays_k2.cols()) +=
              w.reg_env_force * (rays_k.transpose() * rays_k2);
        }
      }
    }
    if (opt.with_slack) {
      const int ei = eps_index[t];
      for (int i = 0; i < 3; ++i) {
        a_eq(3 * t + i, ei + i) = 1.0;
        a_eq(3 * t + i, ei + 3 + i) = -1.0;
        lin[ei + i] += w.q_eps;
        lin[ei + 3 + i] += w.q_eps;
        prob.eps_cost[ei + i] = w.q_eps;
        prob.eps_cost[ei + 3 + i] = w.q_eps;
        prob.eps_map(3 * t + i, ei + i) = 1.0;
        prob.eps_map(3 * t + i, ei + 3 + i) = -1.0;
      }
    }
    b_eq.segment<3>(3 * t) = rhs[t];
  }

  int row = 0;
  for (int c = 0; c < n_fingers; ++c) {
    for (int t = 0; t < t_count; ++t) {
      const int idx = pos_index[c][t];
      if (finger[t][c].in_contact) {
        g_in(row, idx) = -1.0;
        h_in[row++] = 0.0;
        g_in(row, idx) = 1.0;
        h_in[row++] = 1.0;
      } else {
        g_in(row, idx) = 1.0;
        h_in[row++] = opt.position_box;
        g_in(row, idx) = -1.0;
        h_in[row++] = opt.position_box;
        g_in(row, idx + 1) = 1.0;
        h_in[row++] = opt.position_box;
        g_in(row, idx + 1) = -1.0;
        h_in[row++] = opt.position_box;
      }
    }
  }
  for (int c = 0; c < n_fingers; ++c) {
    for (int t = 0; t < t_count; ++t) {
      const int fi = force_index[c][t];
      if (fi < 0) continue;
      g_in(row, fi) = -1.0;
      h_in[row++] = 0.0;
      g_in(row, fi + 1) = -1.0;
      h_in[row++] = 0.0;
      g_in(row, fi) = 1.0;
      g_in(row, fi + 1) = 1.0;
      h_in[row++] = opt.force_cap;
    }
  }
  for (int t = 0; t < t_count; ++t) {
    for (size_t k = 0; k < env[t].points.size(); ++k) {
      const int bi = env_index[t][k];
      for (int j = 0; j < env_coords(env[t], k); ++j) {
        g_in(row, bi + j) = -1.0;
        h_in[row++] = 0.0;
      }
    }
  }
  if (opt.with_slack) {
    for (int t = 0; t < t_count; ++t) {
      const int ei = eps_index[t];
      for (int i = 0; i < 6; ++i) {
        g_in(row, ei + i) = -1.0;
        h_in[row++] = 0.0;
      }
    }
  }
  if (row != mi) throw std::logic_error("assemble_idqp: inequality row miscount");

  // Hard mode can leave timesteps without any force column; those dynamics
  // rows are only satisfiable with a zero right-hand side, and keeping the
  // all-zero rows would wreck the equality rank.
  if (!opt.with_slack) {
    std::vector<int> keep;
    bool impossible = false;
    for (int t = 0; t < t_count; ++t) {
      bool has_vars = !env[t].points.empty();
      for (int c = 0; c < n_fingers && !has_vars; ++c) has_vars = finger[t][c].in_contact;
      if (has_vars) {
        keep.push_back(t);
      } else if (b_eq.segment<3>(3 * t).lpNorm<Eigen::Infinity>() > 1e-9) {
        impossible = true;
      }
    }
    if (impossible) {
      // Leave the unsatisfiable rows in: the solver reports infeasible.
    } else if (static_cast<int>(keep.size()) != t_count) {
      Eigen::MatrixXd a2(3 * keep.size(), n);
      Eigen::VectorXd b2(3 * keep.size());
      for (size_t i = 0; i < keep.size(); ++i) {
        a2.middleRows<3>(3 * i) = a_eq.middleRows<3>(3 * keep[i]);
        b2.segment<3>(3 * i) = b_eq.segment<3>(3 * keep[i]);
      }
      a_eq = std::move(a2);
      b_eq = std::move(b2);
    }
  }

  prob.qp.p = quad + quad.transpose();
  prob.qp.c = lin;
  prob.qp.a = a_eq;
  prob.qp.b = b_eq;
  prob.qp.g = g_in;
  prob.qp.h = h_in;
  return prob;
}

namespace {

std::vector<Eigen::Vector3d> dynamics_rhs(const std::vector<Pose2>& poses,
                                          const RigidBody& body, double dt) {
  const Trajectory traj = differentiate_trajectory(poses, dt);
  std::vector<Eigen::Vector3d> rhs(poses.size());
  for (size_t t = 0; t < poses.size(); ++t) {
    rhs[t] = body.mass_matrix() * traj.accelerations[t];
    rhs[t][1] += body.mass * kGravity;
  }
  return rhs;
}

}  // namespace

QpProblem build_qp(const MechanicalParameters& p, const RigidBody& body, const QpWeights& w,
                   const IdQpOptions& options) {
  return build_qp(p, body, w, options, detect_structure(p, options.sentinel_tol));
}

QpProblem build_qp(const MechanicalParameters& p, const RigidBody& body, const QpWeights& w,
                   const IdQpOptions& options, const ContactStructure& structure) {
  for (double v : flatten(p)) {
    if (!std::isfinite(v)) throw std::invalid_argument("build_qp: NaN/inf in parameters");
  }
  std::vector<std::vector<ContactSlot>> finger(p.t_count,
                                               std::vector<ContactSlot>(p.n_fingers));
  std::vector<EnvSlot> env(p.t_count);
  for (int t = 0; t < p.t_count; ++t) {
    for (int c = 0; c < p.n_fingers; ++c) {
      ContactSlot& slot = finger[t][c];
      slot.in_contact = structure.finger_contact[t][c];
      if (!slot.in_contact) continue;
      const FingerContactParams& f = p.finger[t][c];
      slot.facet_v1 = f.facet_v1;
      slot.facet_v2 = f.facet_v2;
      slot.ray1 = f.cone_ray1.normalized();
      slot.ray2 = f.cone_ray2.normalized();
      slot.jacobian = f.jacobian;
    }
    if (structure.env_contact[t]) {
      EnvSlot& es = env[t];
      es.points = {p.env_point[t]};
      es.ray1 = {p.env_ray1[t].normalized()};
      es.ray2 = {p.env_ray2[t].normalized()};
      es.jacobians = {contact_jacobian(p.poses[t], p.env_point[t])};
    }
  }
  return assemble_idqp(p.t_count, p.n_fingers, dynamics_rhs(p.poses, body, options.dt),
                       finger, env, w, options);
}

QpProblem set_eps_zero(const QpProblem& prob) {
  IdQpOptions opt = prob.options;
  opt.with_slack = false;
  return assemble_idqp(prob.t_count, prob.n_fingers, prob.rhs, prob.finger, prob.env,
                       prob.weights, opt);
}

QpLayerSolution solve_qp(const QpProblem& prob) {
  QpLayerSolution sol;
  sol.raw = solve_dense_qp(prob.qp, prob.options.solver);
  const int t_count = prob.t_count;
  const int n_fingers = prob.n_fingers;
  sol.eps = Eigen::MatrixXd::Zero(3, t_count);
  sol.actions = RobotActions::zeros(t_count, n_fingers);
  if (sol.raw.x.size() != prob.qp.num_vars()) return sol;

  const Eigen::VectorXd positions = prob.pos_map * sol.raw.x + prob.pos_base;
  const Eigen::VectorXd forces = prob.force_map * sol.raw.x;
  const Eigen::VectorXd env_forces = prob.env_force_map * sol.raw.x;
  const Eigen::VectorXd eps = prob.eps_map * sol.raw.x;
  for (int c = 0; c < n_fingers; ++c) {
    for (int t = 0; t < t_count; ++t) {
      const int row = (c * t_count + t) * 2;
      sol.actions.finger_pos[t][c] = {positions[row], positions[row + 1]};
      sol.actions.finger_force[t][c] = {forces[row], forces[row + 1]};
    }
  }
  for (int t = 0; t < t_count; ++t) {
    sol.actions.env_force[t] = {env_forces[2 * t], env_forces[2 * t + 1]};
    sol.eps.col(t) = eps.segment<3>(3 * t);
  }
  sol.action_objective =
      sol.raw.objective + prob.objective_offset - prob.eps_cost.dot(sol.raw.x);
  return sol;
}

namespace {

struct ActiveSet {
  std::vector<int> rows;
  bool degenerate = false;
  std::string reason;
};

ActiveSet classify_active(const QpProblem& prob, const QpResult& raw, double tol) {
  ActiveSet as;
  for (int i = 0; i < raw.z.size(); ++i) {
    const double slack = raw.s[i] / (1.0 + std::abs(prob.qp.h[i]));
    const bool dual_large = raw.z[i] > tol;
    const bool slack_small = slack < tol;
    if (dual_large && slack_small) {
      as.rows.push_back(i);
    } else if (dual_large == slack_small) {
      as.degenerate = true;
      as.reason = "weakly active inequality " + std::to_string(i);
      return as;
    }
  }
  return as;
}

}  // namespace

QpGradients differentiate_qp(const MechanicalParameters& p, const RigidBody& body,
                             const QpWeights& w, const IdQpOptions& options,
                             const QpLayerSolution& sol, double active_tol) {
  const int t_count = p.t_count;
  const int n_fingers = p.n_fingers;
  const int n_params = t_count * MechanicalParameters::values_per_step(n_fingers);
  QpGradients grads;
  grads.d_positions = Eigen::MatrixXd::Zero(2 * n_fingers * t_count, n_params);
  grads.d_forces = Eigen::MatrixXd::Zero(2 * n_fingers * t_count, n_params);
  grads.d_env_force = Eigen::MatrixXd::Zero(2 * t_count, n_params);
  grads.d_eps = Eigen::MatrixXd::Zero(3 * t_count, n_params);
  grads.d_objective = Eigen::VectorXd::Zero(n_params);

  if (!sol.raw.ok()) {
    grads.degenerate = true;
    grads.degenerate_reason = "solution not optimal";
    return grads;
  }
  const ContactStructure structure = detect_structure(p, options.sentinel_tol);
  const QpProblem prob = build_qp(p, body, w, options, structure);
  const ActiveSet active = classify_active(prob, sol.raw, active_tol);
  if (active.degenerate) {
    grads.degenerate = true;
    grads.degenerate_reason = active.reason;
    return grads;
  }

  const int n = prob.qp.num_vars();
  const int me = static_cast<int>(prob.qp.b.size());
  const int ma = static_cast<int>(active.rows.size());
  Eigen::MatrixXd g_act(ma, n);
  Eigen::VectorXd z_act(ma);
  for (int i = 0; i < ma; ++i) {
    g_act.row(i) = prob.qp.g.row(active.rows[i]);
    z_act[i] = sol.raw.z[active.rows[i]];
  }

  Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(n + me + ma, n + me + ma);
  kkt.topLeftCorner(n, n) = prob.qp.p;
  kkt.block(0, n, n, me) = prob.qp.a.transpose();
  kkt.block(n, 0, me, n) = prob.qp.a;
  kkt.block(0, n + me, n, ma) = g_act.transpose();
  kkt.block(n + me, 0, ma, n) = g_act;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(kkt);
  if (!lu.isInvertible()) {
    grads.degenerate = true;
    grads.degenerate_reason = "singular KKT system (dependent active constraints)";
    return grads;
  }

  const Eigen::VectorXd& x = sol.raw.x;
  const Eigen::VectorXd& y = sol.raw.y;
  const Eigen::VectorXd grad_obj = prob.qp.p * x + prob.qp.c;

  const std::vector<double> theta = flatten(p);
  for (int j = 0; j < n_params; ++j) {
    const double h = 1e-6 * std::max(1.0, std::abs(theta[j]));
    std::vector<double> up = theta, dn = theta;
    up[j] += h;
    dn[j] -= h;
    const QpProblem prob_up =
        build_qp(unflatten(up, t_count, n_fingers), body, w, options, structure);
    const QpProblem prob_dn =
        build_qp(unflatten(dn, t_count, n_fingers), body, w, options, structure);
    const double inv2h = 1.0 / (2.0 * h);

    const Eigen::MatrixXd d_p = (prob_up.qp.p - prob_dn.qp.p) * inv2h;
    const Eigen::VectorXd d_c = (prob_up.qp.c - prob_dn.qp.c) * inv2h;
    const Eigen::MatrixXd d_a = (prob_up.qp.a - prob_dn.qp.a) * inv2h;
    const Eigen::VectorXd d_b = (prob_up.qp.b - prob_dn.qp.b) * inv2h;

    Eigen::VectorXd rhs(n + me + ma);
    rhs.head(n) = -(d_p * x + d_c + d_a.transpose() * y);
    rhs.segment(n, me) = -(d_a * x - d_b);
    for (int i = 0; i < ma; ++i) {
      const int r = active.rows[i];
      const Eigen::VectorXd d_g_row =
          (prob_up.qp.g.row(r) - prob_dn.qp.g.row(r)).transpose() * inv2h;
      const double d_h = (prob_up.qp.h[r] - prob_dn.qp.h[r]) * inv2h;
      rhs.head(n) -= d_g_row * z_act[i];
      rhs[n + me + i] = -(d_g_row.dot(x) - d_h);
    }

    const Eigen::VectorXd delta = lu.solve(rhs);
    const Eigen::VectorXd dx = delta.head(n);

    const Eigen::MatrixXd d_pos_map = (prob_up.pos_map - prob_dn.pos_map) * inv2h;
    const Eigen::VectorXd d_pos_base = (prob_up.pos_base - prob_dn.pos_base) * inv2h;
    const Eigen::MatrixXd d_force_map = (prob_up.force_map - prob_dn.force_map) * inv2h;
    const Eigen::MatrixXd d_env_map = (prob_up.env_force_map - prob_dn.env_force_map) * inv2h;

    grads.d_positions.col(j) = prob.pos_map * dx + d_pos_map * x + d_pos_base;
    grads.d_forces.col(j) = prob.force_map * dx + d_force_map * x;
    grads.d_env_force.col(j) = prob.env_force_map * dx + d_env_map * x;
    grads.d_eps.col(j) = prob.eps_map * dx;
    grads.d_objective[j] = grad_obj.dot(dx) + 0.5 * x.dot(d_p * x) + d_c.dot(x);
  }
  return grads;
}

double qp_loss(const QpLayerSolution& sol, const RobotActions& expert, double q_eps) {
  if (sol.actions.t_count != expert.t_count || sol.actions.n_fingers != expert.n_fingers) {
    throw std::invalid_argument("qp_loss: shape mismatch");
  }
  double loss = q_eps * sol.eps_l1();
  for (int t = 0; t < expert.t_count; ++t) {
    for (int c = 0; c < expert.n_fingers; ++c) {
      loss += (sol.actions.finger_pos[t][c] - expert.finger_pos[t][c]).squared_norm();
      loss += (sol.actions.finger_force[t][c] - expert.finger_force[t][c]).squared_norm();
    }
  }
  return loss;
}

}  // namespace dpm
