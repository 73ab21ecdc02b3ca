#include "dpm/cto.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <queue>
#include <cstdlib>
#include <cstdio>
#include <stdexcept>

#include "dpm/mechanics.hpp"

namespace dpm {

namespace {

constexpr double kModeFeasTol = 1e-7;
constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<Eigen::Vector3d> task_rhs(const CtoTask& task) {
  const Trajectory traj = differentiate_trajectory(task.trajectory, task.dt);
  std::vector<Eigen::Vector3d> rhs(task.trajectory.size());
  for (size_t t = 0; t < task.trajectory.size(); ++t) {
    rhs[t] = task.body.mass_matrix() * traj.accelerations[t];
    rhs[t][1] += task.body.mass * kGravity;
  }
  return rhs;
}

ContactSlot facet_slot(const CtoTask& task, int t, int facet) {
  const Facet f = polygon_facet_world(task.object, task.trajectory[t], facet);
  ContactSlot slot;
  slot.in_contact = true;
  slot.facet_v1 = f.v1;
  slot.facet_v2 = f.v2;
  const FrictionCone cone = friction_cone_at(f.midpoint(), -f.outward_normal, task.mu_finger);
  slot.ray1 = cone.ray1;
  slot.ray2 = cone.ray2;
  slot.jacobian = contact_jacobian(task.trajectory[t], f.midpoint());
  return slot;
}

EnvSlot env_slot(const CtoTask& task, int t, const Trajectory& traj) {
  EnvSlot slot;
  slot.points = env_contact_points(task, task.trajectory[t]);
  if (slot.points.empty()) return slot;
  const Vec2 normal = task.environment.front().normal;
  const Vec2 tangent = normal.perp();
  const Pose2& pose = task.trajectory[t];
  const Eigen::Vector3d v = traj.velocities[t];
  for (const Vec2& p : slot.points) {
    // Contact-point velocity decides between the static cone and the
    // collapsed kinetic ray.
    const Vec2 arm{p.x - pose.x, p.y - pose.y};
    const Vec2 v_pt{v[0] - v[2] * arm.y, v[1] + v[2] * arm.x};
    const FrictionCone cone =
        friction_cone_sliding(p, normal, task.mu_env, tangent.dot(v_pt));
    slot.ray1.push_back(cone.ray1);
    slot.ray2.push_back(cone.ray2);
    slot.jacobians.push_back(contact_jacobian(pose, p));
  }
  return slot;
}

}  // namespace

std::vector<Vec2> env_contact_points(const CtoTask& task, const Pose2& pose) {
  std::vector<Vec2> points;
  if (task.environment.empty()) return points;
  const HalfPlane& ground = task.environment.front();
  for (const Vec2& v : task.object.vertices) {
    const Vec2 w = body_to_world(pose, v);
    if (ground.distance(w) <= task.env_contact_tol) points.push_back(w);
  }
  return points;
}

bool modes_admissible(const ModeSequence& modes, int n_facets) {
  for (const std::vector<int>& seq : modes.assignment) {
    for (size_t t = 0; t < seq.size(); ++t) {
      if (seq[t] != kNoContact && (seq[t] < 0 || seq[t] >= n_facets)) return false;
      if (t > 0 && seq[t] != kNoContact && seq[t - 1] != kNoContact && seq[t] != seq[t - 1]) {
        return false;
      }
    }
  }
  return true;
}

ModeQpResult qp_for_modes(const CtoTask& task, const ModeSequence& modes, const QpWeights& w,
                          const IdQpOptions& options) {
  const int t_count = static_cast<int>(task.trajectory.size());
  const int n_fingers = modes.n_fingers();
  if (modes.t_count() != t_count) throw std::invalid_argument("qp_for_modes: T mismatch");
  if (!modes_admissible(modes, task.object.size())) {
    throw std::invalid_argument("qp_for_modes: inadmissible mode sequence");
  }

  const Trajectory traj = differentiate_trajectory(task.trajectory, task.dt);
  std::vector<std::vector<ContactSlot>> finger(t_count, std::vector<ContactSlot>(n_fingers));
  std::vector<EnvSlot> env(t_count);
  for (int t = 0; t < t_count; ++t) {
    for (int c = 0; c < n_fingers; ++c) {
      if (modes.assignment[c][t] != kNoContact) {
        finger[t][c] = facet_slot(task, t, modes.assignment[c][t]);
      }
    }
    env[t] = env_slot(task, t, traj);
  }
  const std::vector<Eigen::Vector3d> rhs = task_rhs(task);

  IdQpOptions opt = options;
  opt.dt = task.dt;
  opt.with_slack = true;
  ModeQpResult result;
  QpProblem elastic = assemble_idqp(t_count, n_fingers, rhs, finger, env, w, opt);
  QpLayerSolution esol = solve_qp(elastic);
  if (!esol.ok() || esol.eps_inf_norm() > kModeFeasTol) {
    result.problem = std::move(elastic);
    result.solution = std::move(esol);
    result.feasible = false;
    result.objective = kInf;
    return result;
  }

  QpProblem hard = set_eps_zero(elastic);
  QpLayerSolution hsol = solve_qp(hard);
  if (hsol.ok()) {
    const double offset = hard.objective_offset;
    result.problem = std::move(hard);
    result.solution = std::move(hsol);
    result.feasible = true;
    result.objective = result.solution.raw.objective + offset;
  } else {
    // Rare numerical fallback: keep the elastic optimum, whose slack we just
    // certified to be negligible.
    result.problem = std::move(elastic);
    result.solution = std::move(esol);
    result.feasible = true;
    result.objective = result.solution.action_objective;
  }
  return result;
}

// ---------------------------------------------------------------------------
// Branch and bound.
// ---------------------------------------------------------------------------

namespace {

// Allowed-mode bitmask per (finger, timestep): bit 0 = no-contact,
// bit f+1 = facet f.
using AllowedSets = std::vector<std::vector<std::uint32_t>>;

constexpr std::uint32_t kNcBit = 1u;

int popcount(std::uint32_t m) { return __builtin_popcount(m); }

bool propagate(AllowedSets& sets, int n_facets) {
  const int n_fingers = static_cast<int>(sets.size());
  const int t_count = static_cast<int>(sets[0].size());
  bool changed = true;
  while (changed) {
    changed = false;
    for (int c = 0; c < n_fingers; ++c) {
      for (int t = 0; t + 1 < t_count; ++t) {
        const std::uint32_t cur = sets[c][t];
        const std::uint32_t nxt = sets[c][t + 1];
        // Forward: a facet next step needs the same facet or NC now.
        std::uint32_t nxt_keep = nxt & kNcBit;
        for (int f = 0; f < n_facets; ++f) {
          const std::uint32_t bit = 1u << (f + 1);
          if ((nxt & bit) && ((cur & bit) || (cur & kNcBit))) nxt_keep |= bit;
        }
        // Backward: a mode now needs some legal successor.
        std::uint32_t cur_keep = 0;
        if (nxt_keep != 0) {
          for (int f = 0; f < n_facets; ++f) {
            const std::uint32_t bit = 1u << (f + 1);
            if ((cur & bit) && ((nxt_keep & bit) || (nxt_keep & kNcBit))) cur_keep |= bit;
          }
          if (cur & kNcBit) cur_keep |= kNcBit;  // NC can precede anything
        }
        if (nxt_keep != nxt) {
          sets[c][t + 1] = nxt_keep;
          changed = true;
        }
        if (cur_keep != cur) {
          sets[c][t] = cur_keep;
          changed = true;
        }
        if (sets[c][t] == 0 || sets[c][t + 1] == 0) return false;
      }
    }
  }
  return true;
}

bool all_fixed(const AllowedSets& sets) {
  for (const auto& row : sets) {
    for (std::uint32_t m : row) {
      if (popcount(m) != 1) return false;
    }
  }
  return true;
}

ModeSequence sets_to_modes(const AllowedSets& sets) {
  ModeSequence modes;
  modes.assignment.resize(sets.size());
  for (size_t c = 0; c < sets.size(); ++c) {
    for (std::uint32_t m : sets[c]) {
      modes.assignment[c].push_back((m & kNcBit) ? kNoContact
                                                 : __builtin_ctz(m) - 1);
    }
  }
  return modes;
}

// One binary variable of the node relaxation.
struct BinaryVar {
  int c = 0;
  int t = 0;
  int mode = kNoContact;  // kNoContact or facet index
  int var = -1;
};

struct Relaxation {
  DenseQp qp;
  std::vector<BinaryVar> binaries;
  double objective_offset = 0.0;
  bool trivially_infeasible = false;
};

// Assembles the hull relaxation of the partially fixed mode space. Fixed
// slots reproduce the fixed-mode program exactly; multi-mode slots get
// relaxed binaries with convex-hull linking. The dynamics stay elastic
// (slack-penalized) so the node problem is always feasible.
Relaxation assemble_relaxation(const CtoTask& task, const AllowedSets& sets, const QpWeights& w_in,
                               const IdQpOptions& base_opt,
                               const std::vector<Eigen::Vector3d>& rhs,
                               const std::vector<EnvSlot>& env_slots,
                               const std::vector<std::vector<std::vector<ContactSlot>>>& facet_cache,
                               bool feasibility_probe = false) {
  // The probe keeps the feasible set but swaps the objective for the bare
  // slack penalty: its optimum bounds the minimal dynamics violation of any
  // completion, so a positive value certifies an infeasible subtree.
  QpWeights w = w_in;
  if (feasibility_probe) {
    w.q_lambda = 1e-9 * Eigen::Matrix2d::Identity();
    w.q_accel = 1e-9 * Eigen::Matrix2d::Identity();
    w.reg_position = 1e-9;
    w.reg_env_force = 1e-9;
  }
  const int n_fingers = static_cast<int>(sets.size());
  const int t_count = static_cast<int>(sets[0].size());
  const int n_facets = task.object.size();

  Relaxation relax;
  IdQpOptions opt = base_opt;
  opt.dt = task.dt;

  // Variable layout, slot by slot.
  struct SlotLayout {
    std::vector<int> modes;      // allowed, NC first then ascending facets
    bool fixed = false;
    int beta = -1;               // first binary var (multi only), aligned with modes
    int nc_pos = -1;             // 2 vars when NC allowed
    std::vector<int> s_var;      // per allowed facet
    std::vector<int> force_var;  // per allowed facet, 2 vars each
    std::vector<int> facets;     // allowed facet indices
  };
  std::vector<std::vector<SlotLayout>> slots(n_fingers, std::vector<SlotLayout>(t_count));

  int n = 0;
  for (int c = 0; c < n_fingers; ++c) {
    for (int t = 0; t < t_count; ++t) {
      SlotLayout& sl = slots[c][t];
      const std::uint32_t mask = sets[c][t];
      if (mask & kNcBit) sl.modes.push_back(kNoContact);
      for (int f = 0; f < n_facets; ++f) {
        if (mask & (1u << (f + 1))) {
          sl.modes.push_back(f);
          sl.facets.push_back(f);
        }
      }
      sl.fixed = sl.modes.size() == 1;
      if (!sl.fixed) {
        sl.beta = n;
        n += static_cast<int>(sl.modes.size());
        for (size_t i = 0; i < sl.modes.size(); ++i) {
          relax.binaries.push_back({c, t, sl.modes[i], sl.beta + static_cast<int>(i)});
        }
      }
      if (mask & kNcBit) {
        sl.nc_pos = n;
        n += 2;
      }
      for (size_t i = 0; i < sl.facets.size(); ++i) {
        sl.s_var.push_back(n);
        n += 1;
      }
      for (size_t i = 0; i < sl.facets.size(); ++i) {
        sl.force_var.push_back(n);
        n += 2;
      }
    }
  }
  auto env_coords = [&](const EnvSlot& es, size_t k) {
    return (es.ray1[k] - es.ray2[k]).norm() <= 1e-12 ? 1 : 2;
  };
  std::vector<std::vector<int>> env_var(t_count);
  for (int t = 0; t < t_count; ++t) {
    for (size_t k = 0; k < env_slots[t].points.size(); ++k) {
      env_var[t].push_back(n);
      n += env_coords(env_slots[t], k);
    }
  }
  std::vector<int> eps_var(t_count);
  for (int t = 0; t < t_count; ++t) {
    eps_var[t] = n;
    n += 6;
  }

  // Counting rows.
  int me = 3 * t_count;
  int mi = 6 * t_count;  // eps >= 0
  for (int c = 0; c < n_fingers; ++c) {
    for (int t = 0; t < t_count; ++t) {
      const SlotLayout& sl = slots[c][t];
      if (!sl.fixed) {
        me += 1;                                          // sum beta == 1
        mi += static_cast<int>(sl.modes.size());          // beta >= 0
      }
      if (sl.nc_pos >= 0) mi += 4;                        // box (scaled by beta_nc)
      mi += 2 * static_cast<int>(sl.facets.size());       // 0 <= s <= beta
      mi += 3 * static_cast<int>(sl.facets.size());       // a >= 0, cap
    }
  }
  for (int t = 0; t < t_count; ++t) {
    for (size_t k = 0; k < env_slots[t].points.size(); ++k) {
      mi += env_coords(env_slots[t], k);
    }
  }

  Eigen::MatrixXd quad = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd lin = Eigen::VectorXd::Zero(n);
  Eigen::MatrixXd a_eq = Eigen::MatrixXd::Zero(me, n);
  Eigen::VectorXd b_eq = Eigen::VectorXd::Zero(me);
  std::vector<Eigen::VectorXd> g_rows;
  std::vector<double> h_vals;
  g_rows.reserve(mi + 4 * n_fingers * t_count);
  auto add_row = [&](const Eigen::VectorXd& row, double rhs_val) {
    g_rows.push_back(row);
    h_vals.push_back(rhs_val);
  };

  // Position path per finger: p_c(t) = sum_f [phi1 beta_f + (phi2-phi1) s_f]
  // (+ constants when fixed) + p_nc.
  const Eigen::MatrixXd stencil = acceleration_stencil(t_count, task.dt);
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
      const SlotLayout& sl = slots[c][t];
      for (size_t i = 0; i < sl.facets.size(); ++i) {
        const ContactSlot& fs = facet_cache[t][0][sl.facets[i]];
        const Vec2 d = fs.facet_v2 - fs.facet_v1;
        // phi1 * beta contribution.
        if (sl.fixed) {
          base[2 * t] += fs.facet_v1.x;
          base[2 * t + 1] += fs.facet_v1.y;
        } else {
          const int beta = sl.beta + static_cast<int>(
              std::find(sl.modes.begin(), sl.modes.end(), sl.facets[i]) - sl.modes.begin());
          b_map(2 * t, beta) += fs.facet_v1.x;
          b_map(2 * t + 1, beta) += fs.facet_v1.y;
        }
        b_map(2 * t, sl.s_var[i]) += d.x;
        b_map(2 * t + 1, sl.s_var[i]) += d.y;
      }
      if (sl.nc_pos >= 0) {
        b_map(2 * t, sl.nc_pos) += 1.0;
        b_map(2 * t + 1, sl.nc_pos + 1) += 1.0;
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
    relax.objective_offset += base.dot(kernel * base) + lin_pos.dot(base) +
                              t_count * w.reg_position * parks[c].squared_norm();
  }

  // Forces: lambda_c(t) = sum over allowed facets of R_f a_f.
  const Eigen::Matrix2d q_lambda_sym = 0.5 * (w.q_lambda + w.q_lambda.transpose());
  for (int c = 0; c < n_fingers; ++c) {
    for (int t = 0; t < t_count; ++t) {
      const SlotLayout& sl = slots[c][t];
      for (size_t i = 0; i < sl.facets.size(); ++i) {
        const ContactSlot& fi_slot = facet_cache[t][0][sl.facets[i]];
        Eigen::Matrix2d ri;
        ri << fi_slot.ray1.x, fi_slot.ray2.x, fi_slot.ray1.y, fi_slot.ray2.y;
        a_eq.block<3, 2>(3 * t, sl.force_var[i]) = fi_slot.jacobian * ri;
        for (size_t j = 0; j < sl.facets.size(); ++j) {
          const ContactSlot& fj_slot = facet_cache[t][0][sl.facets[j]];
          Eigen::Matrix2d rj;
          rj << fj_slot.ray1.x, fj_slot.ray2.x, fj_slot.ray1.y, fj_slot.ray2.y;
          quad.block<2, 2>(sl.force_var[i], sl.force_var[j]) +=
              ri.transpose() * q_lambda_sym * rj;
        }
      }
    }
  }

  // Environment patch and slack, identical to the fixed-mode program.
  for (int t = 0; t < t_count; ++t) {
    const EnvSlot& es = env_slots[t];
    if (!es.points.empty()) {
      auto rays_of = [&](size_t k) {
        const int cols = env_coords(es, k);
        Eigen::MatrixXd r(2, cols);
        r.col(0) << es.ray1[k].x, es.ray1[k].y;
        if (cols == 2) r.col(1) << es.ray2[k].x, es.ray2[k].y;
        return r;
      };
      for (size_t k = 0; k < es.points.size(); ++k) {
        const Eigen::MatrixXd rays_k = rays_of(k);
        a_eq.block(3 * t, env_var[t][k], 3, rays_k.cols()) = es.jacobians[k] * rays_k;
        for (size_t k2 = 0; k2 < es.points.size(); ++k2) {
          const Eigen::MatrixXd rays_k2 = rays_of(k2);
          quad.block(env_var[t][k], env_var[t][k2], rays_k.cols(), rays_k2.cols()) +=
              w.reg_env_force * (rays_k.transpose() * rays_k2);
        }
      }
    }
    for (int i = 0; i < 3; ++i) {
      a_eq(3 * t + i, eps_var[t] + i) = 1.0;
      a_eq(3 * t + i, eps_var[t] + 3 + i) = -1.0;
      lin[eps_var[t] + i] += w.q_eps;
      lin[eps_var[t] + 3 + i] += w.q_eps;
    }
    b_eq.segment<3>(3 * t) = rhs[t];
  }

  // Sum-to-one rows for the relaxed binaries.
  int eq_row = 3 * t_count;
  for (int c = 0; c < n_fingers; ++c) {
    for (int t = 0; t < t_count; ++t) {
      const SlotLayout& sl = slots[c][t];
      if (sl.fixed) continue;
      for (size_t i = 0; i < sl.modes.size(); ++i) a_eq(eq_row, sl.beta + i) = 1.0;
      b_eq[eq_row++] = 1.0;
    }
  }

  // Inequalities.
  auto beta_of = [&](const SlotLayout& sl, int mode) -> int {
    if (sl.fixed) return -1;  // constant 1
    const auto it = std::find(sl.modes.begin(), sl.modes.end(), mode);
    if (it == sl.modes.end()) return -2;  // constant 0
    return sl.beta + static_cast<int>(it - sl.modes.begin());
  };

  for (int c = 0; c < n_fingers; ++c) {
    for (int t = 0; t < t_count; ++t) {
      const SlotLayout& sl = slots[c][t];
      if (!sl.fixed) {
        for (size_t i = 0; i < sl.modes.size(); ++i) {
          Eigen::VectorXd row = Eigen::VectorXd::Zero(n);
          row[sl.beta + i] = -1.0;
          add_row(row, 0.0);
        }
      }
      if (sl.nc_pos >= 0) {
        const int beta_nc = beta_of(sl, kNoContact);
        for (int k = 0; k < 2; ++k) {
          for (double sign : {1.0, -1.0}) {
            Eigen::VectorXd row = Eigen::VectorXd::Zero(n);
            row[sl.nc_pos + k] = sign;
            double rhs_val = 0.0;
            if (beta_nc >= 0) {
              row[beta_nc] = -opt.position_box;
            } else {
              rhs_val = opt.position_box;  // fixed NC: plain box
            }
            add_row(row, rhs_val);
          }
        }
      }
      for (size_t i = 0; i < sl.facets.size(); ++i) {
        const int beta_f = beta_of(sl, sl.facets[i]);
        {
          Eigen::VectorXd row = Eigen::VectorXd::Zero(n);
          row[sl.s_var[i]] = -1.0;
          add_row(row, 0.0);
        }
        {
          Eigen::VectorXd row = Eigen::VectorXd::Zero(n);
          row[sl.s_var[i]] = 1.0;
          double rhs_val = 0.0;
          if (beta_f >= 0) {
            row[beta_f] = -1.0;
          } else {
            rhs_val = 1.0;
          }
          add_row(row, rhs_val);
        }
        {
          Eigen::VectorXd row = Eigen::VectorXd::Zero(n);
          row[sl.force_var[i]] = -1.0;
          add_row(row, 0.0);
          row.setZero();
          row[sl.force_var[i] + 1] = -1.0;
          add_row(row, 0.0);
          row.setZero();
          row[sl.force_var[i]] = 1.0;
          row[sl.force_var[i] + 1] = 1.0;
          double rhs_val = 0.0;
          if (beta_f >= 0) {
            row[beta_f] = -opt.force_cap;
          } else {
            rhs_val = opt.force_cap;
          }
          add_row(row, rhs_val);
        }
      }
    }
  }
  for (int t = 0; t < t_count; ++t) {
    for (size_t k = 0; k < env_slots[t].points.size(); ++k) {
      for (int j = 0; j < env_coords(env_slots[t], k); ++j) {
        Eigen::VectorXd row = Eigen::VectorXd::Zero(n);
        row[env_var[t][k] + j] = -1.0;
        add_row(row, 0.0);
      }
    }
  }
  for (int t = 0; t < t_count; ++t) {
    for (int i = 0; i < 6; ++i) {
      Eigen::VectorXd row = Eigen::VectorXd::Zero(n);
      row[eps_var[t] + i] = -1.0;
      add_row(row, 0.0);
    }
  }

  // Transition tightening: beta[c][t+1][f] <= beta[c][t][f] + beta[c][t][NC].
  for (int c = 0; c < n_fingers; ++c) {
    for (int t = 0; t + 1 < t_count; ++t) {
      const SlotLayout& cur = slots[c][t];
      const SlotLayout& nxt = slots[c][t + 1];
      for (int f : nxt.facets) {
        Eigen::VectorXd row = Eigen::VectorXd::Zero(n);
        double rhs_val = 0.0;
        bool has_var = false;
        const int b_next = beta_of(nxt, f);
        if (b_next >= 0) {
          row[b_next] = 1.0;
          has_var = true;
        } else if (b_next == -1) {
          rhs_val -= 1.0;  // constant 1 on the lhs
        }
        const int b_cur_f = beta_of(cur, f);
        if (b_cur_f >= 0) {
          row[b_cur_f] -= 1.0;
          has_var = true;
        } else if (b_cur_f == -1) {
          rhs_val += 1.0;
        }
        const int b_cur_nc = beta_of(cur, kNoContact);
        if (b_cur_nc >= 0) {
          row[b_cur_nc] -= 1.0;
          has_var = true;
        } else if (b_cur_nc == -1) {
          rhs_val += 1.0;
        }
        if (!has_var) {
          if (rhs_val < 0.0) relax.trivially_infeasible = true;
          continue;
        }
        add_row(row, rhs_val);
      }
    }
  }

  relax.qp.p = quad + quad.transpose();
  relax.qp.c = lin;
  relax.qp.a = a_eq;
  relax.qp.b = b_eq;
  relax.qp.g.resize(static_cast<int>(g_rows.size()), n);
  relax.qp.h.resize(static_cast<int>(g_rows.size()));
  for (size_t i = 0; i < g_rows.size(); ++i) {
    relax.qp.g.row(static_cast<int>(i)) = g_rows[i];
    relax.qp.h[static_cast<int>(i)] = h_vals[i];
  }
  return relax;
}

struct BnbNode {
  AllowedSets sets;
  double bound = -kInf;
  int depth = 0;
  std::uint64_t id = 0;
};

struct NodeOrder {
  bool operator()(const BnbNode& a, const BnbNode& b) const {
    if (a.bound != b.bound) return a.bound > b.bound;  // min-heap on bound
    return a.id < b.id;                                // prefer newer (deeper dives)
  }
};

}  // namespace

std::uint64_t count_admissible_sequences(int n_facets, int t_count, int n_fingers) {
  // Per-finger path count: NC can precede anything, a facet only itself/NC.
  std::uint64_t end_nc = 1, end_facet = static_cast<std::uint64_t>(n_facets);
  for (int t = 1; t < t_count; ++t) {
    const std::uint64_t nc = end_nc + end_facet;
    const std::uint64_t facet =
        end_facet + static_cast<std::uint64_t>(n_facets) * end_nc;
    end_nc = nc;
    end_facet = facet;
  }
  const std::uint64_t per_finger = end_nc + end_facet;
  if (n_fingers == 1) return per_finger;
  if (n_fingers == 2) return per_finger * (per_finger + 1) / 2;  // unordered pairs
  std::uint64_t total = 1;
  for (int c = 0; c < n_fingers; ++c) total *= per_finger;
  return total;
}

CtoSolution enumerate_modes_oracle(const CtoTask& task, int n_fingers,
                                   const CtoSettings& settings, std::uint64_t max_space) {
  const auto start = std::chrono::steady_clock::now();
  const int t_count = static_cast<int>(task.trajectory.size());
  const int n_facets = task.object.size();
  const std::uint64_t space = count_admissible_sequences(n_facets, t_count, n_fingers);
  if (space > max_space) {
    throw std::runtime_error("enumerate_modes_oracle: mode space " + std::to_string(space) +
                             " exceeds cap " + std::to_string(max_space));
  }

  // All admissible single-finger sequences, in deterministic order.
  std::vector<std::vector<int>> seqs;
  std::vector<int> cur(t_count, kNoContact);
  std::function<void(int)> gen = [&](int t) {
    if (t == t_count) {
      seqs.push_back(cur);
      return;
    }
    for (int m = kNoContact; m < n_facets; ++m) {
      if (t > 0 && m != kNoContact && cur[t - 1] != kNoContact && cur[t - 1] != m) continue;
      cur[t] = m;
      gen(t + 1);
    }
    cur[t] = kNoContact;
  };
  gen(0);

  CtoSolution best;
  best.status = CtoStatus::kInfeasible;
  best.objective = kInf;

  std::vector<size_t> pick(n_fingers, 0);
  std::function<void(int)> walk = [&](int c) {
    if (c == n_fingers) {
      ModeSequence modes;
      for (int i = 0; i < n_fingers; ++i) modes.assignment.push_back(seqs[pick[i]]);
      ModeQpResult r = qp_for_modes(task, modes, settings.weights, settings.options);
      ++best.leaves_evaluated;
      if (r.feasible && r.objective < best.objective - 1e-12) {
        best.objective = r.objective;
        best.actions = r.solution.actions;
        best.modes = modes;
        best.status = CtoStatus::kOptimal;
      }
      return;
    }
    // Symmetry: finger sequences in nondecreasing index order.
    const size_t lo = c > 0 ? pick[c - 1] : 0;
    for (size_t i = lo; i < seqs.size(); ++i) {
      pick[c] = i;
      walk(c + 1);
    }
  };
  walk(0);

  best.solve_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return best;
}

CtoSolution solve_cto_bnb(const CtoTask& task, int n_fingers, const CtoSettings& settings) {
  const auto start = std::chrono::steady_clock::now();
  const int t_count = static_cast<int>(task.trajectory.size());
  const int n_facets = task.object.size();

  CtoSolution best;
  best.status = CtoStatus::kInfeasible;
  best.objective = kInf;

  // Pose-dependent data shared by every node.
  const std::vector<Eigen::Vector3d> rhs = task_rhs(task);
  std::vector<EnvSlot> env_slots(t_count);
  // facet_cache[t][0][f]: slot for facet f at time t (identical for fingers).
  std::vector<std::vector<std::vector<ContactSlot>>> facet_cache(t_count);
  const Trajectory traj = differentiate_trajectory(task.trajectory, task.dt);
  for (int t = 0; t < t_count; ++t) {
    env_slots[t] = env_slot(task, t, traj);
    facet_cache[t].resize(1);
    facet_cache[t][0].resize(n_facets);
    for (int f = 0; f < n_facets; ++f) facet_cache[t][0][f] = facet_slot(task, t, f);
  }

  QpSettings relax_solver;
  relax_solver.tol = settings.relax_tol;
  relax_solver.max_polish_rounds = 12;
  relax_solver.early_polish = false;

  std::map<ModeMatrix, double> leaf_cache;
  auto evaluate_leaf = [&](const ModeSequence& modes) -> double {
    const auto it = leaf_cache.find(modes.assignment);
    if (it != leaf_cache.end()) return it->second;
    ModeQpResult r = qp_for_modes(task, modes, settings.weights, settings.options);
    ++best.leaves_evaluated;
    const double value = r.feasible ? r.objective : kInf;
    leaf_cache[modes.assignment] = value;
    if (value < best.objective - 1e-12) {
      best.objective = value;
      best.actions = r.solution.actions;
      best.modes = modes;
      best.status = CtoStatus::kOptimal;
    }
    return value;
  };

  std::priority_queue<BnbNode, std::vector<BnbNode>, NodeOrder> queue;
  std::uint64_t next_id = 0;

  // Warm incumbents from constant assignments: pushing-style optima are
  // usually near-constant, and an early incumbent is what makes the search
  // prune. Cost: a few dozen leaf evaluations.
  {
    std::vector<int> modes_pool;
    modes_pool.push_back(kNoContact);
    for (int f = 0; f < n_facets; ++f) modes_pool.push_back(f);
    if (n_fingers == 1) {
      for (int m : modes_pool) {
        ModeSequence seq;
        seq.assignment = {std::vector<int>(t_count, m)};
        evaluate_leaf(seq);
      }
    } else if (n_fingers == 2) {
      for (size_t i = 0; i < modes_pool.size(); ++i) {
        for (size_t j = i; j < modes_pool.size(); ++j) {
          ModeSequence seq;
          seq.assignment = {std::vector<int>(t_count, modes_pool[i]),
                            std::vector<int>(t_count, modes_pool[j])};
          evaluate_leaf(seq);
        }
      }
    }
  }

  BnbNode root;
  root.sets.assign(n_fingers,
                   std::vector<std::uint32_t>(t_count, (1u << (n_facets + 1)) - 1u));
  if (!propagate(root.sets, n_facets)) {
    best.solve_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return best;
  }
  root.id = next_id++;
  queue.push(root);

  bool budget_hit = false;
  while (!queue.empty()) {
    if (best.nodes_explored >= settings.max_nodes) {
      budget_hit = true;
      break;
    }
    BnbNode node = queue.top();
    queue.pop();
    ++best.nodes_explored;
    const double prune_margin = 1e-8 * (1.0 + std::abs(best.objective));
    if (node.bound >= best.objective - prune_margin) continue;

    if (all_fixed(node.sets)) {
      evaluate_leaf(sets_to_modes(node.sets));
      continue;
    }

    Relaxation relax = assemble_relaxation(task, node.sets, settings.weights,
                                           settings.options, rhs, env_slots, facet_cache);
    if (relax.trivially_infeasible) continue;

    // With no incumbent yet, a positive minimal slack certifies that no
    // completion of this node can satisfy the dynamics: prune.
    if (best.status != CtoStatus::kOptimal) {
      Relaxation probe = assemble_relaxation(task, node.sets, settings.weights,
                                             settings.options, rhs, env_slots, facet_cache,
                                             /*feasibility_probe=*/true);
      const QpResult psol = solve_dense_qp(probe.qp, relax_solver);
      if (psol.status == QpStatus::kOptimal) {
        const double gap = psol.s.size() > 0 ? psol.s.dot(psol.z) : 0.0;
        const double min_l1 = (psol.objective - gap) / settings.weights.q_eps;
        if (min_l1 > 1e-5) continue;
      }
    }
    const QpResult rsol = solve_dense_qp(relax.qp, relax_solver);
    if (std::getenv("DPM_BNB_TRACE")) {
      std::fprintf(stderr, "node depth=%d status=%d obj=%.6e mu=%.2e kkt=%.2e n=%d\n",
                   node.depth, (int)rsol.status, rsol.objective + relax.objective_offset,
                   rsol.mu, rsol.kkt_residual, relax.qp.num_vars());
    }
    // Only a converged relaxation yields a trustworthy lower bound. The
    // elastic node problems are structurally feasible, so any other status is
    // a numerical failure: keep the node's inherited bound and branch on.
    double bound = node.bound;
    if (rsol.status == QpStatus::kOptimal) {
      const double gap = rsol.s.size() > 0 ? rsol.s.dot(rsol.z) : 0.0;
      bound = rsol.objective + relax.objective_offset - gap -
              1e-9 * (1.0 + std::abs(rsol.objective));
      // Allow for the gap correction both solves carry before flagging a
      // genuine (modeling) monotonicity violation.
      const double mono_tol = std::max(1e-4 * (1.0 + std::abs(bound)), 2.0 * gap + 1e-6);
      if (node.bound > -kInf && bound < node.bound - mono_tol) {
        best.bounds_monotone = false;
      }
      bound = std::max(bound, node.bound);  // inherit: child bound never regresses
    }
    if (bound >= best.objective - prune_margin) continue;

    // Round the relaxation to an incumbent candidate.
    if (rsol.status == QpStatus::kOptimal) {
      AllowedSets rounded = node.sets;
      std::map<std::pair<int, int>, std::pair<int, double>> argmax;
      for (const BinaryVar& bv : relax.binaries) {
        const double v = rsol.x[bv.var];
        auto key = std::make_pair(bv.c, bv.t);
        auto it = argmax.find(key);
        if (it == argmax.end() || v > it->second.second) {
          argmax[key] = {bv.mode, v};
        }
      }
      for (const auto& [key, mv] : argmax) {
        rounded[key.first][key.second] =
            mv.first == kNoContact ? kNcBit : (1u << (mv.first + 1));
      }
      AllowedSets repaired = rounded;
      if (propagate(repaired, n_facets) && all_fixed(repaired)) {
        evaluate_leaf(sets_to_modes(repaired));
      }
      if (bound >= best.objective - prune_margin) continue;
    }

    // Branch on the most fractional binary, preferring the contact/no-contact
    // split: it decides the structure and tightens both children the most.
    int branch_c = -1, branch_t = -1, branch_mode = kNoContact;
    double best_frac = 0.4999999;
    if (rsol.status == QpStatus::kOptimal || rsol.status == QpStatus::kMaxIterations) {
      for (const BinaryVar& bv : relax.binaries) {
        if (bv.mode != kNoContact) continue;
        const double frac = std::abs(rsol.x[bv.var] - 0.5);
        if (frac < best_frac - 1e-12) {
          best_frac = frac;
          branch_c = bv.c;
          branch_t = bv.t;
          branch_mode = bv.mode;
        }
      }
      if (branch_c < 0) {
        best_frac = 1.0;
        for (const BinaryVar& bv : relax.binaries) {
          const double frac = std::abs(rsol.x[bv.var] - 0.5);
          if (frac < best_frac - 1e-12) {
            best_frac = frac;
            branch_c = bv.c;
            branch_t = bv.t;
            branch_mode = bv.mode;
          }
        }
      }
    }
    if (branch_c < 0) {
      // No usable relaxation values: branch on the first multi slot.
      for (int c = 0; c < n_fingers && branch_c < 0; ++c) {
        for (int t = 0; t < t_count && branch_c < 0; ++t) {
          if (popcount(node.sets[c][t]) > 1) {
            branch_c = c;
            branch_t = t;
            const std::uint32_t mask = node.sets[c][t];
            branch_mode = (mask & kNcBit) ? kNoContact : __builtin_ctz(mask) - 1;
          }
        }
      }
    }
    if (branch_c < 0) continue;

    const std::uint32_t mode_bit =
        branch_mode == kNoContact ? kNcBit : (1u << (branch_mode + 1));
    // Child 1: force the mode.
    {
      BnbNode child;
      child.sets = node.sets;
      child.sets[branch_c][branch_t] = mode_bit;
      child.depth = node.depth + 1;
      child.bound = bound;
      if (propagate(child.sets, n_facets)) {
        child.id = next_id++;
        queue.push(child);
      }
    }
    // Child 2: forbid the mode.
    {
      BnbNode child;
      child.sets = node.sets;
      child.sets[branch_c][branch_t] &= ~mode_bit;
      child.depth = node.depth + 1;
      child.bound = bound;
      if (child.sets[branch_c][branch_t] != 0 && propagate(child.sets, n_facets)) {
        child.id = next_id++;
        queue.push(child);
      }
    }
  }

  if (budget_hit) best.status = CtoStatus::kBudgetExhausted;
  best.solve_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return best;
}

}  // namespace dpm
