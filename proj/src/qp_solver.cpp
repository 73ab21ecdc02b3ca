#include "dpm/qp_solver.hpp"
#include <cstdlib>
#include <cstdio>
#include <algorithm>

#include <cmath>
#include <limits>
#include <stdexcept>

namespace dpm {

namespace {

// Largest alpha in [0, cap] with v + alpha*dv >= (1 - fraction)*v.
double step_to_boundary(const Eigen::VectorXd& v, const Eigen::VectorXd& dv, double cap) {
  double alpha = cap;
  for (int i = 0; i < v.size(); ++i) {
    if (dv[i] < 0.0) alpha = std::min(alpha, -v[i] / dv[i]);
  }
  return alpha;
}

// Cholesky with a pivoted-LDLT fallback; late-stage barrier matrices get
// numerically indefinite.
class PdSolver {
 public:
  bool compute(const Eigen::MatrixXd& m) {
    llt_.compute(m);
    if (llt_.info() == Eigen::Success) {
      use_ldlt_ = false;
      return true;
    }
    ldlt_.compute(m);
    use_ldlt_ = true;
    if (ldlt_.info() == Eigen::Success) return true;
    Eigen::MatrixXd reg = m;
    reg.diagonal().array() += 1e-12 * (1.0 + m.diagonal().cwiseAbs().maxCoeff());
    ldlt_.compute(reg);
    return ldlt_.info() == Eigen::Success;
  }
  Eigen::MatrixXd solve(const Eigen::MatrixXd& rhs) const {
    if (use_ldlt_) return ldlt_.solve(rhs);
    return llt_.solve(rhs);
  }
  Eigen::VectorXd solve_vec(const Eigen::VectorXd& rhs) const {
    if (use_ldlt_) return ldlt_.solve(rhs);
    return llt_.solve(rhs);
  }

 private:
  Eigen::LLT<Eigen::MatrixXd> llt_;
  Eigen::LDLT<Eigen::MatrixXd> ldlt_;
  bool use_ldlt_ = false;
};

}  // namespace

namespace {
QpResult solve_dense_qp_impl(const DenseQp& qp, const QpSettings& settings);
// Active-set polish: starting from the interior-point split of the
// constraints, repeatedly solves the equality-pinned KKT system, adding the
// most violated constraint or dropping the most negative dual until the
// exact KKT conditions hold. Warm-started near the optimum this converges in
// a handful of rounds; on failure the caller keeps the unpolished iterate.
bool polish(const DenseQp& qp, QpResult& res, double kappa = 1.0, int max_rounds = 60) {
  const int n = qp.num_vars();
  const int me = static_cast<int>(qp.b.size());
  const int mi = static_cast<int>(qp.h.size());
  std::vector<int> act;
  for (int i = 0; i < mi; ++i) {
    if (res.z[i] * kappa > res.s[i]) act.push_back(i);
  }
  const double feas_tol = 1e-9 * (1.0 + (mi ? qp.h.lpNorm<Eigen::Infinity>() : 0.0));

  for (int round = 0; round < max_rounds; ++round) {
    const int ma = static_cast<int>(act.size());
    Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(n + me + ma, n + me + ma);
    kkt.topLeftCorner(n, n) = qp.p;
    Eigen::VectorXd rhs(n + me + ma);
    rhs.head(n) = -qp.c;
    if (me > 0) {
      kkt.block(0, n, n, me) = qp.a.transpose();
      kkt.block(n, 0, me, n) = qp.a;
      rhs.segment(n, me) = qp.b;
    }
    for (int i = 0; i < ma; ++i) {
      kkt.block(0, n + me + i, n, 1) = qp.g.row(act[i]).transpose();
      kkt.block(n + me + i, 0, 1, n) = qp.g.row(act[i]);
      rhs[n + me + i] = qp.h[act[i]];
    }
    // Singular-but-consistent systems are normal here (non-unique duals);
    // solve, refine, and verify instead of demanding invertibility.
    // Partial pivoting first for speed; full pivoting only for the singular
    // fallback. Acceptance requires a finite solution with a small residual
    // (NaN comparisons must not slip through).
    const double solve_tol = 1e-8 * (1.0 + rhs.lpNorm<Eigen::Infinity>());
    auto consistent = [&](const Eigen::VectorXd& v) {
      return v.allFinite() && (kkt * v - rhs).lpNorm<Eigen::Infinity>() <= solve_tol;
    };
    Eigen::VectorXd sol;
    {
      Eigen::PartialPivLU<Eigen::MatrixXd> lu(kkt);
      sol = lu.solve(rhs);
      if (sol.allFinite()) {
        for (int r = 0; r < 2; ++r) sol += lu.solve(rhs - kkt * sol);
      }
    }
    if (!consistent(sol)) {
      Eigen::FullPivLU<Eigen::MatrixXd> lu(kkt);
      sol = lu.solve(rhs);
      if (sol.allFinite()) {
        for (int r = 0; r < 2; ++r) sol += lu.solve(rhs - kkt * sol);
      }
      if (!consistent(sol)) return false;
    }
    const Eigen::VectorXd x = sol.head(n);
    const Eigen::VectorXd slack = mi ? (qp.h - qp.g * x).eval() : Eigen::VectorXd();

    // Most violated inactive constraint.
    int worst_violation = -1;
    double vmax = feas_tol;
    std::vector<char> is_active(mi, 0);
    for (int i : act) is_active[i] = 1;
    for (int i = 0; i < mi; ++i) {
      if (!is_active[i] && -slack[i] > vmax) {
        vmax = -slack[i];
        worst_violation = i;
      }
    }
    // Most negative active dual.
    int worst_dual = -1;
    double zscale = 1.0;
    for (int i = 0; i < ma; ++i) zscale = std::max(zscale, std::abs(sol[n + me + i]));
    double dmin = -1e-9 * zscale;
    for (int i = 0; i < ma; ++i) {
      if (sol[n + me + i] < dmin) {
        dmin = sol[n + me + i];
        worst_dual = i;
      }
    }

    if (worst_violation < 0 && worst_dual < 0) {
      res.x = x;
      if (me > 0) res.y = sol.segment(n, me);
      res.z = Eigen::VectorXd::Zero(mi);
      for (int i = 0; i < ma; ++i) res.z[act[i]] = std::max(0.0, sol[n + me + i]);
      res.s = mi ? slack.cwiseMax(0.0).eval() : Eigen::VectorXd();
      res.mu = mi > 0 ? res.s.dot(res.z) / mi : 0.0;
      const Eigen::VectorXd r_d = qp.p * x + qp.c +
                                  (me > 0 ? (qp.a.transpose() * res.y).eval()
                                          : Eigen::VectorXd::Zero(n).eval()) +
                                  (mi ? (qp.g.transpose() * res.z).eval()
                                      : Eigen::VectorXd::Zero(n).eval());
      const double rp = me > 0 ? (qp.a * x - qp.b).lpNorm<Eigen::Infinity>() : 0.0;
      res.kkt_residual = std::max(rp, r_d.lpNorm<Eigen::Infinity>());
      return true;
    }
    if (worst_violation >= 0) {
      act.push_back(worst_violation);
    } else {
      act.erase(act.begin() + worst_dual);
    }
  }
  return false;
}

// Classification-threshold sweep around the basic polish.
bool polish_sweep(const DenseQp& qp, QpResult& res, double tol, double scale,
                  int max_rounds) {
  for (double kappa : {1.0, 1e2, 1e-2}) {
    QpResult trial = res;
    if (!polish(qp, trial, kappa, max_rounds)) continue;
    if (trial.kkt_residual <= 10.0 * tol * scale) {
      res = trial;
      return true;
    }
  }
  return false;
}

}  // namespace

QpResult solve_dense_qp(const DenseQp& qp, const QpSettings& settings) {
  // Normalize the cost so the solve is invariant to uniform rescaling of the
  // objective; two problems that differ only by a positive cost factor then
  // take identical iterate paths.
  double cost_scale = std::max(qp.c.size() ? qp.c.lpNorm<Eigen::Infinity>() : 0.0,
                               qp.p.size() ? qp.p.cwiseAbs().maxCoeff() : 0.0);
  if (!(cost_scale > 1e-12)) cost_scale = 1.0;
  DenseQp scaled = qp;
  scaled.p /= cost_scale;
  scaled.c /= cost_scale;
  QpResult res = solve_dense_qp_impl(scaled, settings);
  res.objective *= cost_scale;
  res.y *= cost_scale;
  res.z *= cost_scale;
  res.mu *= cost_scale;
  res.kkt_residual *= cost_scale;  // conservative: feasibility parts only shrink
  return res;
}

namespace {

QpResult solve_dense_qp_impl(const DenseQp& qp, const QpSettings& settings) {
  const int n = qp.num_vars();
  const int me = static_cast<int>(qp.b.size());
  const int mi = static_cast<int>(qp.h.size());

  QpResult res;
  res.x = Eigen::VectorXd::Zero(n);
  res.y = Eigen::VectorXd::Zero(me);
  res.z = Eigen::VectorXd::Ones(mi);
  res.s = Eigen::VectorXd::Ones(mi);

  const double scale = std::max({1.0, qp.c.lpNorm<Eigen::Infinity>(),
                                 me > 0 ? qp.b.lpNorm<Eigen::Infinity>() : 0.0,
                                 mi > 0 ? qp.h.lpNorm<Eigen::Infinity>() : 0.0});
  const double tol = settings.tol;

  auto objective = [&](const Eigen::VectorXd& x) {
    return 0.5 * x.dot(qp.p * x) + qp.c.dot(x);
  };

  if (mi == 0) {
    // Pure equality-constrained QP: one KKT solve.
    Eigen::MatrixXd kkt(n + me, n + me);
    kkt.setZero();
    kkt.topLeftCorner(n, n) = qp.p;
    if (me > 0) {
      kkt.topRightCorner(n, me) = qp.a.transpose();
      kkt.bottomLeftCorner(me, n) = qp.a;
    }
    Eigen::VectorXd rhs(n + me);
    rhs.head(n) = -qp.c;
    rhs.tail(me) = qp.b;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(kkt);
    if (!lu.isInvertible()) {
      res.status = QpStatus::kNumericalFailure;
      return res;
    }
    const Eigen::VectorXd sol = lu.solve(rhs);
    res.x = sol.head(n);
    res.y = sol.tail(me);
    res.objective = objective(res.x);
    const double rp = me > 0 ? (qp.a * res.x - qp.b).lpNorm<Eigen::Infinity>() : 0.0;
    res.kkt_residual = std::max(
        rp, (qp.p * res.x + qp.c + (me > 0 ? (qp.a.transpose() * res.y).eval()
                                           : Eigen::VectorXd::Zero(n).eval()))
                .lpNorm<Eigen::Infinity>());
    res.status = res.kkt_residual <= 1e-6 * scale ? QpStatus::kOptimal : QpStatus::kInfeasible;
    return res;
  }

  // Least-squares starting point: solve the KKT system with the identity
  // scaling (W = I), then shift slacks and duals into the interior. Without
  // this, problems with large linear costs blow up the first corrector.
  {
    Eigen::MatrixXd h0 = qp.p;
    h0.noalias() += qp.g.transpose() * qp.g;
    h0.diagonal().array() += 1e-12 * (1.0 + h0.diagonal().maxCoeff());
    Eigen::LLT<Eigen::MatrixXd> llt0(h0);
    if (llt0.info() == Eigen::Success) {
      const Eigen::VectorXd rhs0 = -qp.c + qp.g.transpose() * qp.h;
      if (me > 0) {
        const Eigen::MatrixXd s0 = qp.a * llt0.solve(qp.a.transpose());
        Eigen::LLT<Eigen::MatrixXd> sllt0(s0);
        if (sllt0.info() == Eigen::Success) {
          res.y = sllt0.solve(qp.a * llt0.solve(rhs0) - qp.b);
          res.x = llt0.solve(rhs0 - qp.a.transpose() * res.y);
        }
      } else {
        res.x = llt0.solve(rhs0);
      }
      const Eigen::VectorXd z_raw = qp.g * res.x - qp.h;
      res.s = -z_raw;
      res.z = z_raw;
      const double shift_s = -res.s.minCoeff();
      if (shift_s >= 0.0) res.s.array() += 1.0 + shift_s;
      const double shift_z = -res.z.minCoeff();
      if (shift_z >= 0.0) res.z.array() += 1.0 + shift_z;
    } else {
      const Eigen::VectorXd slack0 = qp.h - qp.g * res.x;
      for (int i = 0; i < mi; ++i) res.s[i] = std::max(1.0, slack0[i]);
    }
  }

  Eigen::MatrixXd h_mat(n, n);
  Eigen::VectorXd dx(n), dy(me), dz(mi), ds(mi);
  Eigen::VectorXd dx_c(n), dy_c(me), dz_c(mi), ds_c(mi);

  // Best-so-far iterate; restored if the run stalls or breaks down.
  QpResult best = res;
  double best_score = std::numeric_limits<double>::infinity();
  int best_iter = 0;
  int polish_attempts = 0;
  int last_polish_iter = -10;
  bool breakdown = false;

  // Inequality rows are a few nonzeros each; H = P + G'WG is assembled from
  // the row supports instead of dense triple products.
  std::vector<std::vector<int>> g_support(mi);
  for (int i = 0; i < mi; ++i) {
    for (int j = 0; j < n; ++j) {
      if (qp.g(i, j) != 0.0) g_support[i].push_back(j);
    }
  }

  for (int iter = 1; iter <= settings.max_iter; ++iter) {
    res.iterations = iter;
    const Eigen::VectorXd r_d =
        qp.p * res.x + qp.c + (me > 0 ? (qp.a.transpose() * res.y).eval()
                                      : Eigen::VectorXd::Zero(n).eval()) +
        qp.g.transpose() * res.z;
    const Eigen::VectorXd r_p = me > 0 ? (qp.a * res.x - qp.b).eval() : Eigen::VectorXd();
    const Eigen::VectorXd r_g = qp.g * res.x + res.s - qp.h;
    const double mu = res.s.dot(res.z) / mi;
    res.mu = mu;

    const double norm_rd = r_d.lpNorm<Eigen::Infinity>();
    const double norm_rp = me > 0 ? r_p.lpNorm<Eigen::Infinity>() : 0.0;
    const double norm_rg = r_g.lpNorm<Eigen::Infinity>();
    res.kkt_residual = std::max({norm_rd, norm_rp, norm_rg});
    if (settings.verbose) {
      std::fprintf(stderr, "ipm %3d: rd=%.2e rp=%.2e rg=%.2e mu=%.2e\n", iter, norm_rd,
                   norm_rp, norm_rg, mu);
    }
    const double score = std::max({norm_rd, norm_rp, norm_rg, mu});
    if (score < 0.9999 * best_score) {
      best = res;
      best_score = score;
      best_iter = iter;
    } else if (score > 1e6 * (best_score + 1e-300) || iter - best_iter > 12) {
      breakdown = true;  // diverged or stalled: fall back to the best iterate
      break;
    }

    // The gap criterion scales with the objective, not the data: a large
    // penalty coefficient in c must not loosen the complementarity target.
    const double gap_scale = std::max(1.0, std::abs(objective(res.x)));
    if (norm_rd <= tol * scale && norm_rp <= tol * scale && norm_rg <= tol * scale &&
        mu <= tol * gap_scale) {
      polish(qp, res, 1.0, settings.max_polish_rounds);
      res.status = QpStatus::kOptimal;
      res.objective = objective(res.x);
      return res;
    }
    // Moderately converged: a direct active-set solve often finishes the job
    // long before the barrier can, and sidesteps late-stage instability.
    if (settings.early_polish && norm_rd <= 1e-5 * scale && norm_rp <= 1e-6 * scale &&
        norm_rg <= 1e-6 * scale && mu <= 1e-4 * gap_scale && polish_attempts < 4 &&
        iter >= last_polish_iter + 3) {
      ++polish_attempts;
      last_polish_iter = iter;
      if (polish_sweep(qp, res, tol, scale, settings.max_polish_rounds)) {
        res.status = QpStatus::kOptimal;
        res.objective = objective(res.x);
        return res;
      }
    }
    if ((res.y.size() > 0 && res.y.lpNorm<Eigen::Infinity>() > 1e13) ||
        res.z.lpNorm<Eigen::Infinity>() > 1e13) {
      res.status = QpStatus::kInfeasible;
      res.objective = objective(res.x);
      return res;
    }

    const Eigen::ArrayXd z_over_s = res.z.array() / res.s.array();
    h_mat = qp.p;
    for (int i = 0; i < mi; ++i) {
      const double w = z_over_s[i];
      for (int a : g_support[i]) {
        const double ga = qp.g(i, a) * w;
        for (int b2 : g_support[i]) h_mat(a, b2) += ga * qp.g(i, b2);
      }
    }

    PdSolver llt;
    if (!llt.compute(h_mat)) {
      breakdown = true;
      break;
    }
    PdSolver schur_llt;
    if (me > 0) {
      const Eigen::MatrixXd schur = qp.a * llt.solve(Eigen::MatrixXd(qp.a.transpose()));
      if (!schur_llt.compute(schur)) {
        breakdown = true;
        break;
      }
    }

    // Newton system for general targets (t1..t4), via elimination to the
    // normal-equations form; one refinement pass against the augmented
    // system repairs the squared conditioning of that reduction.
    auto solve_targets = [&](const Eigen::VectorXd& t1, const Eigen::VectorXd& t2,
                             const Eigen::VectorXd& t3, const Eigen::VectorXd& t4,
                             Eigen::VectorXd& out_dx, Eigen::VectorXd& out_dy,
                             Eigen::VectorXd& out_dz, Eigen::VectorXd& out_ds) {
      const Eigen::VectorXd rhs1 =
          t1 - qp.g.transpose() * ((t4.array() - res.z.array() * t3.array()) /
                                   res.s.array()).matrix();
      if (me > 0) {
        const Eigen::VectorXd rhs_y = qp.a * llt.solve_vec(rhs1) - t2;
        out_dy = schur_llt.solve_vec(rhs_y);
        out_dx = llt.solve_vec(rhs1 - qp.a.transpose() * out_dy);
      } else {
        out_dx = llt.solve_vec(rhs1);
      }
      out_ds = t3 - qp.g * out_dx;
      out_dz = ((t4.array() - res.z.array() * out_ds.array()) / res.s.array()).matrix();
    };
    auto solve_refined = [&](const Eigen::VectorXd& t1, const Eigen::VectorXd& t2,
                             const Eigen::VectorXd& t3, const Eigen::VectorXd& t4,
                             Eigen::VectorXd& out_dx, Eigen::VectorXd& out_dy,
                             Eigen::VectorXd& out_dz, Eigen::VectorXd& out_ds) {
      solve_targets(t1, t2, t3, t4, out_dx, out_dy, out_dz, out_ds);
      for (int round = 0; round < 1; ++round) {
        const Eigen::VectorXd q1 =
            t1 - (qp.p * out_dx +
                  (me > 0 ? (qp.a.transpose() * out_dy).eval()
                          : Eigen::VectorXd::Zero(n).eval()) +
                  qp.g.transpose() * out_dz);
        const Eigen::VectorXd q2 = me > 0 ? (t2 - qp.a * out_dx).eval() : Eigen::VectorXd();
        const Eigen::VectorXd q3 = t3 - (qp.g * out_dx + out_ds);
        const Eigen::VectorXd q4 =
            t4 - (res.z.array() * out_ds.array() + res.s.array() * out_dz.array()).matrix();
        Eigen::VectorXd cx, cy, cz, cs;
        solve_targets(q1, q2, q3, q4, cx, cy, cz, cs);
        out_dx += cx;
        if (me > 0) out_dy += cy;
        out_dz += cz;
        out_ds += cs;
      }
    };

    // Predictor.
    const Eigen::VectorXd r_sz_aff = (res.s.array() * res.z.array()).matrix();
    solve_refined(-r_d, me > 0 ? (-r_p).eval() : Eigen::VectorXd(), -r_g, -r_sz_aff,
                  dx, dy, dz, ds);
    const double alpha_p_aff = step_to_boundary(res.s, ds, 1.0);
    const double alpha_d_aff = step_to_boundary(res.z, dz, 1.0);
    const double mu_aff = (res.s + alpha_p_aff * ds).dot(res.z + alpha_d_aff * dz) / mi;
    const double sigma = std::pow(std::clamp(mu_aff / mu, 0.0, 1.0), 3.0);

    // Corrector (reuses the factorization).
    const Eigen::VectorXd r_sz_cor =
        (res.s.array() * res.z.array() + ds.array() * dz.array() - sigma * mu).matrix();
    solve_refined(-r_d, me > 0 ? (-r_p).eval() : Eigen::VectorXd(), -r_g, -r_sz_cor,
                  dx_c, dy_c, dz_c, ds_c);

    const double alpha_p = 0.99 * step_to_boundary(res.s, ds_c, 1.0 / 0.99);
    const double alpha_d = 0.99 * step_to_boundary(res.z, dz_c, 1.0 / 0.99);
    res.x += std::min(1.0, alpha_p) * dx_c;
    res.s += std::min(1.0, alpha_p) * ds_c;
    if (me > 0) res.y += std::min(1.0, alpha_d) * dy_c;
    res.z += std::min(1.0, alpha_d) * dz_c;
  }

  // Stalled, broke down, or ran out of iterations: fall back to the best
  // iterate and try to rescue it with an exact active-set polish.
  if (best_score < std::numeric_limits<double>::infinity()) res = best;
  (void)breakdown;
  if (polish_sweep(qp, res, tol, scale, settings.max_polish_rounds)) {
    res.status = QpStatus::kOptimal;
    res.objective = objective(res.x);
    return res;
  }
  res.objective = objective(res.x);
  const double norm_rp =
      me > 0 ? (qp.a * res.x - qp.b).lpNorm<Eigen::Infinity>() : 0.0;
  res.status = (res.mu <= 1e3 * tol * scale && norm_rp > std::sqrt(tol) * scale)
                   ? QpStatus::kInfeasible
                   : QpStatus::kMaxIterations;
  return res;
}

}  // namespace

}  // namespace dpm
