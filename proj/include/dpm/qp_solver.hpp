#pragma once
/// Dense convex QP solver: primal-dual interior point with Mehrotra
/// predictor-corrector steps. Sized for the problems this toolkit builds
/// (tens to a few hundred variables), dense Eigen factorizations throughout.
///
///   minimize   0.5 x'Px + c'x
///   subject to A x == b,  G x <= h

#include <Eigen/Dense>

namespace dpm {

struct DenseQp {
  Eigen::MatrixXd p;  // n x n, positive semidefinite
  Eigen::VectorXd c;  // n
  Eigen::MatrixXd a;  // me x n (me may be 0)
  Eigen::VectorXd b;  // me
  Eigen::MatrixXd g;  // mi x n (mi may be 0)
  Eigen::VectorXd h;  // mi

  int num_vars() const { return static_cast<int>(c.size()); }
};

enum class QpStatus { kOptimal, kMaxIterations, kInfeasible, kNumericalFailure };

struct QpSettings {
  double tol = 1e-10;
  int max_iter = 120;
  int max_polish_rounds = 60;  // active-set refinement budget per polish
  /// Attempt an early active-set finish once moderately converged. Worth it
  /// for problems that need tight answers; wasteful for bound computations.
  bool early_polish = true;
  bool verbose = false;        // per-iteration residual trace on stderr
};

struct QpResult {
  Eigen::VectorXd x;
  Eigen::VectorXd y;  // equality duals
  Eigen::VectorXd z;  // inequality duals, >= 0
  Eigen::VectorXd s;  // inequality slacks, >= 0
  QpStatus status = QpStatus::kNumericalFailure;
  double objective = 0.0;
  double kkt_residual = 0.0;  // max of stationarity/feasibility inf-norms
  double mu = 0.0;            // final complementarity measure s'z / mi
  int iterations = 0;

  bool ok() const { return status == QpStatus::kOptimal; }
};

QpResult solve_dense_qp(const DenseQp& qp, const QpSettings& settings = {});

}  // namespace dpm
