#pragma once
/// Linear complementarity: find z >= 0 with w = M z + q >= 0 and z'w = 0.
/// Lemke's complementary pivoting with lexicographic tie-breaking.

#include <Eigen/Dense>

namespace dpm {

enum class LcpStatus { kSolved, kRayTermination, kMaxIterations };

struct LcpSolution {
  Eigen::VectorXd z;
  Eigen::VectorXd w;            // M z + q, recomputed from the input
  LcpStatus status = LcpStatus::kSolved;
  double complementarity = 0.0; // z' w
  double min_z = 0.0;
  double min_w = 0.0;
  int iterations = 0;

  bool ok() const { return status == LcpStatus::kSolved; }
};

/// The velocity-stepping construction only produces matrices whose quadratic
/// form is positive semidefinite, which Lemke processes without ray
/// termination in exact arithmetic; failures are reported, never silent.
LcpSolution solve_lcp(const Eigen::MatrixXd& m, const Eigen::VectorXd& q);

}  // namespace dpm
