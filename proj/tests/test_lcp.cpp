#include <Eigen/Dense>

#include "doctest.h"
#include "dpm/lcp.hpp"
#include "dpm/rng.hpp"

using namespace dpm;

namespace {

// Exhaustive active-set enumeration for small LCPs: try every support set S,
// solve M_SS z_S = -q_S, keep solutions satisfying all sign conditions.
bool enumerate_lcp(const Eigen::MatrixXd& m, const Eigen::VectorXd& q, Eigen::VectorXd* out) {
  const int n = static_cast<int>(q.size());
  for (unsigned mask = 0; mask < (1u << n); ++mask) {
    std::vector<int> idx;
    for (int i = 0; i < n; ++i) {
      if (mask & (1u << i)) idx.push_back(i);
    }
    Eigen::VectorXd z = Eigen::VectorXd::Zero(n);
    if (!idx.empty()) {
      Eigen::MatrixXd sub(idx.size(), idx.size());
      Eigen::VectorXd rhs(idx.size());
      for (size_t a = 0; a < idx.size(); ++a) {
        rhs[a] = -q[idx[a]];
        for (size_t b = 0; b < idx.size(); ++b) sub(a, b) = m(idx[a], idx[b]);
      }
      Eigen::FullPivLU<Eigen::MatrixXd> lu(sub);
      if (!lu.isInvertible()) continue;
      const Eigen::VectorXd zs = lu.solve(rhs);
      if (zs.minCoeff() < -1e-10) continue;
      for (size_t a = 0; a < idx.size(); ++a) z[idx[a]] = zs[a];
    }
    const Eigen::VectorXd w = m * z + q;
    if (w.minCoeff() < -1e-9) continue;
    *out = z;
    return true;
  }
  return false;
}

Eigen::MatrixXd random_pd(Rng& rng, int n) {
  Eigen::MatrixXd a(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) a(i, j) = rng.gaussian();
  }
  return a.transpose() * a + rng.uniform(1e-3, 1.0) * Eigen::MatrixXd::Identity(n, n);
}

}  // namespace

TEST_CASE("identity matrix with nonnegative q gives z = 0") {
  const int n = 4;
  LcpSolution sol = solve_lcp(Eigen::MatrixXd::Identity(n, n), Eigen::VectorXd::Ones(n));
  REQUIRE(sol.ok());
  CHECK(sol.z.norm() == doctest::Approx(0.0));
}

TEST_CASE("identity matrix closed form: z = max(0, -q)") {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 1 + static_cast<int>(rng.uniform_index(8));
    Eigen::VectorXd q(n);
    for (int i = 0; i < n; ++i) q[i] = rng.gaussian();
    LcpSolution sol = solve_lcp(Eigen::MatrixXd::Identity(n, n), q);
    REQUIRE(sol.ok());
    for (int i = 0; i < n; ++i) CHECK(sol.z[i] == doctest::Approx(std::max(0.0, -q[i])));
  }
}

TEST_CASE("random PSD instances match active-set enumeration") {
  Rng rng(31);
  for (int trial = 0; trial < 120; ++trial) {
    const int n = 2 + static_cast<int>(rng.uniform_index(7));
    const Eigen::MatrixXd m = random_pd(rng, n);
    Eigen::VectorXd q(n);
    for (int i = 0; i < n; ++i) q[i] = rng.gaussian();

    LcpSolution sol = solve_lcp(m, q);
    REQUIRE(sol.ok());
    CHECK(sol.min_z >= -1e-10);
    CHECK(sol.min_w >= -1e-10);
    CHECK(std::abs(sol.complementarity) <= 1e-10);

    Eigen::VectorXd z_ref;
    REQUIRE(enumerate_lcp(m, q, &z_ref));
    CHECK((sol.z - z_ref).lpNorm<Eigen::Infinity>() <= 1e-8);
  }
}

TEST_CASE("degenerate but solvable PSD instance") {
  // Rank-1 PSD block with duplicated rows; lexicographic ordering must not
  // cycle.
  Eigen::MatrixXd m(3, 3);
  m << 1, 1, 0,
       1, 1, 0,
       0, 0, 0;
  Eigen::VectorXd q(3);
  q << -1, -1, 1;
  LcpSolution sol = solve_lcp(m, q);
  REQUIRE(sol.ok());
  CHECK(sol.min_w >= -1e-10);
  CHECK(sol.min_z >= -1e-12);
  CHECK(std::abs(sol.complementarity) <= 1e-10);
}
