#include "dpm/lcp.hpp"

#include <cmath>
#include <stdexcept>

namespace dpm {

namespace {

constexpr double kPivotTol = 1e-11;

// Lexicographic ratio test over [rhs | B^-1] rows. Returns the row index of
// the lexicographic minimum among candidate rows with positive pivot entries.
int lexico_min_row(const Eigen::MatrixXd& tableau, const std::vector<int>& candidates,
                   int entering_col, int n) {
  int best = candidates[0];
  for (size_t k = 1; k < candidates.size(); ++k) {
    const int row = candidates[k];
    // Compare (row / pivot_row) against (best / pivot_best) over [rhs, B^-1].
    const double pr = tableau(row, entering_col);
    const double pb = tableau(best, entering_col);
    for (int col = 0; col <= n; ++col) {  // col 0 = rhs, cols 1..n = w-part
      const double diff = tableau(row, col) * pb - tableau(best, col) * pr;
      if (diff < -1e-14) {
        best = row;
        break;
      }
      if (diff > 1e-14) break;
    }
  }
  return best;
}

}  // namespace

LcpSolution solve_lcp(const Eigen::MatrixXd& m, const Eigen::VectorXd& q) {
  const int n = static_cast<int>(q.size());
  if (m.rows() != n || m.cols() != n) throw std::invalid_argument("solve_lcp: shape mismatch");

  LcpSolution sol;
  sol.z = Eigen::VectorXd::Zero(n);

  auto finish = [&](LcpStatus status) {
    sol.status = status;
    sol.w = m * sol.z + q;
    sol.complementarity = sol.z.dot(sol.w);
    sol.min_z = n > 0 ? sol.z.minCoeff() : 0.0;
    sol.min_w = n > 0 ? sol.w.minCoeff() : 0.0;
    return sol;
  };

  if (n == 0 || q.minCoeff() >= 0.0) return finish(LcpStatus::kSolved);

  // Tableau columns: [rhs | w_0..w_{n-1} | z_0..z_{n-1} | z0].
  // Variable ids: w_i = i, z_i = n + i, z0 = 2n.
  const int cols = 2 * n + 2;
  const int rhs = 0;
  const int z0_col = 2 * n + 1;
  Eigen::MatrixXd tableau(n, cols);
  tableau.col(rhs) = q;
  tableau.block(0, 1, n, n) = Eigen::MatrixXd::Identity(n, n);
  tableau.block(0, n + 1, n, n) = -m;
  tableau.col(z0_col) = -Eigen::VectorXd::Ones(n);

  std::vector<int> basis(n);
  for (int i = 0; i < n; ++i) basis[i] = i;

  auto pivot = [&](int row, int col) {
    tableau.row(row) /= tableau(row, col);
    for (int i = 0; i < n; ++i) {
      if (i == row) continue;
      const double factor = tableau(i, col);
      if (factor != 0.0) tableau.row(i) -= factor * tableau.row(row);
    }
  };

  // Drive z0 in: the most negative rhs row leaves (lexicographic on ties).
  int entering = z0_col;
  {
    std::vector<int> cand;
    double min_q = 0.0;
    for (int i = 0; i < n; ++i) min_q = std::min(min_q, tableau(i, rhs));
    for (int i = 0; i < n; ++i) {
      if (tableau(i, rhs) <= min_q + 1e-14) cand.push_back(i);
    }
    const int row = lexico_min_row(tableau, cand, z0_col, n);
    pivot(row, z0_col);
    const int leaving_var = basis[row];
    basis[row] = 2 * n;  // z0 now basic
    entering = leaving_var < n ? n + leaving_var : leaving_var - n;
  }

  const int max_iter = 200 * n + 100;
  for (int iter = 1; iter <= max_iter; ++iter) {
    sol.iterations = iter;
    // w_i lives at column i+1, z_i at column n+i+1, z0 at z0_col.
    const int e_col = entering == 2 * n ? z0_col : entering + 1;
    // Ratio test on the entering column.
    std::vector<int> cand;
    double best_ratio = std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i) {
      if (tableau(i, e_col) > kPivotTol) {
        const double ratio = tableau(i, rhs) / tableau(i, e_col);
        if (ratio < best_ratio - 1e-12) {
          best_ratio = ratio;
          cand.clear();
          cand.push_back(i);
        } else if (ratio <= best_ratio + 1e-12) {
          cand.push_back(i);
        }
      }
    }
    if (cand.empty()) return finish(LcpStatus::kRayTermination);

    // z0's row wins outright if it ties: dropping z0 ends the run.
    int row = -1;
    for (int i : cand) {
      if (basis[i] == 2 * n) {
        row = i;
        break;
      }
    }
    if (row < 0) row = lexico_min_row(tableau, cand, e_col, n);

    pivot(row, e_col);
    const int leaving_var = basis[row];
    basis[row] = entering;

    if (leaving_var == 2 * n) {  // z0 left: complementary solution found
      for (int i = 0; i < n; ++i) {
        if (basis[i] >= n && basis[i] < 2 * n) sol.z[basis[i] - n] = tableau(i, rhs);
      }
      return finish(LcpStatus::kSolved);
    }
    entering = leaving_var < n ? n + leaving_var : leaving_var - n;
  }
  return finish(LcpStatus::kMaxIterations);
}

}  // namespace dpm
