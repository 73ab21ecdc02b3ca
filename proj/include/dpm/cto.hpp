#pragma once
/// Contact-trajectory optimization: the label-generating expert.
///
/// Finds globally optimal finger facet assignments and contact forces for a
/// desired object trajectory by branch-and-bound over per-(finger, timestep)
/// mode binaries, with convex-hull linking of facet membership and force
/// cones and an elastic (slack-penalized) relaxation at every node.
///
/// Mode transition rule: a finger may switch facets only through a
/// no-contact timestep; while on a facet it may slide along it. Contact
/// moment arms are evaluated at the facet midpoint per timestep, the same
/// convention extract_parameters stores, so fixed-mode QPs here and the
/// derendered-parameter QPs in the inverse-dynamics layer agree exactly.

#include <cstdint>
#include <vector>

#include "dpm/inverse_dynamics.hpp"
#include "dpm/params.hpp"

namespace dpm {

struct CtoTask {
  Polygon object;
  RigidBody body;
  std::vector<HalfPlane> environment;
  std::vector<Pose2> trajectory;
  double dt = 0.1;
  double mu_finger = 0.5;
  double mu_env = 0.5;
  /// Polygon vertices within this distance of a plane count as resting on it.
  double env_contact_tol = 1e-6;
};

struct ModeSequence {
  ModeMatrix assignment;  // [c][t], kNoContact or a facet index

  int n_fingers() const { return static_cast<int>(assignment.size()); }
  int t_count() const { return assignment.empty() ? 0 : static_cast<int>(assignment[0].size()); }
};

/// True when every per-finger sequence obeys the facet-switch rule.
bool modes_admissible(const ModeSequence& modes, int n_facets);

enum class CtoStatus { kOptimal, kInfeasible, kBudgetExhausted };

struct CtoSolution {
  RobotActions actions;
  ModeSequence modes;
  double objective = 0.0;
  CtoStatus status = CtoStatus::kInfeasible;
  int nodes_explored = 0;
  int leaves_evaluated = 0;
  double solve_seconds = 0.0;
  /// Relaxation bounds never decreased from parent to child during the
  /// search (up to solver tolerance). Diagnostic for the pruning logic.
  bool bounds_monotone = true;

  bool ok() const { return status == CtoStatus::kOptimal; }
};

struct ModeQpResult {
  QpProblem problem;       // the hard (slack-free) fixed-mode program
  QpLayerSolution solution;
  bool feasible = false;
  double objective = 0.0;  // polished hard objective when feasible
};

/// Fixed-mode convex program, shared verbatim with the inverse-dynamics
/// builder. Solved elastically first to classify feasibility, then polished
/// with the dynamics as hard equalities. Infeasible modes are a status.
ModeQpResult qp_for_modes(const CtoTask& task, const ModeSequence& modes, const QpWeights& w,
                          const IdQpOptions& options = {});

struct CtoSettings {
  QpWeights weights;
  IdQpOptions options;      // options.with_slack is managed internally
  int max_nodes = 500000;
  double feas_tol = 1e-7;   // elastic slack below this means feasible
  /// Relaxation solves run at this tolerance; bounds are corrected by the
  /// remaining duality gap so pruning stays safe.
  double relax_tol = 1e-7;
};

/// Global optimum over admissible mode sequences via branch-and-bound.
/// Deterministic: best-bound node selection with depth as the tie-breaker,
/// branching on the most fractional binary.
CtoSolution solve_cto_bnb(const CtoTask& task, int n_fingers, const CtoSettings& settings = {});

/// Exhaustive oracle: evaluates every admissible sequence (finger-swapped
/// duplicates skipped, their objectives are equal by symmetry). Throws if
/// the sequence count exceeds max_space.
CtoSolution enumerate_modes_oracle(const CtoTask& task, int n_fingers,
                                   const CtoSettings& settings = {},
                                   std::uint64_t max_space = 2000000);

/// Number of admissible joint sequences (after symmetry reduction).
std::uint64_t count_admissible_sequences(int n_facets, int t_count, int n_fingers);

/// Environment contact vertices (world frame) for a pose, first plane only.
std::vector<Vec2> env_contact_points(const CtoTask& task, const Pose2& pose);

}  // namespace dpm
