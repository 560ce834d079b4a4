#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>
#include <vector>

namespace fedpe::design {

// Thrown when a weight vector drops the rank of a design matrix below the
// rank of the underlying direction set.
struct RankViolationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Mode { disjoint, shared };

// A multi-client design instance: per-client active arm sets and one unit
// direction per (client, active arm) pair. Entries are stored client-major
// in active-set order; arm_entries[a] lists the entries covering arm a.
struct DesignProblem {
  Mode mode = Mode::disjoint;
  int num_clients = 0;
  int num_arms = 0;
  int dim = 0;
  std::vector<std::vector<int>> active_sets;    // arms per client, ascending
  std::vector<Eigen::VectorXd> directions;      // one per entry

  // derived by finalize():
  std::vector<int> entry_client;
  std::vector<int> entry_arm;
  std::vector<int> client_begin;                // size num_clients + 1
  std::vector<std::vector<int>> arm_entries;    // entry ids per arm (R_a)

  int num_entries() const { return static_cast<int>(directions.size()); }
  int entries_of(int client) const { return client_begin[client + 1] - client_begin[client]; }

  // Validates invariants (nonempty active sets, unit directions, coverage)
  // and builds the derived index structures. Throws std::invalid_argument.
  void finalize();
};

struct SolverConfig {
  double epsilon = 0.1;        // optimality slack for the G certificate
  int max_sweeps = 500;
  double bisection_tol = 1e-10;
  double rank_tol = -1.0;      // < 0: per-matrix default
  double weight_floor = 1e-9;  // keeps rank-critical weights interior
  bool track_path = false;     // record per-update objective (tests)
};

struct DesignSolution {
  std::vector<double> pi;         // aligned with problem entries
  std::vector<int> arm_rank;      // disjoint: d_a per arm (0 when uncovered)
  int total_rank = 0;             // sum of d_a, or D in shared mode
  double objective_G = 0.0;
  double objective_F = 0.0;
  int sweeps = 0;
  bool certified = false;
  // filled when SolverConfig::track_path is set:
  std::vector<double> ascent_F;               // F after every block update
  std::vector<Eigen::MatrixXd> final_Vtilde;  // incremental pinv per arm (disjoint)
};

// Rank of the direction set covering one arm (disjoint) at tolerance.
int arm_direction_rank(const DesignProblem& problem, int arm, double rank_tol = -1.0);

// G objective: sum over clients of the worst quadratic uncertainty among
// their active arms. Throws RankViolationError when some design matrix has
// rank below its direction set's rank.
double eval_G(const DesignProblem& problem, const std::vector<double>& pi,
              double rank_tol = -1.0);

// F objective: sum of log pseudo-determinants of the per-arm design
// matrices (disjoint) or of the single pooled matrix (shared).
double eval_F(const DesignProblem& problem, const std::vector<double>& pi,
              double rank_tol = -1.0);

// Coordinate gradient of F: entry (i,a) maps to e^T (design matrix)^+ e.
std::vector<double> gradient_F(const DesignProblem& problem,
                               const std::vector<double>& pi,
                               double rank_tol = -1.0);

// Maximizer of sum_a log(1 + w_a * g_a) subject to sum w = 0 and
// -pi_a <= w_a <= 1 - pi_a, by dual bisection. Arms whose gain satisfies
// g_a * pi_a ~= 1 (sole spanner of a rank dimension) are kept strictly
// above the lower boundary by the weight floor.
std::vector<double> solve_block_subproblem(const std::vector<double>& gains,
                                           const std::vector<double>& current,
                                           double tol,
                                           double weight_floor = 1e-9);

// Solves the design problem: block coordinate ascent with low-rank
// pseudo-inverse updates in disjoint mode, projected gradient ascent with
// Armijo backtracking and per-client simplex projection in shared mode.
DesignSolution solve_design(const DesignProblem& problem,
                            const SolverConfig& config = {});

// Pull counts ceil(pi * f_p); entries with pi at or below zero_tol get 0.
std::vector<long long> allocate_pulls(const std::vector<double>& pi,
                                      long long f_p, double zero_tol = 1e-9);

// Problem file I/O for the standalone `design` CLI subcommand.
DesignProblem load_problem(const std::string& path);
void save_problem(const std::string& path, const DesignProblem& problem);

}  // namespace fedpe::design
