#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <vector>

#include "fedpe/design.hpp"
#include "fedpe/env.hpp"
#include "fedpe/trace.hpp"

namespace fedpe::protocol {

enum class Variant { fed_pe, enhanced_fed_pe, shared_fed_pe };
enum class CommMode { naive, reduced };
enum class ScheduleKind { uniform, exponential, greedy };

struct InvalidConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ProtocolViolationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct PhaseSchedule {
  ScheduleKind kind = ScheduleKind::exponential;
  std::vector<long long> lengths;  // f^1 .. f^H
  int phase_count() const { return static_cast<int>(lengths.size()); }
};

// Phase-length sequences. uniform: f^1 = K-1 then K, H = min{p : 2pK >= T}.
// exponential: f^p = c*n^p, H minimal so the horizon is exhausted.
// greedy: doubling-exponent recursion from Enhanced Fed-PE's analysis
// (requires K <= sqrt(T)). Throws InvalidConfigError when infeasible.
PhaseSchedule phase_lengths(ScheduleKind kind, long long T, int K,
                            long long c = 1, long long n = 2);

// Confidence-width constant: min of the dimension-dependent and
// client-count-dependent branches; the k in the first branch is the
// smallest k >= 1 with k*d >= 2*log(K*H/delta) + d*log(k*e).
double compute_alpha(int M, int K, int H, int d, double delta);

struct AlgorithmConfig {
  Variant variant = Variant::fed_pe;
  long long T = 0;
  double delta = 0.1;
  ScheduleKind schedule = ScheduleKind::exponential;
  long long sched_c = 1;
  long long sched_n = 2;
  double ell = 0.5;  // lower feature-norm bound used in confidence widths
  CommMode comm_mode = CommMode::naive;
  design::SolverConfig solver{};
};

// One local least-squares estimate: theta_hat = magnitude * dir, where dir
// is the unit direction of the client's feature (sign may be flipped; all
// aggregation math is sign-invariant in dir).
struct LocalEstimate {
  int client = 0;
  int arm = 0;
  Eigen::VectorXd dir;
  double magnitude = 0.0;
  long long pulls = 0;
  Eigen::VectorXd theta() const { return magnitude * dir; }
};

// Pulls an arm `pulls` times and forms (mean reward) * x / ||x||^2.
// Zero pulls produce no estimate. mean_out, when given, receives the
// observed mean reward.
std::optional<LocalEstimate> explore_and_estimate(const env::BanditInstance& env,
                                                  int client, int arm,
                                                  long long pulls,
                                                  std::mt19937_64& rng,
                                                  double* mean_out = nullptr);

struct ArmAggregate {
  Eigen::MatrixXd V;          // potential matrix (pseudo-inverse form)
  Eigen::VectorXd theta_hat;  // global estimate
};

// Global aggregation for one arm: V = (sum f * dir dir^T)^+,
// theta_hat = V * sum f * theta. Throws ProtocolViolationError when the
// upload list is empty.
ArmAggregate aggregate_arm(const std::vector<LocalEstimate>& uploads, int dim);

// Shared-parameter pooling: V = (sum_a V_a^+)^+ over the per-arm
// aggregates, theta_hat = V * sum of all weighted uploads.
ArmAggregate aggregate_shared(const std::vector<ArmAggregate>& per_arm,
                              const std::vector<LocalEstimate>& all_uploads,
                              int dim);

// Interval elimination rule: keeps index k iff
// rhat[k] + width[k] >= rhat[best] - width[best], best = argmax rhat
// (lowest index on ties). The best index always survives.
struct EliminationResult {
  std::vector<int> kept;  // indices into the input arrays, ascending
  int best = 0;
};
EliminationResult eliminate_by_interval(const std::vector<double>& rhat,
                                        const std::vector<double>& width);

// Enhanced Fed-PE running aggregates for one (client, arm).
struct EnhancedStats {
  double sum_rf = 0.0;    // sum_q rhat^q * f^{q-1}
  double sum_s2f2 = 0.0;  // sum_q (sigma^q)^2 * (f^{q-1})^2
};
struct EnhancedInterval {
  double rbar = 0.0;
  double ubar = 0.0;
};
// Refined estimate and width from the running aggregates; sum_f is
// sum_{q<=p} f^{q-1} with f^0 = 1.
EnhancedInterval enhanced_interval(const EnhancedStats& stats, double sum_f,
                                   int M, int K, int d, double delta);

// Runs one full policy (initialization plus phases, truncated at T) and
// returns the trace. Deterministic in (env, config, seed).
harness::Trace run_policy(const env::BanditInstance& env,
                          const AlgorithmConfig& config, uint64_t seed);

}  // namespace fedpe::protocol
