#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedpe/env.hpp"

namespace fedpe::harness {

// Communication is itemized per direction and message kind so tests can
// check each accounting rule separately; scalars and integers both count.
struct PhaseRecord {
  int phase = 0;
  long long f_p = 0;
  long long up_estimate = 0;    // local-estimate scalars uploaded
  long long up_set = 0;         // active-set integers uploaded
  long long down_broadcast = 0; // (theta_hat, V) scalars downloaded
  long long down_alloc = 0;     // allocation integers downloaded
  double sparsity = 0.0;        // nonzero design weights / M
  int sweeps = 0;               // design solver sweeps
  int active_total = 0;         // sum_i |A_i^p|
  long long end_round = 0;      // per-client rounds consumed by the phase end
  long long up() const { return up_estimate + up_set; }
  long long down() const { return down_broadcast + down_alloc; }
};

struct Trace {
  std::string algo;
  uint64_t seed = 0;
  std::vector<double> cum_regret;  // length T (pseudo-regret, all clients)
  std::vector<PhaseRecord> phases;
  long long init_up = 0;    // initialization uploads (scalars)
  long long init_down = 0;  // initial broadcast (scalars)
  bool optimal_eliminated = false;  // any client dropped a true optimal arm
  double final_regret() const { return cum_regret.empty() ? 0.0 : cum_regret.back(); }
};

// Pseudo-regret series from a pull log: pull_log[i][t] is the arm client i
// pulled in round t; R(t) sums true-mean gaps over clients and rounds <= t.
// Throws std::invalid_argument on an out-of-range arm or ragged log.
std::vector<double> compute_regret(const env::BanditInstance& instance,
                                   const std::vector<std::vector<int>>& pull_log);

// Total scalars communicated over the whole run.
long long comm_cost(const Trace& trace);

// Count of design weights above threshold, divided by the client count.
double sparsity_level(const std::vector<double>& pi, int num_clients,
                      double threshold = 1e-9);

}  // namespace fedpe::harness
