#include "fedpe/trace.hpp"

#include <stdexcept>

namespace fedpe::harness {

std::vector<double> compute_regret(const env::BanditInstance& inst,
                                   const std::vector<std::vector<int>>& pull_log) {
  if (pull_log.size() != static_cast<size_t>(inst.num_clients)) {
    throw std::invalid_argument("pull log must cover every client");
  }
  const size_t T = pull_log.empty() ? 0 : pull_log.front().size();
  for (const auto& log : pull_log) {
    if (log.size() != T) throw std::invalid_argument("pull log rounds differ across clients");
  }
  // gap table avoids recomputing dot products per round
  std::vector<double> gaps(static_cast<size_t>(inst.num_clients) * inst.num_arms);
  for (int i = 0; i < inst.num_clients; ++i) {
    for (int a = 0; a < inst.num_arms; ++a) {
      gaps[static_cast<size_t>(i) * inst.num_arms + a] = inst.gap(i, a);
    }
  }
  std::vector<double> cum(T, 0.0);
  double running = 0.0;
  for (size_t t = 0; t < T; ++t) {
    for (int i = 0; i < inst.num_clients; ++i) {
      const int a = pull_log[static_cast<size_t>(i)][t];
      if (a < 0 || a >= inst.num_arms) {
        throw std::invalid_argument("pull log contains an out-of-range arm index");
      }
      running += gaps[static_cast<size_t>(i) * inst.num_arms + a];
    }
    cum[t] = running;
  }
  return cum;
}

long long comm_cost(const Trace& trace) {
  long long total = trace.init_up + trace.init_down;
  for (const auto& rec : trace.phases) total += rec.up() + rec.down();
  return total;
}

double sparsity_level(const std::vector<double>& pi, int num_clients,
                      double threshold) {
  if (num_clients <= 0) throw std::invalid_argument("need a positive client count");
  long long nnz = 0;
  for (double w : pi) {
    if (w > threshold) ++nnz;
  }
  return static_cast<double>(nnz) / static_cast<double>(num_clients);
}

}  // namespace fedpe::harness
