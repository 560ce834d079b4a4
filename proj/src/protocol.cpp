#include "fedpe/protocol.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fedpe/linalg.hpp"

namespace fedpe::protocol {

namespace {

// Unit feature direction with the sign fixed by the first nonzero
// coordinate; used when a zero observed reward leaves no estimate direction.
Eigen::VectorXd sign_fixed_direction(const Eigen::VectorXd& x) {
  Eigen::VectorXd e = x / x.norm();
  for (Eigen::Index k = 0; k < e.size(); ++k) {
    if (e(k) != 0.0) {
      if (e(k) < 0.0) e = -e;
      break;
    }
  }
  return e;
}

LocalEstimate make_estimate(const env::BanditInstance& env, int client, int arm,
                            double mean_reward, long long pulls) {
  const Eigen::VectorXd& x = env.feature(client, arm);
  const double nx = x.norm();
  LocalEstimate est;
  est.client = client;
  est.arm = arm;
  est.dir = x / nx;
  est.magnitude = mean_reward / nx;
  est.pulls = pulls;
  return est;
}

}  // namespace

PhaseSchedule phase_lengths(ScheduleKind kind, long long T, int K, long long c,
                            long long n) {
  if (T < 2 * static_cast<long long>(K) || K < 1) {
    throw InvalidConfigError("schedule requires T >= 2K and K >= 1");
  }
  PhaseSchedule sched;
  sched.kind = kind;
  switch (kind) {
    case ScheduleKind::uniform: {
      if (K < 2) throw InvalidConfigError("uniform schedule requires K >= 2 (f^1 = K-1)");
      const long long H = (T + 2 * K - 1) / (2 * K);  // min p with 2pK >= T
      sched.lengths.assign(static_cast<size_t>(H), K);
      sched.lengths[0] = K - 1;
      break;
    }
    case ScheduleKind::exponential: {
      if (c < 1 || n < 2) throw InvalidConfigError("exponential schedule requires c >= 1, n >= 2");
      long long used = K;  // initialization rounds
      long long f = c;
      while (used < T) {
        f *= n;  // f^p = c * n^p
        sched.lengths.push_back(f);
        used += f + K;
      }
      break;
    }
    case ScheduleKind::greedy: {
      if (static_cast<long long>(K) * K > T) {
        throw InvalidConfigError("greedy schedule requires K <= sqrt(T)");
      }
      std::vector<double> S_tilde{1.0};
      const double Td = static_cast<double>(T);
      int H = 0;
      while (true) {
        const double prev = S_tilde.back();
        const double next = prev - K + 2.0 * std::sqrt(Td * prev);
        S_tilde.push_back(next);
        ++H;
        if (next + static_cast<double>(H) * K >= Td) break;
        if (H > 64) throw InvalidConfigError("greedy schedule recursion failed to cover T");
      }
      std::vector<long long> S(static_cast<size_t>(H) + 1);
      S[0] = 1;
      for (int p = 1; p < H; ++p) S[p] = static_cast<long long>(std::ceil(S_tilde[p]));
      S[H] = T - static_cast<long long>(H) * K;
      sched.lengths.resize(static_cast<size_t>(H));
      for (int p = 1; p <= H; ++p) {
        sched.lengths[p - 1] = S[p] - S[p - 1];
        if (sched.lengths[p - 1] < 1) {
          throw InvalidConfigError("greedy schedule produced an empty phase; T too small for K");
        }
      }
      break;
    }
  }
  // the final phase may be truncated at T, but the schedule must reach it
  long long total = K;
  for (long long f : sched.lengths) total += f + K;
  if (total < T) throw InvalidConfigError("schedule does not cover the horizon");
  return sched;
}

double compute_alpha(int M, int K, int H, int d, double delta) {
  if (M < 1 || K < 1 || H < 1 || d < 1 || !(delta > 0.0) || !(delta < 1.0)) {
    throw std::invalid_argument("compute_alpha arguments out of range");
  }
  const double log_kh = std::log(static_cast<double>(K) * H / delta);
  double k = 1.0;
  for (int it = 0; it < 200; ++it) {
    const double next = std::max(1.0, 2.0 * log_kh / d + std::log(k) + 1.0);
    if (std::abs(next - k) <= 1e-10 * std::max(1.0, k)) {
      k = next;
      break;
    }
    k = next;
  }
  const double alpha_dim = std::sqrt(2.0 * log_kh + d * (std::log(k) + 1.0));
  const double alpha_cnt =
      std::sqrt(2.0 * std::log(2.0 * M * static_cast<double>(K) * H / delta));
  return std::min(alpha_dim, alpha_cnt);
}

std::optional<LocalEstimate> explore_and_estimate(const env::BanditInstance& env,
                                                  int client, int arm,
                                                  long long pulls,
                                                  std::mt19937_64& rng,
                                                  double* mean_out) {
  if (pulls <= 0) return std::nullopt;
  double sum = 0.0;
  for (long long t = 0; t < pulls; ++t) sum += env::sample_reward(env, client, arm, rng);
  const double mean = sum / static_cast<double>(pulls);
  if (mean_out) *mean_out = mean;
  return make_estimate(env, client, arm, mean, pulls);
}

ArmAggregate aggregate_arm(const std::vector<LocalEstimate>& uploads, int dim) {
  if (uploads.empty()) {
    throw ProtocolViolationError("no uploads for an arm still active at some client");
  }
  Eigen::MatrixXd U = Eigen::MatrixXd::Zero(dim, dim);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(dim);
  for (const auto& up : uploads) {
    if (up.pulls <= 0) throw ProtocolViolationError("upload with zero pulls");
    const double f = static_cast<double>(up.pulls);
    U.noalias() += f * (up.dir * up.dir.transpose());
    rhs.noalias() += f * up.magnitude * up.dir;
  }
  ArmAggregate out;
  out.V = linalg::pinv(U);
  out.theta_hat = out.V * rhs;
  return out;
}

ArmAggregate aggregate_shared(const std::vector<ArmAggregate>& per_arm,
                              const std::vector<LocalEstimate>& all_uploads,
                              int dim) {
  if (per_arm.empty()) throw ProtocolViolationError("no per-arm aggregates to pool");
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(dim, dim);
  for (const auto& agg : per_arm) sum += linalg::pinv(agg.V);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(dim);
  for (const auto& up : all_uploads) {
    rhs.noalias() += static_cast<double>(up.pulls) * up.magnitude * up.dir;
  }
  ArmAggregate out;
  out.V = linalg::pinv(sum);
  out.theta_hat = out.V * rhs;
  return out;
}

EliminationResult eliminate_by_interval(const std::vector<double>& rhat,
                                        const std::vector<double>& width) {
  if (rhat.empty() || rhat.size() != width.size()) {
    throw std::invalid_argument("elimination needs matching nonempty estimates");
  }
  EliminationResult res;
  res.best = 0;
  for (size_t k = 1; k < rhat.size(); ++k) {
    if (rhat[k] > rhat[res.best]) res.best = static_cast<int>(k);
  }
  const double bar = rhat[res.best] - width[res.best];
  for (size_t k = 0; k < rhat.size(); ++k) {
    if (rhat[k] + width[k] >= bar) res.kept.push_back(static_cast<int>(k));
  }
  return res;
}

EnhancedInterval enhanced_interval(const EnhancedStats& stats, double sum_f,
                                   int M, int K, int d, double delta) {
  EnhancedInterval out;
  out.rbar = stats.sum_rf / sum_f;
  const double sigma_bar2 =
      static_cast<double>(d) * K / static_cast<double>(M) + stats.sum_s2f2;
  const double sigma_bar = std::sqrt(sigma_bar2);
  const double m = static_cast<double>(M);
  const double alpha_bar =
      std::sqrt(std::log(m * m * m * K * sigma_bar2 / (d * delta * delta)));
  out.ubar = alpha_bar * sigma_bar / sum_f;
  return out;
}

namespace {

struct ServerState {
  // unit directions from the initialization uploads, client-major by arm
  std::vector<Eigen::VectorXd> dirs;  // M*K
  std::vector<ArmAggregate> per_arm;  // V_a^p, theta_a^p (disjoint)
  ArmAggregate pooled;                // V^p, theta^p (shared variant)
  const Eigen::VectorXd& dir(int i, int a, int K) const {
    return dirs[static_cast<size_t>(i) * K + a];
  }
};

}  // namespace

harness::Trace run_policy(const env::BanditInstance& env,
                          const AlgorithmConfig& config, uint64_t seed) {
  const int M = env.num_clients, K = env.num_arms, d = env.dim;
  const long long T = config.T;
  const bool shared = config.variant == Variant::shared_fed_pe;
  const bool enhanced = config.variant == Variant::enhanced_fed_pe;
  if (shared != env.shared) {
    throw InvalidConfigError("variant and instance parameter mode disagree");
  }
  if (!(config.delta > 0.0) || !(config.delta < 1.0)) {
    throw InvalidConfigError("delta must lie in (0, 1)");
  }
  const PhaseSchedule sched =
      phase_lengths(config.schedule, T, K, config.sched_c, config.sched_n);
  if (T < K + sched.lengths.front() + K) {
    throw InvalidConfigError("horizon too short for one full phase");
  }
  const int H = sched.phase_count();
  const double alpha = compute_alpha(M, K, H, d, config.delta);

  std::vector<std::mt19937_64> rng;
  rng.reserve(M);
  for (int i = 0; i < M; ++i) rng.push_back(env::substream(seed, i));

  harness::Trace trace;
  trace.seed = seed;
  std::vector<std::vector<int>> pull_log(M);
  for (auto& log : pull_log) log.reserve(static_cast<size_t>(T));

  ServerState server;
  server.dirs.resize(static_cast<size_t>(M) * K);
  server.per_arm.resize(K);

  // ---- initialization: one pull of every arm per client
  {
    std::vector<std::vector<LocalEstimate>> uploads(K);
    std::vector<LocalEstimate> all;
    for (int i = 0; i < M; ++i) {
      for (int a = 0; a < K; ++a) {
        const double y = env::sample_reward(env, i, a, rng[i]);
        pull_log[i].push_back(a);
        LocalEstimate est = make_estimate(env, i, a, y, 1);
        if (y == 0.0) {
          est.dir = sign_fixed_direction(env.feature(i, a));
          est.magnitude = 0.0;
        } else if (est.magnitude < 0.0) {
          // server-side normalization theta0/||theta0|| flips the sign
          est.dir = -est.dir;
          est.magnitude = -est.magnitude;
        }
        server.dirs[static_cast<size_t>(i) * K + a] = est.dir;
        uploads[a].push_back(est);
        all.push_back(est);
      }
    }
    for (int a = 0; a < K; ++a) server.per_arm[a] = aggregate_arm(uploads[a], d);
    if (shared) server.pooled = aggregate_shared(server.per_arm, all, d);
    trace.init_up = static_cast<long long>(M) * K * d;
  }
  long long rounds = K;
  long long pending_bcast =
      config.comm_mode == CommMode::naive
          ? (shared ? static_cast<long long>(M) * (d + d * d)
                    : static_cast<long long>(M) * K * (d + d * d))
          : 2LL * M * K;

  std::vector<std::vector<int>> active(M);
  for (int i = 0; i < M; ++i) {
    active[i].resize(K);
    for (int a = 0; a < K; ++a) active[i][a] = a;
  }
  std::vector<EnhancedStats> stats(enhanced ? static_cast<size_t>(M) * K : 0);
  double sum_f = 1.0;  // f^0 := 1

  for (int p = 1; p <= H && rounds < T; ++p) {
    const long long f_p = sched.lengths[p - 1];
    harness::PhaseRecord rec;
    rec.phase = p;
    rec.f_p = f_p;
    rec.down_broadcast = pending_bcast;
    const double f_prev =
        p == 1 ? 1.0 : static_cast<double>(sched.lengths[p - 2]);

    // ---- arm elimination (client side)
    std::vector<int> best_arm(M, -1);
    for (int i = 0; i < M; ++i) {
      const auto arms = active[i];
      std::vector<double> rhat(arms.size()), width(arms.size());
      for (size_t k = 0; k < arms.size(); ++k) {
        const int a = arms[k];
        const Eigen::VectorXd& x = env.feature(i, a);
        const ArmAggregate& agg = shared ? server.pooled : server.per_arm[a];
        const double r = x.dot(agg.theta_hat);
        const double sigma =
            std::sqrt(std::max(0.0, x.dot(agg.V * x))) / config.ell;
        if (enhanced) {
          auto& st = stats[static_cast<size_t>(i) * K + a];
          st.sum_rf += r * f_prev;
          st.sum_s2f2 += sigma * sigma * f_prev * f_prev;
          const auto ref = enhanced_interval(st, sum_f, M, K, d, config.delta);
          rhat[k] = ref.rbar;
          width[k] = ref.ubar;
        } else {
          rhat[k] = r;
          width[k] = alpha * sigma;
        }
      }
      const auto elim = eliminate_by_interval(rhat, width);
      best_arm[i] = arms[static_cast<size_t>(elim.best)];
      std::vector<int> next;
      next.reserve(elim.kept.size());
      for (int k : elim.kept) next.push_back(arms[static_cast<size_t>(k)]);
      for (int a : arms) {
        if (!std::binary_search(next.begin(), next.end(), a) &&
            env.gap(i, a) <= 1e-12) {
          trace.optimal_eliminated = true;
        }
      }
      active[i] = std::move(next);
      rec.up_set += static_cast<long long>(active[i].size());
      rec.active_total += static_cast<int>(active[i].size());
    }

    // ---- multi-client G-optimal design (server side)
    design::DesignProblem problem;
    problem.mode = shared ? design::Mode::shared : design::Mode::disjoint;
    problem.num_clients = M;
    problem.num_arms = K;
    problem.dim = d;
    problem.active_sets = active;
    for (int i = 0; i < M; ++i) {
      for (int a : active[i]) problem.directions.push_back(server.dir(i, a, K));
    }
    problem.finalize();
    const design::DesignSolution sol = design::solve_design(problem, config.solver);
    rec.sparsity = harness::sparsity_level(sol.pi, M);
    rec.sweeps = sol.sweeps;
    const auto counts = design::allocate_pulls(sol.pi, f_p);
    for (int i = 0; i < M; ++i) rec.down_alloc += static_cast<long long>(active[i].size());

    // ---- collaborative exploration, padded with the estimated best arm
    const long long phase_len = f_p + K;
    const long long actual = std::min(phase_len, T - rounds);
    const bool truncated = actual < phase_len;
    std::vector<std::vector<LocalEstimate>> uploads(K);
    std::vector<LocalEstimate> all_uploads;
    for (int i = 0; i < M; ++i) {
      long long done = 0;
      for (int e = problem.client_begin[i];
           e < problem.client_begin[i + 1] && done < actual; ++e) {
        const int a = problem.entry_arm[e];
        double sum = 0.0;
        long long got = 0;
        for (long long t = 0; t < counts[e] && done < actual; ++t) {
          sum += env::sample_reward(env, i, a, rng[i]);
          pull_log[i].push_back(a);
          ++done;
          ++got;
        }
        if (!truncated && got > 0) {
          LocalEstimate est = make_estimate(env, i, a, sum / got, got);
          uploads[a].push_back(est);
          all_uploads.push_back(est);
        }
      }
      while (done < actual) {
        (void)env::sample_reward(env, i, best_arm[i], rng[i]);
        pull_log[i].push_back(best_arm[i]);
        ++done;
      }
    }
    rounds += actual;
    rec.end_round = rounds;

    // ---- global aggregation; a truncated exploration is discarded
    if (!truncated) {
      long long estimates = 0;
      std::vector<ArmAggregate> pooled_inputs;
      for (int a = 0; a < K; ++a) {
        if (problem.arm_entries[a].empty()) continue;
        server.per_arm[a] = aggregate_arm(uploads[a], d);
        pooled_inputs.push_back(server.per_arm[a]);
        estimates += static_cast<long long>(uploads[a].size());
      }
      if (shared) server.pooled = aggregate_shared(pooled_inputs, all_uploads, d);
      rec.up_estimate =
          config.comm_mode == CommMode::naive ? estimates * d : estimates;
      long long arms_in_union = 0;
      for (int a = 0; a < K; ++a) {
        if (!problem.arm_entries[a].empty()) ++arms_in_union;
      }
      pending_bcast = config.comm_mode == CommMode::naive
                          ? (shared ? static_cast<long long>(M) * (d + d * d)
                                    : static_cast<long long>(M) * arms_in_union *
                                          (d + d * d))
                          : 2LL * rec.up_set;
      sum_f += static_cast<double>(f_p);
    }
    trace.phases.push_back(rec);
  }

  trace.cum_regret = harness::compute_regret(env, pull_log);
  return trace;
}

}  // namespace fedpe::protocol
