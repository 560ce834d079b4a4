#include "fedpe/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fedpe/design.hpp"
#include "fedpe/linalg.hpp"

namespace fedpe::baselines {

harness::Trace local_ucb_run(const env::BanditInstance& env, long long T,
                             uint64_t seed) {
  const int M = env.num_clients, K = env.num_arms;
  harness::Trace trace;
  trace.seed = seed;
  std::vector<std::vector<int>> pull_log(M);
  for (int i = 0; i < M; ++i) {
    auto rng = env::substream(seed, static_cast<uint64_t>(i));
    std::vector<long long> n(K, 0);
    std::vector<double> sum(K, 0.0);
    pull_log[i].reserve(static_cast<size_t>(T));
    for (long long t = 1; t <= T; ++t) {
      int arm;
      if (t <= K) {
        arm = static_cast<int>(t - 1);
      } else {
        arm = 0;
        double best = -std::numeric_limits<double>::infinity();
        const double logt = std::log(static_cast<double>(t));
        for (int a = 0; a < K; ++a) {
          const double idx =
              sum[a] / n[a] + std::sqrt(2.0 * logt / static_cast<double>(n[a]));
          if (idx > best) {
            best = idx;
            arm = a;
          }
        }
      }
      sum[arm] += env::sample_reward(env, i, arm, rng);
      ++n[arm];
      pull_log[i].push_back(arm);
    }
  }
  trace.cum_regret = harness::compute_regret(env, pull_log);
  return trace;
}

harness::Trace collaborative_run(const env::BanditInstance& env,
                                 const protocol::AlgorithmConfig& config,
                                 uint64_t seed) {
  using protocol::CommMode;
  const int M = env.num_clients, K = env.num_arms, d = env.dim;
  const long long T = config.T;
  if (env.shared) {
    throw protocol::InvalidConfigError("collaborative baseline runs on disjoint instances");
  }
  const auto sched = protocol::phase_lengths(config.schedule, T, K, config.sched_c,
                                             config.sched_n);
  const int H = sched.phase_count();
  const double alpha = protocol::compute_alpha(M, K, H, d, config.delta);

  std::vector<std::mt19937_64> rng;
  for (int i = 0; i < M; ++i) rng.push_back(env::substream(seed, i));

  harness::Trace trace;
  trace.seed = seed;
  std::vector<std::vector<int>> pull_log(M);
  for (auto& log : pull_log) log.reserve(static_cast<size_t>(T));

  // exact pooled statistics per arm over the whole history
  std::vector<Eigen::MatrixXd> gram(K, Eigen::MatrixXd::Zero(d, d));
  std::vector<Eigen::VectorXd> rhs(K, Eigen::VectorXd::Zero(d));
  std::vector<Eigen::MatrixXd> gram_pinv(K);
  std::vector<Eigen::VectorXd> theta_hat(K);

  const auto refresh = [&](int a) {
    gram_pinv[a] = linalg::pinv(gram[a]);
    theta_hat[a] = gram_pinv[a] * rhs[a];
  };

  for (int i = 0; i < M; ++i) {
    for (int a = 0; a < K; ++a) {
      const double y = env::sample_reward(env, i, a, rng[i]);
      pull_log[i].push_back(a);
      const Eigen::VectorXd& x = env.feature(i, a);
      gram[a].noalias() += x * x.transpose();
      rhs[a].noalias() += y * x;
    }
  }
  for (int a = 0; a < K; ++a) refresh(a);
  long long rounds = K;
  // features shipped once, then reward + arm id per initialization pull
  trace.init_up = static_cast<long long>(d) * M * K + 2LL * M * K;
  long long pending_bcast = static_cast<long long>(M) * K * (d + d * d);

  std::vector<std::vector<int>> active(M);
  for (int i = 0; i < M; ++i) {
    active[i].resize(K);
    for (int a = 0; a < K; ++a) active[i][a] = a;
  }

  for (int p = 1; p <= H && rounds < T; ++p) {
    const long long f_p = sched.lengths[p - 1];
    harness::PhaseRecord rec;
    rec.phase = p;
    rec.f_p = f_p;
    rec.down_broadcast = pending_bcast;

    std::vector<int> best_arm(M, -1);
    for (int i = 0; i < M; ++i) {
      const auto arms = active[i];
      std::vector<double> rhat(arms.size()), width(arms.size());
      for (size_t k = 0; k < arms.size(); ++k) {
        const Eigen::VectorXd& x = env.feature(i, arms[k]);
        rhat[k] = x.dot(theta_hat[arms[k]]);
        width[k] =
            alpha * std::sqrt(std::max(0.0, x.dot(gram_pinv[arms[k]] * x)));
      }
      const auto elim = protocol::eliminate_by_interval(rhat, width);
      best_arm[i] = arms[static_cast<size_t>(elim.best)];
      std::vector<int> next;
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

    // same multi-client G-optimal exploration design, on exact directions
    design::DesignProblem problem;
    problem.mode = design::Mode::disjoint;
    problem.num_clients = M;
    problem.num_arms = K;
    problem.dim = d;
    problem.active_sets = active;
    for (int i = 0; i < M; ++i) {
      for (int a : active[i]) {
        const Eigen::VectorXd& x = env.feature(i, a);
        problem.directions.push_back(x / x.norm());
      }
    }
    problem.finalize();
    const auto sol = design::solve_design(problem, config.solver);
    rec.sparsity = harness::sparsity_level(sol.pi, M);
    rec.sweeps = sol.sweeps;
    const auto counts = design::allocate_pulls(sol.pi, f_p);
    for (int i = 0; i < M; ++i) rec.down_alloc += static_cast<long long>(active[i].size());

    const long long phase_len = f_p + K;
    const long long actual = std::min(phase_len, T - rounds);
    const bool truncated = actual < phase_len;
    long long data_pulls = 0;
    for (int i = 0; i < M; ++i) {
      long long done = 0;
      for (int e = problem.client_begin[i];
           e < problem.client_begin[i + 1] && done < actual; ++e) {
        const int a = problem.entry_arm[e];
        const Eigen::VectorXd& x = env.feature(i, a);
        for (long long t = 0; t < counts[e] && done < actual; ++t) {
          const double y = env::sample_reward(env, i, a, rng[i]);
          pull_log[i].push_back(a);
          ++done;
          if (!truncated) {
            gram[a].noalias() += x * x.transpose();
            rhs[a].noalias() += y * x;
            ++data_pulls;
          }
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

    if (!truncated) {
      for (int a = 0; a < K; ++a) {
        if (!problem.arm_entries[a].empty()) refresh(a);
      }
      rec.up_estimate = 2 * data_pulls;  // reward + arm id per pull
      long long arms_in_union = 0;
      for (int a = 0; a < K; ++a) {
        if (!problem.arm_entries[a].empty()) ++arms_in_union;
      }
      pending_bcast = static_cast<long long>(M) * arms_in_union * (d + d * d);
    }
    trace.phases.push_back(rec);
  }

  trace.cum_regret = harness::compute_regret(env, pull_log);
  return trace;
}

}  // namespace fedpe::baselines
