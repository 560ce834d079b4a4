#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "fedpe/baselines.hpp"
#include "test_util.hpp"

using namespace fedpe;
using Eigen::VectorXd;

namespace {

env::BanditInstance two_arm_instance(double top, double bottom) {
  env::BanditInstance inst;
  inst.num_clients = 1;
  inst.num_arms = 2;
  inst.dim = 2;
  inst.noise_std = 1.0;
  inst.ell = 0.5;
  inst.L = 1.0;
  inst.s = 1.0;
  VectorXd t0(2), t1(2), x0(2), x1(2);
  t0 << top, 0.0;
  t1 << 0.0, bottom;
  x0 << 1.0, 0.0;
  x1 << 0.0, 1.0;
  inst.theta = {t0, t1};
  inst.features = {x0, x1};
  inst.derive_optimal_arms();
  inst.validate();
  return inst;
}

// unit-norm features make the exact pooled widths coincide with Fed-PE's
// normalized-direction widths at phase 1
env::BanditInstance unit_norm_instance(int M, int K, int d, std::mt19937_64& rng) {
  env::BanditInstance inst;
  inst.num_clients = M;
  inst.num_arms = K;
  inst.dim = d;
  inst.noise_std = 0.0;
  inst.ell = 1.0;
  inst.L = 1.0;
  inst.s = 1.0;
  for (int a = 0; a < K; ++a) {
    VectorXd t = VectorXd::Zero(d);
    t(a % d) = 1.0;
    inst.theta.push_back(t);
  }
  for (int i = 0; i < M; ++i) {
    for (int a = 0; a < K; ++a) {
      inst.features.push_back(testutil::random_unit(d, rng));
    }
  }
  inst.derive_optimal_arms();
  inst.validate();
  return inst;
}

}  // namespace

TEST_CASE("local UCB with one arm has zero regret and no communication") {
  env::BanditInstance inst;
  inst.num_clients = 2;
  inst.num_arms = 1;
  inst.dim = 1;
  inst.noise_std = 1.0;
  inst.ell = 0.5;
  inst.L = 1.0;
  inst.s = 1.0;
  VectorXd t(1), x(1);
  t << 1.0;
  x << 0.9;
  inst.theta = {t};
  inst.features = {x, x};
  inst.derive_optimal_arms();
  const auto tr = baselines::local_ucb_run(inst, 500, 7);
  CHECK(tr.cum_regret.size() == 500);
  CHECK(tr.final_regret() == 0.0);
  CHECK(harness::comm_cost(tr) == 0);
  CHECK(tr.phases.empty());  // phase-free by construction
}

TEST_CASE("local UCB is deterministic per seed") {
  const auto inst = two_arm_instance(1.0, 0.5);
  const auto a = baselines::local_ucb_run(inst, 1000, 3);
  const auto b = baselines::local_ucb_run(inst, 1000, 3);
  const auto c = baselines::local_ucb_run(inst, 1000, 4);
  CHECK(a.cum_regret == b.cum_regret);
  CHECK(a.cum_regret != c.cum_regret);
}

TEST_CASE("local UCB logarithmic suboptimal pulls (pilot-calibrated bound)") {
  // gap 0.5, noise 1, T = 2^14; a 20-seed pilot measured ~72 mean
  // suboptimal pulls, so 200 leaves a 2.5x margin
  const auto inst = two_arm_instance(1.0, 0.5);
  double pulls = 0.0;
  for (uint64_t seed = 1; seed <= 20; ++seed) {
    const auto tr = baselines::local_ucb_run(inst, 1LL << 14, seed);
    pulls += tr.final_regret() / 0.5;
  }
  CHECK(pulls / 20.0 <= 200.0);
}

TEST_CASE("collaborative matches Fed-PE eliminations in a noiseless phase 1") {
  std::mt19937_64 rng(424242);
  const auto inst = unit_norm_instance(4, 5, 3, rng);
  protocol::AlgorithmConfig cfg;
  cfg.T = 400;
  cfg.ell = inst.ell;
  const auto fed = protocol::run_policy(inst, cfg, 17);
  const auto col = baselines::collaborative_run(inst, cfg, 17);
  REQUIRE(!fed.phases.empty());
  REQUIRE(!col.phases.empty());
  // identical information content under zero noise: same phase-1 survivors
  CHECK(col.phases[0].active_total == fed.phases[0].active_total);
  CHECK(col.phases[0].up_set == fed.phases[0].up_set);
}

TEST_CASE("collaborative keeps the protocol invariants") {
  std::mt19937_64 rng(99);
  const auto inst = env::synth_instance(4, 5, 3, 0.2, 0.4, 0.5, 1.0, rng);
  protocol::AlgorithmConfig cfg;
  cfg.T = 600;
  cfg.ell = inst.ell;
  const auto tr = baselines::collaborative_run(inst, cfg, 5);
  CHECK(tr.cum_regret.size() == 600);
  for (size_t p = 1; p < tr.phases.size(); ++p) {
    CHECK(tr.phases[p].active_total <= tr.phases[p - 1].active_total);
  }
  long long rounds = inst.num_arms;
  for (const auto& rec : tr.phases) {
    const long long expect =
        std::min<long long>(rec.f_p + inst.num_arms, cfg.T - rounds);
    CHECK(rec.end_round - rounds == expect);
    rounds = rec.end_round;
  }
  for (size_t t = 1; t < tr.cum_regret.size(); ++t) {
    CHECK(tr.cum_regret[t] >= tr.cum_regret[t - 1]);
  }
}

TEST_CASE("collaborative communicates more scalars than naive Fed-PE") {
  std::mt19937_64 rng(2001);
  const auto inst = env::synth_instance(4, 4, 3, 0.2, 0.4, 0.5, 1.0, rng);
  protocol::AlgorithmConfig cfg;
  cfg.T = 800;
  cfg.ell = inst.ell;
  cfg.sched_c = 4;  // keeps f^p >= d from the first phase
  for (uint64_t seed = 1; seed <= 3; ++seed) {
    const auto fed = protocol::run_policy(inst, cfg, seed);
    const auto col = baselines::collaborative_run(inst, cfg, seed);
    CHECK(harness::comm_cost(col) > harness::comm_cost(fed));
  }
}
