#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace fedpe::env {

// A federated linear bandit instance: M clients, K arms, feature vectors
// x_{i,a} and per-arm parameters (or one shared parameter). Immutable after
// construction; all randomness comes through caller-supplied streams.
struct BanditInstance {
  int num_clients = 0;
  int num_arms = 0;
  int dim = 0;
  bool shared = false;
  double noise_std = 1.0;
  double ell = 0.5;   // lower feature-norm bound
  double L = 1.0;     // upper feature-norm bound
  double s = 1.0;     // parameter-norm bound
  std::vector<Eigen::VectorXd> theta;     // K entries, or 1 when shared
  std::vector<Eigen::VectorXd> features;  // M*K entries, client-major then arm
  std::vector<int> optimal_arms;          // best arm per client, lowest index on ties

  const Eigen::VectorXd& feature(int client, int arm) const {
    return features[static_cast<size_t>(client) * num_arms + arm];
  }
  const Eigen::VectorXd& parameter(int arm) const { return theta[shared ? 0 : arm]; }
  double mean_reward(int client, int arm) const {
    return feature(client, arm).dot(parameter(arm));
  }
  double gap(int client, int arm) const {
    return mean_reward(client, optimal_arms[client]) - mean_reward(client, arm);
  }

  // Recomputes optimal_arms from features and parameters.
  void derive_optimal_arms();
  // Checks every invariant; throws std::runtime_error naming the first
  // offending field. Warns on stderr when noise_std exceeds the
  // 1-subgaussian contract.
  void validate() const;
};

struct GenerationFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Synthetic instance with suboptimality gaps in [gap_min, gap_max] for every
// client, feature norms in [ell, L], and unit-norm parameters (canonical
// basis, cycling, when d <= K; random unit vectors otherwise).
BanditInstance synth_instance(int M, int K, int d, double gap_min, double gap_max,
                              double ell, double L, std::mt19937_64& rng);

// Instance file ingestion/emission (plain-text format, see README).
BanditInstance load_instance(const std::string& path);
void save_instance(const std::string& path, const BanditInstance& instance);

// One reward draw: x_{i,a}^T theta_a + Normal(0, noise_std^2).
double sample_reward(const BanditInstance& instance, int client, int arm,
                     std::mt19937_64& rng);

// Deterministic per-entity stream derived from (seed, stream_id).
std::mt19937_64 substream(uint64_t seed, uint64_t stream_id);

}  // namespace fedpe::env
