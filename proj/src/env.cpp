#include "fedpe/env.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fedpe::env {

namespace {

uint64_t splitmix64(uint64_t& state) {
  state += 0x9E3779B97f4A7C15ULL;
  uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

Eigen::VectorXd random_unit(int d, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::VectorXd v(d);
  double nrm = 0.0;
  do {
    for (int k = 0; k < d; ++k) v(k) = gauss(rng);
    nrm = v.norm();
  } while (nrm < 1e-12);
  return v / nrm;
}

}  // namespace

std::mt19937_64 substream(uint64_t seed, uint64_t stream_id) {
  uint64_t state = seed ^ (0xA0761D6478BD642FULL * (stream_id + 1));
  const uint64_t a = splitmix64(state);
  (void)splitmix64(state);
  return std::mt19937_64(a ^ splitmix64(state));
}

void BanditInstance::derive_optimal_arms() {
  optimal_arms.assign(num_clients, 0);
  for (int i = 0; i < num_clients; ++i) {
    double best = mean_reward(i, 0);
    for (int a = 1; a < num_arms; ++a) {
      const double r = mean_reward(i, a);
      if (r > best) {
        best = r;
        optimal_arms[i] = a;
      }
    }
  }
}

void BanditInstance::validate() const {
  if (num_clients <= 0) throw std::runtime_error("instance field M must be positive");
  if (num_arms <= 0) throw std::runtime_error("instance field K must be positive");
  if (dim <= 0) throw std::runtime_error("instance field d must be positive");
  if (noise_std < 0) throw std::runtime_error("instance field noise_std must be nonnegative");
  if (!(ell > 0) || ell > L) throw std::runtime_error("instance fields ell, L must satisfy 0 < ell <= L");
  const size_t want_theta = shared ? 1 : static_cast<size_t>(num_arms);
  if (theta.size() != want_theta) throw std::runtime_error("instance field theta has wrong row count");
  for (const auto& t : theta) {
    if (t.size() != dim) throw std::runtime_error("instance field theta has wrong dimension");
    if (t.norm() > s + 1e-9) throw std::runtime_error("instance field theta violates norm bound s");
  }
  if (features.size() != static_cast<size_t>(num_clients) * num_arms) {
    throw std::runtime_error("instance field features has wrong row count");
  }
  for (const auto& x : features) {
    if (x.size() != dim) throw std::runtime_error("instance field features has wrong dimension");
    const double nrm = x.norm();
    if (nrm < ell - 1e-9 || nrm > L + 1e-9) {
      throw std::runtime_error("instance field features violates norm bounds [ell, L]");
    }
  }
  if (optimal_arms.size() != static_cast<size_t>(num_clients)) {
    throw std::runtime_error("instance field optimal_arms has wrong size");
  }
  for (int i = 0; i < num_clients; ++i) {
    double best = mean_reward(i, 0);
    int arg = 0;
    for (int a = 1; a < num_arms; ++a) {
      const double r = mean_reward(i, a);
      if (r > best) {
        best = r;
        arg = a;
      }
    }
    if (arg != optimal_arms[i]) {
      throw std::runtime_error("instance field optimal_arms is inconsistent with rewards");
    }
  }
  if (noise_std > 1.0) {
    std::cerr << "warning: noise_std " << noise_std
              << " exceeds the 1-subgaussian contract\n";
  }
}

BanditInstance synth_instance(int M, int K, int d, double gap_min, double gap_max,
                              double ell, double L, std::mt19937_64& rng) {
  if (!(gap_min > 0) || gap_min > gap_max) {
    throw std::invalid_argument("need 0 < gap_min <= gap_max");
  }
  if (!(ell > 0) || ell > L) throw std::invalid_argument("need 0 < ell <= L");
  if (gap_max >= L) throw std::invalid_argument("gap_max must be below L");

  BanditInstance inst;
  inst.num_clients = M;
  inst.num_arms = K;
  inst.dim = d;
  inst.shared = false;
  inst.noise_std = 1.0;
  inst.ell = ell;
  inst.L = L;
  inst.s = 1.0;

  inst.theta.resize(K);
  if (d <= K) {
    for (int a = 0; a < K; ++a) {
      inst.theta[a] = Eigen::VectorXd::Zero(d);
      inst.theta[a](a % d) = 1.0;
    }
  } else {
    for (int a = 0; a < K; ++a) inst.theta[a] = random_unit(d, rng);
  }

  std::uniform_real_distribution<double> unif(0.0, 1.0);
  inst.features.assign(static_cast<size_t>(M) * K, Eigen::VectorXd());
  for (int i = 0; i < M; ++i) {
    bool done = false;
    for (int attempt = 0; attempt < 1000 && !done; ++attempt) {
      const int best = static_cast<int>(unif(rng) * K) % K;
      const double r_best = gap_max + unif(rng) * (L - gap_max);
      bool ok = true;
      for (int a = 0; a < K && ok; ++a) {
        const double r = (a == best) ? r_best
                                     : r_best - (gap_min + unif(rng) * (gap_max - gap_min));
        // x = r * theta_a + w with w orthogonal to theta_a; the norm is a
        // fresh draw from [max(ell, |r|), L]
        const double lo = std::max(ell, std::abs(r));
        if (lo > L) {
          ok = false;
          break;
        }
        const double rho = lo + unif(rng) * (L - lo);
        const double orth = std::sqrt(std::max(rho * rho - r * r, 0.0));
        Eigen::VectorXd x = r * inst.theta[a];
        if (d > 1 && orth > 0) {
          Eigen::VectorXd w = random_unit(d, rng);
          w -= w.dot(inst.theta[a]) * inst.theta[a];
          const double wn = w.norm();
          if (wn < 1e-9) {
            ok = false;
            break;
          }
          x += (orth / wn) * w;
        } else if (d == 1 && orth > 1e-12) {
          ok = false;
          break;
        }
        inst.features[static_cast<size_t>(i) * K + a] = x;
      }
      if (!ok) continue;
      // verify gaps and norms directly before accepting the client
      double top = -1e300;
      int arg = 0;
      for (int a = 0; a < K; ++a) {
        const double r = inst.features[static_cast<size_t>(i) * K + a].dot(inst.theta[a]);
        if (r > top) {
          top = r;
          arg = a;
        }
      }
      if (arg != best) continue;
      for (int a = 0; a < K && ok; ++a) {
        if (a == best) continue;
        const double g = top - inst.features[static_cast<size_t>(i) * K + a].dot(inst.theta[a]);
        if (g < gap_min - 1e-9 || g > gap_max + 1e-9) ok = false;
      }
      done = ok;
    }
    if (!done) {
      throw GenerationFailure("could not generate client " + std::to_string(i) +
                              " within retry budget (gaps [" + std::to_string(gap_min) +
                              ", " + std::to_string(gap_max) + "], norms [" +
                              std::to_string(ell) + ", " + std::to_string(L) + "])");
    }
  }

  inst.derive_optimal_arms();
  inst.validate();
  return inst;
}

double sample_reward(const BanditInstance& inst, int client, int arm,
                     std::mt19937_64& rng) {
  double y = inst.mean_reward(client, arm);
  if (inst.noise_std > 0) {
    std::normal_distribution<double> gauss(0.0, inst.noise_std);
    y += gauss(rng);
  }
  return y;
}

BanditInstance load_instance(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open instance file: " + path);
  BanditInstance inst;
  inst.ell = 0;
  inst.L = 0;
  std::string key;
  bool have_theta = false, have_features = false;
  while (in >> key) {
    if (key == "d") {
      in >> inst.dim;
    } else if (key == "K") {
      in >> inst.num_arms;
    } else if (key == "M") {
      in >> inst.num_clients;
    } else if (key == "mode") {
      std::string m;
      in >> m;
      if (m == "disjoint") {
        inst.shared = false;
      } else if (m == "shared") {
        inst.shared = true;
      } else {
        throw std::runtime_error("instance field mode must be disjoint or shared");
      }
    } else if (key == "noise_std") {
      in >> inst.noise_std;
    } else if (key == "ell") {
      in >> inst.ell;
    } else if (key == "L") {
      in >> inst.L;
    } else if (key == "s") {
      in >> inst.s;
    } else if (key == "theta") {
      if (inst.dim <= 0 || inst.num_arms <= 0) {
        throw std::runtime_error("instance fields d and K must precede theta");
      }
      const int rows = inst.shared ? 1 : inst.num_arms;
      inst.theta.assign(rows, Eigen::VectorXd(inst.dim));
      for (auto& t : inst.theta) {
        for (int k = 0; k < inst.dim; ++k) {
          if (!(in >> t(k))) throw std::runtime_error("instance field theta is truncated");
        }
      }
      have_theta = true;
    } else if (key == "features") {
      if (inst.dim <= 0 || inst.num_arms <= 0 || inst.num_clients <= 0) {
        throw std::runtime_error("instance fields d, K, M must precede features");
      }
      inst.features.assign(static_cast<size_t>(inst.num_clients) * inst.num_arms,
                           Eigen::VectorXd(inst.dim));
      for (auto& x : inst.features) {
        for (int k = 0; k < inst.dim; ++k) {
          if (!(in >> x(k))) throw std::runtime_error("instance field features is truncated");
        }
      }
      have_features = true;
    } else {
      throw std::runtime_error("instance file: unknown field '" + key + "'");
    }
  }
  if (!have_theta) throw std::runtime_error("instance field theta is missing");
  if (!have_features) throw std::runtime_error("instance field features is missing");
  inst.derive_optimal_arms();
  inst.validate();
  return inst;
}

void save_instance(const std::string& path, const BanditInstance& inst) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write instance file: " + path);
  char buf[64];
  const auto num = [&](double x) {
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return std::string(buf);
  };
  out << "d " << inst.dim << "\nK " << inst.num_arms << "\nM " << inst.num_clients
      << "\nmode " << (inst.shared ? "shared" : "disjoint") << "\nnoise_std "
      << num(inst.noise_std) << "\nell " << num(inst.ell) << "\nL " << num(inst.L)
      << "\ns " << num(inst.s) << "\n";
  out << "theta\n";
  for (const auto& t : inst.theta) {
    for (int k = 0; k < inst.dim; ++k) out << num(t(k)) << (k + 1 == inst.dim ? "" : " ");
    out << "\n";
  }
  out << "features\n";
  for (const auto& x : inst.features) {
    for (int k = 0; k < inst.dim; ++k) out << num(x(k)) << (k + 1 == inst.dim ? "" : " ");
    out << "\n";
  }
}

}  // namespace fedpe::env
