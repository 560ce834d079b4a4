#include "fedpe/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <thread>

#include "fedpe/baselines.hpp"

namespace fedpe::harness {

namespace fs = std::filesystem;

std::string format_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

void ExperimentSpec::validate() const {
  if (seeds.empty()) throw protocol::InvalidConfigError("seeds list must be nonempty");
  if (algos.empty()) throw protocol::InvalidConfigError("algorithm list must be nonempty");
  if (T <= 0) throw protocol::InvalidConfigError("horizon T must be positive");
  if (out_dir.empty()) throw protocol::InvalidConfigError("output directory is required");
  for (const auto& a : algos) {
    if (a != "fed-pe" && a != "enhanced" && a != "shared" && a != "local-ucb" &&
        a != "collaborative") {
      throw protocol::InvalidConfigError("unknown algorithm '" + a + "'");
    }
  }
}

Trace run_algo(const env::BanditInstance& inst, const std::string& algo,
               const ExperimentSpec& spec, uint64_t seed) {
  protocol::AlgorithmConfig cfg;
  cfg.T = spec.T;
  cfg.delta = spec.delta;
  cfg.schedule = spec.schedule;
  cfg.sched_c = spec.sched_c;
  cfg.sched_n = spec.sched_n;
  cfg.ell = inst.ell;
  cfg.comm_mode = spec.comm_mode;
  Trace trace;
  if (algo == "fed-pe") {
    cfg.variant = protocol::Variant::fed_pe;
    trace = protocol::run_policy(inst, cfg, seed);
  } else if (algo == "enhanced") {
    cfg.variant = protocol::Variant::enhanced_fed_pe;
    trace = protocol::run_policy(inst, cfg, seed);
  } else if (algo == "shared") {
    cfg.variant = protocol::Variant::shared_fed_pe;
    trace = protocol::run_policy(inst, cfg, seed);
  } else if (algo == "local-ucb") {
    trace = baselines::local_ucb_run(inst, spec.T, seed);
  } else if (algo == "collaborative") {
    trace = baselines::collaborative_run(inst, cfg, seed);
  } else {
    throw protocol::InvalidConfigError("unknown algorithm '" + algo + "'");
  }
  trace.algo = algo;
  trace.seed = seed;
  return trace;
}

namespace {

// Rounds logged in the trace CSV: everything up to 2^15, else 1024 even
// checkpoints plus phase boundaries.
std::vector<long long> logged_rounds(const Trace& trace, long long T) {
  std::vector<long long> rounds;
  if (T <= (1LL << 15)) {
    rounds.resize(static_cast<size_t>(T));
    for (long long t = 0; t < T; ++t) rounds[static_cast<size_t>(t)] = t + 1;
    return rounds;
  }
  std::set<long long> keep;
  for (int k = 1; k <= 1024; ++k) {
    keep.insert(std::max<long long>(1, T * k / 1024));
  }
  for (const auto& rec : trace.phases) {
    if (rec.end_round >= 1 && rec.end_round <= T) keep.insert(rec.end_round);
  }
  keep.insert(T);
  return {keep.begin(), keep.end()};
}

void write_trace_csv(const std::string& path, const Trace& trace, long long T) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "algo,seed,round,cum_regret\n";
    for (long long t : logged_rounds(trace, T)) {
      out << trace.algo << ',' << trace.seed << ',' << t << ','
          << format_double(trace.cum_regret[static_cast<size_t>(t - 1)]) << "\n";
    }
  }
  fs::rename(tmp, path);
}

struct Cell {
  std::string algo;
  uint64_t seed;
};

}  // namespace

ExperimentResult run_experiment(const env::BanditInstance& inst,
                                const ExperimentSpec& spec) {
  spec.validate();
  fs::create_directories(spec.out_dir);

  std::vector<Cell> cells;
  for (const auto& algo : spec.algos) {
    for (uint64_t seed : spec.seeds) cells.push_back({algo, seed});
  }
  std::vector<Trace> traces(cells.size());
  std::vector<std::string> errors(cells.size());
  std::vector<char> ok(cells.size(), 0);

  unsigned workers = spec.threads > 0 ? static_cast<unsigned>(spec.threads)
                                      : std::thread::hardware_concurrency();
  workers = std::max(1u, std::min<unsigned>(workers, cells.size()));
  std::atomic<size_t> next{0};
  const auto worker = [&]() {
    while (true) {
      const size_t idx = next.fetch_add(1);
      if (idx >= cells.size()) return;
      try {
        traces[idx] = run_algo(inst, cells[idx].algo, spec, cells[idx].seed);
        ok[idx] = 1;
      } catch (const std::exception& e) {
        errors[idx] = cells[idx].algo + "," + std::to_string(cells[idx].seed) +
                      ",\"" + e.what() + "\"";
      }
    }
  };
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  ExperimentResult result;
  for (size_t idx = 0; idx < cells.size(); ++idx) {
    if (ok[idx]) {
      result.traces.push_back(traces[idx]);
    } else {
      ++result.failed_cells;
      result.errors.push_back(errors[idx]);
    }
  }

  // per-cell trace files
  for (size_t idx = 0; idx < cells.size(); ++idx) {
    if (!ok[idx]) continue;
    const std::string path = spec.out_dir + "/trace_" + cells[idx].algo + "_s" +
                             std::to_string(cells[idx].seed) + ".csv";
    write_trace_csv(path, traces[idx], spec.T);
  }

  // one combined phase file
  {
    const std::string path = spec.out_dir + "/phases.csv";
    std::ofstream out(path + ".tmp");
    out << "algo,seed,phase,f_p,up_scalars,down_scalars,sparsity,sweeps\n";
    for (size_t idx = 0; idx < cells.size(); ++idx) {
      if (!ok[idx]) continue;
      for (const auto& rec : traces[idx].phases) {
        out << cells[idx].algo << ',' << cells[idx].seed << ',' << rec.phase << ','
            << rec.f_p << ',' << rec.up() << ',' << rec.down() << ','
            << format_double(rec.sparsity) << ',' << rec.sweeps << "\n";
      }
    }
    out.close();
    fs::rename(path + ".tmp", path);
  }

  // summary across seeds, one row per algorithm
  {
    const std::string path = spec.out_dir + "/summary.csv";
    std::ofstream out(path + ".tmp");
    out << "algo,final_regret_mean,final_regret_std,total_comm_mean,sparsity_mean,"
           "sweeps_mean\n";
    for (const auto& algo : spec.algos) {
      std::vector<double> finals, comms, sparsities, sweeps;
      for (size_t idx = 0; idx < cells.size(); ++idx) {
        if (!ok[idx] || cells[idx].algo != algo) continue;
        const Trace& tr = traces[idx];
        finals.push_back(tr.final_regret());
        comms.push_back(static_cast<double>(comm_cost(tr)));
        double sp = 0.0, sw = 0.0;
        for (const auto& rec : tr.phases) {
          sp += rec.sparsity;
          sw += rec.sweeps;
        }
        const double nph = tr.phases.empty() ? 1.0 : static_cast<double>(tr.phases.size());
        sparsities.push_back(sp / nph);
        sweeps.push_back(sw / nph);
      }
      if (finals.empty()) continue;
      const auto mean = [](const std::vector<double>& v) {
        double s = 0.0;
        for (double x : v) s += x;
        return s / static_cast<double>(v.size());
      };
      const double fmean = mean(finals);
      double var = 0.0;
      for (double x : finals) var += (x - fmean) * (x - fmean);
      const double fstd =
          finals.size() > 1 ? std::sqrt(var / static_cast<double>(finals.size() - 1)) : 0.0;
      out << algo << ',' << format_double(fmean) << ',' << format_double(fstd) << ','
          << format_double(mean(comms)) << ',' << format_double(mean(sparsities)) << ','
          << format_double(mean(sweeps)) << "\n";
    }
    out.close();
    fs::rename(path + ".tmp", path);
  }

  if (result.failed_cells > 0) {
    std::ofstream out(spec.out_dir + "/failures.csv");
    out << "algo,seed,error\n";
    for (const auto& line : result.errors) out << line << "\n";
  }
  return result;
}

}  // namespace fedpe::harness
