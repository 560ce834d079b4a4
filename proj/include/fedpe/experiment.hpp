#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedpe/env.hpp"
#include "fedpe/protocol.hpp"
#include "fedpe/trace.hpp"

namespace fedpe::harness {

struct ExperimentSpec {
  std::string instance_path;
  std::vector<std::string> algos;  // fed-pe enhanced shared local-ucb collaborative
  long long T = 0;
  double delta = 0.1;
  protocol::ScheduleKind schedule = protocol::ScheduleKind::exponential;
  long long sched_c = 1;
  long long sched_n = 2;
  std::vector<uint64_t> seeds;
  std::string out_dir;
  protocol::CommMode comm_mode = protocol::CommMode::naive;
  int threads = 0;  // 0: hardware concurrency
  void validate() const;  // throws protocol::InvalidConfigError
};

// Dispatches one (algorithm, seed) cell.
Trace run_algo(const env::BanditInstance& instance, const std::string& algo,
               const ExperimentSpec& spec, uint64_t seed);

struct ExperimentResult {
  int failed_cells = 0;
  std::vector<Trace> traces;        // successful cells, algo-major then seed
  std::vector<std::string> errors;  // one line per failed cell
};

// Runs every (algorithm, seed) cell (in parallel when threads allow), writes
// one trace CSV per cell plus phases.csv and summary.csv (and failures.csv
// when some cell aborted). Deterministic output for identical specs.
ExperimentResult run_experiment(const env::BanditInstance& instance,
                                const ExperimentSpec& spec);

// %.17g formatting used for every floating-point value in CSV files, so the
// files round-trip exactly.
std::string format_double(double x);

}  // namespace fedpe::harness
