#include <CLI11.hpp>
#include <cstdio>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include "fedpe/design.hpp"
#include "fedpe/env.hpp"
#include "fedpe/experiment.hpp"

namespace {

// "uniform" | "exp:c,n" | "greedy"
void parse_schedule(const std::string& text, fedpe::harness::ExperimentSpec& spec) {
  using fedpe::protocol::ScheduleKind;
  if (text == "uniform") {
    spec.schedule = ScheduleKind::uniform;
  } else if (text == "greedy") {
    spec.schedule = ScheduleKind::greedy;
  } else if (text.rfind("exp:", 0) == 0) {
    spec.schedule = ScheduleKind::exponential;
    const auto comma = text.find(',', 4);
    if (comma == std::string::npos) {
      throw CLI::ValidationError("--schedule", "expected exp:c,n");
    }
    spec.sched_c = std::stoll(text.substr(4, comma - 4));
    spec.sched_n = std::stoll(text.substr(comma + 1));
  } else {
    throw CLI::ValidationError("--schedule", "expected uniform, exp:c,n or greedy");
  }
}

std::vector<uint64_t> parse_seeds(const std::string& text) {
  std::vector<uint64_t> seeds;
  size_t pos = 0;
  while (pos < text.size()) {
    const size_t comma = text.find(',', pos);
    const std::string tok = text.substr(pos, comma == std::string::npos ? comma : comma - pos);
    if (!tok.empty()) seeds.push_back(std::stoull(tok));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return seeds;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated linear contextual bandits toolkit"};
  app.require_subcommand(1);

  // ---- synth
  auto* synth = app.add_subcommand("synth", "emit a synthetic instance file");
  int s_M = 100, s_K = 10, s_d = 3;
  double s_gmin = 0.2, s_gmax = 0.4, s_ell = 0.5, s_L = 1.0;
  uint64_t s_seed = 1;
  std::string s_out;
  synth->add_option("--M", s_M, "clients")->required();
  synth->add_option("--K", s_K, "arms")->required();
  synth->add_option("--d", s_d, "feature dimension")->required();
  synth->add_option("--gap-min", s_gmin, "minimum suboptimality gap");
  synth->add_option("--gap-max", s_gmax, "maximum suboptimality gap");
  synth->add_option("--ell", s_ell, "lower feature-norm bound");
  synth->add_option("--L", s_L, "upper feature-norm bound");
  synth->add_option("--seed", s_seed, "generator seed");
  synth->add_option("--out", s_out, "output instance file")->required();

  // ---- run
  auto* run = app.add_subcommand("run", "run algorithms on an instance");
  std::string r_instance, r_schedule = "exp:1,2", r_seeds = "1", r_out, r_comm = "naive";
  std::vector<std::string> r_algos;
  long long r_T = 0;
  double r_delta = 0.1;
  int r_threads = 0;
  run->add_option("--instance", r_instance, "instance file")->required();
  run->add_option("--algo", r_algos,
                  "algorithms: fed-pe enhanced shared local-ucb collaborative")
      ->required();
  run->add_option("--T", r_T, "horizon")->required();
  run->add_option("--delta", r_delta, "confidence parameter");
  run->add_option("--schedule", r_schedule, "uniform, exp:c,n or greedy");
  run->add_option("--seeds", r_seeds, "comma-separated seed list");
  run->add_option("--comm-mode", r_comm, "naive or reduced");
  run->add_option("--out", r_out, "output directory")->required();
  run->add_option("--threads", r_threads, "worker threads (0 = hardware)");

  // ---- design
  auto* des = app.add_subcommand("design", "solve a standalone design problem");
  std::string d_problem;
  double d_eps = 0.1;
  int d_sweeps = 500;
  des->add_option("--problem", d_problem, "design problem file")->required();
  des->add_option("--epsilon", d_eps, "optimality slack");
  des->add_option("--max-sweeps", d_sweeps, "sweep budget");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) {
      std::mt19937_64 rng(s_seed);
      const auto inst =
          fedpe::env::synth_instance(s_M, s_K, s_d, s_gmin, s_gmax, s_ell, s_L, rng);
      fedpe::env::save_instance(s_out, inst);
      return 0;
    }
    if (*run) {
      fedpe::harness::ExperimentSpec spec;
      spec.instance_path = r_instance;
      spec.algos = r_algos;
      spec.T = r_T;
      spec.delta = r_delta;
      parse_schedule(r_schedule, spec);
      spec.seeds = parse_seeds(r_seeds);
      spec.out_dir = r_out;
      spec.threads = r_threads;
      if (r_comm == "naive") {
        spec.comm_mode = fedpe::protocol::CommMode::naive;
      } else if (r_comm == "reduced") {
        spec.comm_mode = fedpe::protocol::CommMode::reduced;
      } else {
        std::cerr << "error: --comm-mode must be naive or reduced\n";
        return 1;
      }
      spec.validate();
      const auto inst = fedpe::env::load_instance(spec.instance_path);
      const auto result = fedpe::harness::run_experiment(inst, spec);
      for (const auto& err : result.errors) std::cerr << "cell failed: " << err << "\n";
      return result.failed_cells > 0 ? 2 : 0;
    }
    if (*des) {
      const auto problem = fedpe::design::load_problem(d_problem);
      fedpe::design::SolverConfig cfg;
      cfg.epsilon = d_eps;
      cfg.max_sweeps = d_sweeps;
      const auto sol = fedpe::design::solve_design(problem, cfg);
      std::printf("client,arm,pi\n");
      for (int e = 0; e < problem.num_entries(); ++e) {
        std::printf("%d,%d,%s\n", problem.entry_client[e], problem.entry_arm[e],
                    fedpe::harness::format_double(sol.pi[e]).c_str());
      }
      std::printf("metric,value\n");
      std::printf("G,%s\n", fedpe::harness::format_double(sol.objective_G).c_str());
      std::printf("F,%s\n", fedpe::harness::format_double(sol.objective_F).c_str());
      if (problem.mode == fedpe::design::Mode::disjoint) {
        for (int a = 0; a < problem.num_arms; ++a) {
          if (!problem.arm_entries[a].empty()) {
            std::printf("rank_arm_%d,%d\n", a, sol.arm_rank[a]);
          }
        }
      }
      std::printf("total_rank,%d\n", sol.total_rank);
      std::printf("sweeps,%d\n", sol.sweeps);
      std::printf("certified,%d\n", sol.certified ? 1 : 0);
      return 0;
    }
  } catch (const fedpe::protocol::InvalidConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
