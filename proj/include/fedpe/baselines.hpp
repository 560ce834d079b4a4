#pragma once

#include <cstdint>

#include "fedpe/env.hpp"
#include "fedpe/protocol.hpp"
#include "fedpe/trace.hpp"

namespace fedpe::baselines {

// Per-client UCB1 (index = mean + sqrt(2 log t / n)) with no communication.
harness::Trace local_ucb_run(const env::BanditInstance& env, long long T,
                             uint64_t seed);

// Fed-PE phase skeleton with full information exchange: clients ship raw
// features once and raw rewards every phase; the server keeps exact pooled
// least squares per arm over the whole history and exact confidence widths.
harness::Trace collaborative_run(const env::BanditInstance& env,
                                 const protocol::AlgorithmConfig& config,
                                 uint64_t seed);

}  // namespace fedpe::baselines
