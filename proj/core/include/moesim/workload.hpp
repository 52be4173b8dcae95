#pragma once

#include <cstdint>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "moesim/types.hpp"

namespace moesim {

// Token->expert assignment counts per (step, rank, expert). Row sums over
// experts equal tokens_per_rank for every (step, rank).
struct RoutingTrace {
  std::uint32_t steps = 0;
  std::uint32_t ranks = 0;
  std::uint32_t experts = 0;
  Count tokens_per_rank = 0;
  std::vector<Count> counts;  // [step][rank][expert], row-major

  Count at(std::uint32_t step, std::uint32_t rank, std::uint32_t expert) const {
    return counts[(static_cast<std::size_t>(step) * ranks + rank) * experts + expert];
  }
  Count& at(std::uint32_t step, std::uint32_t rank, std::uint32_t expert) {
    return counts[(static_cast<std::size_t>(step) * ranks + rank) * experts + expert];
  }

  // Tokens routed to `expert`, summed over all steps and ranks.
  Count expert_total(std::uint32_t expert) const;
};

// Per-task samples per step (Table-4 style multi-task loads).
struct TaskLoad {
  std::vector<Count> batch_sizes;  // each >= 1
};

// Deterministic synthetic trace. Expert popularity follows
// weight(e) = (e + 1)^(-skew), skew = 0 gives a uniform distribution; each
// token draws independently from the per-(step, rank) SplitMix64 substream
// (see rng.hpp for the exact generator and substream derivation).
RoutingTrace gen_trace(std::uint64_t seed, std::uint32_t steps, std::uint32_t ranks,
                       std::uint32_t experts, Count tokens_per_rank, double skew);

// max over experts of total tokens / mean over experts. 1.0 when uniform.
// Throws ConfigError when the trace carries zero tokens.
double imbalance_ratio(const RoutingTrace& trace);

nlohmann::json trace_to_json(const RoutingTrace& trace);
RoutingTrace trace_from_json(const nlohmann::json& j);

}  // namespace moesim
