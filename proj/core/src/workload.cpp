#include "moesim/workload.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "moesim/rng.hpp"

namespace moesim {

Count RoutingTrace::expert_total(std::uint32_t expert) const {
  Count total = 0;
  for (std::uint32_t s = 0; s < steps; ++s)
    for (std::uint32_t r = 0; r < ranks; ++r) total += at(s, r, expert);
  return total;
}

RoutingTrace gen_trace(std::uint64_t seed, std::uint32_t steps, std::uint32_t ranks,
                       std::uint32_t experts, Count tokens_per_rank, double skew) {
  if (experts == 0) throw ConfigError("workload.experts: must be >= 1");
  if (skew < 0.0) throw ConfigError("workload.skew: must be >= 0");

  RoutingTrace trace;
  trace.steps = steps;
  trace.ranks = ranks;
  trace.experts = experts;
  trace.tokens_per_rank = tokens_per_rank;
  trace.counts.assign(static_cast<std::size_t>(steps) * ranks * experts, 0);

  // Cumulative expert weights, shared by all (step, rank) substreams.
  std::vector<double> cdf(experts);
  double acc = 0.0;
  for (std::uint32_t e = 0; e < experts; ++e) {
    acc += std::pow(static_cast<double>(e + 1), -skew);
    cdf[e] = acc;
  }
  for (std::uint32_t e = 0; e < experts; ++e) cdf[e] /= acc;
  cdf[experts - 1] = 1.0;

  for (std::uint32_t s = 0; s < steps; ++s) {
    for (std::uint32_t r = 0; r < ranks; ++r) {
      SplitMix64 rng(substream_seed(seed, s, r));
      for (Count t = 0; t < tokens_per_rank; ++t) {
        const double u = rng.next_u01();
        const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
        const auto e = static_cast<std::uint32_t>(it - cdf.begin());
        trace.at(s, r, std::min(e, experts - 1)) += 1;
      }
    }
  }
  return trace;
}

double imbalance_ratio(const RoutingTrace& trace) {
  Count total = 0;
  Count max_total = 0;
  for (std::uint32_t e = 0; e < trace.experts; ++e) {
    const Count t = trace.expert_total(e);
    total += t;
    max_total = std::max(max_total, t);
  }
  if (total == 0) throw ConfigError("imbalance_ratio: trace carries zero tokens");
  const double mean = static_cast<double>(total) / static_cast<double>(trace.experts);
  return static_cast<double>(max_total) / mean;
}

nlohmann::json trace_to_json(const RoutingTrace& trace) {
  nlohmann::json counts = nlohmann::json::array();
  for (std::uint32_t s = 0; s < trace.steps; ++s) {
    nlohmann::json by_rank = nlohmann::json::array();
    for (std::uint32_t r = 0; r < trace.ranks; ++r) {
      nlohmann::json row = nlohmann::json::array();
      for (std::uint32_t e = 0; e < trace.experts; ++e) row.push_back(trace.at(s, r, e));
      by_rank.push_back(std::move(row));
    }
    counts.push_back(std::move(by_rank));
  }
  return {{"schema_version", 1},
          {"steps", trace.steps},
          {"ranks", trace.ranks},
          {"experts", trace.experts},
          {"tokens_per_rank", trace.tokens_per_rank},
          {"counts", std::move(counts)}};
}

RoutingTrace trace_from_json(const nlohmann::json& j) {
  for (const char* key : {"steps", "ranks", "experts", "tokens_per_rank", "counts"}) {
    if (!j.contains(key)) throw ConfigError(std::string("trace.") + key + ": missing field");
  }
  RoutingTrace trace;
  trace.steps = j.at("steps").get<std::uint32_t>();
  trace.ranks = j.at("ranks").get<std::uint32_t>();
  trace.experts = j.at("experts").get<std::uint32_t>();
  trace.tokens_per_rank = j.at("tokens_per_rank").get<Count>();
  trace.counts.assign(static_cast<std::size_t>(trace.steps) * trace.ranks * trace.experts, 0);

  const auto& counts = j.at("counts");
  if (!counts.is_array() || counts.size() != trace.steps)
    throw ConfigError("trace.counts: expected one entry per step");
  for (std::uint32_t s = 0; s < trace.steps; ++s) {
    const auto& by_rank = counts.at(s);
    if (!by_rank.is_array() || by_rank.size() != trace.ranks)
      throw ConfigError("trace.counts: expected one row per rank");
    for (std::uint32_t r = 0; r < trace.ranks; ++r) {
      const auto& row = by_rank.at(r);
      if (!row.is_array() || row.size() != trace.experts)
        throw ConfigError("trace.counts: expected one count per expert");
      Count row_sum = 0;
      for (std::uint32_t e = 0; e < trace.experts; ++e) {
        trace.at(s, r, e) = row.at(e).get<Count>();
        row_sum += trace.at(s, r, e);
      }
      if (row_sum != trace.tokens_per_rank)
        throw ConfigError("trace.counts: row sum does not match tokens_per_rank");
    }
  }
  return trace;
}

}  // namespace moesim
