#include "moesim/prefetch_cache.hpp"

#include <algorithm>
#include <sstream>

#include <nlohmann/json.hpp>

namespace moesim {

void CachePolicyParams::validate() const {
  if (!(beta > 0.0 && beta <= 1.0)) throw ConfigError("cache.beta: must be in (0, 1]");
  if (decay_steps < 1) throw ConfigError("cache.decay_steps: must be >= 1");
  if (threshold < 0.0) throw ConfigError("cache.threshold: must be >= 0");
}

const char* access_kind_name(AccessKind k) {
  switch (k) {
    case AccessKind::kCacheHit: return "cache_hit";
    case AccessKind::kFetchedFresh: return "fetched_fresh";
    case AccessKind::kEvictedAndFetched: return "evicted_and_fetched";
    case AccessKind::kStreamThrough: return "stream_through";
  }
  return "unknown";
}

SparseCache::SparseCache(CachePolicyParams params) : params_(params) { params_.validate(); }

AccessOutcome SparseCache::access(std::uint64_t block) {
  if (auto it = hits_.find(block); it != hits_.end()) {
    by_hits_.erase({it->second, block});
    it->second += 1.0;
    by_hits_.insert({it->second, block});
    return AccessOutcome{AccessKind::kCacheHit};
  }
  if (acc_caches_ + 1 < params_.cpu_size) {
    hits_.emplace(block, 1.0);
    by_hits_.insert({1.0, block});
    acc_caches_ += 1;
    return AccessOutcome{AccessKind::kFetchedFresh};
  }
  if (!by_hits_.empty()) {
    const auto [min_hits, victim] = *by_hits_.begin();
    if (min_hits >= params_.threshold) {
      by_hits_.erase(by_hits_.begin());
      hits_.erase(victim);
      hits_.emplace(block, 1.0);
      by_hits_.insert({1.0, block});
      return AccessOutcome{AccessKind::kEvictedAndFetched, victim};
    }
  }
  return AccessOutcome{AccessKind::kStreamThrough};
}

void SparseCache::end_step() {
  steps_ += 1;
  if (steps_ == params_.decay_steps) {
    for (auto& [block, count] : hits_) count *= params_.beta;
    by_hits_.clear();
    for (const auto& [block, count] : hits_) by_hits_.insert({count, block});
    steps_ = 0;
  }
}

double SparseCache::hit_count(std::uint64_t block) const {
  const auto it = hits_.find(block);
  return it == hits_.end() ? 0.0 : it->second;
}

std::map<std::uint64_t, double> SparseCache::hits_snapshot() const {
  return {hits_.begin(), hits_.end()};
}

void PrefetchConfig::validate() const {
  cache.validate();
  if (lookahead < 1) throw ConfigError("cache.lookahead: must be >= 1");
}

namespace {

std::string sl(std::uint32_t step, std::uint32_t layer) {
  return "s" + std::to_string(step) + ".l" + std::to_string(layer);
}

// Compute cost of one layer: fixed floor plus the step's most-loaded expert
// (the straggler that gates synchronous MoE compute).
TimeNs layer_compute_ns(const ComputeModel& compute, const RoutingTrace& trace,
                        std::uint32_t step) {
  Count bottleneck = 0;
  for (std::uint32_t e = 0; e < trace.experts; ++e) {
    Count total = 0;
    for (std::uint32_t r = 0; r < trace.ranks; ++r) total += trace.at(step, r, e);
    bottleneck = std::max(bottleneck, total);
  }
  return compute.per_layer_ns + compute.per_token_ns * static_cast<TimeNs>(bottleneck);
}

}  // namespace

Prefetch2DResult run_2d_schedule(const ModelSpec& model, const MachineSpec& machine,
                                 const RoutingTrace& trace, const Topology& topology,
                                 const PrefetchConfig& config, const ComputeModel& compute) {
  model.validate();
  machine.validate();
  config.validate();
  const FeasibilityReport feasibility = check_feasibility(model, machine);
  if (!feasibility.feasible()) throw InfeasibleError(feasibility);

  const auto layers = static_cast<std::uint32_t>(model.moe_layers);
  const std::uint32_t steps = trace.steps;
  const std::uint32_t flush_period =
      config.flush_period == 0 ? config.cache.decay_steps : config.flush_period;

  Prefetch2DResult result;
  result.dense_gather_bytes = 2 * ceil_div_u64(model.dense_params, model.moe_layers);
  result.sparse_h2d_bytes =
      scaled_demand_ceil(model.sparse_params, model.activation_prob, 2, model.moe_layers);
  result.sparse_state_bytes =
      scaled_demand_ceil(model.sparse_params, model.activation_prob, 12, model.moe_layers);
  const Bytes cpu_block_bytes =
      scaled_demand_ceil(model.sparse_params, model.activation_prob, 16, model.moe_layers);

  SimEngine engine(&topology);
  const StreamId compute_stream = engine.stream("compute");
  const StreamId nvlink_stream = engine.stream("nvlink");
  const StreamId pcie_stream = engine.stream("pcie");
  const StreamId ssd_stream = engine.stream("ssd");

  const Path nvlink_path{LinkClass::kNvlink};
  const Path pcie_path{LinkClass::kPcie};
  const Path ssd_path{LinkClass::kSsdIo};

  SparseCache cache(config.cache);
  // start markers (zero duration, compute stream) pin "issued at compute
  // start" semantics: prefetches for layer t + lookahead depend on marker t.
  std::vector<TaskId> markers;
  std::vector<TaskId> bodies;
  markers.reserve(static_cast<std::size_t>(steps) * layers);

  const std::size_t total_layers = static_cast<std::size_t>(steps) * layers;
  for (std::size_t t = 0; t < total_layers; ++t) {
    const auto step = static_cast<std::uint32_t>(t / layers);
    const auto layer = static_cast<std::uint32_t>(t % layers);
    const std::vector<TaskId> issue_dep =
        t >= config.lookahead ? std::vector<TaskId>{markers[t - config.lookahead]}
                              : std::vector<TaskId>{};

    // Dense dimension: ZeRO-3 AllGather of the layer's dense slice over NVLink.
    const TaskId dense = engine.submit_transfer(nvlink_stream, "allgather " + sl(step, layer),
                                                result.dense_gather_bytes, nvlink_path, issue_dep);

    // Sparse dimension: CPU cache consult, then SSD fetch if needed, then PCIe H2D.
    const AccessOutcome outcome = cache.access(layer);
    result.outcomes.push_back(AccessRecord{step, layer, outcome});
    std::vector<TaskId> h2d_deps = issue_dep;
    switch (outcome.kind) {
      case AccessKind::kCacheHit:
        break;
      case AccessKind::kEvictedAndFetched: {
        const TaskId writeback = engine.submit_transfer(
            ssd_stream, "evict.wb b" + std::to_string(outcome.victim) + " " + sl(step, layer),
            result.sparse_state_bytes, ssd_path, issue_dep,
            {MemEffect{"cpu", -static_cast<std::int64_t>(cpu_block_bytes), 0}});
        const TaskId read = engine.submit_transfer(
            ssd_stream, "ssd.read " + sl(step, layer), result.sparse_state_bytes, ssd_path,
            {writeback}, {MemEffect{"cpu", 0, static_cast<std::int64_t>(cpu_block_bytes)}});
        h2d_deps.push_back(read);
        break;
      }
      case AccessKind::kFetchedFresh: {
        const TaskId read = engine.submit_transfer(
            ssd_stream, "ssd.read " + sl(step, layer), result.sparse_state_bytes, ssd_path,
            issue_dep, {MemEffect{"cpu", 0, static_cast<std::int64_t>(cpu_block_bytes)}});
        h2d_deps.push_back(read);
        break;
      }
      case AccessKind::kStreamThrough: {
        // Served from SSD without caching.
        const TaskId read = engine.submit_transfer(ssd_stream, "ssd.read " + sl(step, layer),
                                                   result.sparse_state_bytes, ssd_path, issue_dep);
        h2d_deps.push_back(read);
        break;
      }
    }
    const TaskId h2d = engine.submit_transfer(
        pcie_stream, "h2d " + sl(step, layer), result.sparse_h2d_bytes, pcie_path, h2d_deps,
        {MemEffect{"gpu", static_cast<std::int64_t>(result.sparse_h2d_bytes), 0}});

    const TaskId marker = engine.submit(compute_stream, "start " + sl(step, layer), 0,
                                        {dense, h2d});
    markers.push_back(marker);
    const TaskId body = engine.submit(
        compute_stream, "compute " + sl(step, layer), layer_compute_ns(compute, trace, step),
        {marker}, {MemEffect{"gpu", 0, -static_cast<std::int64_t>(result.sparse_h2d_bytes)}});
    bodies.push_back(body);

    if (layer + 1 == layers) {
      cache.end_step();
      if ((step + 1) % flush_period == 0) {
        for (const auto& [block, count] : cache.hits_snapshot()) {
          engine.submit_transfer(ssd_stream, "flush.wb b" + std::to_string(block),
                                 result.sparse_state_bytes, ssd_path, {body});
        }
      }
    }
  }

  result.timeline = engine.run();
  result.makespan = result.timeline.makespan;
  result.compute_tasks = bodies;
  result.stalls.reserve(bodies.size());
  TimeNs prev_end = 0;
  for (const TaskId body : bodies) {
    const TaskRecord& rec = result.timeline.task(body);
    result.stalls.push_back(rec.start - prev_end);
    result.total_stall += rec.start - prev_end;
    prev_end = rec.end;
  }
  return result;
}

std::string outcomes_to_jsonl(const std::vector<AccessRecord>& outcomes) {
  std::ostringstream out;
  for (const AccessRecord& rec : outcomes) {
    nlohmann::json line{{"step", rec.step},
                        {"layer", rec.layer},
                        {"outcome", access_kind_name(rec.outcome.kind)}};
    if (rec.outcome.kind == AccessKind::kEvictedAndFetched) line["victim"] = rec.outcome.victim;
    out << line.dump() << '\n';
  }
  return out.str();
}

}  // namespace moesim
