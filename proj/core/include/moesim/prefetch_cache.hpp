#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <unordered_map>
#include <vector>

#include "moesim/model_spec.hpp"
#include "moesim/sim_engine.hpp"
#include "moesim/topology.hpp"
#include "moesim/types.hpp"
#include "moesim/workload.hpp"

namespace moesim {

struct CachePolicyParams {
  std::size_t cpu_size = 0;       // cacheable sparse-parameter blocks
  double threshold = 1.0;         // minimum hit count an eviction victim must reach
  double beta = 1.0;              // decay factor in (0, 1]
  std::uint32_t decay_steps = 1;  // K: steps per decay cycle, >= 1

  void validate() const;
};

enum class AccessKind : std::uint8_t {
  kCacheHit = 0,
  kFetchedFresh,
  kEvictedAndFetched,
  kStreamThrough,
};

const char* access_kind_name(AccessKind k);

struct AccessOutcome {
  AccessKind kind = AccessKind::kCacheHit;
  std::uint64_t victim = 0;  // meaningful only for kEvictedAndFetched

  friend bool operator==(const AccessOutcome&, const AccessOutcome&) = default;
};

// CPU cache for sparse parameter states. Branches, in order:
//   (a) resident          -> hits[p] += 1, CacheHit
//   (b) acc + 1 < CPU_size -> admit with hits[p] = 1, FetchedFresh
//   (c) some resident p_a has the minimum hit count and that minimum is
//       >= threshold      -> write p_a back, drop its hits entry, admit p
//                            with hits[p] = 1, EvictedAndFetched(p_a)
//   (d) otherwise         -> StreamThrough: serve from SSD, cache untouched
//
// The admission guard in (b) is strict, so fresh admissions stop one block
// short of CPU_size; evictions keep occupancy at its pre-eviction level.
// Ties on the minimum evict the lowest block id. Every decay cycle
// (end_step called decay_steps times) multiplies all hit counts by beta.
//
// Victim lookup goes through an ordered (hits, id) index instead of a scan,
// which keeps the arithmetic identical to a literal transcription of the
// branch rules above while making eviction O(log n).
class SparseCache {
 public:
  explicit SparseCache(CachePolicyParams params);

  AccessOutcome access(std::uint64_t block);
  void end_step();

  const CachePolicyParams& params() const { return params_; }
  bool resident(std::uint64_t block) const { return hits_.contains(block); }
  std::size_t acc_caches() const { return acc_caches_; }
  std::uint32_t steps() const { return steps_; }
  double hit_count(std::uint64_t block) const;  // 0 when not resident
  // Sorted copy, for deterministic reporting and state comparison.
  std::map<std::uint64_t, double> hits_snapshot() const;

 private:
  CachePolicyParams params_;
  std::unordered_map<std::uint64_t, double> hits_;
  std::set<std::pair<double, std::uint64_t>> by_hits_;
  std::size_t acc_caches_ = 0;
  std::uint32_t steps_ = 0;
};

struct PrefetchConfig {
  CachePolicyParams cache;
  std::uint32_t lookahead = 1;     // layers of prefetch depth, >= 1
  std::uint32_t flush_period = 0;  // steps between CPU->SSD flushes; 0 = decay_steps

  void validate() const;
};

struct ComputeModel {
  TimeNs per_layer_ns = 0;  // fixed cost per layer
  TimeNs per_token_ns = 0;  // scaled by the step's most-loaded expert
};

struct AccessRecord {
  std::uint32_t step = 0;
  std::uint32_t layer = 0;
  AccessOutcome outcome;
};

struct Prefetch2DResult {
  Timeline timeline;
  TimeNs makespan = 0;
  std::vector<TimeNs> stalls;  // per (step, layer), step-major
  TimeNs total_stall = 0;
  std::vector<AccessRecord> outcomes;
  std::vector<TaskId> compute_tasks;  // step-major, for timeline inspection
  Bytes dense_gather_bytes = 0;       // per layer
  Bytes sparse_h2d_bytes = 0;         // per layer
  Bytes sparse_state_bytes = 0;       // per layer, SSD fetch/writeback payload
};

// Builds and runs the two-dimensional prefetch pipeline: for every layer of
// every step, compute waits on that layer's dense AllGather (nvlink stream)
// and sparse fetch (ssd+pcie streams); both prefetches for layer t+lookahead
// are issued when compute(t) starts. stall(t) is the gap between consecutive
// compute tasks. Refuses to simulate an infeasible model.
Prefetch2DResult run_2d_schedule(const ModelSpec& model, const MachineSpec& machine,
                                 const RoutingTrace& trace, const Topology& topology,
                                 const PrefetchConfig& config, const ComputeModel& compute);

// One JSON object per access, newline separated, for debugging runs.
std::string outcomes_to_jsonl(const std::vector<AccessRecord>& outcomes);

}  // namespace moesim
