#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "moesim/sim_engine.hpp"
#include "moesim/topology.hpp"
#include "moesim/types.hpp"

namespace moesim {

// Inference-time expert offloading: K ring slots of expert parameters stay
// resident on the GPU while N layers rotate through them. Dense parameters
// (embeddings etc.) are resident for the whole run.
struct RingPlan {
  std::uint32_t num_layers = 1;
  std::uint32_t ring_slots = 1;  // K, clamped to num_layers
  Bytes expert_bytes = 0;        // one layer's expert block
  Bytes dense_bytes = 0;
  std::vector<TimeNs> compute_ns;  // per layer, size num_layers

  static RingPlan uniform(std::uint32_t num_layers, std::uint32_t ring_slots, Bytes expert_bytes,
                          Bytes dense_bytes, TimeNs compute_ns_per_layer);
  void validate() const;
};

struct RingOp {
  enum class Kind : std::uint8_t { kLoad, kCompute, kRelease };
  Kind kind = Kind::kLoad;
  std::uint32_t layer = 0;  // 0-based
  std::uint32_t slot = 0;   // layer % K
  // For loads beyond the initial fill: the layer whose release frees the slot.
  std::optional<std::uint32_t> waits_release_of;
};

// Calculation-release-load rotation: initial loads of layers 0..K-1, then
// per layer i: compute(i) -> release(i) -> load(i+K) while i+K < N.
struct RingSchedule {
  std::vector<RingOp> ops;
  std::uint32_t slots = 0;  // effective K after clamping
  bool clamped = false;     // ring_slots exceeded num_layers
};

RingSchedule build_schedule(const RingPlan& plan);

struct RingSimResult {
  Timeline timeline;
  TimeNs makespan = 0;        // steady-state (excludes SSD warmup)
  TimeNs stall_ns = 0;        // makespan - total compute
  TimeNs warmup_ssd_ns = 0;   // one-time SSD -> CPU staging of all N blocks
  TimeNs copy_ns_per_layer = 0;
  Bytes peak_gpu_bytes = 0;           // reserved ring arena: dense + K * expert
  Bytes observed_peak_gpu_bytes = 0;  // occupancy seen on the timeline, <= reserved
  Bytes baseline_gpu_bytes = 0;       // everything resident, no offload
  bool clamped = false;
};

// Loads run on the host-to-device stream, computes on the compute stream;
// a released slot hands its memory to the incoming load at the same instant.
RingSimResult simulate(const RingPlan& plan, const Topology& topology);

Bytes peak_memory(const RingPlan& plan);      // dense + K * expert
Bytes baseline_memory(const RingPlan& plan);  // dense + N * expert

}  // namespace moesim
