#include "moesim/ring_offload.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace moesim {

RingPlan RingPlan::uniform(std::uint32_t num_layers, std::uint32_t ring_slots, Bytes expert_bytes,
                           Bytes dense_bytes, TimeNs compute_ns_per_layer) {
  RingPlan plan;
  plan.num_layers = num_layers;
  plan.ring_slots = ring_slots;
  plan.expert_bytes = expert_bytes;
  plan.dense_bytes = dense_bytes;
  plan.compute_ns.assign(num_layers, compute_ns_per_layer);
  return plan;
}

void RingPlan::validate() const {
  if (num_layers < 1) throw ConfigError("ring.num_layers: must be >= 1");
  if (ring_slots == 0) throw ConfigError("ring.ring_slots: must be >= 1");
  if (compute_ns.size() != num_layers) {
    throw ConfigError("ring.compute_ns: need one entry per layer");
  }
  for (const TimeNs c : compute_ns) {
    if (c < 0) throw ConfigError("ring.compute_ns: must be >= 0");
  }
}

RingSchedule build_schedule(const RingPlan& plan) {
  plan.validate();
  RingSchedule schedule;
  schedule.clamped = plan.ring_slots > plan.num_layers;
  schedule.slots = std::min(plan.ring_slots, plan.num_layers);
  const std::uint32_t slots = schedule.slots;
  const std::uint32_t layers = plan.num_layers;

  for (std::uint32_t i = 0; i < slots; ++i) {
    schedule.ops.push_back(RingOp{RingOp::Kind::kLoad, i, i % slots, std::nullopt});
  }
  for (std::uint32_t i = 0; i < layers; ++i) {
    schedule.ops.push_back(RingOp{RingOp::Kind::kCompute, i, i % slots, std::nullopt});
    schedule.ops.push_back(RingOp{RingOp::Kind::kRelease, i, i % slots, std::nullopt});
    if (i + slots < layers) {
      schedule.ops.push_back(RingOp{RingOp::Kind::kLoad, i + slots, (i + slots) % slots, i});
    }
  }
  return schedule;
}

RingSimResult simulate(const RingPlan& plan, const Topology& topology) {
  const RingSchedule schedule = build_schedule(plan);
  RingSimResult result;
  result.clamped = schedule.clamped;
  result.copy_ns_per_layer = topology.transfer_time({LinkClass::kPcie}, plan.expert_bytes);
  result.warmup_ssd_ns = topology.transfer_time(
      {LinkClass::kSsdIo}, plan.expert_bytes * static_cast<Bytes>(plan.num_layers));
  result.baseline_gpu_bytes = baseline_memory(plan);

  SimEngine engine(&topology);
  const StreamId h2d = engine.stream("h2d");
  const StreamId compute = engine.stream("compute");
  const StreamId init = engine.stream("init");

  engine.submit(init, "weights.dense", 0, {},
                {MemEffect{"gpu", static_cast<std::int64_t>(plan.dense_bytes), 0}});

  std::vector<TaskId> load_task(plan.num_layers);
  std::vector<TaskId> compute_task(plan.num_layers);
  std::vector<TaskId> release_task(plan.num_layers);
  for (const RingOp& op : schedule.ops) {
    const std::string tag =
        " l" + std::to_string(op.layer) + " slot" + std::to_string(op.slot);
    switch (op.kind) {
      case RingOp::Kind::kLoad: {
        std::vector<TaskId> deps;
        if (op.waits_release_of) deps.push_back(release_task[*op.waits_release_of]);
        load_task[op.layer] = engine.submit_transfer(
            h2d, "load" + tag, plan.expert_bytes, {LinkClass::kPcie}, deps,
            {MemEffect{"gpu", static_cast<std::int64_t>(plan.expert_bytes), 0}});
        break;
      }
      case RingOp::Kind::kCompute:
        compute_task[op.layer] = engine.submit(compute, "compute" + tag,
                                               plan.compute_ns[op.layer], {load_task[op.layer]});
        break;
      case RingOp::Kind::kRelease:
        release_task[op.layer] =
            engine.submit(compute, "release" + tag, 0, {compute_task[op.layer]},
                          {MemEffect{"gpu", -static_cast<std::int64_t>(plan.expert_bytes), 0}});
        break;
    }
  }

  result.timeline = engine.run();
  result.makespan = result.timeline.makespan;
  const TimeNs total_compute = std::accumulate(plan.compute_ns.begin(), plan.compute_ns.end(),
                                               TimeNs{0});
  result.stall_ns = result.makespan - total_compute;
  const auto peak_it = result.timeline.peak_memory.find("gpu");
  result.observed_peak_gpu_bytes =
      peak_it == result.timeline.peak_memory.end() ? 0 : static_cast<Bytes>(peak_it->second);
  result.peak_gpu_bytes = peak_memory(plan);
  return result;
}

Bytes peak_memory(const RingPlan& plan) {
  plan.validate();
  const Bytes slots = std::min<Bytes>(plan.ring_slots, plan.num_layers);
  return plan.dense_bytes + slots * plan.expert_bytes;
}

Bytes baseline_memory(const RingPlan& plan) {
  plan.validate();
  return plan.dense_bytes + static_cast<Bytes>(plan.num_layers) * plan.expert_bytes;
}

}  // namespace moesim
