#pragma once

#include <cstdint>
#include <vector>

#include "moesim/sim_engine.hpp"
#include "moesim/types.hpp"

namespace moesim {

// Scale-up: every task keeps at least one GPU, splitting its batch across
// the GPUs it owns via data parallelism.
struct ScaleUpAssignment {
  std::vector<std::uint32_t> gpus_per_task;

  std::uint32_t total_gpus() const;
};

// Scale-down: light tasks consolidated onto shared GPUs; one bin per GPU.
struct ScaleDownAssignment {
  std::vector<std::vector<std::size_t>> gpu_tasks;  // task indices per GPU

  std::size_t gpus_used() const { return gpu_tasks.size(); }
};

// Water-filling: start with one GPU per task, then repeatedly grant a GPU to
// the task with the largest per-GPU batch, breaking ties toward the lowest
// task index. Minimizes max_t batch_t / gpus_t over integer assignments.
// Throws ConfigError when gpu_budget < task count.
ScaleUpAssignment balance_scale_up(const std::vector<Count>& batch_sizes,
                                   std::uint32_t gpu_budget);

// First-fit-decreasing packing of task loads onto GPUs of fixed capacity.
// Throws ConfigError when any single load exceeds the capacity.
ScaleDownAssignment balance_scale_down(const std::vector<Count>& task_loads,
                                       Count per_gpu_capacity);

struct MultitaskResult {
  Timeline timeline;
  TimeNs step_ns = 0;                // slowest task + synchronization barrier
  std::vector<TimeNs> per_task_ns;   // compute time of each task
  double total_throughput = 0.0;     // samples/sec
  double per_card_throughput = 0.0;  // samples/sec/GPU
};

// Synchronous multi-task step: each task's GPUs process ceil(batch/gpus)
// samples in parallel, then every GPU waits at the barrier (Cask Effect).
MultitaskResult simulate_multitask(const ScaleUpAssignment& assignment,
                                   const std::vector<Count>& batch_sizes, TimeNs per_sample_ns,
                                   TimeNs sync_ns);

}  // namespace moesim
