#include "moesim/elastic_planner.hpp"

#include <algorithm>
#include <numeric>

namespace moesim {

std::uint32_t ScaleUpAssignment::total_gpus() const {
  return std::accumulate(gpus_per_task.begin(), gpus_per_task.end(), 0u);
}

namespace {

// a.batch / a.gpus > b.batch / b.gpus, exact in integers.
bool heavier(Count batch_a, std::uint32_t gpus_a, Count batch_b, std::uint32_t gpus_b) {
  return static_cast<unsigned __int128>(batch_a) * gpus_b >
         static_cast<unsigned __int128>(batch_b) * gpus_a;
}

}  // namespace

ScaleUpAssignment balance_scale_up(const std::vector<Count>& batch_sizes,
                                   std::uint32_t gpu_budget) {
  if (batch_sizes.empty()) throw ConfigError("elastic.batch_sizes: must not be empty");
  for (const Count b : batch_sizes) {
    if (b < 1) throw ConfigError("elastic.batch_sizes: every batch must be >= 1");
  }
  if (gpu_budget < batch_sizes.size()) {
    throw ConfigError("elastic.gpu_budget: fewer GPUs than tasks");
  }

  ScaleUpAssignment assignment;
  assignment.gpus_per_task.assign(batch_sizes.size(), 1);
  for (std::uint32_t granted = static_cast<std::uint32_t>(batch_sizes.size());
       granted < gpu_budget; ++granted) {
    std::size_t heaviest = 0;
    for (std::size_t t = 1; t < batch_sizes.size(); ++t) {
      if (heavier(batch_sizes[t], assignment.gpus_per_task[t], batch_sizes[heaviest],
                  assignment.gpus_per_task[heaviest])) {
        heaviest = t;
      }
    }
    assignment.gpus_per_task[heaviest] += 1;
  }
  return assignment;
}

ScaleDownAssignment balance_scale_down(const std::vector<Count>& task_loads,
                                       Count per_gpu_capacity) {
  if (task_loads.empty()) throw ConfigError("elastic.task_loads: must not be empty");
  for (std::size_t t = 0; t < task_loads.size(); ++t) {
    if (task_loads[t] > per_gpu_capacity) {
      throw ConfigError("elastic.task_loads: load of task " + std::to_string(t) +
                        " exceeds per_gpu_capacity");
    }
  }

  std::vector<std::size_t> order(task_loads.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return task_loads[a] > task_loads[b]; });

  ScaleDownAssignment assignment;
  std::vector<Count> remaining;  // capacity left per GPU
  for (const std::size_t task : order) {
    bool placed = false;
    for (std::size_t g = 0; g < remaining.size(); ++g) {
      if (task_loads[task] <= remaining[g]) {
        remaining[g] -= task_loads[task];
        assignment.gpu_tasks[g].push_back(task);
        placed = true;
        break;
      }
    }
    if (!placed) {
      assignment.gpu_tasks.push_back({task});
      remaining.push_back(per_gpu_capacity - task_loads[task]);
    }
  }
  return assignment;
}

MultitaskResult simulate_multitask(const ScaleUpAssignment& assignment,
                                   const std::vector<Count>& batch_sizes, TimeNs per_sample_ns,
                                   TimeNs sync_ns) {
  if (assignment.gpus_per_task.size() != batch_sizes.size()) {
    throw ConfigError("elastic: assignment and batch_sizes describe different task counts");
  }
  if (per_sample_ns < 0 || sync_ns < 0) throw ConfigError("elastic: negative cost");

  MultitaskResult result;
  SimEngine engine;
  std::vector<TaskId> all_cards;
  for (std::size_t t = 0; t < batch_sizes.size(); ++t) {
    const std::uint32_t gpus = assignment.gpus_per_task[t];
    if (gpus < 1) throw ConfigError("elastic: every task needs at least one GPU");
    const Count per_gpu_batch = ceil_div_u64(batch_sizes[t], gpus);
    const TimeNs task_ns = per_sample_ns * static_cast<TimeNs>(per_gpu_batch);
    result.per_task_ns.push_back(task_ns);
    for (std::uint32_t g = 0; g < gpus; ++g) {
      const StreamId card = engine.stream("task" + std::to_string(t) + "/gpu" + std::to_string(g));
      all_cards.push_back(engine.submit(card, "step t" + std::to_string(t), task_ns));
    }
  }
  engine.submit(engine.stream("sync"), "barrier", sync_ns, all_cards);

  result.timeline = engine.run();
  result.step_ns = result.timeline.makespan;
  const Count total_batch = std::accumulate(batch_sizes.begin(), batch_sizes.end(), Count{0});
  const std::uint32_t total_gpus = assignment.total_gpus();
  if (result.step_ns > 0) {
    result.total_throughput =
        static_cast<double>(total_batch) * 1e9 / static_cast<double>(result.step_ns);
    result.per_card_throughput = result.total_throughput / static_cast<double>(total_gpus);
  }
  return result;
}

}  // namespace moesim
