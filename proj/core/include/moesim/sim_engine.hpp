#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "moesim/topology.hpp"
#include "moesim/types.hpp"

namespace moesim {

using TaskId = std::uint64_t;
using StreamId = std::uint32_t;

// Memory accounting side effect of a task. delta_at_start applies when the
// task begins, delta_at_end when it completes. At equal timestamps releases
// apply before acquisitions, so a slot handed over at time t never counts
// twice.
struct MemEffect {
  std::string tier;
  std::int64_t delta_at_start = 0;
  std::int64_t delta_at_end = 0;
};

struct TaskRecord {
  TaskId id = 0;
  std::string label;
  std::string stream;
  TimeNs start = 0;
  TimeNs end = 0;
};

struct StreamStats {
  TimeNs busy = 0;   // sum of task durations
  TimeNs stall = 0;  // gaps between first start and last end
  std::vector<std::pair<TimeNs, TimeNs>> intervals;  // non-overlapping, sorted
};

struct Timeline {
  std::vector<TaskRecord> tasks;  // submission order
  TimeNs makespan = 0;
  std::map<std::string, StreamStats> streams;
  std::map<std::string, std::int64_t> peak_memory;  // per tier

  const TaskRecord& task(TaskId id) const { return tasks.at(id); }
};

// Deterministic discrete-event engine. Every stream is a FIFO device queue:
// tasks on one stream run in submission order, each task additionally waits
// for all its dependencies to finish. Submitting tasks in a fixed order
// therefore fixes the whole timeline; two runs are bit-identical.
//
// Dependencies must reference already-submitted tasks, which makes the
// dependency graph acyclic by construction.
class SimEngine {
 public:
  SimEngine() = default;
  explicit SimEngine(const Topology* topology) : topology_(topology) {}

  StreamId stream(std::string_view name);

  TaskId submit(StreamId stream, std::string label, TimeNs duration,
                const std::vector<TaskId>& deps = {}, std::vector<MemEffect> mem = {});

  // Duration resolved as topology.transfer_time(path, bytes); requires a
  // topology to have been supplied at construction.
  TaskId submit_transfer(StreamId stream, std::string label, Bytes bytes, const Path& path,
                         const std::vector<TaskId>& deps = {}, std::vector<MemEffect> mem = {});

  std::size_t task_count() const { return tasks_.size(); }

  Timeline run() const;

 private:
  struct TaskDesc {
    std::string label;
    StreamId stream = 0;
    TimeNs duration = 0;
    std::vector<TaskId> deps;
    std::vector<MemEffect> mem;
  };

  const Topology* topology_ = nullptr;
  std::vector<std::string> stream_names_;
  std::map<std::string, StreamId, std::less<>> stream_ids_;
  std::vector<TaskDesc> tasks_;
};

}  // namespace moesim
