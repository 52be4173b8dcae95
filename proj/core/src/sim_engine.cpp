#include "moesim/sim_engine.hpp"

#include <algorithm>
#include <stdexcept>

namespace moesim {

StreamId SimEngine::stream(std::string_view name) {
  if (auto it = stream_ids_.find(name); it != stream_ids_.end()) return it->second;
  const auto id = static_cast<StreamId>(stream_names_.size());
  stream_names_.emplace_back(name);
  stream_ids_.emplace(std::string(name), id);
  return id;
}

TaskId SimEngine::submit(StreamId stream, std::string label, TimeNs duration,
                         const std::vector<TaskId>& deps, std::vector<MemEffect> mem) {
  if (stream >= stream_names_.size()) throw std::invalid_argument("sim: unknown stream id");
  if (duration < 0) throw std::invalid_argument("sim: negative task duration");
  const TaskId id = tasks_.size();
  for (const TaskId dep : deps) {
    if (dep >= id) throw std::invalid_argument("sim: unknown dependency (tasks must be submitted before their dependents)");
  }
  tasks_.push_back(TaskDesc{std::move(label), stream, duration, deps, std::move(mem)});
  return id;
}

TaskId SimEngine::submit_transfer(StreamId stream, std::string label, Bytes bytes,
                                  const Path& path, const std::vector<TaskId>& deps,
                                  std::vector<MemEffect> mem) {
  if (topology_ == nullptr) throw std::logic_error("sim: submit_transfer requires a topology");
  return submit(stream, std::move(label), topology_->transfer_time(path, bytes), deps,
                std::move(mem));
}

Timeline SimEngine::run() const {
  Timeline tl;
  tl.tasks.reserve(tasks_.size());
  std::vector<TimeNs> stream_free(stream_names_.size(), 0);
  std::vector<TimeNs> ends(tasks_.size(), 0);

  for (TaskId id = 0; id < tasks_.size(); ++id) {
    const TaskDesc& t = tasks_[id];
    TimeNs ready = 0;
    for (const TaskId dep : t.deps) ready = std::max(ready, ends[dep]);
    const TimeNs start = std::max(ready, stream_free[t.stream]);
    const TimeNs end = start + t.duration;
    stream_free[t.stream] = end;
    ends[id] = end;
    tl.makespan = std::max(tl.makespan, end);
    tl.tasks.push_back(TaskRecord{id, t.label, stream_names_[t.stream], start, end});
  }

  for (const TaskRecord& rec : tl.tasks) {
    auto& st = tl.streams[rec.stream];
    st.busy += rec.end - rec.start;
    if (!st.intervals.empty()) st.stall += rec.start - st.intervals.back().second;
    st.intervals.emplace_back(rec.start, rec.end);
  }

  // Peak memory per tier: events ordered by time, releases before
  // acquisitions at equal timestamps, submission order as final tie-break.
  struct MemEvent {
    TimeNs time;
    std::int64_t delta;
    TaskId id;
  };
  std::map<std::string, std::vector<MemEvent>> events;
  for (TaskId id = 0; id < tasks_.size(); ++id) {
    for (const MemEffect& m : tasks_[id].mem) {
      if (m.delta_at_start != 0)
        events[m.tier].push_back(MemEvent{tl.tasks[id].start, m.delta_at_start, id});
      if (m.delta_at_end != 0)
        events[m.tier].push_back(MemEvent{tl.tasks[id].end, m.delta_at_end, id});
    }
  }
  for (auto& [tier, evs] : events) {
    std::stable_sort(evs.begin(), evs.end(), [](const MemEvent& a, const MemEvent& b) {
      if (a.time != b.time) return a.time < b.time;
      if ((a.delta < 0) != (b.delta < 0)) return a.delta < 0;
      return a.id < b.id;
    });
    std::int64_t level = 0;
    std::int64_t peak = 0;
    for (const MemEvent& e : evs) {
      level += e.delta;
      peak = std::max(peak, level);
    }
    tl.peak_memory[tier] = peak;
  }
  return tl;
}

}  // namespace moesim
