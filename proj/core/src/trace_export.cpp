#include "moesim/trace_export.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

namespace moesim {

nlohmann::json timeline_to_json(const Timeline& timeline) {
  nlohmann::json tasks = nlohmann::json::array();
  for (const TaskRecord& t : timeline.tasks) {
    tasks.push_back({{"id", t.id},
                     {"label", t.label},
                     {"stream", t.stream},
                     {"start_ns", t.start},
                     {"end_ns", t.end}});
  }
  nlohmann::json streams = nlohmann::json::object();
  for (const auto& [name, st] : timeline.streams) {
    streams[name] = {{"busy_ns", st.busy}, {"stall_ns", st.stall}};
  }
  return {{"makespan_ns", timeline.makespan},
          {"tasks", std::move(tasks)},
          {"streams", std::move(streams)},
          {"peak_memory", timeline.peak_memory}};
}

nlohmann::json timeline_to_trace_json(const Timeline& timeline) {
  nlohmann::json events = nlohmann::json::array();

  std::map<std::string, int> tids;
  for (const auto& [name, _] : timeline.streams) {
    const int tid = static_cast<int>(tids.size());
    tids[name] = tid;
    events.push_back({{"name", "thread_name"},
                      {"ph", "M"},
                      {"pid", 1},
                      {"tid", tid},
                      {"args", {{"name", name}}}});
  }
  for (const TaskRecord& t : timeline.tasks) {
    events.push_back({{"name", t.label},
                      {"ph", "X"},
                      {"pid", 1},
                      {"tid", tids.at(t.stream)},
                      {"ts", static_cast<double>(t.start) / 1000.0},
                      {"dur", static_cast<double>(t.end - t.start) / 1000.0},
                      {"args", {{"task_id", t.id}}}});
  }
  return {{"traceEvents", std::move(events)}, {"displayTimeUnit", "ns"}};
}

void export_trace(const Timeline& timeline, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("trace: cannot open '" + path + "' for writing");
  out << timeline_to_trace_json(timeline).dump(2) << '\n';
  if (!out) throw ConfigError("trace: write to '" + path + "' failed");
}

std::string validate_trace_json(const nlohmann::json& doc) {
  if (!doc.is_object()) return "trace: expected object";
  if (!doc.contains("traceEvents")) return "traceEvents: missing field";
  if (!doc.at("traceEvents").is_array()) return "traceEvents: expected array";
  std::size_t i = 0;
  for (const auto& ev : doc.at("traceEvents")) {
    const std::string at = "traceEvents[" + std::to_string(i) + "]";
    if (!ev.is_object()) return at + ": expected object";
    for (const char* key : {"name", "ph", "pid", "tid"}) {
      if (!ev.contains(key)) return at + "." + key + ": missing field";
    }
    const std::string ph = ev.at("ph").get<std::string>();
    if (ph == "X") {
      for (const char* key : {"ts", "dur"}) {
        if (!ev.contains(key) || !ev.at(key).is_number())
          return at + "." + key + ": expected number";
      }
    }
    ++i;
  }
  return {};
}

}  // namespace moesim
