#pragma once

#include <string>

#include <nlohmann/json_fwd.hpp>

#include "moesim/sim_engine.hpp"

namespace moesim {

// Plain structural form: tasks with start/end, per-stream stats, peaks.
nlohmann::json timeline_to_json(const Timeline& timeline);

// Chrome trace-event JSON ("catapult" format): one complete ("X") event per
// task, one row per stream. Loads directly into chrome://tracing or Perfetto.
nlohmann::json timeline_to_trace_json(const Timeline& timeline);

// Writes timeline_to_trace_json() to `path`; byte-identical output for
// identical timelines. Throws ConfigError when the path is unwritable.
void export_trace(const Timeline& timeline, const std::string& path);

// Structural check of an exported trace document; returns an error message
// naming the offending field, or empty when valid.
std::string validate_trace_json(const nlohmann::json& doc);

}  // namespace moesim
