#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "moesim/scenario.hpp"
#include "moesim/sim_engine.hpp"

namespace moesim {

struct Report {
  nlohmann::json scenario_echo;
  nlohmann::json metrics = nlohmann::json::object();
  nlohmann::json verdicts = nlohmann::json::object();
  int exit_code = 0;  // 0 ok, 1 infeasible plan, 2 config error
  // One-row summary table (config columns then metric columns), human output
  // only; not part of the report JSON.
  std::vector<std::pair<std::string, std::string>> summary;
};

struct ScenarioRun {
  Report report;
  std::optional<Timeline> timeline;  // present for simulating modes
};

// Deterministic: identical scenarios yield byte-identical report JSON.
ScenarioRun run_scenario(const Scenario& scenario);

nlohmann::json report_to_json(const Report& report);

// Fixed-width key/value tables for terminal output.
std::string report_human(const Report& report);

}  // namespace moesim
