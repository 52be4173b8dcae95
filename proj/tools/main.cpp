// Scenario-driven front end: load a scenario JSON, run the planner or
// simulator it selects, and emit machine- and human-readable reports.
//
// Exit codes: 0 success, 1 infeasible plan, 2 configuration error.

#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "moesim/report.hpp"
#include "moesim/scenario.hpp"
#include "moesim/trace_export.hpp"

int main(int argc, char** argv) {
  CLI::App app{"MoE heterogeneous-storage scheduling simulator"};

  std::string scenario_path;
  std::string mode_override;
  std::string out_path;
  std::string trace_path;
  std::optional<std::uint64_t> seed_override;
  bool quiet = false;

  app.add_option("--scenario", scenario_path, "Scenario JSON file")->required();
  app.add_option("--mode", mode_override, "Override the scenario's mode");
  app.add_option("--out", out_path, "Write the report JSON to this path");
  app.add_option("--trace", trace_path, "Write a Chrome trace-event JSON to this path");
  app.add_option("--seed", seed_override, "Override the workload seed");
  app.add_flag("--quiet", quiet, "Suppress terminal output");

  CLI11_PARSE(app, argc, argv);

  try {
    moesim::Scenario scenario = moesim::load_scenario(scenario_path);
    if (!mode_override.empty()) scenario.mode = moesim::mode_from_name(mode_override);
    if (seed_override) {
      if (!scenario.workload) scenario.workload.emplace();
      scenario.workload->seed = *seed_override;
      scenario.workload->trace_file.reset();
    }

    const moesim::ScenarioRun run = moesim::run_scenario(scenario);

    const std::string report_json = moesim::report_to_json(run.report).dump(2) + "\n";
    if (!out_path.empty()) {
      std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
      if (!out) {
        std::cerr << "error: cannot write report to '" << out_path << "'\n";
        return 2;
      }
      out << report_json;
    }
    if (!trace_path.empty()) {
      if (run.timeline) {
        moesim::export_trace(*run.timeline, trace_path);
      } else if (!quiet) {
        std::cerr << "note: mode '" << moesim::mode_name(scenario.mode)
                  << "' produces no timeline; --trace skipped\n";
      }
    }
    if (!quiet) {
      std::cout << moesim::report_human(run.report);
      if (out_path.empty()) std::cout << "\n" << report_json;
    }
    return run.report.exit_code;
  } catch (const moesim::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
