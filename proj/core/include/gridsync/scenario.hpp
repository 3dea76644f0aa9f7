#pragma once

#include <optional>
#include <string>
#include <vector>

#include "gridsync/engine.hpp"

namespace gridsync {

struct OutputConfig {
  std::string dir = "out";
  bool write_csv = true;
  bool write_summary = true;
  std::vector<std::string> plots;  // frequency, pg, voltage, mu, z
};

/// A fully validated scenario: the closed-loop model before reference values
/// are filled in, the power-flow initialization targets, the event list and
/// the integration settings. parse_scenario builds one from a JSON document.
struct Scenario {
  std::string name;
  double base_mva = 100.0;
  ClosedLoopModel model;
  std::vector<int> bus_ids;  // external bus labels, one per bus

  // initialization targets, one entry per machine (bus order)
  std::vector<double> dispatch_target_pu;  // slack entry is recomputed from the balance
  std::vector<double> v_target;
  int slack_machine = 0;
  // when set, controllable dispatch targets come from the dispatch oracle
  std::optional<double> cg_dispatch_total_pu;

  std::vector<Event> events;
  SimSettings sim;
  OutputConfig outputs;

  /// Full configuration with every default applied, serialized JSON.
  std::string effective_config;
};

Scenario parse_scenario(const std::string& path);
Scenario parse_scenario_text(const std::string& text, const std::string& origin = "<memory>");

/// Power-flow initialization: solves the pre-disturbance operating point,
/// backs out machine internal states and reference values, and returns the
/// model with references filled plus the equilibrium state.
struct InitialCondition {
  ClosedLoopModel model;
  SystemState state;
};
InitialCondition initialize_equilibrium(const Scenario& sc);

}  // namespace gridsync
