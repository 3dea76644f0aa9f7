#pragma once

#include <string>
#include <vector>

#include "gridsync/scenario.hpp"

namespace gridsync::testing {

/// Four-bus fixture: two controllable generators and one droop generator
/// feeding a shared load bus, one comm edge between the controllables.
/// Starts at the cost-optimal operating point.
inline Scenario mini_scenario(Variant variant = Variant::Measured) {
  Scenario sc;
  sc.name = "mini";
  sc.base_mva = 100.0;
  sc.bus_ids = {1, 2, 3, 4};

  std::vector<Bus> buses(4);
  buses[0].kind = BusKind::ControllableGen;
  buses[1].kind = BusKind::ControllableGen;
  buses[2].kind = BusKind::UncontrollableGen;
  buses[3].kind = BusKind::PureLoad;
  buses[3].p_load = 1.5;
  buses[3].q_load = 0.3;
  std::vector<Line> lines{{0, 3, 10.0, true}, {1, 3, 10.0, true}, {2, 3, 10.0, true}};
  sc.model.net = NetworkModel(buses, lines, {{0, 1}}, sc.base_mva);

  auto make_machine = [](int bus, bool controllable) {
    MachineParams p;
    p.bus = bus;
    p.m = 0.2;
    p.d = 0.1;
    p.t_turb = 2.0;
    p.t_d0p = 6.0;
    p.x_d = 0.3;
    p.x_dp = 0.1;
    p.controllable = controllable;
    p.k_omega = 1.0;
    p.k_e = 1.0;
    if (controllable) {
      p.p_min = 0.0;
      p.p_max = 1.2;
    }
    return p;
  };
  sc.model.machines = {make_machine(0, true), make_machine(1, true), make_machine(2, false)};
  sc.model.costs = {{1.0, 0.5}, {2.0, 0.2}};
  sc.model.gains = {0.5, 1.0, 1.0, 1.0, 1.0};
  sc.model.variant = variant;
  sc.model.agc_kf = 5.0;
  sc.model.agc_shares = {0.5, 0.5};
  wire_model(sc.model);

  sc.dispatch_target_pu = {0.0, 0.0, 0.5};  // controllables filled from the oracle
  sc.cg_dispatch_total_pu = 1.0;
  sc.v_target = {1.0, 1.0, 1.0};
  sc.slack_machine = 2;

  sc.sim.dt = 0.002;
  sc.sim.t_end = 60.0;
  sc.sim.record_dt = 0.02;
  sc.sim.steady_window = 5.0;
  sc.sim.steady_tol = 1e-6;

  sc.outputs.write_csv = false;
  sc.outputs.write_summary = false;
  sc.effective_config = "{}";
  return sc;
}

inline Event load_step(double at, int bus, double dp, double dq = 0.0) {
  Event ev;
  ev.kind = Event::Kind::LoadStep;
  ev.at = at;
  ev.bus = bus;
  ev.dp = dp;
  ev.dq = dq;
  return ev;
}

inline std::string scenario_path(const std::string& file) {
  return std::string(GRIDSYNC_SCENARIO_DIR) + "/" + file;
}

}  // namespace gridsync::testing
