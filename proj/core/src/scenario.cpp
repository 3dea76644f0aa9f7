#include "gridsync/scenario.hpp"

#include "json.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include "gridsync/errors.hpp"

namespace gridsync {

using nlohmann::json;

namespace {

const json& require(const json& obj, const char* key, const std::string& path) {
  if (!obj.is_object() || !obj.contains(key))
    throw SchemaError("scenario: missing field " + path + "." + key);
  return obj.at(key);
}

double require_number(const json& obj, const char* key, const std::string& path) {
  const json& v = require(obj, key, path);
  if (!v.is_number()) throw SchemaError("scenario: field " + path + "." + key + " must be a number");
  return v.get<double>();
}

double number_or(const json& obj, const char* key, double fallback) {
  if (!obj.is_object() || !obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_number()) throw SchemaError(std::string("scenario: field ") + key + " must be a number");
  return v.get<double>();
}

bool bool_or(const json& obj, const char* key, bool fallback) {
  if (!obj.is_object() || !obj.contains(key)) return fallback;
  return obj.at(key).get<bool>();
}

Variant parse_variant(const std::string& name) {
  if (name == "oracle") return Variant::Oracle;
  if (name == "measured") return Variant::Measured;
  if (name == "agc") return Variant::Agc;
  throw SchemaError("scenario: controller.variant must be oracle | measured | agc");
}

}  // namespace

Scenario parse_scenario_text(const std::string& text, const std::string& origin) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw SchemaError("scenario: " + origin + " is not valid JSON: " + e.what());
  }

  Scenario sc;
  sc.name = doc.value("name", origin);
  sc.base_mva = number_or(doc, "base_mva", 100.0);
  const double base = sc.base_mva;

  const json& net_doc = require(doc, "network", "$");
  const json& buses_doc = require(net_doc, "buses", "network");
  if (!buses_doc.is_array() || buses_doc.empty())
    throw SchemaError("scenario: network.buses must be a nonempty array");

  std::map<int, int> index_of;  // external id -> internal index
  std::vector<Bus> buses;
  for (std::size_t i = 0; i < buses_doc.size(); ++i) {
    const std::string path = "network.buses[" + std::to_string(i) + "]";
    const json& b = buses_doc[i];
    const int id = static_cast<int>(require_number(b, "id", path));
    if (index_of.count(id)) throw SchemaError("scenario: duplicate bus id " + std::to_string(id));
    index_of[id] = static_cast<int>(buses.size());
    sc.bus_ids.push_back(id);
    Bus bus;
    bus.p_load = number_or(b, "p_mw", 0.0) / base;
    bus.q_load = number_or(b, "q_mvar", 0.0) / base;
    bus.d_load = number_or(b, "d_load", 1.0);
    bus.kind = BusKind::PureLoad;  // fixed up from the machine list below
    buses.push_back(bus);
  }
  auto bus_index = [&](int id, const std::string& path) {
    auto it = index_of.find(id);
    if (it == index_of.end())
      throw SchemaError("scenario: " + path + " references unknown bus " + std::to_string(id));
    return it->second;
  };

  const json& machines_doc = require(doc, "machines", "$");
  std::vector<MachineParams> machines;
  std::vector<double> dispatch_pu, v_set;
  int slack = -1;
  for (std::size_t g = 0; g < machines_doc.size(); ++g) {
    const std::string path = "machines[" + std::to_string(g) + "]";
    const json& m = machines_doc[g];
    MachineParams p;
    p.bus = bus_index(static_cast<int>(require_number(m, "bus", path)), path + ".bus");
    p.m = require_number(m, "m", path);
    p.d = require_number(m, "d", path);
    p.t_turb = require_number(m, "t_turb", path);
    p.t_d0p = require_number(m, "t_d0p", path);
    p.x_d = require_number(m, "x_d", path);
    p.x_dp = require_number(m, "x_dp", path);
    p.controllable = bool_or(m, "controllable", false);
    p.k_omega = number_or(m, "k_omega", 1.0);
    p.k_e = number_or(m, "k_e", 1.0);
    if (p.controllable) {
      p.p_min = require_number(m, "p_min_mw", path) / base;
      p.p_max = require_number(m, "p_max_mw", path) / base;
    }
    buses[p.bus].kind = p.controllable ? BusKind::ControllableGen : BusKind::UncontrollableGen;
    machines.push_back(p);
    dispatch_pu.push_back(number_or(m, "dispatch_mw", 0.0) / base);
    v_set.push_back(number_or(m, "v_set", 1.0));
    if (bool_or(m, "slack", false)) {
      if (slack >= 0) throw SchemaError("scenario: more than one slack machine");
      slack = static_cast<int>(g);
    }
  }
  if (machines.empty()) throw SchemaError("scenario: machines must be nonempty");
  if (slack < 0) throw SchemaError("scenario: exactly one machine must set slack=true");
  sc.slack_machine = slack;
  sc.dispatch_target_pu = dispatch_pu;
  sc.v_target = v_set;

  std::vector<Line> lines;
  const json& lines_doc = require(net_doc, "lines", "network");
  for (std::size_t k = 0; k < lines_doc.size(); ++k) {
    const std::string path = "network.lines[" + std::to_string(k) + "]";
    const json& l = lines_doc[k];
    Line ln;
    ln.from = bus_index(static_cast<int>(require_number(l, "from", path)), path + ".from");
    ln.to = bus_index(static_cast<int>(require_number(l, "to", path)), path + ".to");
    if (l.contains("b")) {
      ln.b = require_number(l, "b", path);
    } else {
      const double x = require_number(l, "x", path);
      if (x <= 0.0) throw SchemaError("scenario: " + path + ".x must be positive");
      ln.b = 1.0 / x;
    }
    ln.in_service = bool_or(l, "in_service", true);
    lines.push_back(ln);
  }

  std::vector<std::pair<int, int>> comm;
  if (net_doc.contains("comm_edges")) {
    const json& ce = net_doc.at("comm_edges");
    for (std::size_t k = 0; k < ce.size(); ++k) {
      const std::string path = "network.comm_edges[" + std::to_string(k) + "]";
      if (!ce[k].is_array() || ce[k].size() != 2)
        throw SchemaError("scenario: " + path + " must be a pair of bus ids");
      comm.emplace_back(bus_index(ce[k][0].get<int>(), path),
                        bus_index(ce[k][1].get<int>(), path));
    }
  }

  sc.model.net = NetworkModel(std::move(buses), std::move(lines), std::move(comm), base);
  sc.model.machines = std::move(machines);

  const json& ctrl = require(doc, "controller", "$");
  sc.model.variant = parse_variant(ctrl.value("variant", "measured"));
  const json gains_doc = ctrl.contains("gains") ? ctrl.at("gains") : json::object();
  sc.model.gains.k_pg = number_or(gains_doc, "k_pg", 1.0);
  sc.model.gains.k_mu = number_or(gains_doc, "k_mu", 1.0);
  sc.model.gains.k_z = number_or(gains_doc, "k_z", 1.0);
  sc.model.gains.k_gamma = number_or(gains_doc, "k_gamma", 1.0);
  sc.model.gains.tau = number_or(gains_doc, "tau", 1.0);

  // cost table, MW-based coefficients as published; converted to per-unit
  std::map<int, CostFunction> cost_by_bus;
  if (ctrl.contains("costs")) {
    const json& costs_doc = ctrl.at("costs");
    for (std::size_t k = 0; k < costs_doc.size(); ++k) {
      const std::string path = "controller.costs[" + std::to_string(k) + "]";
      const json& c = costs_doc[k];
      const int bus = bus_index(static_cast<int>(require_number(c, "bus", path)), path + ".bus");
      CostFunction f;
      f.a = require_number(c, "a", path) * base * base;
      f.b = require_number(c, "b", path) * base;
      cost_by_bus[bus] = f;
    }
  }
  for (const MachineParams& p : sc.model.machines) {
    if (!p.controllable) continue;
    auto it = cost_by_bus.find(p.bus);
    if (it == cost_by_bus.end())
      throw SchemaError("scenario: no cost entry for controllable generator at bus " +
                        std::to_string(sc.bus_ids[p.bus]));
    sc.model.costs.push_back(it->second);
  }

  if (ctrl.contains("cg_dispatch_total_mw"))
    sc.cg_dispatch_total_pu = require_number(ctrl, "cg_dispatch_total_mw", "controller") / base;

  if (ctrl.contains("agc")) {
    const json& agc = ctrl.at("agc");
    sc.model.agc_kf = require_number(agc, "k_f_mw_per_hz", "controller.agc") /
                      (2.0 * std::numbers::pi * base);  // to p.u. per rad/s
    const json& shares = require(agc, "shares", "controller.agc");
    for (const MachineParams& p : sc.model.machines) {
      if (!p.controllable) continue;
      const std::string key = std::to_string(sc.bus_ids[p.bus]);
      if (!shares.contains(key))
        throw SchemaError("scenario: controller.agc.shares missing bus " + key);
      sc.model.agc_shares.push_back(shares.at(key).get<double>());
    }
  }

  wire_model(sc.model);

  if (doc.contains("events")) {
    const json& evs = doc.at("events");
    for (std::size_t k = 0; k < evs.size(); ++k) {
      const std::string path = "events[" + std::to_string(k) + "]";
      const json& e = evs[k];
      Event ev;
      ev.at = require_number(e, "at", path);
      if (ev.at < 0.0) throw SchemaError("scenario: " + path + ".at must be nonnegative");
      const std::string kind = require(e, "kind", path).get<std::string>();
      if (kind == "load_step") {
        ev.kind = Event::Kind::LoadStep;
        ev.bus = bus_index(static_cast<int>(require_number(e, "bus", path)), path + ".bus");
        ev.dp = number_or(e, "dp_mw", 0.0) / base;
        ev.dq = number_or(e, "dq_mvar", 0.0) / base;
      } else if (kind == "generator_trip") {
        ev.kind = Event::Kind::GeneratorTrip;
        ev.bus = bus_index(static_cast<int>(require_number(e, "bus", path)), path + ".bus");
      } else if (kind == "line_trip" || kind == "line_reclose") {
        ev.kind = kind == "line_trip" ? Event::Kind::LineTrip : Event::Kind::LineReclose;
        ev.from = bus_index(static_cast<int>(require_number(e, "from", path)), path + ".from");
        ev.to = bus_index(static_cast<int>(require_number(e, "to", path)), path + ".to");
      } else {
        throw SchemaError("scenario: " + path + ".kind unknown: " + kind);
      }
      sc.events.push_back(ev);
    }
  }
  std::stable_sort(sc.events.begin(), sc.events.end(),
                   [](const Event& a, const Event& b) { return a.at < b.at; });
  // every reclose needs a matching earlier trip
  std::set<std::pair<int, int>> open;
  for (const Event& ev : sc.events) {
    if (ev.kind == Event::Kind::LineTrip) {
      open.insert(std::minmax(ev.from, ev.to));
    } else if (ev.kind == Event::Kind::LineReclose) {
      const auto key = std::minmax(ev.from, ev.to);
      if (!open.count(key))
        throw SchemaError("scenario: line reclose without a preceding trip");
      open.erase(key);
    }
  }

  const json sim_doc = doc.contains("sim") ? doc.at("sim") : json::object();
  sc.sim.dt = number_or(sim_doc, "dt", 0.002);
  sc.sim.t_end = number_or(sim_doc, "t_end", 60.0);
  sc.sim.record_dt = number_or(sim_doc, "record_dt", 0.02);
  sc.sim.steady_window = number_or(sim_doc, "steady_window", 5.0);
  sc.sim.steady_tol = number_or(sim_doc, "steady_tol", 1e-6);
  sc.sim.omega_max = number_or(sim_doc, "omega_max", 10.0);
  sc.sim.v_min = number_or(sim_doc, "v_min", 0.2);
  sc.model.vopts.tol_q = number_or(sim_doc, "tol_q", 1e-9);
  if (sc.sim.dt <= 0.0 || sc.sim.t_end <= 0.0 || sc.sim.record_dt <= 0.0)
    throw SchemaError("scenario: sim.dt, sim.t_end and sim.record_dt must be positive");

  const json out_doc = doc.contains("outputs") ? doc.at("outputs") : json::object();
  sc.outputs.dir = out_doc.value("dir", "out");
  sc.outputs.write_csv = bool_or(out_doc, "csv", true);
  sc.outputs.write_summary = bool_or(out_doc, "summary", true);
  if (out_doc.contains("plots")) {
    for (const auto& p : out_doc.at("plots")) sc.outputs.plots.push_back(p.get<std::string>());
  } else {
    sc.outputs.plots = {"frequency", "pg", "voltage", "mu", "z"};
  }

  // echo the whole configuration, defaults included
  json eff = doc;
  eff["name"] = sc.name;
  eff["base_mva"] = sc.base_mva;
  eff["controller"]["variant"] = variant_name(sc.model.variant);
  eff["controller"]["gains"] = {{"k_pg", sc.model.gains.k_pg},
                                {"k_mu", sc.model.gains.k_mu},
                                {"k_z", sc.model.gains.k_z},
                                {"k_gamma", sc.model.gains.k_gamma},
                                {"tau", sc.model.gains.tau}};
  eff["sim"] = {{"dt", sc.sim.dt},
                {"t_end", sc.sim.t_end},
                {"record_dt", sc.sim.record_dt},
                {"steady_window", sc.sim.steady_window},
                {"steady_tol", sc.sim.steady_tol},
                {"omega_max", sc.sim.omega_max},
                {"v_min", sc.sim.v_min},
                {"tol_q", sc.model.vopts.tol_q}};
  eff["outputs"] = {{"dir", sc.outputs.dir},
                    {"csv", sc.outputs.write_csv},
                    {"summary", sc.outputs.write_summary},
                    {"plots", sc.outputs.plots}};
  for (std::size_t g = 0; g < sc.model.machines.size(); ++g) {
    eff["machines"][g]["k_omega"] = sc.model.machines[g].k_omega;
    eff["machines"][g]["k_e"] = sc.model.machines[g].k_e;
    eff["machines"][g]["dispatch_mw"] = sc.dispatch_target_pu[g] * base;
    eff["machines"][g]["v_set"] = sc.v_target[g];
    eff["machines"][g]["slack"] = (static_cast<int>(g) == sc.slack_machine);
  }
  sc.effective_config = eff.dump(2);
  return sc;
}

Scenario parse_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("scenario: cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_scenario_text(buf.str(), path);
}

}  // namespace gridsync
