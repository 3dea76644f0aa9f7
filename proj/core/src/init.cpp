#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>

#include "gridsync/engine.hpp"
#include "gridsync/errors.hpp"
#include "gridsync/scenario.hpp"

namespace gridsync {

void wire_model(ClosedLoopModel& model) {
  const int n_bus = static_cast<int>(model.net.n_buses());
  std::vector<int> machine_at(n_bus, -1);
  for (std::size_t g = 0; g < model.machines.size(); ++g) {
    model.machines[g].validate();
    const int bus = model.machines[g].bus;
    if (bus < 0 || bus >= n_bus) throw ValidationError("model: machine bus out of range");
    if (!model.net.is_generator_bus(bus))
      throw ValidationError("model: machine placed on a pure-load bus");
    if (machine_at[bus] >= 0)
      throw ValidationError("model: more than one machine on bus " + std::to_string(bus));
    machine_at[bus] = static_cast<int>(g);
    const bool bus_controllable = model.net.buses()[bus].kind == BusKind::ControllableGen;
    if (bus_controllable != model.machines[g].controllable)
      throw ValidationError("model: controllable flag disagrees with bus kind at bus " +
                            std::to_string(bus));
  }
  for (int i = 0; i < n_bus; ++i) {
    if (model.net.is_generator_bus(i) && machine_at[i] < 0)
      throw ValidationError("model: generator bus " + std::to_string(i) + " has no machine");
  }

  model.cg_slot.assign(model.machines.size(), -1);
  model.cg_machine.clear();
  std::vector<int> slot_of_bus(n_bus, -1);
  for (std::size_t g = 0; g < model.machines.size(); ++g) {
    if (!model.machines[g].controllable) continue;
    model.cg_slot[g] = static_cast<int>(model.cg_machine.size());
    slot_of_bus[model.machines[g].bus] = model.cg_slot[g];
    model.cg_machine.push_back(static_cast<int>(g));
  }
  if (model.costs.size() != model.cg_machine.size())
    throw ValidationError("model: need one cost function per controllable generator");
  for (const CostFunction& f : model.costs) {
    if (f.a <= 0.0) throw ValidationError("model: cost curvature must be positive (A2)");
  }
  double lipschitz_max = 0.0;
  for (const CostFunction& f : model.costs) lipschitz_max = std::max(lipschitz_max, f.a);
  if (!model.costs.empty()) model.gains.validate(lipschitz_max);

  std::vector<std::pair<int, int>> slot_edges;
  for (auto [a, b] : model.net.comm_edges())
    slot_edges.emplace_back(slot_of_bus[a], slot_of_bus[b]);
  model.comm = CommGraph(static_cast<int>(model.cg_machine.size()), std::move(slot_edges));

  if (model.variant == Variant::Agc && model.agc_shares.size() != model.cg_machine.size())
    throw ValidationError("model: need one AGC share per controllable generator");
}

namespace {

/// Lossless Newton power flow; generator buses hold V and P, the slack bus
/// absorbs the (exactly known) active balance and provides the angle
/// reference, pure-load buses are PQ.
struct PowerFlowResult {
  std::vector<double> theta;
  std::vector<double> v;
  std::vector<double> q_gen;  // machine reactive injection at generator buses
};

PowerFlowResult solve_power_flow(const NetworkModel& net, std::span<const double> p_inj,
                                 std::span<const double> v_set, int slack_bus) {
  const int n = static_cast<int>(net.n_buses());
  std::vector<int> th_index(n, -1), v_index(n, -1);
  int n_th = 0;
  for (int i = 0; i < n; ++i) {
    if (i != slack_bus) th_index[i] = n_th++;
  }
  int n_v = 0;
  for (int i = 0; i < n; ++i) {
    if (!net.is_generator_bus(i)) v_index[i] = n_v++;
  }
  const int dim = n_th + n_v;

  std::vector<double> theta(n, 0.0), v(n, 1.0);
  for (int i = 0; i < n; ++i) {
    if (net.is_generator_bus(i)) v[i] = v_set[i];
  }

  Eigen::VectorXd f(dim);
  Eigen::MatrixXd jac(dim, dim);

  auto assemble = [&]() {
    f.setZero();
    jac.setZero();
    for (int i = 0; i < n; ++i) {
      if (th_index[i] >= 0) f[th_index[i]] = p_inj[i] - net.buses()[i].p_load;
      if (v_index[i] >= 0) f[n_th + v_index[i]] = -net.buses()[i].q_load;
    }
    for (const Line& ln : net.lines()) {
      if (!ln.in_service) continue;
      const int a = ln.from, b = ln.to;
      const double dth = theta[a] - theta[b];
      const double sn = std::sin(dth), cs = std::cos(dth);
      const double p_ab = ln.b * v[a] * v[b] * sn;
      const double q_ab = ln.b * (v[a] * v[a] - v[a] * v[b] * cs);
      const double q_ba = ln.b * (v[b] * v[b] - v[a] * v[b] * cs);
      if (th_index[a] >= 0) f[th_index[a]] -= p_ab;
      if (th_index[b] >= 0) f[th_index[b]] += p_ab;
      if (v_index[a] >= 0) f[n_th + v_index[a]] -= q_ab;
      if (v_index[b] >= 0) f[n_th + v_index[b]] -= q_ba;

      const double dp_dth = ln.b * v[a] * v[b] * cs;
      const double dp_dva = ln.b * v[b] * sn;
      const double dp_dvb = ln.b * v[a] * sn;
      if (th_index[a] >= 0) {
        if (th_index[a] >= 0) jac(th_index[a], th_index[a]) -= dp_dth;
        if (th_index[b] >= 0) jac(th_index[a], th_index[b]) += dp_dth;
        if (v_index[a] >= 0) jac(th_index[a], n_th + v_index[a]) -= dp_dva;
        if (v_index[b] >= 0) jac(th_index[a], n_th + v_index[b]) -= dp_dvb;
      }
      if (th_index[b] >= 0) {
        if (th_index[a] >= 0) jac(th_index[b], th_index[a]) += dp_dth;
        if (th_index[b] >= 0) jac(th_index[b], th_index[b]) -= dp_dth;
        if (v_index[a] >= 0) jac(th_index[b], n_th + v_index[a]) += dp_dva;
        if (v_index[b] >= 0) jac(th_index[b], n_th + v_index[b]) += dp_dvb;
      }
      const double dqab_dth = ln.b * v[a] * v[b] * sn;
      const double dqab_dva = ln.b * (2.0 * v[a] - v[b] * cs);
      const double dqab_dvb = -ln.b * v[a] * cs;
      if (v_index[a] >= 0) {
        const int r = n_th + v_index[a];
        if (th_index[a] >= 0) jac(r, th_index[a]) -= dqab_dth;
        if (th_index[b] >= 0) jac(r, th_index[b]) += dqab_dth;
        if (v_index[a] >= 0) jac(r, n_th + v_index[a]) -= dqab_dva;
        if (v_index[b] >= 0) jac(r, n_th + v_index[b]) -= dqab_dvb;
      }
      const double dqba_dth = -ln.b * v[a] * v[b] * sn;
      const double dqba_dva = -ln.b * v[b] * cs;
      const double dqba_dvb = ln.b * (2.0 * v[b] - v[a] * cs);
      if (v_index[b] >= 0) {
        const int r = n_th + v_index[b];
        if (th_index[a] >= 0) jac(r, th_index[a]) -= dqba_dth;
        if (th_index[b] >= 0) jac(r, th_index[b]) += dqba_dth;
        if (v_index[a] >= 0) jac(r, n_th + v_index[a]) -= dqba_dva;
        if (v_index[b] >= 0) jac(r, n_th + v_index[b]) -= dqba_dvb;
      }
    }
  };

  bool done = false;
  for (int iter = 0; iter < 60; ++iter) {
    assemble();
    if (f.lpNorm<Eigen::Infinity>() < 1e-13) {
      done = true;
      break;
    }
    const Eigen::VectorXd dx = jac.partialPivLu().solve(-f);
    for (int i = 0; i < n; ++i) {
      if (th_index[i] >= 0) theta[i] += dx[th_index[i]];
      if (v_index[i] >= 0) v[i] += dx[n_th + v_index[i]];
    }
  }
  if (!done) throw NonConvergence("initialization power flow did not converge");

  // machine reactive output = bus reactive load + net line export
  PowerFlowResult out;
  out.theta = theta;
  out.v = v;
  out.q_gen.assign(n, 0.0);
  for (int i = 0; i < n; ++i) out.q_gen[i] = net.buses()[i].q_load;
  for (const Line& ln : net.lines()) {
    if (!ln.in_service) continue;
    const double dth = theta[ln.from] - theta[ln.to];
    const double cs = std::cos(dth);
    out.q_gen[ln.from] += ln.b * (v[ln.from] * v[ln.from] - v[ln.from] * v[ln.to] * cs);
    out.q_gen[ln.to] += ln.b * (v[ln.to] * v[ln.to] - v[ln.from] * v[ln.to] * cs);
  }
  return out;
}

}  // namespace

InitialCondition initialize_equilibrium(const Scenario& sc) {
  InitialCondition out{sc.model, SystemState{}};
  ClosedLoopModel& model = out.model;
  const NetworkModel& net = model.net;
  const int n_bus = static_cast<int>(net.n_buses());
  const int n_mach = static_cast<int>(model.machines.size());

  std::vector<double> p_set = sc.dispatch_target_pu;
  if (static_cast<int>(p_set.size()) != n_mach)
    throw ValidationError("init: need one dispatch target per machine");
  if (sc.cg_dispatch_total_pu.has_value()) {
    std::vector<std::pair<double, double>> limits;
    for (int g : model.cg_machine)
      limits.emplace_back(model.machines[g].p_min, model.machines[g].p_max);
    const DispatchProblem prob(model.costs, limits, *sc.cg_dispatch_total_pu);
    const DispatchSolution sol = solve_sfc(prob);
    for (std::size_t c = 0; c < model.cg_machine.size(); ++c)
      p_set[model.cg_machine[c]] = sol.pg[c];
  }

  // lossless balance: the slack machine covers whatever the others do not
  double total_load = 0.0;
  for (const Bus& b : net.buses()) total_load += b.p_load;
  double others = 0.0;
  for (int g = 0; g < n_mach; ++g) {
    if (g != sc.slack_machine) others += p_set[g];
  }
  p_set[sc.slack_machine] = total_load - others;

  std::vector<double> p_inj(n_bus, 0.0), v_set(n_bus, 1.0);
  for (int g = 0; g < n_mach; ++g) {
    p_inj[model.machines[g].bus] = p_set[g];
    v_set[model.machines[g].bus] = sc.v_target[g];
  }
  const int slack_bus = model.machines[sc.slack_machine].bus;
  const PowerFlowResult pf = solve_power_flow(net, p_inj, v_set, slack_bus);

  SystemState& s = out.state;
  s.time = 0.0;
  s.algebraic.theta = pf.theta;
  s.algebraic.v = pf.v;
  s.algebraic.omega_tilde.assign(n_bus, 0.0);
  s.machines.resize(n_mach);
  for (int g = 0; g < n_mach; ++g) {
    MachineParams& p = model.machines[g];
    const int bus = p.bus;
    const double v = pf.v[bus];
    // P_e and Q_e fix the rotor angle and internal voltage
    const double sin_part = p_set[g];                          // (E' V / x') sin(eta)
    const double cos_part = pf.q_gen[bus] + v * v / p.x_dp;    // (E' V / x') cos(eta)
    const double eta = std::atan2(sin_part, cos_part);
    const double eqp = p.x_dp * std::hypot(sin_part, cos_part) / v;
    MachineState& ms = s.machines[g];
    ms.delta = pf.theta[bus] + eta;
    ms.omega = 0.0;
    ms.eqp = eqp;
    ms.pg = p_set[g];
    ms.ef = internal_voltage(p, ms, v, pf.theta[bus]);
    p.omega_ref = 0.0;
    p.pg_ref = p_set[g];
    p.eq_ref = ms.ef;  // E_q equals E_f at equilibrium
    p.ef_ref = ms.ef;
  }

  s.controllers.resize(model.cg_machine.size());
  for (std::size_t c = 0; c < model.cg_machine.size(); ++c) {
    const int g = model.cg_machine[c];
    s.controllers[c].mu = -model.costs[c].marginal(s.machines[g].pg);
    s.controllers[c].gamma_minus = 0.0;
    s.controllers[c].gamma_plus = 0.0;
    s.controllers[c].p_hat = s.machines[g].pg;
  }
  s.z.assign(model.comm.edges().size(), 0.0);
  s.agc.assign(model.cg_machine.size(), 0.0);
  return out;
}

}  // namespace gridsync
