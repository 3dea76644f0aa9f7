#include "gridsync/engine.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

#include "gridsync/errors.hpp"
#include "gridsync/scenario.hpp"

namespace gridsync {

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::Oracle: return "oracle";
    case Variant::Measured: return "measured";
    case Variant::Agc: return "agc";
  }
  return "?";
}

int ClosedLoopModel::n_online_cg() const {
  int n = 0;
  for (int g : cg_machine) {
    if (machine_online(g)) ++n;
  }
  return n;
}

namespace {

struct Deriv {
  std::vector<MachineState> mach;
  std::vector<double> theta;
  std::vector<double> mu, gm, gp;
  std::vector<double> z;
  std::vector<double> agc;

  explicit Deriv(const ClosedLoopModel& m)
      : mach(m.machines.size()),
        theta(m.net.n_buses(), 0.0),
        mu(m.cg_machine.size(), 0.0),
        gm(m.cg_machine.size(), 0.0),
        gp(m.cg_machine.size(), 0.0),
        z(m.comm.edges().size(), 0.0),
        agc(m.cg_machine.size(), 0.0) {}

  double max_abs() const {
    double mx = 0.0;
    auto upd = [&mx](double x) { mx = std::max(mx, std::abs(x)); };
    for (const MachineState& s : mach) {
      upd(s.delta);
      upd(s.omega);
      upd(s.eqp);
      upd(s.pg);
      upd(s.ef);
    }
    for (double x : theta) upd(x);
    for (double x : mu) upd(x);
    for (double x : gm) upd(x);
    for (double x : gp) upd(x);
    for (double x : z) upd(x);
    for (double x : agc) upd(x);
    return mx;
  }
};

struct EvalAux {
  std::vector<double> p_e, e_q, omega_dot;  // per machine
};

std::vector<GenSource> machine_sources(const ClosedLoopModel& model, const SystemState& s) {
  std::vector<GenSource> src(model.machines.size());
  for (std::size_t g = 0; g < model.machines.size(); ++g) {
    const MachineParams& p = model.machines[g];
    src[g] = {p.bus, s.machines[g].eqp, s.machines[g].delta, p.x_dp,
              model.machine_online(static_cast<int>(g))};
  }
  return src;
}

/// Refreshes the algebraic caches (V, omega~) of `s` and returns the per-bus
/// machine injections used on the way.
std::vector<PerBusInjection> refresh_algebraic(const ClosedLoopModel& model, SystemState& s) {
  const auto sources = machine_sources(model, s);
  s.algebraic.v = solve_voltages(model.net, s.algebraic.theta, sources, s.algebraic.v,
                                 model.vopts);
  std::vector<PerBusInjection> inj(model.net.n_buses());
  for (std::size_t g = 0; g < model.machines.size(); ++g) {
    if (!model.machine_online(static_cast<int>(g))) continue;
    const MachineParams& p = model.machines[g];
    const ElectricalPower ep = electrical_power(p, s.machines[g], s.algebraic.v[p.bus],
                                                s.algebraic.theta[p.bus]);
    inj[p.bus].p_e += ep.p_e;
    inj[p.bus].q_e += ep.q_e;
  }
  const Mismatch mis = bus_power_mismatch(model.net, s.algebraic, inj);
  s.algebraic.omega_tilde = bus_frequencies(model.net, mis.dp);
  return inj;
}

double coi_frequency(const ClosedLoopModel& model, const SystemState& s) {
  double num = 0.0, den = 0.0;
  for (std::size_t g = 0; g < model.machines.size(); ++g) {
    if (!model.machine_online(static_cast<int>(g))) continue;
    num += model.machines[g].m * s.machines[g].omega;
    den += model.machines[g].m;
  }
  return den > 0.0 ? num / den : 0.0;
}

void eval_derivative(const ClosedLoopModel& model, SystemState& s, Deriv& d, EvalAux& aux) {
  const int n_mach = static_cast<int>(model.machines.size());
  aux.p_e.assign(n_mach, 0.0);
  aux.e_q.assign(n_mach, 0.0);
  aux.omega_dot.assign(n_mach, 0.0);

  refresh_algebraic(model, s);
  d.theta = s.algebraic.omega_tilde;

  // agc command shared by all units this stage
  std::vector<double> agc_cmd;
  if (model.variant == Variant::Agc) {
    double share_sum = 0.0;
    std::vector<double> shares(model.cg_machine.size(), 0.0);
    for (std::size_t c = 0; c < model.cg_machine.size(); ++c) {
      if (model.machine_online(model.cg_machine[c])) {
        shares[c] = model.agc_shares[c];
        share_sum += shares[c];
      }
    }
    if (share_sum > 0.0) {
      for (double& r : shares) r /= share_sum;
      agc_cmd = agc_allocate(model.agc_kf, coi_frequency(model, s), shares);
    } else {
      agc_cmd.assign(model.cg_machine.size(), 0.0);
    }
  }

  for (int g = 0; g < n_mach; ++g) {
    if (!model.machine_online(g)) {
      d.mach[g] = MachineState{0.0, 0.0, 0.0, 0.0, 0.0};
      continue;
    }
    const MachineParams& p = model.machines[g];
    const MachineState& st = s.machines[g];
    const double v = s.algebraic.v[p.bus];
    const double th = s.algebraic.theta[p.bus];
    const ElectricalPower ep = electrical_power(p, st, v, th);
    const double eq = internal_voltage(p, st, v, th);

    double u_g;
    const int slot = model.cg_slot[g];
    if (slot >= 0 && model.variant != Variant::Agc) {
      u_g = control_input(model.gains, model.costs[slot], s.controllers[slot], st.omega, st.pg,
                          p.t_turb);
    } else if (slot >= 0) {
      // droop governor around the supplementary AGC setpoint
      u_g = -st.omega + p.omega_ref - p.k_omega * (st.pg - (p.pg_ref + s.agc[slot])) +
            st.pg / p.t_turb;
    } else {
      u_g = droop_control(p, st);
    }
    const double h_exc = excitation_control(p, st, eq);
    d.mach[g] = machine_derivatives(p, st, ep.p_e, eq, u_g, h_exc);

    aux.p_e[g] = ep.p_e;
    aux.e_q[g] = eq;
    aux.omega_dot[g] = d.mach[g].omega;
    if (slot >= 0 && model.variant == Variant::Agc) d.agc[slot] = agc_cmd[slot];
  }

  if (model.variant == Variant::Agc) return;

  // multiplier and limit dynamics over the live comm graph
  std::vector<double> nbr_mu, inc_z;
  for (std::size_t c = 0; c < model.cg_machine.size(); ++c) {
    const int g = model.cg_machine[c];
    if (!model.machine_online(g)) continue;
    nbr_mu.clear();
    inc_z.clear();
    for (const CommGraph::Incidence& inc : model.comm.incidence(static_cast<int>(c))) {
      if (!model.machine_online(model.cg_machine[inc.neighbor])) continue;
      nbr_mu.push_back(s.controllers[inc.neighbor].mu);
      inc_z.push_back(inc.sign * s.z[inc.edge]);
    }
    const NeighborView view{nbr_mu, inc_z};
    const ControllerState& ctrl = s.controllers[c];
    const MachineParams& p = model.machines[g];
    const MachineState& st = s.machines[g];
    if (model.variant == Variant::Oracle) {
      d.mu[c] = mu_dot_oracle(model.gains, ctrl, st.pg, view);
    } else {
      d.mu[c] = mu_dot_measured(model.gains, model.costs[c], ctrl, p.m, p.d, st.omega,
                                aux.omega_dot[g], st.pg, view);
    }
    const auto [gm_dot, gp_dot] =
        gamma_dots(model.gains, st.pg, p.p_min, p.p_max, ctrl.gamma_minus, ctrl.gamma_plus);
    d.gm[c] = gm_dot;
    d.gp[c] = gp_dot;
  }
  for (std::size_t e = 0; e < model.comm.edges().size(); ++e) {
    const auto [a, b] = model.comm.edges()[e];
    if (!model.machine_online(model.cg_machine[a]) ||
        !model.machine_online(model.cg_machine[b]))
      continue;
    d.z[e] = z_dot(model.gains, s.controllers[a].mu, s.controllers[b].mu);
  }
}

void add_scaled(const SystemState& base, const Deriv& k, double h, SystemState& out) {
  out = base;
  out.time = base.time + h;
  for (std::size_t g = 0; g < base.machines.size(); ++g) {
    out.machines[g].delta = base.machines[g].delta + h * k.mach[g].delta;
    out.machines[g].omega = base.machines[g].omega + h * k.mach[g].omega;
    out.machines[g].eqp = base.machines[g].eqp + h * k.mach[g].eqp;
    out.machines[g].pg = base.machines[g].pg + h * k.mach[g].pg;
    out.machines[g].ef = base.machines[g].ef + h * k.mach[g].ef;
  }
  for (std::size_t i = 0; i < base.algebraic.theta.size(); ++i)
    out.algebraic.theta[i] = base.algebraic.theta[i] + h * k.theta[i];
  for (std::size_t c = 0; c < base.controllers.size(); ++c) {
    out.controllers[c].mu = base.controllers[c].mu + h * k.mu[c];
    out.controllers[c].gamma_minus = base.controllers[c].gamma_minus + h * k.gm[c];
    out.controllers[c].gamma_plus = base.controllers[c].gamma_plus + h * k.gp[c];
  }
  for (std::size_t e = 0; e < base.z.size(); ++e) out.z[e] = base.z[e] + h * k.z[e];
  for (std::size_t c = 0; c < base.agc.size(); ++c)
    out.agc[c] = base.agc[c] + h * k.agc[c];
}

}  // namespace

SystemState step(const ClosedLoopModel& model, const SystemState& state, double dt) {
  if (dt <= 0.0) throw ValidationError("step: dt must be positive");

  Deriv k1(model), k2(model), k3(model), k4(model);
  EvalAux aux;

  SystemState s1 = state;
  eval_derivative(model, s1, k1, aux);

  SystemState stage{};
  add_scaled(s1, k1, 0.5 * dt, stage);
  eval_derivative(model, stage, k2, aux);

  SystemState stage3{};
  add_scaled(s1, k2, 0.5 * dt, stage3);
  stage3.algebraic.v = stage.algebraic.v;  // warm start from the closest solved point
  eval_derivative(model, stage3, k3, aux);

  SystemState stage4{};
  add_scaled(s1, k3, dt, stage4);
  stage4.algebraic.v = stage3.algebraic.v;
  eval_derivative(model, stage4, k4, aux);

  SystemState next = s1;
  next.time = state.time + dt;
  const double w = dt / 6.0;
  for (std::size_t g = 0; g < next.machines.size(); ++g) {
    next.machines[g].delta +=
        w * (k1.mach[g].delta + 2.0 * k2.mach[g].delta + 2.0 * k3.mach[g].delta + k4.mach[g].delta);
    next.machines[g].omega +=
        w * (k1.mach[g].omega + 2.0 * k2.mach[g].omega + 2.0 * k3.mach[g].omega + k4.mach[g].omega);
    next.machines[g].eqp +=
        w * (k1.mach[g].eqp + 2.0 * k2.mach[g].eqp + 2.0 * k3.mach[g].eqp + k4.mach[g].eqp);
    next.machines[g].pg +=
        w * (k1.mach[g].pg + 2.0 * k2.mach[g].pg + 2.0 * k3.mach[g].pg + k4.mach[g].pg);
    next.machines[g].ef +=
        w * (k1.mach[g].ef + 2.0 * k2.mach[g].ef + 2.0 * k3.mach[g].ef + k4.mach[g].ef);
  }
  for (std::size_t i = 0; i < next.algebraic.theta.size(); ++i)
    next.algebraic.theta[i] +=
        w * (k1.theta[i] + 2.0 * k2.theta[i] + 2.0 * k3.theta[i] + k4.theta[i]);
  for (std::size_t c = 0; c < next.controllers.size(); ++c) {
    next.controllers[c].mu += w * (k1.mu[c] + 2.0 * k2.mu[c] + 2.0 * k3.mu[c] + k4.mu[c]);
    next.controllers[c].gamma_minus +=
        w * (k1.gm[c] + 2.0 * k2.gm[c] + 2.0 * k3.gm[c] + k4.gm[c]);
    next.controllers[c].gamma_plus +=
        w * (k1.gp[c] + 2.0 * k2.gp[c] + 2.0 * k3.gp[c] + k4.gp[c]);
    // remove the O(dt) leakage the discrete step lets through
    next.controllers[c].gamma_minus = std::max(0.0, next.controllers[c].gamma_minus);
    next.controllers[c].gamma_plus = std::max(0.0, next.controllers[c].gamma_plus);
  }
  for (std::size_t e = 0; e < next.z.size(); ++e)
    next.z[e] += w * (k1.z[e] + 2.0 * k2.z[e] + 2.0 * k3.z[e] + k4.z[e]);
  for (std::size_t c = 0; c < next.agc.size(); ++c)
    next.agc[c] += w * (k1.agc[c] + 2.0 * k2.agc[c] + 2.0 * k3.agc[c] + k4.agc[c]);

  next.algebraic.v = stage4.algebraic.v;
  refresh_algebraic(model, next);
  return next;
}

std::pair<ClosedLoopModel, SystemState> apply_event(const ClosedLoopModel& model,
                                                    const SystemState& state, const Event& ev) {
  ClosedLoopModel m = model;
  SystemState s = state;

  switch (ev.kind) {
    case Event::Kind::LoadStep: {
      m.net = m.net.with_load_delta(ev.bus, ev.dp, ev.dq);
      if (m.variant == Variant::Oracle && ev.dp != 0.0) {
        const int n = m.n_online_cg();
        if (n > 0) {
          for (std::size_t c = 0; c < m.cg_machine.size(); ++c) {
            if (m.machine_online(m.cg_machine[c])) s.controllers[c].p_hat += ev.dp / n;
          }
        }
      }
      break;
    }
    case Event::Kind::GeneratorTrip: {
      if (!m.net.is_generator_bus(ev.bus) || !m.net.buses()[ev.bus].machine_online)
        throw ValidationError("event: no online machine at bus " + std::to_string(ev.bus));
      int tripped = -1;
      for (std::size_t g = 0; g < m.machines.size(); ++g) {
        if (m.machines[g].bus == ev.bus) tripped = static_cast<int>(g);
      }
      m.net = m.net.with_machine_online(ev.bus, false);
      const int slot = m.cg_slot[tripped];
      if (slot >= 0) {
        std::vector<char> active(m.cg_machine.size(), 0);
        for (std::size_t c = 0; c < m.cg_machine.size(); ++c)
          active[c] = m.machine_online(m.cg_machine[c]) ? 1 : 0;
        if (!m.comm.connected(active))
          throw DisconnectedAfterEvent("event: communication graph split by generator trip");
        if (m.variant == Variant::Oracle) {
          const int n = m.n_online_cg();
          if (n > 0) {
            const double share = s.controllers[slot].p_hat / n;
            for (std::size_t c = 0; c < m.cg_machine.size(); ++c) {
              if (m.machine_online(m.cg_machine[c])) s.controllers[c].p_hat += share;
            }
          }
          s.controllers[slot].p_hat = 0.0;
        }
      } else if (m.variant == Variant::Oracle) {
        // the droop unit's steady output now falls on the controllable fleet
        const int n = m.n_online_cg();
        if (n > 0) {
          const double share = m.machines[tripped].pg_ref / n;
          for (std::size_t c = 0; c < m.cg_machine.size(); ++c) {
            if (m.machine_online(m.cg_machine[c])) s.controllers[c].p_hat += share;
          }
        }
      }
      break;
    }
    case Event::Kind::LineTrip: {
      bool found = false;
      const bool in_service = m.net.line_service(ev.from, ev.to, &found);
      if (!found || !in_service) throw ValidationError("event: line trip not applicable");
      m.net = m.net.with_line_service(ev.from, ev.to, false);
      if (!check_connectivity(m.net).power_connected)
        throw DisconnectedAfterEvent("event: line trip islands the power graph");
      break;
    }
    case Event::Kind::LineReclose: {
      bool found = false;
      const bool in_service = m.net.line_service(ev.from, ev.to, &found);
      if (!found || in_service) throw ValidationError("event: line reclose not applicable");
      m.net = m.net.with_line_service(ev.from, ev.to, true);
      break;
    }
  }

  refresh_algebraic(m, s);
  return {std::move(m), std::move(s)};
}

namespace {

void record_sample(const ClosedLoopModel& model, const SystemState& state, Trajectory& traj) {
  SystemState s = state;
  Deriv d(model);
  EvalAux aux;
  eval_derivative(model, s, d, aux);
  SampleAux sample;
  sample.p_e = aux.p_e;
  sample.e_q = aux.e_q;
  sample.max_deriv = d.max_abs();
  traj.times.push_back(s.time);
  traj.states.push_back(std::move(s));
  traj.aux.push_back(std::move(sample));
}

void check_bounds(const ClosedLoopModel& model, const SystemState& s, const SimSettings& sim) {
  for (std::size_t g = 0; g < model.machines.size(); ++g) {
    if (!model.machine_online(static_cast<int>(g))) continue;
    if (std::abs(s.machines[g].omega) > sim.omega_max)
      throw SimulationDiverged("simulation diverged: |omega| exceeded bound at t=" +
                                   std::to_string(s.time),
                               s.time);
  }
  for (double v : s.algebraic.v) {
    if (v < sim.v_min)
      throw SimulationDiverged(
          "simulation diverged: voltage collapsed at t=" + std::to_string(s.time), s.time);
  }
}

}  // namespace

Trajectory run_scenario(const Scenario& scenario) {
  auto [model, state] = initialize_equilibrium(scenario);
  const SimSettings& sim = scenario.sim;

  Trajectory traj;
  traj.settings = sim;

  // event schedule grouped by time
  std::map<double, std::vector<Event>> schedule;
  for (const Event& ev : scenario.events) schedule[ev.at].push_back(ev);

  // apply anything scheduled at t = 0 before recording
  if (auto it = schedule.find(0.0); it != schedule.end()) {
    for (const Event& ev : it->second) std::tie(model, state) = apply_event(model, state, ev);
    schedule.erase(it);
  }

  record_sample(model, state, traj);
  double next_record = sim.record_dt;

  std::vector<double> boundaries;
  for (const auto& [t, evs] : schedule) {
    if (t < sim.t_end) boundaries.push_back(t);
  }
  boundaries.push_back(sim.t_end);

  double t = 0.0;
  for (double boundary : boundaries) {
    const double span = boundary - t;
    if (span > 1e-12) {
      const int n_steps = std::max(1, static_cast<int>(std::ceil(span / sim.dt - 1e-9)));
      const double h = span / n_steps;
      for (int k = 0; k < n_steps; ++k) {
        state = step(model, state, h);
        check_bounds(model, state, sim);
        if (state.time >= next_record - 1e-9) {
          record_sample(model, state, traj);
          next_record += sim.record_dt;
        }
      }
      state.time = boundary;  // kill accumulated roundoff across segments
    }
    t = boundary;
    if (auto it = schedule.find(boundary); it != schedule.end()) {
      for (const Event& ev : it->second) std::tie(model, state) = apply_event(model, state, ev);
    }
  }

  if (traj.times.empty() || traj.times.back() < sim.t_end - 1e-9) {
    state.time = sim.t_end;
    record_sample(model, state, traj);
  }

  traj.final_model = std::move(model);
  traj.steady = detect_steady_state(traj, sim.steady_window, sim.steady_tol);
  compute_monitors(traj);
  return traj;
}

}  // namespace gridsync
