#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>

#include "gridsync/engine.hpp"
#include "gridsync/errors.hpp"

namespace gridsync {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

/// Value and gradient of the raw network potential energy. The gradient is
/// taken per channel (rotor angles, bus angles, internal voltages, bus
/// voltages); the tangent-plane subtraction happens in lyapunov_value.
struct PotentialEval {
  double value = 0.0;
  std::vector<double> d_delta;  // per machine
  std::vector<double> d_eqp;    // per machine
  std::vector<double> d_theta;  // per bus
  std::vector<double> d_v;      // per bus
};

PotentialEval potential_energy(const ClosedLoopModel& model, const SystemState& s) {
  const int n_bus = static_cast<int>(model.net.n_buses());
  const int n_mach = static_cast<int>(model.machines.size());
  PotentialEval out;
  out.d_delta.assign(n_mach, 0.0);
  out.d_eqp.assign(n_mach, 0.0);
  out.d_theta.assign(n_bus, 0.0);
  out.d_v.assign(n_bus, 0.0);

  const auto& th = s.algebraic.theta;
  const auto& v = s.algebraic.v;
  for (double vi : v) {
    if (vi <= 0.0) throw ValidationError("lyapunov: voltage must be positive");
  }

  for (int i = 0; i < n_bus; ++i) {
    const Bus& bus = model.net.buses()[i];
    out.value += bus.p_load * th[i] + bus.q_load * std::log(v[i]);
    out.d_theta[i] += bus.p_load;
    out.d_v[i] += bus.q_load / v[i];
  }
  for (const Line& ln : model.net.lines()) {
    if (!ln.in_service) continue;
    const double dth = th[ln.from] - th[ln.to];
    const double c = std::cos(dth), sn = std::sin(dth);
    out.value += ln.b * (0.5 * (v[ln.from] * v[ln.from] + v[ln.to] * v[ln.to]) -
                         v[ln.from] * v[ln.to] * c);
    const double p_ij = ln.b * v[ln.from] * v[ln.to] * sn;
    out.d_theta[ln.from] += p_ij;
    out.d_theta[ln.to] -= p_ij;
    out.d_v[ln.from] += ln.b * (v[ln.from] - v[ln.to] * c);
    out.d_v[ln.to] += ln.b * (v[ln.to] - v[ln.from] * c);
  }
  for (int g = 0; g < n_mach; ++g) {
    if (!model.machine_online(g)) continue;
    const MachineParams& p = model.machines[g];
    const MachineState& ms = s.machines[g];
    const double eta = ms.delta - th[p.bus];
    const double c = std::cos(eta), sn = std::sin(eta);
    const double vb = v[p.bus];
    out.value += 0.5 * vb * vb / p.x_dp - ms.eqp * vb * c / p.x_dp +
                 p.x_d * ms.eqp * ms.eqp / (2.0 * p.x_dp * (p.x_d - p.x_dp));
    const double p_e = ms.eqp * vb * sn / p.x_dp;
    out.d_delta[g] += p_e;
    out.d_theta[p.bus] -= p_e;
    out.d_v[p.bus] += vb / p.x_dp - ms.eqp * c / p.x_dp;
    out.d_eqp[g] += p.x_d * ms.eqp / (p.x_dp * (p.x_d - p.x_dp)) - vb * c / p.x_dp;
  }
  return out;
}

std::vector<CostFunction> cert_costs(const ClosedLoopModel& model, const Certification& cert) {
  std::vector<CostFunction> costs;
  for (int g : cert.slot_machine) costs.push_back(model.costs[model.cg_slot[g]]);
  return costs;
}

std::vector<std::pair<double, double>> cert_limits(const ClosedLoopModel& model,
                                                   const Certification& cert) {
  std::vector<std::pair<double, double>> lim;
  for (int g : cert.slot_machine)
    lim.emplace_back(model.machines[g].p_min, model.machines[g].p_max);
  return lim;
}

}  // namespace

LyapunovValue lyapunov_value(const ClosedLoopModel& model, const SystemState& s,
                             const SystemState& eqm) {
  LyapunovValue out;
  const ControllerGains& k = model.gains;

  for (std::size_t g = 0; g < model.machines.size(); ++g) {
    if (!model.machine_online(static_cast<int>(g))) continue;
    const double dw = s.machines[g].omega - eqm.machines[g].omega;
    out.w_kinetic += 0.5 * model.machines[g].m * dw * dw;
  }
  for (std::size_t c = 0; c < model.cg_machine.size(); ++c) {
    const int g = model.cg_machine[c];
    if (!model.machine_online(g)) continue;
    const double dpg = s.machines[g].pg - eqm.machines[g].pg;
    const double dmu = s.controllers[c].mu - eqm.controllers[c].mu;
    const double dgm = s.controllers[c].gamma_minus - eqm.controllers[c].gamma_minus;
    const double dgp = s.controllers[c].gamma_plus - eqm.controllers[c].gamma_plus;
    out.w_kinetic += dpg * dpg / (2.0 * k.k_pg) + dmu * dmu / (2.0 * k.k_mu) +
                     (dgm * dgm + dgp * dgp) / (2.0 * k.k_gamma);
  }
  for (std::size_t e = 0; e < model.comm.edges().size(); ++e) {
    const auto [a, b] = model.comm.edges()[e];
    if (!model.machine_online(model.cg_machine[a]) ||
        !model.machine_online(model.cg_machine[b]))
      continue;
    const double dz = s.z[e] - eqm.z[e];
    out.w_kinetic += dz * dz / (2.0 * k.k_z);
  }

  const PotentialEval now = potential_energy(model, s);
  const PotentialEval ref = potential_energy(model, eqm);
  double tangent = 0.0;
  for (std::size_t g = 0; g < model.machines.size(); ++g) {
    if (!model.machine_online(static_cast<int>(g))) continue;
    tangent += ref.d_delta[g] * (s.machines[g].delta - eqm.machines[g].delta);
    tangent += ref.d_eqp[g] * (s.machines[g].eqp - eqm.machines[g].eqp);
  }
  for (std::size_t i = 0; i < model.net.n_buses(); ++i) {
    tangent += ref.d_theta[i] * (s.algebraic.theta[i] - eqm.algebraic.theta[i]);
    tangent += ref.d_v[i] * (s.algebraic.v[i] - eqm.algebraic.v[i]);
  }
  out.w_potential = now.value - ref.value - tangent;

  for (std::size_t g = 0; g < model.machines.size(); ++g) {
    if (!model.machine_online(static_cast<int>(g))) continue;
    const MachineParams& p = model.machines[g];
    if (model.cg_slot[g] < 0) {
      const double dpg = s.machines[g].pg - eqm.machines[g].pg;
      out.s_omega += 0.5 * dpg * dpg;
    }
    const double def = s.machines[g].ef - eqm.machines[g].ef;
    out.s_e += 0.5 * def * def / (p.t_d0p * (p.x_d - p.x_dp));
  }

  out.total = out.w_kinetic + out.w_potential + out.s_omega + out.s_e;
  return out;
}

Eigen::MatrixXd hessian_a4_matrix(const ClosedLoopModel& model, const SystemState& s) {
  for (double vi : s.algebraic.v) {
    if (vi <= 0.0) throw ValidationError("hessian check: voltage must be positive");
  }
  const int n_bus = static_cast<int>(model.net.n_buses());

  // augmented graph: one internal node per online machine, then the buses
  std::vector<int> internal_node(model.machines.size(), -1);
  int n_int = 0;
  for (std::size_t g = 0; g < model.machines.size(); ++g) {
    if (model.machine_online(static_cast<int>(g))) internal_node[g] = n_int++;
  }
  const int n_nodes = n_int + n_bus;
  auto bus_node = [&](int b) { return n_int + b; };

  struct AugEdge {
    int tail, head;
    double b;
  };
  std::vector<AugEdge> edges;
  for (std::size_t g = 0; g < model.machines.size(); ++g) {
    if (internal_node[g] < 0) continue;
    edges.push_back({internal_node[g], bus_node(model.machines[g].bus),
                     1.0 / model.machines[g].x_dp});
  }
  for (const Line& ln : model.net.lines()) {
    if (!ln.in_service) continue;
    edges.push_back({bus_node(ln.from), bus_node(ln.to), ln.b});
  }
  const int n_edges = static_cast<int>(edges.size());

  std::vector<double> angle(n_nodes, 0.0), volt(n_nodes, 1.0);
  for (std::size_t g = 0; g < model.machines.size(); ++g) {
    if (internal_node[g] < 0) continue;
    angle[internal_node[g]] = s.machines[g].delta;
    volt[internal_node[g]] = s.machines[g].eqp;
  }
  for (int i = 0; i < n_bus; ++i) {
    angle[bus_node(i)] = s.algebraic.theta[i];
    volt[bus_node(i)] = s.algebraic.v[i];
  }

  const int dim = n_edges + n_nodes;
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(dim, dim);
  for (int e = 0; e < n_edges; ++e) {
    const AugEdge& ed = edges[e];
    const double dth = angle[ed.tail] - angle[ed.head];
    const double c = std::cos(dth), sn = std::sin(dth);
    const double gamma = ed.b * volt[ed.tail] * volt[ed.head];
    h(e, e) = gamma * c;
    h(e, n_edges + ed.tail) = sn * gamma / volt[ed.tail];
    h(e, n_edges + ed.head) = sn * gamma / volt[ed.head];
    h(n_edges + ed.tail, e) = h(e, n_edges + ed.tail);
    h(n_edges + ed.head, e) = h(e, n_edges + ed.head);
    h(n_edges + ed.tail, n_edges + ed.head) -= ed.b * c;
    h(n_edges + ed.head, n_edges + ed.tail) -= ed.b * c;
    h(n_edges + ed.tail, n_edges + ed.tail) += ed.b;
    h(n_edges + ed.head, n_edges + ed.head) += ed.b;
  }
  for (std::size_t g = 0; g < model.machines.size(); ++g) {
    if (internal_node[g] < 0) continue;
    const MachineParams& p = model.machines[g];
    h(n_edges + internal_node[g], n_edges + internal_node[g]) +=
        p.x_d / (2.0 * p.x_dp * (p.x_d - p.x_dp));
  }
  for (int i = 0; i < n_bus; ++i) {
    const int k = n_edges + bus_node(i);
    h(k, k) += model.net.buses()[i].q_load / (s.algebraic.v[i] * s.algebraic.v[i]);
  }
  return h;
}

HessianCheck hessian_check_a4(const ClosedLoopModel& model, const SystemState& s) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(hessian_a4_matrix(model, s),
                                                    Eigen::EigenvaluesOnly);
  HessianCheck out;
  out.min_eigenvalue = es.eigenvalues().minCoeff();
  out.positive_definite = out.min_eigenvalue > 0.0;
  return out;
}

SteadyState detect_steady_state(const Trajectory& traj, double window, double tol) {
  SteadyState out;
  if (traj.times.empty()) return out;
  const ClosedLoopModel& model = traj.final_model;
  const double t_from = traj.times.back() - window;
  int first = static_cast<int>(traj.times.size()) - 1;
  while (first > 0 && traj.times[first - 1] >= t_from) --first;
  if (traj.times[first] > t_from + 1e-9 && first > 0) return out;  // window not covered

  double worst = 0.0;
  for (std::size_t k = first; k < traj.times.size(); ++k) {
    const SystemState& s = traj.states[k];
    for (std::size_t g = 0; g < model.machines.size(); ++g) {
      if (!model.machine_online(static_cast<int>(g))) continue;
      worst = std::max(worst, std::abs(s.machines[g].omega));
    }
    for (double w : s.algebraic.omega_tilde) worst = std::max(worst, std::abs(w));
    if (model.variant != Variant::Agc) {
      double mu_lo = std::numeric_limits<double>::infinity(), mu_hi = -mu_lo;
      for (std::size_t c = 0; c < model.cg_machine.size(); ++c) {
        if (!model.machine_online(model.cg_machine[c])) continue;
        mu_lo = std::min(mu_lo, s.controllers[c].mu);
        mu_hi = std::max(mu_hi, s.controllers[c].mu);
      }
      if (mu_hi >= mu_lo) worst = std::max(worst, mu_hi - mu_lo);
    }
    worst = std::max(worst, traj.aux[k].max_deriv);
  }
  if (worst >= tol) return out;

  // averaged tail state as the equilibrium
  SystemState eq = traj.states.back();
  const double count = static_cast<double>(traj.times.size() - first);
  auto avg = [&](auto getter) {
    double acc = 0.0;
    for (std::size_t k = first; k < traj.times.size(); ++k) acc += getter(traj.states[k]);
    return acc / count;
  };
  for (std::size_t g = 0; g < eq.machines.size(); ++g) {
    eq.machines[g].delta = avg([g](const SystemState& s) { return s.machines[g].delta; });
    eq.machines[g].omega = avg([g](const SystemState& s) { return s.machines[g].omega; });
    eq.machines[g].eqp = avg([g](const SystemState& s) { return s.machines[g].eqp; });
    eq.machines[g].pg = avg([g](const SystemState& s) { return s.machines[g].pg; });
    eq.machines[g].ef = avg([g](const SystemState& s) { return s.machines[g].ef; });
  }
  for (std::size_t i = 0; i < eq.algebraic.theta.size(); ++i) {
    eq.algebraic.theta[i] = avg([i](const SystemState& s) { return s.algebraic.theta[i]; });
    eq.algebraic.v[i] = avg([i](const SystemState& s) { return s.algebraic.v[i]; });
    eq.algebraic.omega_tilde[i] =
        avg([i](const SystemState& s) { return s.algebraic.omega_tilde[i]; });
  }
  for (std::size_t c = 0; c < eq.controllers.size(); ++c) {
    eq.controllers[c].mu = avg([c](const SystemState& s) { return s.controllers[c].mu; });
    eq.controllers[c].gamma_minus =
        avg([c](const SystemState& s) { return s.controllers[c].gamma_minus; });
    eq.controllers[c].gamma_plus =
        avg([c](const SystemState& s) { return s.controllers[c].gamma_plus; });
  }
  for (std::size_t e = 0; e < eq.z.size(); ++e)
    eq.z[e] = avg([e](const SystemState& s) { return s.z[e]; });
  for (std::size_t c = 0; c < eq.agc.size(); ++c)
    eq.agc[c] = avg([c](const SystemState& s) { return s.agc[c]; });

  out.converged = true;
  out.equilibrium = std::move(eq);
  return out;
}

void compute_monitors(Trajectory& traj) {
  const ClosedLoopModel& model = traj.final_model;
  const int n = static_cast<int>(traj.times.size());
  traj.monitors.assign(n, MonitorSample{});

  Certification cert;
  std::optional<DispatchProblem> prob;
  if (traj.steady.converged && model.variant != Variant::Agc) {
    cert = certify_against_dispatch(traj);
    if (cert.available)
      prob.emplace(cert_costs(model, cert), cert_limits(model, cert), cert.demand_pu);
  }

  std::vector<double> w_vals(n, kNaN);
  for (int k = 0; k < n; ++k) {
    MonitorSample& mon = traj.monitors[k];
    const SystemState& s = traj.states[k];
    mon.time = traj.times[k];

    for (std::size_t g = 0; g < model.machines.size(); ++g) {
      if (!model.machine_online(static_cast<int>(g))) continue;
      mon.max_freq_dev = std::max(mon.max_freq_dev, std::abs(s.machines[g].omega));
    }
    for (double w : s.algebraic.omega_tilde)
      mon.max_freq_dev = std::max(mon.max_freq_dev, std::abs(w));

    if (model.variant != Variant::Agc) {
      double mu_lo = std::numeric_limits<double>::infinity(), mu_hi = -mu_lo;
      for (std::size_t c = 0; c < model.cg_machine.size(); ++c) {
        if (!model.machine_online(model.cg_machine[c])) continue;
        mu_lo = std::min(mu_lo, s.controllers[c].mu);
        mu_hi = std::max(mu_hi, s.controllers[c].mu);
      }
      mon.mu_spread = mu_hi >= mu_lo ? mu_hi - mu_lo : 0.0;
    } else {
      mon.mu_spread = kNaN;
    }

    mon.hessian_min_eig = hessian_check_a4(model, s).min_eigenvalue;

    if (traj.steady.converged && model.variant != Variant::Agc) {
      w_vals[k] = lyapunov_value(model, s, traj.steady.equilibrium).total;
      mon.lyapunov_w = w_vals[k];
      if (prob.has_value()) {
        std::vector<double> pg(cert.slot_machine.size());
        std::vector<double> gm(cert.slot_machine.size()), gp(cert.slot_machine.size());
        double mu_acc = 0.0;
        for (std::size_t j = 0; j < cert.slot_machine.size(); ++j) {
          const int g = cert.slot_machine[j];
          pg[j] = s.machines[g].pg;
          const int c = model.cg_slot[g];
          gm[j] = s.controllers[c].gamma_minus;
          gp[j] = s.controllers[c].gamma_plus;
          mu_acc += s.controllers[c].mu;
        }
        mon.kkt_residual =
            kkt_residual(*prob, pg, mu_acc / pg.size(), gm, gp).max_residual;
      } else {
        mon.kkt_residual = kNaN;
      }
    } else {
      mon.lyapunov_w = kNaN;
      mon.kkt_residual = kNaN;
    }
  }

  for (int k = 0; k < n; ++k) {
    MonitorSample& mon = traj.monitors[k];
    if (!std::isnan(w_vals[k]) && k > 0 && k + 1 < n) {
      mon.lyapunov_wdot_fd = (w_vals[k + 1] - w_vals[k - 1]) / (traj.times[k + 1] - traj.times[k - 1]);
    } else {
      mon.lyapunov_wdot_fd = std::isnan(w_vals[k]) ? kNaN : 0.0;
    }
  }
}

PassivityReport audit_passivity(const Trajectory& traj, int machine_index,
                                PassivityCondition which) {
  if (!traj.steady.converged)
    throw TrajectoryNotConverged("passivity audit: trajectory tail has not settled");
  const ClosedLoopModel& model = traj.final_model;
  const MachineParams& p = model.machines.at(machine_index);
  const SystemState& eq = traj.steady.equilibrium;

  const int n = static_cast<int>(traj.times.size());
  std::vector<double> a(n), b(n);
  if (which == PassivityCondition::C1) {
    for (int k = 0; k < n; ++k) {
      a[k] = traj.states[k].machines[machine_index].omega;
      b[k] = traj.states[k].machines[machine_index].pg;
    }
    return passivity_audit_c1(traj.times, a, b, eq.machines[machine_index].omega,
                              eq.machines[machine_index].pg, p.k_omega);
  }
  for (int k = 0; k < n; ++k) {
    a[k] = traj.aux[k].e_q[machine_index];
    b[k] = traj.states[k].machines[machine_index].ef;
  }
  const double eq_star = internal_voltage(p, eq.machines[machine_index],
                                          eq.algebraic.v[p.bus], eq.algebraic.theta[p.bus]);
  return passivity_audit_c2(traj.times, a, b, eq_star, eq.machines[machine_index].ef, p.k_e);
}

std::vector<BetaAudit> audit_beta_ratio(const Trajectory& traj) {
  std::vector<BetaAudit> out;
  if (!traj.steady.converged) return out;
  const ClosedLoopModel& model = traj.final_model;
  const SystemState& eq = traj.steady.equilibrium;

  // equilibrium electric power per machine
  std::vector<double> p_e_star(model.machines.size(), 0.0);
  for (std::size_t g = 0; g < model.machines.size(); ++g) {
    if (!model.machine_online(static_cast<int>(g))) continue;
    const MachineParams& p = model.machines[g];
    p_e_star[g] = electrical_power(p, eq.machines[g], eq.algebraic.v[p.bus],
                                   eq.algebraic.theta[p.bus])
                      .p_e;
  }
  for (std::size_t c = 0; c < model.cg_machine.size(); ++c) {
    const int g = model.cg_machine[c];
    if (!model.machine_online(g)) continue;
    BetaAudit audit;
    audit.machine = g;
    const MachineParams& p = model.machines[g];
    audit.bound = beta_bound(model.gains.tau, p.d, model.costs[c].a);
    for (std::size_t k = 0; k < traj.times.size(); ++k) {
      const double w = traj.states[k].machines[g].omega - eq.machines[g].omega;
      if (std::abs(w) <= 1e-4) continue;
      const double rho = std::abs(traj.aux[k].p_e[g] - p_e_star[g]);
      audit.empirical_ratio = std::max(audit.empirical_ratio, rho / std::abs(w));
    }
    out.push_back(audit);
  }
  return out;
}

Certification certify_against_dispatch(const Trajectory& traj) {
  Certification cert;
  if (!traj.steady.converged) return cert;
  const ClosedLoopModel& model = traj.final_model;
  const SystemState& eq = traj.steady.equilibrium;

  for (std::size_t c = 0; c < model.cg_machine.size(); ++c) {
    const int g = model.cg_machine[c];
    if (!model.machine_online(g)) continue;
    cert.slot_machine.push_back(g);
    cert.steady_pg_pu.push_back(eq.machines[g].pg);
    cert.demand_pu += eq.machines[g].pg;
  }
  if (cert.slot_machine.empty()) return cert;

  try {
    const DispatchProblem prob(cert_costs(model, cert), cert_limits(model, cert),
                               cert.demand_pu);
    cert.oracle = solve_sfc(prob);

    std::vector<double> gm, gp;
    double mu_acc = 0.0;
    for (int g : cert.slot_machine) {
      const int c = model.cg_slot[g];
      if (model.variant == Variant::Agc) {
        gm.push_back(0.0);
        gp.push_back(0.0);
        mu_acc += -model.costs[c].marginal(eq.machines[g].pg);
      } else {
        gm.push_back(eq.controllers[c].gamma_minus);
        gp.push_back(eq.controllers[c].gamma_plus);
        mu_acc += eq.controllers[c].mu;
      }
    }
    cert.kkt = kkt_residual(prob, cert.steady_pg_pu, mu_acc / cert.slot_machine.size(), gm, gp);
    for (std::size_t j = 0; j < cert.steady_pg_pu.size(); ++j) {
      const double denom = std::max(std::abs(cert.oracle.pg[j]), 1.0);
      cert.max_rel_mismatch = std::max(
          cert.max_rel_mismatch, std::abs(cert.steady_pg_pu[j] - cert.oracle.pg[j]) / denom);
    }
    cert.available = true;
  } catch (const Infeasible&) {
    cert.available = false;
  }
  return cert;
}

}  // namespace gridsync
