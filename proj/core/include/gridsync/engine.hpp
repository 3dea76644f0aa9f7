#pragma once

#include <optional>
#include <string>
#include <vector>

#include "gridsync/controller.hpp"
#include "gridsync/dispatch.hpp"
#include "gridsync/machines.hpp"
#include "gridsync/network.hpp"

namespace gridsync {

enum class Variant { Oracle, Measured, Agc };

std::string variant_name(Variant v);

/// Full state of the closed loop at one instant. Voltage magnitudes and bus
/// frequency deviations are algebraic caches, kept consistent with the
/// differential variables after every accepted step.
struct SystemState {
  double time = 0.0;
  std::vector<MachineState> machines;
  AlgebraicState algebraic;
  std::vector<ControllerState> controllers;  // one per controllable-generator slot
  std::vector<double> z;                     // one per comm edge
  std::vector<double> agc;                   // supplementary setpoint, AGC variant only
};

struct Event {
  enum class Kind { LoadStep, GeneratorTrip, LineTrip, LineReclose };
  Kind kind = Kind::LoadStep;
  double at = 0.0;
  int bus = -1;       // LoadStep / GeneratorTrip
  int from = -1;      // line events
  int to = -1;
  double dp = 0.0;    // p.u.
  double dq = 0.0;    // p.u.
};

/// Everything that defines the closed-loop dynamics. Events produce updated
/// copies (network loads, service flags, online machines).
struct ClosedLoopModel {
  NetworkModel net;
  std::vector<MachineParams> machines;   // one per generator bus, bus order
  std::vector<int> cg_slot;              // per machine -> controller slot or -1
  std::vector<int> cg_machine;           // per controller slot -> machine index
  std::vector<CostFunction> costs;       // per controller slot, p.u.
  ControllerGains gains;
  CommGraph comm;                        // nodes are controller slots
  Variant variant = Variant::Measured;
  double agc_kf = 0.0;
  std::vector<double> agc_shares;        // per controller slot
  VoltageSolveOptions vopts;

  bool machine_online(int machine) const {
    return net.buses()[machines[machine].bus].machine_online;
  }
  int n_online_cg() const;
};

/// Fills the controller slot maps and the comm graph from the network and the
/// machine list, validating that machines and generator buses line up.
void wire_model(ClosedLoopModel& model);

struct SimSettings {
  double dt = 0.002;
  double t_end = 60.0;
  double record_dt = 0.02;
  double steady_window = 5.0;
  double steady_tol = 1e-6;
  double omega_max = 10.0;  // divergence bound, rad/s
  double v_min = 0.2;       // divergence bound, p.u.
};

/// Per-sample quantities derived during recording.
struct SampleAux {
  std::vector<double> p_e;  // per machine
  std::vector<double> e_q;  // per machine
  double max_deriv = 0.0;   // max-norm of the state derivative
};

struct MonitorSample {
  double time = 0.0;
  double lyapunov_w = 0.0;
  double lyapunov_wdot_fd = 0.0;
  double kkt_residual = 0.0;
  double max_freq_dev = 0.0;
  double mu_spread = 0.0;
  double hessian_min_eig = 0.0;
};

struct SteadyState {
  bool converged = false;
  SystemState equilibrium;  // averaged tail state when converged
};

struct Trajectory {
  std::vector<double> times;
  std::vector<SystemState> states;
  std::vector<SampleAux> aux;
  std::vector<MonitorSample> monitors;  // filled by compute_monitors
  SteadyState steady;
  ClosedLoopModel final_model;  // model after the last event
  SimSettings settings;
};

/// One classical fourth-order Runge-Kutta step of length dt. Voltages are
/// re-solved inside every stage; limit multipliers are clamped nonnegative
/// after the combine. Deterministic.
SystemState step(const ClosedLoopModel& model, const SystemState& state, double dt);

/// Applies one event, returning the updated model and state (voltages
/// re-solved after topology changes). Throws DisconnectedAfterEvent when the
/// power or comm graph would split, ValidationError when not applicable.
std::pair<ClosedLoopModel, SystemState> apply_event(const ClosedLoopModel& model,
                                                    const SystemState& state, const Event& ev);

struct Scenario;  // defined in scenario.hpp

/// Integrates the scenario from t = 0 to t_end, snapping step boundaries to
/// event times and recording at the configured cadence. Detects the steady
/// state and fills monitors. Throws SimulationDiverged on bound violation.
Trajectory run_scenario(const Scenario& scenario);

/// Breakdown of the Lyapunov function at a state, relative to an equilibrium.
struct LyapunovValue {
  double w_kinetic = 0.0;    // quadratic part: rotor speeds + controller states
  double w_potential = 0.0;  // network potential energy with tangent plane removed
  double s_omega = 0.0;      // droop machines' storage
  double s_e = 0.0;          // excitation storage, weighted
  double total = 0.0;
};
LyapunovValue lyapunov_value(const ClosedLoopModel& model, const SystemState& state,
                             const SystemState& equilibrium);

struct HessianCheck {
  double min_eigenvalue = 0.0;
  bool positive_definite = false;
};
/// The edge-space Hessian certificate of the potential energy over the
/// augmented graph (machine reactances as internal lines). Symmetric by
/// construction; positive definiteness certifies the stability condition.
Eigen::MatrixXd hessian_a4_matrix(const ClosedLoopModel& model, const SystemState& state);
HessianCheck hessian_check_a4(const ClosedLoopModel& model, const SystemState& state);

/// Converged iff over the trailing window all of max |omega|, max |omega~|,
/// mu spread and max state derivative stay below tol.
SteadyState detect_steady_state(const Trajectory& traj, double window, double tol);

/// Fills traj.monitors (Lyapunov, KKT residual, frequency extremes, Hessian
/// eigenvalue). Needs the steady state when available for the W reference.
void compute_monitors(Trajectory& traj);

/// Passivity audit over a recorded trajectory; equilibrium values come from
/// the converged tail. Throws TrajectoryNotConverged otherwise.
enum class PassivityCondition { C1, C2 };
PassivityReport audit_passivity(const Trajectory& traj, int machine_index,
                                PassivityCondition which);

/// Per-machine report of the measured-variant disturbance-gain hypothesis:
/// empirical max of |P_e - P_e*| / |omega - omega*| against the analytic bound.
struct BetaAudit {
  int machine = -1;
  double empirical_ratio = 0.0;
  double bound = 0.0;
};
std::vector<BetaAudit> audit_beta_ratio(const Trajectory& traj);

/// Certification of a converged run against the dispatch oracle on the
/// run-derived demand (sum of steady controllable generations).
struct Certification {
  bool available = false;
  double demand_pu = 0.0;
  DispatchSolution oracle;           // p.u.
  std::vector<double> steady_pg_pu;  // per online controller slot
  std::vector<int> slot_machine;     // machine index per entry
  double max_rel_mismatch = 0.0;     // |pg - oracle| / max(|oracle|, 1)
  KktReport kkt;
};
Certification certify_against_dispatch(const Trajectory& traj);

}  // namespace gridsync
