#pragma once

#include <span>

namespace gridsync {

/// Third-order synchronous machine constants plus governor/exciter data.
/// Setpoints are the pre-disturbance steady-state values filled in by the
/// scenario initializer.
struct MachineParams {
  int bus = -1;
  double m = 0.1;      // inertia, s^2 * p.u. / rad
  double d = 0.05;     // machine damping
  double t_d0p = 6.0;  // d-axis transient open-circuit time constant, s
  double t_turb = 2.0; // governor-turbine time constant, s
  double x_d = 0.3;    // d-axis synchronous reactance, p.u.
  double x_dp = 0.1;   // d-axis transient reactance, p.u.; x_d > x_dp > 0
  bool controllable = false;
  double p_min = 0.0;  // capacity limits, controllable machines
  double p_max = 0.0;
  double k_omega = 1.0;  // droop gain (primary control)
  double k_e = 1.0;      // excitation gain
  double omega_ref = 0.0;
  double pg_ref = 0.0;
  double ef_ref = 0.0;
  double eq_ref = 0.0;

  void validate() const;
};

struct MachineState {
  double delta = 0.0;  // rotor angle, rad
  double omega = 0.0;  // frequency deviation, rad/s
  double eqp = 1.0;    // transient internal voltage E'_q, p.u.
  double pg = 0.0;     // mechanical power, p.u.
  double ef = 1.0;     // excitation voltage, p.u.
};

/// q-axis internal voltage E_q from terminal conditions.
double internal_voltage(const MachineParams& p, const MachineState& s, double v, double theta);

struct ElectricalPower {
  double p_e = 0.0;
  double q_e = 0.0;
};
ElectricalPower electrical_power(const MachineParams& p, const MachineState& s, double v,
                                 double theta);

/// Time derivatives of the five machine states given the electrical power,
/// the internal voltage E_q, and the two control inputs.
MachineState machine_derivatives(const MachineParams& p, const MachineState& s, double p_e,
                                 double e_q, double u_g, double h_exc);

/// Primary frequency (droop) governor input for uncontrollable machines.
double droop_control(const MachineParams& p, const MachineState& s);

/// Excitation voltage controller; used for every machine.
double excitation_control(const MachineParams& p, const MachineState& s, double e_q);

/// Result of checking one storage-function inequality along a sampled
/// trajectory. Violation is max over samples of (dS/dt - bound); a clean
/// pass leaves only central-difference error.
struct PassivityReport {
  double max_violation = 0.0;
  double at_time = 0.0;
  int samples = 0;
};

/// Audit of the droop machine's incremental passivity inequality with
/// S = 1/2 (Pg - Pg*)^2 and dissipation rate k_omega (Pg - Pg*)^2.
PassivityReport passivity_audit_c1(std::span<const double> times, std::span<const double> omega,
                                   std::span<const double> pg, double omega_star, double pg_star,
                                   double k_omega);

/// Audit of the excitation dynamics inequality with S = 1/2 (Ef - Ef*)^2
/// and dissipation rate k_e (Ef - Ef*)^2.
PassivityReport passivity_audit_c2(std::span<const double> times, std::span<const double> eq,
                                   std::span<const double> ef, double eq_star, double ef_star,
                                   double k_e);

}  // namespace gridsync
