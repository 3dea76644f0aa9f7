#include "gridsync/machines.hpp"

#include <cmath>
#include <string>

#include "gridsync/errors.hpp"

namespace gridsync {

void MachineParams::validate() const {
  if (m <= 0.0) throw ValidationError("machine: inertia must be positive");
  if (d <= 0.0) throw ValidationError("machine: damping must be positive");
  if (t_d0p <= 0.0) throw ValidationError("machine: T'_d0 must be positive");
  if (t_turb <= 0.0) throw ValidationError("machine: turbine time constant must be positive");
  if (!(x_d > x_dp && x_dp > 0.0))
    throw ValidationError("machine: reactances must satisfy x_d > x'_d > 0");
  if (controllable && p_min > p_max)
    throw ValidationError("machine: p_min must not exceed p_max");
  if (k_omega <= 0.0) throw ValidationError("machine: droop gain must be positive");
  if (k_e <= 0.0) throw ValidationError("machine: excitation gain must be positive");
}

double internal_voltage(const MachineParams& p, const MachineState& s, double v, double theta) {
  return (p.x_d / p.x_dp) * s.eqp -
         ((p.x_d - p.x_dp) / p.x_dp) * v * std::cos(s.delta - theta);
}

ElectricalPower electrical_power(const MachineParams& p, const MachineState& s, double v,
                                 double theta) {
  const double eta = s.delta - theta;
  ElectricalPower out;
  out.p_e = s.eqp * v / p.x_dp * std::sin(eta);
  out.q_e = s.eqp * v / p.x_dp * std::cos(eta) - v * v / p.x_dp;
  return out;
}

MachineState machine_derivatives(const MachineParams& p, const MachineState& s, double p_e,
                                 double e_q, double u_g, double h_exc) {
  MachineState dot;
  dot.delta = s.omega;
  dot.omega = (s.pg - p.d * s.omega - p_e) / p.m;
  dot.eqp = (-e_q + s.ef) / p.t_d0p;
  dot.pg = -s.pg / p.t_turb + u_g;
  dot.ef = h_exc;
  return dot;
}

double droop_control(const MachineParams& p, const MachineState& s) {
  return -s.omega + p.omega_ref - p.k_omega * (s.pg - p.pg_ref) + s.pg / p.t_turb;
}

double excitation_control(const MachineParams& p, const MachineState& s, double e_q) {
  return -s.ef + p.ef_ref - p.k_e * (e_q - p.eq_ref);
}

namespace {

PassivityReport audit(std::span<const double> times, std::span<const double> storage_var,
                      std::span<const double> input_var, double storage_star, double input_star,
                      double rate_gain) {
  // central-difference dS/dt against the incremental passivity bound
  //   dS/dt <= -(u - u*)(y - y*) - k (y - y*)^2
  // with y the storage variable and u the paired input channel.
  PassivityReport rep;
  const int n = static_cast<int>(times.size());
  if (n < 3) throw ValidationError("passivity audit: need at least three samples");
  for (int k = 1; k + 1 < n; ++k) {
    const double dt = times[k + 1] - times[k - 1];
    if (dt <= 0.0) throw ValidationError("passivity audit: times must be increasing");
    const double y_prev = storage_var[k - 1] - storage_star;
    const double y_next = storage_var[k + 1] - storage_star;
    const double s_dot = 0.5 * (y_next * y_next - y_prev * y_prev) / dt;
    const double y = storage_var[k] - storage_star;
    const double u = input_var[k] - input_star;
    const double bound = -u * y - rate_gain * y * y;
    const double violation = s_dot - bound;
    if (k == 1 || violation > rep.max_violation) {
      rep.max_violation = violation;
      rep.at_time = times[k];
    }
    ++rep.samples;
  }
  return rep;
}

}  // namespace

PassivityReport passivity_audit_c1(std::span<const double> times, std::span<const double> omega,
                                   std::span<const double> pg, double omega_star, double pg_star,
                                   double k_omega) {
  return audit(times, pg, omega, pg_star, omega_star, k_omega);
}

PassivityReport passivity_audit_c2(std::span<const double> times, std::span<const double> eq,
                                   std::span<const double> ef, double eq_star, double ef_star,
                                   double k_e) {
  return audit(times, ef, eq, ef_star, eq_star, k_e);
}

}  // namespace gridsync
