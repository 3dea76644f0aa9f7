#pragma once

#include <Eigen/Core>

#include <span>
#include <utility>
#include <vector>

namespace gridsync {

/// Quadratic generation cost f(P) = 1/2 a P^2 + b P. Strong convexity
/// requires a > 0; a doubles as both curvature bounds of the cost.
struct CostFunction {
  double a = 1.0;
  double b = 0.0;

  double value(double p) const { return 0.5 * a * p * p + b * p; }
  double marginal(double p) const { return a * p + b; }
};

struct ControllerGains {
  double k_pg = 1.0;
  double k_mu = 1.0;
  double k_z = 1.0;
  double k_gamma = 1.0;
  double tau = 1.0;  // estimator damping, 0 < tau < 4/l

  void validate(double lipschitz_max) const;
};

/// Per-node controller variables. Edge variables z live with the comm graph.
struct ControllerState {
  double mu = 0.0;
  double gamma_minus = 0.0;
  double gamma_plus = 0.0;
  double p_hat = 0.0;  // virtual load demand; used by the oracle-fed variant only
};

/// What one node is allowed to see: its neighbors' multiplier estimates and
/// its incident edge variables, signed so that the owner reads +z on edges
/// it owns and -z on the others.
struct NeighborView {
  std::span<const double> neighbor_mu;
  std::span<const double> incident_z;
};

/// Gated projection keeping inequality multipliers nonnegative:
/// returns x when the gate is open (a > 0) or x itself is positive, else 0.
double positive_projection(double x, double gate);

/// Governor input of a controllable generator (primal update).
double control_input(const ControllerGains& g, const CostFunction& cost,
                     const ControllerState& c, double omega, double pg, double t_turb);

/// Multiplier update fed with the oracle's virtual load demand.
double mu_dot_oracle(const ControllerGains& g, const ControllerState& c, double pg,
                     const NeighborView& view);

/// Multiplier update reconstructed from local frequency measurements; the
/// rotor acceleration must come from the machine derivative evaluated in the
/// same integration stage.
double mu_dot_measured(const ControllerGains& g, const CostFunction& cost,
                       const ControllerState& c, double m, double d, double omega,
                       double omega_dot, double pg, const NeighborView& view);

/// Edge consensus integral; one variable per undirected edge, owned by the
/// lower-indexed endpoint.
double z_dot(const ControllerGains& g, double mu_own, double mu_other);

/// Projected dynamics of the capacity-limit multipliers.
std::pair<double, double> gamma_dots(const ControllerGains& g, double pg, double p_min,
                                     double p_max, double gamma_minus, double gamma_plus);

/// Stability margin of the measurement-based estimator: sqrt(tau D (4 - tau l)).
double beta_bound(double tau, double d, double l);

/// The per-generator 3x3 block whose negative definiteness certifies the
/// estimator's disturbance-gain condition.
Eigen::Matrix3d beta_schur_block(double tau, double d, double l, double beta);

/// Proportional allocation of the area control error to AGC units.
std::vector<double> agc_allocate(double k_f, double omega, std::span<const double> shares);

/// Communication topology over the controllable generators, with per-node
/// incidence used to assemble neighbor views. Edges are stored with
/// from < to; the from side owns the edge variable.
class CommGraph {
 public:
  CommGraph() = default;
  CommGraph(int n_nodes, std::vector<std::pair<int, int>> edges);

  int n_nodes() const { return n_nodes_; }
  const std::vector<std::pair<int, int>>& edges() const { return edges_; }

  struct Incidence {
    int edge = -1;
    int neighbor = -1;
    double sign = 1.0;  // +1 when this node owns the edge variable
  };
  const std::vector<Incidence>& incidence(int node) const { return incidence_[node]; }

  /// Connectivity over the nodes with mask true (offline nodes drop out
  /// together with their edges). Trivially true with <= 1 active node.
  bool connected(std::span<const char> active_mask) const;

 private:
  int n_nodes_ = 0;
  std::vector<std::pair<int, int>> edges_;
  std::vector<std::vector<Incidence>> incidence_;
};

}  // namespace gridsync
