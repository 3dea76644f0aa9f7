#include "gridsync/controller.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <string>

#include "gridsync/errors.hpp"

namespace gridsync {

void ControllerGains::validate(double lipschitz_max) const {
  if (k_pg <= 0.0 || k_mu <= 0.0 || k_z <= 0.0 || k_gamma <= 0.0)
    throw ValidationError("controller gains must be strictly positive");
  if (tau <= 0.0 || tau * lipschitz_max >= 4.0)
    throw ValidationError("estimator damping must satisfy 0 < tau < 4/l");
}

double positive_projection(double x, double gate) {
  return (gate > 0.0 || x > 0.0) ? x : 0.0;
}

double control_input(const ControllerGains& g, const CostFunction& cost,
                     const ControllerState& c, double omega, double pg, double t_turb) {
  return pg / t_turb -
         g.k_pg * (omega + cost.marginal(pg) + c.mu - c.gamma_minus + c.gamma_plus);
}

namespace {

double consensus_terms(const ControllerState& c, const NeighborView& view) {
  double acc = 0.0;
  for (double mu_j : view.neighbor_mu) acc -= c.mu - mu_j;
  for (double z : view.incident_z) acc -= z;
  return acc;
}

}  // namespace

double mu_dot_oracle(const ControllerGains& g, const ControllerState& c, double pg,
                     const NeighborView& view) {
  return g.k_mu * (pg - c.p_hat + consensus_terms(c, view));
}

double mu_dot_measured(const ControllerGains& g, const CostFunction& cost,
                       const ControllerState& c, double m, double d, double omega,
                       double omega_dot, double pg, const NeighborView& view) {
  return g.k_mu * (consensus_terms(c, view) + m * omega_dot + d * omega +
                   g.tau * (-c.mu - cost.marginal(pg) + c.gamma_minus - c.gamma_plus));
}

double z_dot(const ControllerGains& g, double mu_own, double mu_other) {
  return g.k_z * (mu_own - mu_other);
}

std::pair<double, double> gamma_dots(const ControllerGains& g, double pg, double p_min,
                                     double p_max, double gamma_minus, double gamma_plus) {
  return {g.k_gamma * positive_projection(p_min - pg, gamma_minus),
          g.k_gamma * positive_projection(pg - p_max, gamma_plus)};
}

double beta_bound(double tau, double d, double l) {
  if (d <= 0.0) throw ValidationError("beta_bound: damping must be positive");
  if (tau <= 0.0 || tau * l >= 4.0)
    throw ValidationError("beta_bound: tau outside (0, 4/l)");
  return std::sqrt(tau * d * (4.0 - tau * l));
}

Eigen::Matrix3d beta_schur_block(double tau, double d, double l, double beta) {
  Eigen::Matrix3d h;
  h << -d, 0.0, -0.5 * beta,
       0.0, -l, -0.5 * tau * l,
       -0.5 * beta, -0.5 * tau * l, -tau;
  return h;
}

std::vector<double> agc_allocate(double k_f, double omega, std::span<const double> shares) {
  double sum = 0.0;
  for (double r : shares) {
    if (r < 0.0) throw ValidationError("agc: shares must be nonnegative");
    sum += r;
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw ValidationError("agc: shares must sum to 1 (got " + std::to_string(sum) + ")");
  std::vector<double> command(shares.size());
  for (std::size_t i = 0; i < shares.size(); ++i) command[i] = -shares[i] * k_f * omega;
  return command;
}

CommGraph::CommGraph(int n_nodes, std::vector<std::pair<int, int>> edges)
    : n_nodes_(n_nodes), edges_(std::move(edges)), incidence_(n_nodes) {
  for (auto& [a, b] : edges_) {
    if (a == b || a < 0 || b < 0 || a >= n_nodes_ || b >= n_nodes_)
      throw ValidationError("comm graph: bad edge");
    if (a > b) std::swap(a, b);
  }
  for (int e = 0; e < static_cast<int>(edges_.size()); ++e) {
    auto [a, b] = edges_[e];
    incidence_[a].push_back({e, b, +1.0});
    incidence_[b].push_back({e, a, -1.0});
  }
}

bool CommGraph::connected(std::span<const char> active_mask) const {
  int start = -1;
  int n_active = 0;
  for (int i = 0; i < n_nodes_; ++i) {
    if (active_mask[i]) {
      if (start < 0) start = i;
      ++n_active;
    }
  }
  if (n_active <= 1) return true;
  std::vector<char> seen(n_nodes_, 0);
  std::queue<int> q;
  q.push(start);
  seen[start] = 1;
  int reached = 1;
  while (!q.empty()) {
    int u = q.front();
    q.pop();
    for (const Incidence& inc : incidence_[u]) {
      if (!active_mask[inc.neighbor] || seen[inc.neighbor]) continue;
      seen[inc.neighbor] = 1;
      ++reached;
      q.push(inc.neighbor);
    }
  }
  return reached == n_active;
}

}  // namespace gridsync
