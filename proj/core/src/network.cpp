#include "gridsync/network.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <queue>
#include <string>

#include "gridsync/errors.hpp"

namespace gridsync {

namespace {

std::vector<char> reachable(std::size_t n, const std::vector<std::vector<int>>& adj, int start) {
  std::vector<char> seen(n, 0);
  if (n == 0) return seen;
  std::queue<int> q;
  q.push(start);
  seen[start] = 1;
  while (!q.empty()) {
    int u = q.front();
    q.pop();
    for (int w : adj[u]) {
      if (!seen[w]) {
        seen[w] = 1;
        q.push(w);
      }
    }
  }
  return seen;
}

}  // namespace

NetworkModel::NetworkModel(std::vector<Bus> buses, std::vector<Line> lines,
                           std::vector<std::pair<int, int>> comm_edges, double base_mva)
    : buses_(std::move(buses)),
      lines_(std::move(lines)),
      comm_edges_(std::move(comm_edges)),
      base_mva_(base_mva) {
  const int n = static_cast<int>(buses_.size());
  if (n == 0) throw ValidationError("network: empty bus list");
  if (base_mva_ <= 0.0) throw ValidationError("network: base MVA must be positive");
  for (int i = 0; i < n; ++i) {
    if (buses_[i].d_load <= 0.0)
      throw ValidationError("network: load damping must be positive at bus " + std::to_string(i));
  }
  for (const Line& ln : lines_) {
    if (ln.from < 0 || ln.from >= n || ln.to < 0 || ln.to >= n || ln.from == ln.to)
      throw ValidationError("network: line endpoints out of range");
    if (ln.b <= 0.0) throw ValidationError("network: line susceptance must be positive");
  }
  for (auto [a, b] : comm_edges_) {
    if (a < 0 || a >= n || b < 0 || b >= n || a == b)
      throw ValidationError("network: comm edge endpoints out of range");
    if (buses_[a].kind != BusKind::ControllableGen || buses_[b].kind != BusKind::ControllableGen)
      throw ValidationError("network: comm edges may touch controllable-generator buses only (A1)");
  }
  rebuild_adjacency();
  Connectivity c = check_connectivity(*this);
  if (!c.power_connected)
    throw ValidationError("network: power graph is disconnected over in-service lines");
  if (!c.comm_connected)
    throw ValidationError("network: communication graph is disconnected (A1)");
}

void NetworkModel::rebuild_adjacency() {
  const int n = static_cast<int>(buses_.size());
  std::vector<int> degree(n, 0);
  for (const Line& ln : lines_) {
    if (!ln.in_service) continue;
    ++degree[ln.from];
    ++degree[ln.to];
  }
  adj_offsets_.assign(n + 1, 0);
  for (int i = 0; i < n; ++i) adj_offsets_[i + 1] = adj_offsets_[i] + degree[i];
  adj_lines_.assign(adj_offsets_[n], 0);
  std::vector<int> cursor(adj_offsets_.begin(), adj_offsets_.end() - 1);
  for (int k = 0; k < static_cast<int>(lines_.size()); ++k) {
    const Line& ln = lines_[k];
    if (!ln.in_service) continue;
    adj_lines_[cursor[ln.from]++] = k;
    adj_lines_[cursor[ln.to]++] = k;
  }
}

std::span<const int> NetworkModel::incident_lines(int bus) const {
  return {adj_lines_.data() + adj_offsets_[bus],
          static_cast<std::size_t>(adj_offsets_[bus + 1] - adj_offsets_[bus])};
}

NetworkModel NetworkModel::with_line_service(int from, int to, bool in_service) const {
  NetworkModel copy = *this;
  bool found = false;
  for (Line& ln : copy.lines_) {
    if ((ln.from == from && ln.to == to) || (ln.from == to && ln.to == from)) {
      ln.in_service = in_service;
      found = true;
    }
  }
  if (!found)
    throw ValidationError("network: no line (" + std::to_string(from) + "," + std::to_string(to) + ")");
  copy.rebuild_adjacency();
  return copy;
}

NetworkModel NetworkModel::with_load_delta(int bus, double dp, double dq) const {
  NetworkModel copy = *this;
  copy.buses_.at(bus).p_load += dp;
  copy.buses_.at(bus).q_load += dq;
  return copy;
}

NetworkModel NetworkModel::with_machine_online(int bus, bool online) const {
  NetworkModel copy = *this;
  if (!copy.is_generator_bus(bus))
    throw ValidationError("network: bus " + std::to_string(bus) + " has no machine");
  copy.buses_.at(bus).machine_online = online;
  return copy;
}

bool NetworkModel::line_service(int from, int to, bool* found) const {
  for (const Line& ln : lines_) {
    if ((ln.from == from && ln.to == to) || (ln.from == to && ln.to == from)) {
      if (found) *found = true;
      return ln.in_service;
    }
  }
  if (found) *found = false;
  return false;
}

std::vector<LineFlow> line_flows(const NetworkModel& net, const AlgebraicState& alg) {
  std::vector<LineFlow> flows(net.lines().size());
  for (std::size_t k = 0; k < net.lines().size(); ++k) {
    const Line& ln = net.lines()[k];
    if (!ln.in_service) continue;
    const double vi = alg.v[ln.from];
    const double vj = alg.v[ln.to];
    const double dth = alg.theta[ln.from] - alg.theta[ln.to];
    const double s = std::sin(dth);
    const double c = std::cos(dth);
    flows[k].p_from_to = vi * vj * ln.b * s;
    flows[k].q_from_to = ln.b * vi * vi - vi * vj * ln.b * c;
    flows[k].p_to_from = -flows[k].p_from_to;
    flows[k].q_to_from = ln.b * vj * vj - vi * vj * ln.b * c;
  }
  return flows;
}

Mismatch bus_power_mismatch(const NetworkModel& net, const AlgebraicState& alg,
                            std::span<const PerBusInjection> injections) {
  const int n = static_cast<int>(net.n_buses());
  Mismatch mis;
  mis.dp.assign(n, 0.0);
  mis.dq.assign(n, 0.0);
  const std::vector<LineFlow> flows = line_flows(net, alg);
  for (int i = 0; i < n; ++i) {
    double p_out = 0.0, q_out = 0.0;
    for (int k : net.incident_lines(i)) {
      const Line& ln = net.lines()[k];
      if (ln.from == i) {
        p_out += flows[k].p_from_to;
        q_out += flows[k].q_from_to;
      } else {
        p_out += flows[k].p_to_from;
        q_out += flows[k].q_to_from;
      }
    }
    mis.dp[i] = injections[i].p_e - net.buses()[i].p_load - p_out;
    mis.dq[i] = injections[i].q_e - net.buses()[i].q_load - q_out;
  }
  return mis;
}

std::vector<double> bus_frequencies(const NetworkModel& net, std::span<const double> dp) {
  std::vector<double> w(net.n_buses());
  for (std::size_t i = 0; i < net.n_buses(); ++i) w[i] = dp[i] / net.buses()[i].d_load;
  return w;
}

std::vector<double> solve_voltages(const NetworkModel& net, std::span<const double> theta,
                                   std::span<const GenSource> sources,
                                   std::span<const double> v_guess,
                                   const VoltageSolveOptions& opts) {
  const int n = static_cast<int>(net.n_buses());
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) {
    if (v_guess[i] <= 0.0) throw ValidationError("solve_voltages: initial guess must be positive");
    v[i] = v_guess[i];
  }

  // one machine source per bus at most; index them for the residual loop
  std::vector<int> source_at(n, -1);
  for (int s = 0; s < static_cast<int>(sources.size()); ++s) {
    if (sources[s].online) source_at[sources[s].bus] = s;
  }

  auto residual = [&](const Eigen::VectorXd& vv, Eigen::VectorXd& r) {
    r.setZero();
    for (int i = 0; i < n; ++i) r[i] = -net.buses()[i].q_load;
    for (const Line& ln : net.lines()) {
      if (!ln.in_service) continue;
      const double c = std::cos(theta[ln.from] - theta[ln.to]);
      r[ln.from] -= ln.b * (vv[ln.from] * vv[ln.from] - vv[ln.from] * vv[ln.to] * c);
      r[ln.to] -= ln.b * (vv[ln.to] * vv[ln.to] - vv[ln.from] * vv[ln.to] * c);
    }
    for (int i = 0; i < n; ++i) {
      const int s = source_at[i];
      if (s < 0) continue;
      const double c = std::cos(sources[s].delta - theta[i]);
      r[i] += sources[s].eqp * vv[i] * c / sources[s].x_dp - vv[i] * vv[i] / sources[s].x_dp;
    }
  };

  Eigen::VectorXd r(n), r_try(n);
  Eigen::MatrixXd jac(n, n);
  residual(v, r);

  for (int iter = 0; iter < opts.max_iter; ++iter) {
    if (r.lpNorm<Eigen::Infinity>() < opts.tol_q) {
      return std::vector<double>(v.data(), v.data() + n);
    }
    jac.setZero();
    for (const Line& ln : net.lines()) {
      if (!ln.in_service) continue;
      const double c = std::cos(theta[ln.from] - theta[ln.to]);
      jac(ln.from, ln.from) -= ln.b * (2.0 * v[ln.from] - v[ln.to] * c);
      jac(ln.from, ln.to) += ln.b * v[ln.from] * c;
      jac(ln.to, ln.to) -= ln.b * (2.0 * v[ln.to] - v[ln.from] * c);
      jac(ln.to, ln.from) += ln.b * v[ln.to] * c;
    }
    for (int i = 0; i < n; ++i) {
      const int s = source_at[i];
      if (s < 0) continue;
      const double c = std::cos(sources[s].delta - theta[i]);
      jac(i, i) += sources[s].eqp * c / sources[s].x_dp - 2.0 * v[i] / sources[s].x_dp;
    }

    const Eigen::VectorXd dv = jac.partialPivLu().solve(-r);

    // damp the step until all voltages stay positive
    double alpha = 1.0;
    int halvings = 0;
    while ((v + alpha * dv).minCoeff() <= 0.0) {
      alpha *= 0.5;
      if (++halvings > opts.max_halvings)
        throw NegativeVoltageIterate("solve_voltages: step damping exhausted");
    }
    v += alpha * dv;
    residual(v, r);
  }
  if (r.lpNorm<Eigen::Infinity>() < opts.tol_q) {
    return std::vector<double>(v.data(), v.data() + n);
  }
  throw NonConvergence("solve_voltages: Newton exceeded max iterations (reduce dt?)");
}

Connectivity check_connectivity(const NetworkModel& net) {
  const int n = static_cast<int>(net.n_buses());
  Connectivity out;

  std::vector<std::vector<int>> adj(n);
  for (const Line& ln : net.lines()) {
    if (!ln.in_service) continue;
    adj[ln.from].push_back(ln.to);
    adj[ln.to].push_back(ln.from);
  }
  std::vector<char> seen = reachable(n, adj, 0);
  out.power_connected = std::all_of(seen.begin(), seen.end(), [](char s) { return s != 0; });

  // comm graph spans the online controllable-generator buses
  std::vector<int> cg_nodes;
  for (int i = 0; i < n; ++i) {
    if (net.buses()[i].kind == BusKind::ControllableGen && net.buses()[i].machine_online)
      cg_nodes.push_back(i);
  }
  if (cg_nodes.empty()) {
    out.comm_connected = true;
    return out;
  }
  std::vector<int> cg_index(n, -1);
  for (int k = 0; k < static_cast<int>(cg_nodes.size()); ++k) cg_index[cg_nodes[k]] = k;
  std::vector<std::vector<int>> cadj(cg_nodes.size());
  for (auto [a, b] : net.comm_edges()) {
    if (cg_index[a] < 0 || cg_index[b] < 0) continue;  // edge to an offline node
    cadj[cg_index[a]].push_back(cg_index[b]);
    cadj[cg_index[b]].push_back(cg_index[a]);
  }
  std::vector<char> cseen = reachable(cg_nodes.size(), cadj, 0);
  out.comm_connected =
      std::all_of(cseen.begin(), cseen.end(), [](char s) { return s != 0; });
  return out;
}

}  // namespace gridsync
