#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

namespace gridsync {

enum class BusKind { ControllableGen, UncontrollableGen, PureLoad };

struct Bus {
  BusKind kind = BusKind::PureLoad;
  double p_load = 0.0;   // active demand, p.u.
  double q_load = 0.0;   // reactive demand, p.u.
  double d_load = 1.0;   // frequency-sensitive load coefficient, p.u./(rad/s), > 0
  bool machine_online = true;  // meaningful on generator buses only
};

struct Line {
  int from = 0;
  int to = 0;
  double b = 0.0;  // series susceptance, p.u., > 0
  bool in_service = true;
};

/// Active/reactive flow of one line, both orientations. Zero when out of service.
struct LineFlow {
  double p_from_to = 0.0;
  double q_from_to = 0.0;
  double p_to_from = 0.0;
  double q_to_from = 0.0;
};

/// Algebraic variables of the network at one instant.
struct AlgebraicState {
  std::vector<double> theta;        // bus voltage angle, rad
  std::vector<double> v;            // bus voltage magnitude, p.u., > 0
  std::vector<double> omega_tilde;  // bus frequency deviation, rad/s
};

/// Everything the reactive solve needs to know about one machine.
struct GenSource {
  int bus = -1;
  double eqp = 0.0;    // E'_q
  double delta = 0.0;  // rotor angle, rad
  double x_dp = 0.1;   // d-axis transient reactance
  bool online = true;
};

struct PerBusInjection {
  double p_e = 0.0;
  double q_e = 0.0;
};

/// Immutable grid topology: buses, lines, communication edges among
/// controllable-generator buses, and the per-unit base. Construction
/// validates connectivity (power and comm), positive susceptances and
/// positive load damping; events produce modified copies.
class NetworkModel {
 public:
  /// Placeholder single-bus network; real models come from the full constructor.
  NetworkModel() : NetworkModel({Bus{}}, {}, {}, 100.0) {}
  NetworkModel(std::vector<Bus> buses, std::vector<Line> lines,
               std::vector<std::pair<int, int>> comm_edges, double base_mva);

  std::size_t n_buses() const { return buses_.size(); }
  const std::vector<Bus>& buses() const { return buses_; }
  const std::vector<Line>& lines() const { return lines_; }
  const std::vector<std::pair<int, int>>& comm_edges() const { return comm_edges_; }
  double base_mva() const { return base_mva_; }

  /// Indices of in-service lines incident to bus i.
  std::span<const int> incident_lines(int bus) const;

  bool is_generator_bus(int bus) const {
    return buses_[bus].kind != BusKind::PureLoad;
  }

  NetworkModel with_line_service(int from, int to, bool in_service) const;
  NetworkModel with_load_delta(int bus, double dp, double dq) const;
  NetworkModel with_machine_online(int bus, bool online) const;

  /// True if a line (from,to) exists and matches the given service state.
  bool line_service(int from, int to, bool* found = nullptr) const;

 private:
  void rebuild_adjacency();

  std::vector<Bus> buses_;
  std::vector<Line> lines_;
  std::vector<std::pair<int, int>> comm_edges_;
  double base_mva_;
  // CSR-style adjacency over in-service lines
  std::vector<int> adj_offsets_;
  std::vector<int> adj_lines_;
};

std::vector<LineFlow> line_flows(const NetworkModel& net, const AlgebraicState& alg);

/// Per-bus (ΔP, ΔQ) before the frequency-sensitive load term. Machine
/// injections must be given per bus (zero entries on load buses).
struct Mismatch {
  std::vector<double> dp;
  std::vector<double> dq;
};
Mismatch bus_power_mismatch(const NetworkModel& net, const AlgebraicState& alg,
                            std::span<const PerBusInjection> injections);

/// ω̃_i = ΔP_i / D̃_i, the unique root of the active balance at each bus.
std::vector<double> bus_frequencies(const NetworkModel& net, std::span<const double> dp);

struct VoltageSolveOptions {
  double tol_q = 1e-9;
  int max_iter = 50;
  int max_halvings = 10;
};

/// Newton solve of the reactive balance for all bus voltage magnitudes,
/// warm-started from `v_guess` (every entry must be positive).
std::vector<double> solve_voltages(const NetworkModel& net, std::span<const double> theta,
                                   std::span<const GenSource> sources,
                                   std::span<const double> v_guess,
                                   const VoltageSolveOptions& opts = {});

struct Connectivity {
  bool power_connected = false;
  bool comm_connected = false;
};
Connectivity check_connectivity(const NetworkModel& net);

}  // namespace gridsync
