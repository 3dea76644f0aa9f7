#include "doctest.h"

#include <cmath>
#include <numbers>
#include <random>

#include "gridsync/errors.hpp"
#include "gridsync/network.hpp"

using namespace gridsync;

namespace {

constexpr double kPi = std::numbers::pi;

NetworkModel two_bus(double b = 5.0) {
  std::vector<Bus> buses(2);
  buses[0].kind = BusKind::UncontrollableGen;
  buses[1].kind = BusKind::PureLoad;
  buses[1].p_load = 0.5;
  buses[1].q_load = 0.1;
  return NetworkModel(buses, {{0, 1, b, true}}, {}, 100.0);
}

/// Three-bus chain: generator - junction - load. Used as the fixture for the
/// voltage-solve cross-checks.
struct ThreeBus {
  std::vector<Bus> buses;
  std::vector<Line> lines;
  NetworkModel net;
  std::vector<GenSource> sources;
  std::vector<double> theta;

  ThreeBus(double q_load = 0.3)
      : buses(3), lines({{0, 1, 8.0, true}, {1, 2, 6.0, true}}),
        net(make_net(q_load)),
        sources({{0, 1.15, 0.08, 0.25, true}}),
        theta({0.05, 0.0, -0.04}) {}

  NetworkModel make_net(double q_load) {
    buses[0].kind = BusKind::UncontrollableGen;
    buses[1].kind = BusKind::PureLoad;
    buses[2].kind = BusKind::PureLoad;
    buses[1].q_load = 0.05;
    buses[2].q_load = q_load;
    buses[2].p_load = 0.4;
    return NetworkModel(buses, lines, {}, 100.0);
  }
};

/// Independent fixed-point sweep on the same reactive equations: per bus,
/// solve the local quadratic in V_i given the neighbors, repeat until settled.
std::vector<double> gauss_seidel_voltages(const NetworkModel& net, std::span<const double> theta,
                                          std::span<const GenSource> sources) {
  const int n = static_cast<int>(net.n_buses());
  std::vector<double> v(n, 1.0);
  std::vector<const GenSource*> src_at(n, nullptr);
  for (const GenSource& s : sources) src_at[s.bus] = &s;

  for (int sweep = 0; sweep < 20000; ++sweep) {
    double worst = 0.0;
    for (int i = 0; i < n; ++i) {
      // residual(V) = alpha V^2 + beta V + c with alpha < 0
      double alpha = 0.0, beta = 0.0;
      double c = -net.buses()[i].q_load;
      for (int k : net.incident_lines(i)) {
        const Line& ln = net.lines()[k];
        const int j = ln.from == i ? ln.to : ln.from;
        alpha -= ln.b;
        beta += ln.b * v[j] * std::cos(theta[i] - theta[j]);
      }
      if (src_at[i]) {
        alpha -= 1.0 / src_at[i]->x_dp;
        beta += src_at[i]->eqp * std::cos(src_at[i]->delta - theta[i]) / src_at[i]->x_dp;
      }
      const double disc = beta * beta + 4.0 * (-alpha) * c;
      REQUIRE(disc >= 0.0);
      const double root = (beta + std::sqrt(disc)) / (-2.0 * alpha);
      worst = std::max(worst, std::abs(root - v[i]));
      v[i] = root;
    }
    if (worst < 1e-14) break;
  }
  return v;
}

}  // namespace

TEST_CASE("line flows: zero angle difference carries no power") {
  NetworkModel net = two_bus(5.0);
  AlgebraicState alg{{0.0, 0.0}, {1.0, 1.0}, {0.0, 0.0}};
  const auto flows = line_flows(net, alg);
  CHECK(flows[0].p_from_to == doctest::Approx(0.0));
  CHECK(flows[0].q_from_to == doctest::Approx(0.0));
}

TEST_CASE("line flows: analytic sine value") {
  NetworkModel net = two_bus(2.0);
  AlgebraicState alg{{kPi / 6.0, 0.0}, {1.0, 1.0}, {0.0, 0.0}};
  const auto flows = line_flows(net, alg);
  CHECK(flows[0].p_from_to == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("line flows: active antisymmetry over random states") {
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> volt(0.8, 1.2), ang(-1.0, 1.0), sus(0.5, 30.0);
  for (int trial = 0; trial < 200; ++trial) {
    NetworkModel net = two_bus(sus(rng));
    AlgebraicState alg{{ang(rng), ang(rng)}, {volt(rng), volt(rng)}, {0.0, 0.0}};
    const auto flows = line_flows(net, alg);
    CHECK(flows[0].p_from_to + flows[0].p_to_from == doctest::Approx(0.0).epsilon(1e-15));
  }
}

TEST_CASE("line flows: out-of-service lines contribute zero") {
  std::vector<Bus> buses(2);
  buses[0].kind = BusKind::UncontrollableGen;
  NetworkModel net(buses, {{0, 1, 5.0, true}, {0, 1, 3.0, false}}, {}, 100.0);
  AlgebraicState alg{{0.4, 0.0}, {1.0, 1.0}, {0.0, 0.0}};
  const auto flows = line_flows(net, alg);
  CHECK(flows[1].p_from_to == 0.0);
  CHECK(flows[1].q_from_to == 0.0);
  CHECK(flows[0].p_from_to != 0.0);
}

TEST_CASE("mismatch: isolated generator bus balances exactly") {
  std::vector<Bus> buses(1);
  buses[0].kind = BusKind::UncontrollableGen;
  buses[0].p_load = 0.7;
  NetworkModel net(buses, {}, {}, 100.0);
  AlgebraicState alg{{0.0}, {1.0}, {0.0}};
  std::vector<PerBusInjection> inj{{0.7, 0.0}};
  const Mismatch mis = bus_power_mismatch(net, alg, inj);
  CHECK(mis.dp[0] == doctest::Approx(0.0));
}

TEST_CASE("mismatch: two-bus hand computation") {
  NetworkModel net = two_bus(5.0);
  AlgebraicState alg{{0.1, 0.0}, {1.02, 0.98}, {0.0, 0.0}};
  std::vector<PerBusInjection> inj{{0.6, 0.2}, {0.0, 0.0}};
  const Mismatch mis = bus_power_mismatch(net, alg, inj);
  const double p01 = 1.02 * 0.98 * 5.0 * std::sin(0.1);
  const double q01 = 5.0 * 1.02 * 1.02 - 1.02 * 0.98 * 5.0 * std::cos(0.1);
  const double q10 = 5.0 * 0.98 * 0.98 - 1.02 * 0.98 * 5.0 * std::cos(0.1);
  CHECK(mis.dp[0] == doctest::Approx(0.6 - p01).epsilon(1e-14));
  CHECK(mis.dp[1] == doctest::Approx(-0.5 + p01).epsilon(1e-14));
  CHECK(mis.dq[0] == doctest::Approx(0.2 - q01).epsilon(1e-14));
  CHECK(mis.dq[1] == doctest::Approx(-0.1 - q10).epsilon(1e-14));
}

TEST_CASE("mismatch: flat start with no loads is balanced everywhere") {
  std::vector<Bus> buses(3);
  buses[0].kind = BusKind::UncontrollableGen;
  NetworkModel net(buses, {{0, 1, 4.0, true}, {1, 2, 4.0, true}}, {}, 100.0);
  AlgebraicState alg{{0.0, 0.0, 0.0}, {1.0, 1.0, 1.0}, {0.0, 0.0, 0.0}};
  std::vector<PerBusInjection> inj(3);
  const Mismatch mis = bus_power_mismatch(net, alg, inj);
  for (int i = 0; i < 3; ++i) {
    CHECK(mis.dp[i] == doctest::Approx(0.0));
    CHECK(mis.dq[i] == doctest::Approx(0.0));
  }
}

TEST_CASE("mismatch: line terms cancel in the global active balance") {
  ThreeBus fix;
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> volt(0.9, 1.1), ang(-0.5, 0.5), pw(-1.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    AlgebraicState alg{{ang(rng), ang(rng), ang(rng)},
                       {volt(rng), volt(rng), volt(rng)},
                       {0.0, 0.0, 0.0}};
    std::vector<PerBusInjection> inj{{pw(rng), 0.0}, {0.0, 0.0}, {0.0, 0.0}};
    const Mismatch mis = bus_power_mismatch(fix.net, alg, inj);
    double lhs = 0.0, rhs = 0.0;
    for (int i = 0; i < 3; ++i) {
      lhs += mis.dp[i];
      rhs += inj[i].p_e - fix.net.buses()[i].p_load;
    }
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
  }
}

TEST_CASE("bus frequencies: direct division and balanced case") {
  std::vector<double> dp{0.0, 0.02};
  std::vector<Bus> buses(2);
  buses[0].kind = BusKind::UncontrollableGen;
  buses[0].d_load = 1.0;
  buses[1].d_load = 2.0;
  NetworkModel net2(buses, {{0, 1, 5.0, true}}, {}, 100.0);
  const auto w = bus_frequencies(net2, dp);
  CHECK(w[0] == 0.0);
  CHECK(w[1] == doctest::Approx(0.01));
}

TEST_CASE("network construction rejects nonpositive damping and susceptance") {
  std::vector<Bus> buses(2);
  buses[0].kind = BusKind::UncontrollableGen;
  buses[1].d_load = 0.0;
  CHECK_THROWS_AS(NetworkModel(buses, {{0, 1, 5.0, true}}, {}, 100.0), ValidationError);
  buses[1].d_load = 1.0;
  CHECK_THROWS_AS(NetworkModel(buses, {{0, 1, -5.0, true}}, {}, 100.0), ValidationError);
  CHECK_THROWS_AS(NetworkModel(buses, {{0, 1, 5.0, true}}, {}, -1.0), ValidationError);
}

TEST_CASE("solve_voltages: constructed fixed point at V = 1") {
  // single generator bus with no lines and no load; E' chosen so Q_e(1) = 0
  std::vector<Bus> buses(1);
  buses[0].kind = BusKind::UncontrollableGen;
  NetworkModel net(buses, {}, {}, 100.0);
  std::vector<GenSource> src{{0, 1.0, 0.0, 0.3, true}};
  std::vector<double> theta{0.0}, guess{0.9};
  const auto v = solve_voltages(net, theta, src, guess);
  CHECK(v[0] == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("solve_voltages: agrees with an independent fixed-point sweep") {
  ThreeBus fix;
  std::vector<double> guess{1.0, 1.0, 1.0};
  const auto v_newton = solve_voltages(fix.net, fix.theta, fix.sources, guess);
  const auto v_gs = gauss_seidel_voltages(fix.net, fix.theta, fix.sources);
  for (int i = 0; i < 3; ++i) CHECK(v_newton[i] == doctest::Approx(v_gs[i]).epsilon(1e-7));
}

TEST_CASE("solve_voltages: raising a reactive load lowers that bus voltage") {
  ThreeBus before(0.3);
  ThreeBus after(0.45);
  std::vector<double> guess{1.0, 1.0, 1.0};
  const auto v0 = solve_voltages(before.net, before.theta, before.sources, guess);
  const auto v1 = solve_voltages(after.net, after.theta, after.sources, guess);
  CHECK(v1[2] < v0[2]);
}

TEST_CASE("solve_voltages: idempotent on a solution") {
  ThreeBus fix;
  std::vector<double> guess{1.0, 1.0, 1.0};
  const auto v1 = solve_voltages(fix.net, fix.theta, fix.sources, guess);
  const auto v2 = solve_voltages(fix.net, fix.theta, fix.sources, v1);
  for (int i = 0; i < 3; ++i) CHECK(v2[i] == doctest::Approx(v1[i]).epsilon(1e-12));
}

TEST_CASE("solve_voltages: converged residual is below tolerance") {
  ThreeBus fix;
  std::vector<double> guess{1.0, 1.0, 1.0};
  const auto v = solve_voltages(fix.net, fix.theta, fix.sources, guess);
  AlgebraicState alg{fix.theta, v, {0.0, 0.0, 0.0}};
  std::vector<PerBusInjection> inj(3);
  // machine reactive injection recomputed the same way the solver sees it
  const double eta = fix.sources[0].delta - fix.theta[0];
  inj[0].q_e = fix.sources[0].eqp * v[0] * std::cos(eta) / fix.sources[0].x_dp -
               v[0] * v[0] / fix.sources[0].x_dp;
  const Mismatch mis = bus_power_mismatch(fix.net, alg, inj);
  for (int i = 0; i < 3; ++i) CHECK(std::abs(mis.dq[i]) < 1e-9);
}

TEST_CASE("solve_voltages: infeasible load reports non-convergence") {
  ThreeBus fix(2.0);  // beyond the loadability nose
  std::vector<double> guess{1.0, 1.0, 1.0};
  CHECK_THROWS_AS(solve_voltages(fix.net, fix.theta, fix.sources, guess),
                  NonConvergence);
}

TEST_CASE("solve_voltages: collapsing iterates exhaust the damping") {
  ThreeBus fix(80.0);  // absurd reactive demand drives voltages to zero
  std::vector<double> guess{1.0, 1.0, 1.0};
  CHECK_THROWS_AS(solve_voltages(fix.net, fix.theta, fix.sources, guess),
                  NegativeVoltageIterate);
}

TEST_CASE("solve_voltages: rejects nonpositive initial guess") {
  ThreeBus fix;
  std::vector<double> guess{1.0, -0.2, 1.0};
  CHECK_THROWS_AS(solve_voltages(fix.net, fix.theta, fix.sources, guess), ValidationError);
}

TEST_CASE("connectivity: split comm graph is rejected at construction (A1)") {
  std::vector<Bus> buses(4);
  buses[0].kind = BusKind::ControllableGen;
  buses[1].kind = BusKind::ControllableGen;
  buses[2].kind = BusKind::ControllableGen;
  buses[3].kind = BusKind::PureLoad;
  std::vector<Line> lines{{0, 1, 5.0, true}, {1, 2, 5.0, true}, {2, 3, 5.0, true}};
  CHECK_THROWS_AS(NetworkModel(buses, lines, {{0, 1}}, 100.0), ValidationError);
  CHECK_NOTHROW(NetworkModel(buses, lines, {{0, 1}, {1, 2}}, 100.0));
}

TEST_CASE("connectivity: losing all lines at one bus splits the power graph") {
  std::vector<Bus> buses(3);
  buses[0].kind = BusKind::UncontrollableGen;
  NetworkModel net(buses, {{0, 1, 5.0, true}, {1, 2, 5.0, true}}, {}, 100.0);
  CHECK(check_connectivity(net).power_connected);
  const NetworkModel cut = net.with_line_service(1, 2, false);
  CHECK_FALSE(check_connectivity(cut).power_connected);
}

TEST_CASE("connectivity: comm edges may only touch controllable buses") {
  std::vector<Bus> buses(2);
  buses[0].kind = BusKind::ControllableGen;
  buses[1].kind = BusKind::UncontrollableGen;
  CHECK_THROWS_AS(NetworkModel(buses, {{0, 1, 5.0, true}}, {{0, 1}}, 100.0), ValidationError);
}

TEST_CASE("line trip and reclose restore the exact susceptance") {
  NetworkModel net = two_bus(5.0);
  const NetworkModel tripped = net.with_line_service(0, 1, false);
  CHECK_FALSE(tripped.line_service(0, 1));
  const NetworkModel restored = tripped.with_line_service(0, 1, true);
  CHECK(restored.lines()[0].b == net.lines()[0].b);
  CHECK(restored.line_service(0, 1));
}
