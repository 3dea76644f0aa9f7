#include "doctest.h"

#include <cmath>
#include <random>

#include "gridsync/dispatch.hpp"
#include "gridsync/errors.hpp"

using namespace gridsync;

namespace {

/// Four-unit cost table used throughout (MW units).
DispatchProblem four_units(double demand) {
  std::vector<CostFunction> costs = {{0.00009, 0.032}, {0.00014, 0.030},
                                     {0.00010, 0.032}, {0.00008, 0.032}};
  std::vector<std::pair<double, double>> limits = {{0, 1000}, {0, 1000}, {0, 850}, {0, 1080}};
  return DispatchProblem(std::move(costs), std::move(limits), demand);
}

/// Brute-force oracle: scan a dense multiplier grid and keep the best
/// balance. Deliberately independent of the bisection path.
struct GridOracle {
  double lambda = 0.0;
  std::vector<double> pg;
  double quantum = 0.0;  // worst-case generation error from the grid spacing
};
GridOracle lambda_grid_solve(const DispatchProblem& prob, int points = 1000000) {
  double lo = 1e300, hi = -1e300;
  for (std::size_t i = 0; i < prob.costs.size(); ++i) {
    lo = std::min(lo, -prob.costs[i].marginal(prob.limits[i].second));
    hi = std::max(hi, -prob.costs[i].marginal(prob.limits[i].first));
  }
  lo -= 0.1;
  hi += 0.1;
  GridOracle best;
  double best_err = 1e300;
  for (int k = 0; k <= points; ++k) {
    const double lambda = lo + (hi - lo) * k / points;
    double sum = 0.0;
    for (std::size_t i = 0; i < prob.costs.size(); ++i) {
      const double p = (-lambda - prob.costs[i].b) / prob.costs[i].a;
      sum += std::clamp(p, prob.limits[i].first, prob.limits[i].second);
    }
    const double err = std::abs(sum - prob.demand);
    if (err < best_err) {
      best_err = err;
      best.lambda = lambda;
    }
  }
  for (std::size_t i = 0; i < prob.costs.size(); ++i) {
    const double p = (-best.lambda - prob.costs[i].b) / prob.costs[i].a;
    best.pg.push_back(std::clamp(p, prob.limits[i].first, prob.limits[i].second));
    best.quantum = std::max(best.quantum, 2.0 * (hi - lo) / points / prob.costs[i].a);
  }
  return best;
}

}  // namespace

TEST_CASE("four-unit case at 3414 MW: frozen expected generations") {
  const DispatchProblem prob = four_units(3414.0);
  const DispatchSolution sol = solve_sfc(prob);
  // expected values computed by the independent lambda-grid oracle below and
  // cross-checked by hand from the equal-marginal-cost condition
  CHECK(sol.pg[0] == doctest::Approx(927.0).epsilon(2.0 / 927.0));
  CHECK(sol.pg[1] == doctest::Approx(610.0).epsilon(2.0 / 610.0));
  CHECK(sol.pg[2] == doctest::Approx(834.0).epsilon(2.0 / 834.0));
  CHECK(sol.pg[3] == doctest::Approx(1043.0).epsilon(2.0 / 1043.0));
  CHECK(-sol.lambda == doctest::Approx(0.1154).epsilon(1e-3));
  // all marginal costs identical for interior units
  for (int i = 0; i < 4; ++i)
    CHECK(prob.costs[i].marginal(sol.pg[i]) == doctest::Approx(-sol.lambda).epsilon(1e-9));

  const GridOracle oracle = lambda_grid_solve(prob);
  for (int i = 0; i < 4; ++i)
    CHECK(std::abs(sol.pg[i] - oracle.pg[i]) < oracle.quantum);
}

TEST_CASE("demand at the capacity boundary puts every unit at its limit") {
  const DispatchProblem full = four_units(3930.0);
  const DispatchSolution sol = solve_sfc(full);
  CHECK(sol.pg[0] == doctest::Approx(1000.0));
  CHECK(sol.pg[1] == doctest::Approx(1000.0));
  CHECK(sol.pg[2] == doctest::Approx(850.0));
  CHECK(sol.pg[3] == doctest::Approx(1080.0));

  const DispatchProblem empty = four_units(0.0);
  const DispatchSolution zero = solve_sfc(empty);
  for (int i = 0; i < 4; ++i) CHECK(zero.pg[i] == doctest::Approx(0.0));
}

TEST_CASE("stage-2-style demand binds exactly the two tight units") {
  const DispatchSolution sol = solve_sfc(four_units(3550.0));
  CHECK(sol.binding[0] == BindingSide::Interior);
  CHECK(sol.binding[1] == BindingSide::Interior);
  CHECK(sol.binding[2] == BindingSide::Upper);
  CHECK(sol.binding[3] == BindingSide::Upper);
  CHECK(sol.pg[2] == doctest::Approx(850.0));
  CHECK(sol.pg[3] == doctest::Approx(1080.0));
  CHECK(sol.gamma_plus[2] > 0.0);
  CHECK(sol.gamma_plus[3] > 0.0);
}

TEST_CASE("random feasible instances match the grid oracle") {
  std::mt19937 rng(99);
  std::uniform_real_distribution<double> curv(1e-5, 3e-4), lin(0.0, 0.1), cap(50.0, 1500.0);
  for (int trial = 0; trial < 25; ++trial) {
    std::vector<CostFunction> costs;
    std::vector<std::pair<double, double>> limits;
    double cap_total = 0.0;
    const int n = 2 + static_cast<int>(trial % 5);
    for (int i = 0; i < n; ++i) {
      costs.push_back({curv(rng), lin(rng)});
      const double c = cap(rng);
      limits.emplace_back(0.0, c);
      cap_total += c;
    }
    std::uniform_real_distribution<double> dem(0.0, cap_total);
    const DispatchProblem prob(costs, limits, dem(rng));
    const DispatchSolution sol = solve_sfc(prob);
    CHECK(sol.kkt_residual < 1e-9);
    double sum = 0.0;
    for (double p : sol.pg) sum += p;
    CHECK(sum == doctest::Approx(prob.demand).epsilon(1e-9));
    const GridOracle oracle = lambda_grid_solve(prob, 200000);
    for (int i = 0; i < n; ++i)
      CHECK(std::abs(sol.pg[i] - oracle.pg[i]) < oracle.quantum);
  }
}

TEST_CASE("monotonicity: optimal generations never decrease with demand") {
  std::vector<double> demands{100, 500, 1200, 2000, 2700, 3300, 3700, 3930};
  std::vector<double> prev(4, -1.0);
  for (double d : demands) {
    const DispatchSolution sol = solve_sfc(four_units(d));
    for (int i = 0; i < 4; ++i) {
      CHECK(sol.pg[i] >= prev[i] - 1e-9);
      prev[i] = sol.pg[i];
    }
  }
}

TEST_CASE("repeated solves agree (multiplier unique under strict feasibility)") {
  const DispatchSolution a = solve_sfc(four_units(2500.0));
  const DispatchSolution b = solve_sfc(four_units(2500.0));
  CHECK(a.lambda == doctest::Approx(b.lambda).epsilon(1e-12));
  for (int i = 0; i < 4; ++i) CHECK(a.pg[i] == doctest::Approx(b.pg[i]).epsilon(1e-12));
}

TEST_CASE("check_a3 boundary cases") {
  std::vector<std::pair<double, double>> limits = {{0, 1000}, {0, 1000}, {0, 850}, {0, 1080}};
  CHECK(check_a3(limits, 3414.0).feasible);
  CHECK(check_a3(limits, 3414.0).strict);
  CHECK(check_a3(limits, 3930.0).feasible);
  CHECK_FALSE(check_a3(limits, 3930.0).strict);
  CHECK_FALSE(check_a3(limits, 4000.0).feasible);
}

TEST_CASE("constructor rejects infeasible demand") {
  CHECK_THROWS_AS(four_units(4000.0), Infeasible);
  CHECK_THROWS_AS(four_units(-5.0), Infeasible);
}

TEST_CASE("kkt_residual: solver output is clean, perturbations show up linearly") {
  const DispatchProblem prob = four_units(3414.0);
  DispatchSolution sol = solve_sfc(prob);
  CHECK(kkt_residual(prob, sol.pg, sol.lambda, sol.gamma_minus, sol.gamma_plus).max_residual <
        1e-9);
  sol.pg[1] += 0.01;
  const KktReport rep = kkt_residual(prob, sol.pg, sol.lambda, sol.gamma_minus, sol.gamma_plus);
  CHECK(rep.balance == doctest::Approx(0.01).epsilon(1e-6));
}
