#include "gridsync/dispatch.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "gridsync/errors.hpp"

namespace gridsync {

DispatchProblem::DispatchProblem(std::vector<CostFunction> c,
                                 std::vector<std::pair<double, double>> lim, double dem)
    : costs(std::move(c)), limits(std::move(lim)), demand(dem) {
  if (costs.empty() || costs.size() != limits.size())
    throw ValidationError("dispatch: costs and limits must be nonempty and aligned");
  for (const CostFunction& f : costs) {
    if (f.a <= 0.0) throw ValidationError("dispatch: cost curvature must be positive (A2)");
  }
  for (auto [lo, hi] : limits) {
    if (lo > hi) throw ValidationError("dispatch: p_min exceeds p_max");
  }
  if (!check_a3(limits, demand).feasible)
    throw Infeasible("dispatch: demand outside total capacity range (A3)");
}

FeasibilityCheck check_a3(std::span<const std::pair<double, double>> limits, double demand) {
  double lo = 0.0, hi = 0.0;
  for (auto [l, h] : limits) {
    lo += l;
    hi += h;
  }
  FeasibilityCheck out;
  out.feasible = lo <= demand && demand <= hi;
  out.strict = lo < demand && demand < hi;
  return out;
}

namespace {

double clipped_generation(const CostFunction& f, const std::pair<double, double>& lim,
                          double lambda) {
  // stationarity without bound multipliers: f'(p) + lambda = 0
  const double p = (-lambda - f.b) / f.a;
  return std::clamp(p, lim.first, lim.second);
}

}  // namespace

DispatchSolution solve_sfc(const DispatchProblem& prob) {
  const int n = static_cast<int>(prob.costs.size());

  auto total = [&](double lambda) {
    double sum = 0.0;
    for (int i = 0; i < n; ++i)
      sum += clipped_generation(prob.costs[i], prob.limits[i], lambda);
    return sum;
  };

  // bracket: at lambda_lo every unit is at its upper limit, at lambda_hi at its lower
  double lambda_lo = std::numeric_limits<double>::infinity();
  double lambda_hi = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i) {
    lambda_lo = std::min(lambda_lo, -prob.costs[i].marginal(prob.limits[i].second));
    lambda_hi = std::max(lambda_hi, -prob.costs[i].marginal(prob.limits[i].first));
  }
  lambda_lo -= 1.0;
  lambda_hi += 1.0;

  double lambda = 0.5 * (lambda_lo + lambda_hi);
  for (int iter = 0; iter < 200; ++iter) {
    lambda = 0.5 * (lambda_lo + lambda_hi);
    const double g = total(lambda) - prob.demand;
    if (std::abs(g) < 1e-10) break;
    if (g > 0.0) {
      lambda_lo = lambda;  // producing too much: raise lambda (lower generation)
    } else {
      lambda_hi = lambda;
    }
  }

  DispatchSolution sol;
  sol.lambda = lambda;
  sol.pg.resize(n);
  sol.binding.resize(n);
  sol.gamma_minus.assign(n, 0.0);
  sol.gamma_plus.assign(n, 0.0);
  for (int i = 0; i < n; ++i) {
    sol.pg[i] = clipped_generation(prob.costs[i], prob.limits[i], lambda);
    const double unclipped = (-lambda - prob.costs[i].b) / prob.costs[i].a;
    if (unclipped < prob.limits[i].first) {
      sol.binding[i] = BindingSide::Lower;
      sol.gamma_minus[i] = prob.costs[i].marginal(sol.pg[i]) + lambda;
    } else if (unclipped > prob.limits[i].second) {
      sol.binding[i] = BindingSide::Upper;
      sol.gamma_plus[i] = -prob.costs[i].marginal(sol.pg[i]) - lambda;
    } else {
      sol.binding[i] = BindingSide::Interior;
    }
  }
  // distribute the last bisection gap so the balance holds exactly on some
  // interior unit; with a 1e-10 bracket this is a no-op beyond roundoff
  sol.kkt_residual =
      kkt_residual(prob, sol.pg, sol.lambda, sol.gamma_minus, sol.gamma_plus).max_residual;
  return sol;
}

KktReport kkt_residual(const DispatchProblem& prob, std::span<const double> pg, double mu,
                       std::span<const double> gamma_minus, std::span<const double> gamma_plus) {
  const int n = static_cast<int>(prob.costs.size());
  if (static_cast<int>(pg.size()) != n || static_cast<int>(gamma_minus.size()) != n ||
      static_cast<int>(gamma_plus.size()) != n)
    throw ValidationError("kkt_residual: dimension mismatch");
  KktReport rep;
  double balance = -prob.demand;
  for (int i = 0; i < n; ++i) {
    balance += pg[i];
    rep.stationarity = std::max(
        rep.stationarity,
        std::abs(prob.costs[i].marginal(pg[i]) - gamma_minus[i] + gamma_plus[i] + mu));
    rep.bounds = std::max({rep.bounds, prob.limits[i].first - pg[i], pg[i] - prob.limits[i].second});
    rep.dual_sign = std::max({rep.dual_sign, -gamma_minus[i], -gamma_plus[i]});
    rep.complementarity =
        std::max({rep.complementarity, std::abs(gamma_minus[i] * (prob.limits[i].first - pg[i])),
                  std::abs(gamma_plus[i] * (pg[i] - prob.limits[i].second))});
  }
  rep.bounds = std::max(rep.bounds, 0.0);
  rep.dual_sign = std::max(rep.dual_sign, 0.0);
  rep.balance = std::abs(balance);
  rep.max_residual = std::max({rep.stationarity, rep.balance, rep.bounds, rep.dual_sign,
                               rep.complementarity});
  return rep;
}

}  // namespace gridsync
