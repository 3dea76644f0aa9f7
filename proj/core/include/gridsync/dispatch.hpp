#pragma once

#include <span>
#include <utility>
#include <vector>

#include "gridsync/controller.hpp"

namespace gridsync {

/// One-balance, box-constrained economic dispatch over the controllable
/// generators. Units are whatever the caller uses consistently (MW or p.u.).
struct DispatchProblem {
  std::vector<CostFunction> costs;
  std::vector<std::pair<double, double>> limits;  // (p_min, p_max) per generator
  double demand = 0.0;

  DispatchProblem(std::vector<CostFunction> c, std::vector<std::pair<double, double>> lim,
                  double dem);
};

enum class BindingSide { Interior, Lower, Upper };

struct DispatchSolution {
  std::vector<double> pg;
  double lambda = 0.0;  // multiplier of the balance constraint; -lambda is the marginal cost
  std::vector<BindingSide> binding;
  std::vector<double> gamma_minus;
  std::vector<double> gamma_plus;
  double kkt_residual = 0.0;
};

struct FeasibilityCheck {
  bool feasible = false;
  bool strict = false;
};

FeasibilityCheck check_a3(std::span<const std::pair<double, double>> limits, double demand);

/// Exact solve via bisection on the balance multiplier; the dual map
/// lambda -> sum of clipped inverse marginal costs is monotone.
DispatchSolution solve_sfc(const DispatchProblem& problem);

struct KktReport {
  double stationarity = 0.0;
  double balance = 0.0;
  double bounds = 0.0;
  double dual_sign = 0.0;
  double complementarity = 0.0;
  double max_residual = 0.0;
};

/// Max-norm residuals of a candidate point against the problem's KKT system.
KktReport kkt_residual(const DispatchProblem& problem, std::span<const double> pg, double mu,
                       std::span<const double> gamma_minus, std::span<const double> gamma_plus);

}  // namespace gridsync
