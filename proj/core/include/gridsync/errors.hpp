#pragma once

#include <stdexcept>
#include <string>

namespace gridsync {

/// Base class for everything this library throws on purpose.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Network or scenario data violates a model invariant (rejected at build time).
struct ValidationError : Error {
  using Error::Error;
};

/// Scenario file is structurally wrong (missing/ill-typed field); message carries the field path.
struct SchemaError : Error {
  using Error::Error;
};

/// Newton iteration on the reactive equations ran out of iterations.
struct NonConvergence : Error {
  using Error::Error;
};

/// Newton step kept producing nonpositive voltages even after damping.
struct NegativeVoltageIterate : Error {
  using Error::Error;
};

/// Dispatch problem violates the capacity feasibility condition.
struct Infeasible : Error {
  using Error::Error;
};

/// A state bound was exceeded during integration; message names the offending time.
struct SimulationDiverged : Error {
  SimulationDiverged(const std::string& what, double at_time)
      : Error(what), time(at_time) {}
  double time;
};

/// Topology event left the power or communication graph disconnected.
struct DisconnectedAfterEvent : Error {
  using Error::Error;
};

/// Trajectory tail is not settled enough to trust equilibrium-relative audits.
struct TrajectoryNotConverged : Error {
  using Error::Error;
};

}  // namespace gridsync
