#pragma once

#include <string>
#include <vector>

#include "gridsync/engine.hpp"
#include "gridsync/scenario.hpp"

namespace gridsync {

/// Column-labelled time series as written to / read from trajectory.csv.
struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  int column(const std::string& name) const;  // -1 when absent
};

void write_trajectory_csv(const std::string& path, const Scenario& sc, const Trajectory& traj);
CsvTable read_csv(const std::string& path);

/// Rebuilds a SystemState from one row of a trajectory.csv written for the
/// same scenario (used by the hessian snapshot check).
SystemState state_from_csv_row(const Scenario& sc, const CsvTable& table, int row);

enum class RunStatus { ConvergedCertified, NotCertified, Diverged };

struct RunReport {
  RunStatus status = RunStatus::NotCertified;
  std::string diagnostic;
  Certification certification;
  std::vector<BetaAudit> beta;
};

/// Builds the run report (certification outcome + diagnostics) from a
/// finished trajectory. `kkt_tol` decides certified vs not.
RunReport build_report(const Scenario& sc, const Trajectory& traj, double kkt_tol = 1e-6);

void write_summary_json(const std::string& path, const Scenario& sc, const Trajectory& traj,
                        const RunReport& report);

/// One SVG line plot per configured channel (frequency, pg, voltage, mu, z).
void write_plots(const std::string& dir, const Scenario& sc, const Trajectory& traj);

}  // namespace gridsync
