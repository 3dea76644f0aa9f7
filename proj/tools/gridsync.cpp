#include "CLI11.hpp"
#include "json.hpp"

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <mutex>
#include <thread>
#include <vector>

#include "gridsync/dispatch.hpp"
#include "gridsync/errors.hpp"
#include "gridsync/output.hpp"
#include "gridsync/scenario.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace gridsync;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitNotCertified = 2;
constexpr int kExitDiverged = 3;
constexpr int kExitHessianIndefinite = 4;

int max_batch_threads() {
  if (const char* env = std::getenv("GRIDSYNC_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

/// Table-style (bus, [pmin, pmax] MW, a, b) entries of the bundled four-unit
/// dispatch case.
DispatchProblem table1_problem(double demand_mw) {
  std::vector<CostFunction> costs = {{0.00009, 0.032}, {0.00014, 0.030},
                                     {0.00010, 0.032}, {0.00008, 0.032}};
  std::vector<std::pair<double, double>> limits = {{0, 1000}, {0, 1000}, {0, 850}, {0, 1080}};
  return DispatchProblem(std::move(costs), std::move(limits), demand_mw);
}

const std::vector<int> kTable1Buses = {32, 36, 38, 39};

int run_one(const std::string& path, const std::string& out_dir_flag, double dt_flag,
            double t_end_flag, const std::string& variant_flag, std::mutex& io) {
  Scenario sc = parse_scenario(path);
  if (dt_flag > 0.0) sc.sim.dt = dt_flag;
  if (t_end_flag > 0.0) sc.sim.t_end = t_end_flag;
  if (!variant_flag.empty()) {
    if (variant_flag == "oracle") sc.model.variant = Variant::Oracle;
    else if (variant_flag == "measured") sc.model.variant = Variant::Measured;
    else if (variant_flag == "agc") sc.model.variant = Variant::Agc;
    else throw SchemaError("run: --variant must be oracle | measured | agc");
    wire_model(sc.model);
  }
  std::string out_dir = out_dir_flag.empty() ? sc.outputs.dir : out_dir_flag;
  fs::create_directories(out_dir);

  int code = kExitOk;
  std::string status_line;
  try {
    Trajectory traj = run_scenario(sc);
    RunReport report = build_report(sc, traj);
    if (sc.outputs.write_csv)
      write_trajectory_csv((fs::path(out_dir) / "trajectory.csv").string(), sc, traj);
    if (sc.outputs.write_summary)
      write_summary_json((fs::path(out_dir) / "summary.json").string(), sc, traj, report);
    write_plots(out_dir, sc, traj);
    switch (report.status) {
      case RunStatus::ConvergedCertified:
        status_line = sc.name + ": converged, dispatch certified (kkt " +
                      std::to_string(report.certification.kkt.max_residual) + ")";
        code = kExitOk;
        break;
      case RunStatus::NotCertified:
        status_line = sc.name + ": " + report.diagnostic;
        code = kExitNotCertified;
        break;
      default:
        code = kExitDiverged;
        break;
    }
  } catch (const SimulationDiverged& e) {
    status_line = sc.name + ": " + e.what();
    code = kExitDiverged;
  }
  std::scoped_lock lock(io);
  (code == kExitOk ? std::cout : std::cerr) << status_line << '\n';
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"network-preserving frequency control simulator"};
  app.require_subcommand(1);

  // run
  auto* run_cmd = app.add_subcommand("run", "simulate one or more scenarios");
  std::vector<std::string> scenario_paths;
  std::string out_dir, variant;
  double dt = 0.0, t_end = 0.0;
  run_cmd->add_option("--scenario", scenario_paths, "scenario JSON file (repeatable)")
      ->required();
  run_cmd->add_option("--out", out_dir, "output directory (per-run subdirs in batch mode)");
  run_cmd->add_option("--dt", dt, "integration step override, s");
  run_cmd->add_option("--t-end", t_end, "end time override, s");
  run_cmd->add_option("--variant", variant, "controller variant: oracle | measured | agc");

  // dispatch
  auto* dispatch_cmd = app.add_subcommand("dispatch", "solve the economic dispatch problem");
  bool use_table1 = false;
  std::string costs_path;
  double demand_mw = 0.0;
  dispatch_cmd->add_flag("--table1", use_table1, "use the bundled four-unit cost table");
  dispatch_cmd->add_option("--costs", costs_path, "JSON file with costs and limits");
  dispatch_cmd->add_option("--demand", demand_mw, "total demand, MW")->required();

  // check-hessian
  auto* hess_cmd = app.add_subcommand("check-hessian", "evaluate the stability Hessian");
  std::string hess_scenario, state_csv;
  int state_row = -1;
  hess_cmd->add_option("--scenario", hess_scenario, "scenario JSON file")->required();
  hess_cmd->add_option("--state", state_csv, "trajectory.csv snapshot to evaluate");
  hess_cmd->add_option("--row", state_row, "row of --state to use (default: last)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run_cmd) {
      std::mutex io;
      if (scenario_paths.size() == 1)
        return run_one(scenario_paths[0], out_dir, dt, t_end, variant, io);

      // batch: one worker per scenario, per-run output directories
      std::atomic<int> next{0}, worst{0};
      const int n_threads =
          std::min<int>(max_batch_threads(), static_cast<int>(scenario_paths.size()));
      std::vector<std::thread> workers;
      for (int t = 0; t < n_threads; ++t) {
        workers.emplace_back([&]() {
          for (int i = next.fetch_add(1); i < static_cast<int>(scenario_paths.size());
               i = next.fetch_add(1)) {
            const std::string base = out_dir.empty() ? "out" : out_dir;
            const std::string sub =
                (fs::path(base) / fs::path(scenario_paths[i]).stem()).string();
            int code;
            try {
              code = run_one(scenario_paths[i], sub, dt, t_end, variant, io);
            } catch (const Error& e) {
              std::scoped_lock lock(io);
              std::cerr << scenario_paths[i] << ": " << e.what() << '\n';
              code = kExitUsage;
            }
            int cur = worst.load();
            while (code > cur && !worst.compare_exchange_weak(cur, code)) {
            }
          }
        });
      }
      for (std::thread& w : workers) w.join();
      return worst.load();
    }

    if (*dispatch_cmd) {
      std::vector<int> buses;
      std::unique_ptr<DispatchProblem> prob;
      if (use_table1) {
        prob = std::make_unique<DispatchProblem>(table1_problem(demand_mw));
        buses = kTable1Buses;
      } else if (!costs_path.empty()) {
        std::ifstream in(costs_path);
        if (!in) throw SchemaError("dispatch: cannot open " + costs_path);
        json doc = json::parse(in);
        std::vector<CostFunction> costs;
        std::vector<std::pair<double, double>> limits;
        for (const auto& u : doc.at("units")) {
          buses.push_back(u.value("bus", static_cast<int>(buses.size())));
          costs.push_back({u.at("a").get<double>(), u.at("b").get<double>()});
          limits.emplace_back(u.at("p_min_mw").get<double>(), u.at("p_max_mw").get<double>());
        }
        prob = std::make_unique<DispatchProblem>(std::move(costs), std::move(limits), demand_mw);
      } else {
        std::cerr << "dispatch: need --table1 or --costs\n";
        return kExitUsage;
      }
      const DispatchSolution sol = solve_sfc(*prob);
      json j;
      j["demand_mw"] = demand_mw;
      j["lambda"] = sol.lambda;
      j["marginal_cost"] = -sol.lambda;
      j["kkt_residual"] = sol.kkt_residual;
      json units = json::array();
      for (std::size_t i = 0; i < sol.pg.size(); ++i) {
        json u;
        u["bus"] = buses[i];
        u["pg_mw"] = sol.pg[i];
        u["binding"] = sol.binding[i] == BindingSide::Interior
                           ? "interior"
                           : (sol.binding[i] == BindingSide::Lower ? "lower" : "upper");
        u["gamma_minus"] = sol.gamma_minus[i];
        u["gamma_plus"] = sol.gamma_plus[i];
        units.push_back(u);
      }
      j["units"] = units;
      std::cout << j.dump(2) << '\n';
      return kExitOk;
    }

    if (*hess_cmd) {
      Scenario sc = parse_scenario(hess_scenario);
      InitialCondition init = initialize_equilibrium(sc);
      SystemState state = init.state;
      if (!state_csv.empty()) {
        const CsvTable table = read_csv(state_csv);
        state = state_from_csv_row(sc, table, state_row);
      }
      const HessianCheck check = hessian_check_a4(init.model, state);
      std::cout << "min_eigenvalue " << check.min_eigenvalue << '\n'
                << (check.positive_definite ? "positive definite" : "not positive definite")
                << '\n';
      return check.positive_definite ? kExitOk : kExitHessianIndefinite;
    }
  } catch (const Infeasible& e) {
    std::cerr << e.what() << '\n';
    return kExitNotCertified;
  } catch (const SimulationDiverged& e) {
    std::cerr << e.what() << '\n';
    return kExitDiverged;
  } catch (const Error& e) {
    std::cerr << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}
