#include "gridsync/output.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "gridsync/errors.hpp"

namespace gridsync {

using nlohmann::json;

namespace {

std::string fmt17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

struct ColumnSpec {
  std::vector<std::string> names;

  void build(const Scenario& sc) {
    const ClosedLoopModel& m = sc.model;
    names.push_back("time");
    auto gen_label = [&](int g) { return "gen" + std::to_string(sc.bus_ids[m.machines[g].bus]); };
    for (std::size_t g = 0; g < m.machines.size(); ++g) {
      const std::string l = gen_label(static_cast<int>(g));
      names.push_back(l + ".delta");
      names.push_back(l + ".omega");
      names.push_back(l + ".Eqp");
      names.push_back(l + ".Pg");
      names.push_back(l + ".Pg_mw");
      names.push_back(l + ".Ef");
    }
    for (std::size_t c = 0; c < m.cg_machine.size(); ++c) {
      const std::string l = gen_label(m.cg_machine[c]);
      names.push_back(l + ".mu");
      names.push_back(l + ".gamma_minus");
      names.push_back(l + ".gamma_plus");
      names.push_back(l + ".p_hat");
      names.push_back(l + ".agc");
    }
    for (std::size_t i = 0; i < m.net.n_buses(); ++i) {
      const std::string l = "bus" + std::to_string(sc.bus_ids[i]);
      names.push_back(l + ".theta");
      names.push_back(l + ".v");
      names.push_back(l + ".omega_tilde");
    }
    for (auto [a, b] : m.net.comm_edges()) {
      names.push_back("edge" + std::to_string(sc.bus_ids[a]) + "-" +
                      std::to_string(sc.bus_ids[b]) + ".z");
    }
    for (const char* mon : {"lyapunov_w", "lyapunov_wdot_fd", "kkt_residual", "max_freq_dev",
                            "mu_spread", "hessian_min_eig"}) {
      names.push_back(std::string("monitor.") + mon);
    }
  }

  std::vector<double> row(const Scenario& sc, const Trajectory& traj, std::size_t k) const {
    const ClosedLoopModel& m = sc.model;
    const SystemState& s = traj.states[k];
    std::vector<double> out;
    out.reserve(names.size());
    out.push_back(traj.times[k]);
    for (std::size_t g = 0; g < m.machines.size(); ++g) {
      out.push_back(s.machines[g].delta);
      out.push_back(s.machines[g].omega);
      out.push_back(s.machines[g].eqp);
      out.push_back(s.machines[g].pg);
      out.push_back(s.machines[g].pg * sc.base_mva);
      out.push_back(s.machines[g].ef);
    }
    for (std::size_t c = 0; c < m.cg_machine.size(); ++c) {
      out.push_back(s.controllers[c].mu);
      out.push_back(s.controllers[c].gamma_minus);
      out.push_back(s.controllers[c].gamma_plus);
      out.push_back(s.controllers[c].p_hat);
      out.push_back(c < s.agc.size() ? s.agc[c] : 0.0);
    }
    for (std::size_t i = 0; i < m.net.n_buses(); ++i) {
      out.push_back(s.algebraic.theta[i]);
      out.push_back(s.algebraic.v[i]);
      out.push_back(s.algebraic.omega_tilde[i]);
    }
    for (std::size_t e = 0; e < m.net.comm_edges().size(); ++e) out.push_back(s.z[e]);
    const MonitorSample& mon = traj.monitors[k];
    out.push_back(mon.lyapunov_w);
    out.push_back(mon.lyapunov_wdot_fd);
    out.push_back(mon.kkt_residual);
    out.push_back(mon.max_freq_dev);
    out.push_back(mon.mu_spread);
    out.push_back(mon.hessian_min_eig);
    return out;
  }
};

}  // namespace

int CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (columns[i] == name) return static_cast<int>(i);
  }
  return -1;
}

void write_trajectory_csv(const std::string& path, const Scenario& sc, const Trajectory& traj) {
  ColumnSpec spec;
  spec.build(sc);
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path + " for writing");
  for (std::size_t i = 0; i < spec.names.size(); ++i) {
    if (i) out << ',';
    out << spec.names[i];
  }
  out << '\n';
  for (std::size_t k = 0; k < traj.times.size(); ++k) {
    const std::vector<double> row = spec.row(sc, traj, k);
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out << ',';
      out << fmt17(row[i]);
    }
    out << '\n';
  }
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) throw Error("empty csv " + path);
  std::stringstream hs(line);
  std::string cell;
  while (std::getline(hs, cell, ',')) table.columns.push_back(cell);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    row.reserve(table.columns.size());
    std::stringstream rs(line);
    while (std::getline(rs, cell, ',')) row.push_back(std::strtod(cell.c_str(), nullptr));
    if (row.size() != table.columns.size()) throw Error("ragged csv row in " + path);
    table.rows.push_back(std::move(row));
  }
  return table;
}

SystemState state_from_csv_row(const Scenario& sc, const CsvTable& table, int row) {
  if (row < 0) row = static_cast<int>(table.rows.size()) + row;  // python-style tail index
  if (row < 0 || row >= static_cast<int>(table.rows.size()))
    throw Error("csv row index out of range");
  const std::vector<double>& r = table.rows[row];
  const ClosedLoopModel& m = sc.model;

  auto pick = [&](const std::string& name) {
    const int c = table.column(name);
    if (c < 0) throw Error("csv is missing column " + name);
    return r[c];
  };

  SystemState s;
  s.time = pick("time");
  s.machines.resize(m.machines.size());
  for (std::size_t g = 0; g < m.machines.size(); ++g) {
    const std::string l = "gen" + std::to_string(sc.bus_ids[m.machines[g].bus]);
    s.machines[g].delta = pick(l + ".delta");
    s.machines[g].omega = pick(l + ".omega");
    s.machines[g].eqp = pick(l + ".Eqp");
    s.machines[g].pg = pick(l + ".Pg");
    s.machines[g].ef = pick(l + ".Ef");
  }
  s.controllers.resize(m.cg_machine.size());
  s.agc.assign(m.cg_machine.size(), 0.0);
  for (std::size_t c = 0; c < m.cg_machine.size(); ++c) {
    const std::string l = "gen" + std::to_string(sc.bus_ids[m.machines[m.cg_machine[c]].bus]);
    s.controllers[c].mu = pick(l + ".mu");
    s.controllers[c].gamma_minus = pick(l + ".gamma_minus");
    s.controllers[c].gamma_plus = pick(l + ".gamma_plus");
    s.controllers[c].p_hat = pick(l + ".p_hat");
    s.agc[c] = pick(l + ".agc");
  }
  const std::size_t n_bus = m.net.n_buses();
  s.algebraic.theta.resize(n_bus);
  s.algebraic.v.resize(n_bus);
  s.algebraic.omega_tilde.resize(n_bus);
  for (std::size_t i = 0; i < n_bus; ++i) {
    const std::string l = "bus" + std::to_string(sc.bus_ids[i]);
    s.algebraic.theta[i] = pick(l + ".theta");
    s.algebraic.v[i] = pick(l + ".v");
    s.algebraic.omega_tilde[i] = pick(l + ".omega_tilde");
  }
  s.z.resize(m.net.comm_edges().size());
  for (std::size_t e = 0; e < m.net.comm_edges().size(); ++e) {
    const auto [a, b] = m.net.comm_edges()[e];
    s.z[e] = pick("edge" + std::to_string(sc.bus_ids[a]) + "-" + std::to_string(sc.bus_ids[b]) +
                  ".z");
  }
  return s;
}

RunReport build_report(const Scenario& sc, const Trajectory& traj, double kkt_tol) {
  RunReport rep;
  rep.certification = certify_against_dispatch(traj);
  rep.beta = audit_beta_ratio(traj);
  if (!traj.steady.converged) {
    rep.status = RunStatus::NotCertified;
    // name the assumption when the demand simply exceeds the fleet's range
    const ClosedLoopModel& fm = traj.final_model;
    double cg_demand = 0.0;
    for (const Bus& b : fm.net.buses()) cg_demand += b.p_load;
    std::vector<std::pair<double, double>> limits;
    for (std::size_t g = 0; g < fm.machines.size(); ++g) {
      if (!fm.machine_online(static_cast<int>(g))) continue;
      if (fm.cg_slot[g] >= 0) {
        limits.emplace_back(fm.machines[g].p_min, fm.machines[g].p_max);
      } else {
        cg_demand -= fm.machines[g].pg_ref;
      }
    }
    if (!limits.empty() && !check_a3(limits, cg_demand).feasible) {
      rep.diagnostic = "run did not settle: controllable demand share " +
                       std::to_string(cg_demand * sc.base_mva) +
                       " MW violates the capacity feasibility condition (A3)";
    } else {
      rep.diagnostic = "run did not settle within t_end";
    }
    return rep;
  }
  if (rep.certification.available && rep.certification.kkt.max_residual < kkt_tol) {
    rep.status = RunStatus::ConvergedCertified;
  } else {
    rep.status = RunStatus::NotCertified;
    rep.diagnostic = rep.certification.available
                         ? "steady state reached but KKT residual " +
                               std::to_string(rep.certification.kkt.max_residual) +
                               " exceeds " + std::to_string(kkt_tol)
                         : "steady state reached but certification unavailable";
  }
  return rep;
}

void write_summary_json(const std::string& path, const Scenario& sc, const Trajectory& traj,
                        const RunReport& report) {
  json j;
  j["scenario"] = sc.name;
  j["effective_config"] = json::parse(sc.effective_config);
  j["variant"] = variant_name(sc.model.variant);
  j["converged"] = traj.steady.converged;
  switch (report.status) {
    case RunStatus::ConvergedCertified: j["status"] = "converged_certified"; break;
    case RunStatus::NotCertified: j["status"] = "not_certified"; break;
    case RunStatus::Diverged: j["status"] = "diverged"; break;
  }
  if (!report.diagnostic.empty()) j["diagnostic"] = report.diagnostic;

  if (traj.steady.converged) {
    const ClosedLoopModel& m = traj.final_model;
    const SystemState& eq = traj.steady.equilibrium;
    json gens = json::array();
    for (std::size_t g = 0; g < m.machines.size(); ++g) {
      json e;
      e["bus"] = sc.bus_ids[m.machines[g].bus];
      e["online"] = m.machine_online(static_cast<int>(g));
      e["pg_pu"] = eq.machines[g].pg;
      e["pg_mw"] = eq.machines[g].pg * sc.base_mva;
      e["omega"] = eq.machines[g].omega;
      const int c = m.cg_slot[g];
      if (c >= 0) {
        e["mu"] = eq.controllers[c].mu;
        e["gamma_minus"] = eq.controllers[c].gamma_minus;
        e["gamma_plus"] = eq.controllers[c].gamma_plus;
      }
      gens.push_back(e);
    }
    j["steady_state"]["generators"] = gens;
  }

  const Certification& cert = report.certification;
  if (cert.available) {
    json d;
    d["demand_mw"] = cert.demand_pu * sc.base_mva;
    d["kkt_residual"] = cert.kkt.max_residual;
    d["max_rel_mismatch"] = cert.max_rel_mismatch;
    json units = json::array();
    for (std::size_t k = 0; k < cert.slot_machine.size(); ++k) {
      json u;
      u["bus"] = sc.bus_ids[sc.model.machines[cert.slot_machine[k]].bus];
      u["steady_mw"] = cert.steady_pg_pu[k] * sc.base_mva;
      u["oracle_mw"] = cert.oracle.pg[k] * sc.base_mva;
      units.push_back(u);
    }
    d["units"] = units;
    j["dispatch_certification"] = d;
  }

  if (!report.beta.empty()) {
    json b = json::array();
    for (const BetaAudit& a : report.beta) {
      b.push_back({{"bus", sc.bus_ids[sc.model.machines[a.machine].bus]},
                   {"empirical_ratio", a.empirical_ratio},
                   {"bound", a.bound}});
    }
    j["beta_audit"] = b;
  }

  // monitor extremes over the whole record
  double w_max = 0.0, wdot_max = -std::numeric_limits<double>::infinity();
  double min_eig = std::numeric_limits<double>::infinity(), freq_max = 0.0;
  bool have_w = false;
  for (const MonitorSample& mon : traj.monitors) {
    if (!std::isnan(mon.lyapunov_w)) {
      w_max = std::max(w_max, mon.lyapunov_w);
      have_w = true;
    }
    if (!std::isnan(mon.lyapunov_wdot_fd)) wdot_max = std::max(wdot_max, mon.lyapunov_wdot_fd);
    min_eig = std::min(min_eig, mon.hessian_min_eig);
    freq_max = std::max(freq_max, mon.max_freq_dev);
  }
  j["monitors"]["max_freq_dev"] = freq_max;
  j["monitors"]["hessian_min_eig"] = min_eig;
  if (have_w) {
    j["monitors"]["lyapunov_max"] = w_max;
    j["monitors"]["lyapunov_wdot_max"] = wdot_max;
  }

  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path + " for writing");
  out << j.dump(2) << '\n';
}

namespace {

struct Series {
  std::string label;
  const std::vector<double>* x = nullptr;
  std::vector<double> y;
};

std::string fmt_axis(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", x);
  return buf;
}

void write_svg(const std::string& path, const std::string& title, const std::string& y_label,
               const std::vector<Series>& series) {
  const int width = 860, height = 420;
  const int ml = 70, mr = 170, mt = 40, mb = 45;
  double x_lo = 0, x_hi = 1, y_lo = 0, y_hi = 1;
  bool first = true;
  for (const Series& s : series) {
    for (std::size_t i = 0; i < s.y.size(); ++i) {
      const double xv = (*s.x)[i], yv = s.y[i];
      if (std::isnan(yv)) continue;
      if (first) {
        x_lo = x_hi = xv;
        y_lo = y_hi = yv;
        first = false;
      }
      x_lo = std::min(x_lo, xv);
      x_hi = std::max(x_hi, xv);
      y_lo = std::min(y_lo, yv);
      y_hi = std::max(y_hi, yv);
    }
  }
  if (x_hi <= x_lo) x_hi = x_lo + 1.0;
  if (y_hi <= y_lo) y_hi = y_lo + 1.0;
  const double pad = 0.05 * (y_hi - y_lo);
  y_lo -= pad;
  y_hi += pad;
  auto px = [&](double x) { return ml + (x - x_lo) / (x_hi - x_lo) * (width - ml - mr); };
  auto py = [&](double y) { return height - mb - (y - y_lo) / (y_hi - y_lo) * (height - mt - mb); };

  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                  "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path + " for writing");
  out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width << "' height='" << height
      << "' viewBox='0 0 " << width << ' ' << height << "'>\n";
  out << "<rect width='100%' height='100%' fill='white'/>\n";
  out << "<text x='" << width / 2 << "' y='24' text-anchor='middle' font-size='16'>" << title
      << "</text>\n";
  // axes
  out << "<line x1='" << ml << "' y1='" << height - mb << "' x2='" << width - mr << "' y2='"
      << height - mb << "' stroke='black'/>\n";
  out << "<line x1='" << ml << "' y1='" << mt << "' x2='" << ml << "' y2='" << height - mb
      << "' stroke='black'/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double xv = x_lo + k * (x_hi - x_lo) / 4;
    const double yv = y_lo + k * (y_hi - y_lo) / 4;
    out << "<text x='" << px(xv) << "' y='" << height - mb + 18
        << "' text-anchor='middle' font-size='11'>" << fmt_axis(xv) << "</text>\n";
    out << "<text x='" << ml - 6 << "' y='" << py(yv) + 4
        << "' text-anchor='end' font-size='11'>" << fmt_axis(yv) << "</text>\n";
    out << "<line x1='" << ml << "' y1='" << py(yv) << "' x2='" << width - mr << "' y2='"
        << py(yv) << "' stroke='#dddddd'/>\n";
  }
  out << "<text x='" << (ml + width - mr) / 2 << "' y='" << height - 8
      << "' text-anchor='middle' font-size='12'>time (s)</text>\n";
  out << "<text x='16' y='" << (mt + height - mb) / 2 << "' font-size='12' transform='rotate(-90 16 "
      << (mt + height - mb) / 2 << ")' text-anchor='middle'>" << y_label << "</text>\n";

  for (std::size_t si = 0; si < series.size(); ++si) {
    const Series& s = series[si];
    out << "<polyline fill='none' stroke='" << palette[si % 10] << "' stroke-width='1.2' points='";
    for (std::size_t i = 0; i < s.y.size(); ++i) {
      if (std::isnan(s.y[i])) continue;
      out << px((*s.x)[i]) << ',' << py(s.y[i]) << ' ';
    }
    out << "'/>\n";
    const int ly = mt + 16 * static_cast<int>(si);
    out << "<line x1='" << width - mr + 10 << "' y1='" << ly << "' x2='" << width - mr + 30
        << "' y2='" << ly << "' stroke='" << palette[si % 10] << "' stroke-width='2'/>\n";
    out << "<text x='" << width - mr + 36 << "' y='" << ly + 4 << "' font-size='11'>" << s.label
        << "</text>\n";
  }
  out << "</svg>\n";
}

}  // namespace

void write_plots(const std::string& dir, const Scenario& sc, const Trajectory& traj) {
  const ClosedLoopModel& m = sc.model;
  namespace fs = std::filesystem;
  fs::create_directories(dir);

  auto gen_label = [&](int g) { return "G" + std::to_string(sc.bus_ids[m.machines[g].bus]); };

  for (const std::string& chan : sc.outputs.plots) {
    std::vector<Series> series;
    std::string title, ylabel;
    if (chan == "frequency") {
      title = "Generator frequency deviation";
      ylabel = "omega (rad/s)";
      for (std::size_t g = 0; g < m.machines.size(); ++g) {
        Series s;
        s.label = gen_label(static_cast<int>(g));
        s.x = &traj.times;
        for (const SystemState& st : traj.states) s.y.push_back(st.machines[g].omega);
        series.push_back(std::move(s));
      }
    } else if (chan == "pg") {
      title = "Mechanical power";
      ylabel = "Pg (MW)";
      for (std::size_t g = 0; g < m.machines.size(); ++g) {
        Series s;
        s.label = gen_label(static_cast<int>(g));
        s.x = &traj.times;
        for (const SystemState& st : traj.states) s.y.push_back(st.machines[g].pg * sc.base_mva);
        series.push_back(std::move(s));
      }
    } else if (chan == "voltage") {
      title = "Bus voltage magnitude";
      ylabel = "V (p.u.)";
      for (std::size_t i = 0; i < m.net.n_buses(); ++i) {
        Series s;
        s.label = "bus" + std::to_string(sc.bus_ids[i]);
        s.x = &traj.times;
        for (const SystemState& st : traj.states) s.y.push_back(st.algebraic.v[i]);
        series.push_back(std::move(s));
      }
    } else if (chan == "mu") {
      title = "Marginal cost estimate";
      ylabel = "-mu";
      for (std::size_t c = 0; c < m.cg_machine.size(); ++c) {
        Series s;
        s.label = gen_label(m.cg_machine[c]);
        s.x = &traj.times;
        for (const SystemState& st : traj.states) s.y.push_back(-st.controllers[c].mu);
        series.push_back(std::move(s));
      }
    } else if (chan == "z") {
      title = "Consensus edge state";
      ylabel = "z";
      for (std::size_t e = 0; e < m.net.comm_edges().size(); ++e) {
        const auto [a, b] = m.net.comm_edges()[e];
        Series s;
        s.label = std::to_string(sc.bus_ids[a]) + "-" + std::to_string(sc.bus_ids[b]);
        s.x = &traj.times;
        for (const SystemState& st : traj.states) s.y.push_back(st.z[e]);
        series.push_back(std::move(s));
      }
    } else {
      continue;  // unknown channel names are ignored
    }
    if (series.empty()) continue;
    write_svg((fs::path(dir) / (chan + ".svg")).string(), title, ylabel, series);
  }
}

}  // namespace gridsync
