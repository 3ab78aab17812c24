#pragma once

// grid-gfv command dispatch. Exit codes: 0 success, 1 usage error,
// 2 data/validation error, 3 numerical failure.

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gridgfv/analysis.hpp"
#include "gridgfv/dynamics.hpp"
#include "gridgfv/montecarlo.hpp"
#include "table.hpp"

namespace gridgfv::cli {

namespace fs = std::filesystem;

struct RunConfig {
  std::string case_path;
  std::string out;
  std::string out_dir;
  bool json = false;
  PowerFlowOptions powerflow;
  SwingOptions swing;
  OuParams ou;
  TurbineParams turbine;
  BusId bus = 0;
  std::vector<BusId> buses;
  std::size_t n_realizations = 1000;
  double horizon = 200.0;
  double dt = 0.01;
  std::uint64_t seed = 0;
  std::size_t bins = 50;
};

inline std::string read_text(const std::string& path) {
  std::error_code ec;
  if (!fs::is_regular_file(path, ec)) throw DataError("file not found: " + path);
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot read file: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

inline NetworkCase load_case(const std::string& path) {
  try {
    return parse_case(read_text(path));
  } catch (const DataError& e) {
    throw DataError(path + ": " + e.what());
  }
}

/// Worker cap from GRID_GFV_THREADS; 0 means available parallelism.
inline unsigned thread_cap() {
  const char* env = std::getenv("GRID_GFV_THREADS");
  if (env == nullptr || *env == '\0') return 0;
  char* end = nullptr;
  unsigned long v = std::strtoul(env, &end, 10);
  if (*end != '\0' || v == 0) throw Error(ErrorKind::usage, "GRID_GFV_THREADS must be a positive integer");
  return static_cast<unsigned>(v);
}

inline void emit(const Table& t, const RunConfig& cfg, std::ostream& out) {
  if (cfg.out.empty()) {
    if (cfg.json) {
      out << table_json(t).dump(2) << "\n";
    } else {
      write_csv(out, t);
    }
    return;
  }
  std::ostringstream csv;
  write_csv(csv, t);
  write_file(cfg.out, csv.str());
  if (cfg.json) write_file(json_path_for(cfg.out), table_json(t).dump(2) + "\n");
}

inline void emit_to(const Table& t, const fs::path& path, bool json) {
  std::ostringstream csv;
  write_csv(csv, t);
  write_file(path.string(), csv.str());
  if (json) write_file(json_path_for(path.string()), table_json(t).dump(2) + "\n");
}

inline Cell id_cell(long long v) { return static_cast<std::int64_t>(v); }

inline Table powerflow_table(const NetworkCase& net, const PowerFlowSolution& sol) {
  Table t;
  t.meta = {{"iterations", id_cell(sol.iterations)}, {"max_mismatch", sol.max_mismatch}};
  t.columns = {"bus_id", "vm", "va_deg", "p_inj", "q_inj"};
  for (std::size_t i = 0; i < net.bus_count(); ++i) {
    auto k = static_cast<Eigen::Index>(i);
    t.rows.push_back({id_cell(net.buses[i].id), sol.vm(k), sol.va(k) * 180.0 / std::numbers::pi, sol.p_inj(k),
                      sol.q_inj(k)});
  }
  return t;
}

inline Table laplacian_table(const LaplacianMatrix& l) {
  Table t;
  t.columns.push_back("bus_id");
  for (auto id : l.bus_ids) t.columns.push_back(std::to_string(id));
  for (std::size_t i = 0; i < l.bus_ids.size(); ++i) {
    std::vector<Cell> row{id_cell(l.bus_ids[i])};
    for (std::size_t j = 0; j < l.bus_ids.size(); ++j)
      row.emplace_back(l.l(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
    t.rows.push_back(std::move(row));
  }
  return t;
}

inline Table participation_table(const ParticipationMatrix& d) {
  Table t;
  t.columns.push_back("bus_id");
  for (auto id : d.generator_ids) t.columns.push_back(std::to_string(id));
  for (std::size_t i = 0; i < d.bus_ids.size(); ++i) {
    std::vector<Cell> row{id_cell(d.bus_ids[i])};
    for (std::size_t k = 0; k < d.generator_ids.size(); ++k)
      row.emplace_back(d.d(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)));
    t.rows.push_back(std::move(row));
  }
  return t;
}

inline Table gfv_table(const GridAnalysis& a) {
  Table t;
  t.meta = {{"lambda2", a.fiedler.lambda2},
            {"lambda2_bar", a.gfv.dynamic_connectivity},
            {"fiedler_degenerate", id_cell(a.fiedler.degenerate ? 1 : 0)},
            {"gfv_degenerate", id_cell(a.gfv.degenerate ? 1 : 0)}};
  t.columns = {"bus_id", "nodal_inertia_s", "fiedler_norm", "gfv"};
  for (std::size_t i = 0; i < a.inertia.bus_ids.size(); ++i) {
    auto k = static_cast<Eigen::Index>(i);
    t.rows.push_back({id_cell(a.inertia.bus_ids[i]), a.inertia.h(k), a.fiedler.vector(k), a.gfv.gfv(k)});
  }
  return t;
}

inline Table trajectory_table(const SwingModel& model, const Trajectory& tr) {
  Table t;
  t.meta = {{"f0_pu", 1.0}, {"frequencies", std::string("deviation_pu")}};
  t.columns = {"t", "dp", "coi_freq"};
  for (auto id : model.participation.generator_ids) t.columns.push_back("gen_" + std::to_string(id));
  for (auto id : model.participation.bus_ids) t.columns.push_back("bus_" + std::to_string(id));
  for (Eigen::Index k = 0; k < tr.t.size(); ++k) {
    std::vector<Cell> row{tr.t(k), tr.dp(k), tr.coi_freq(k)};
    for (Eigen::Index g = 0; g < tr.gen_freq.cols(); ++g) row.emplace_back(tr.gen_freq(k, g));
    for (Eigen::Index b = 0; b < tr.bus_freq.cols(); ++b) row.emplace_back(tr.bus_freq(k, b));
    t.rows.push_back(std::move(row));
  }
  return t;
}

inline Table histogram_table(const Histogram& h) {
  Table t;
  t.meta = {{"f0_pu", 1.0}, {"values", std::string("deviation_pu")}};
  t.columns = {"bin_low", "bin_high", "count"};
  for (std::size_t i = 0; i < h.counts.size(); ++i)
    t.rows.push_back({h.edges[i], h.edges[i + 1], id_cell(static_cast<long long>(h.counts[i]))});
  return t;
}

inline const std::vector<std::string>& summary_columns() {
  static const std::vector<std::string> cols = {
      "bus_id",     "bus_index",       "gfv",          "n_realizations", "n_failed", "ifd_q1", "ifd_median",
      "ifd_q3",     "ifd_whisker_low", "ifd_whisker_high", "ifd_iqr",    "coi_std",  "poi_std"};
  return cols;
}

inline Table summary_table(const PlacementSummary& s) {
  Table t;
  t.meta = {{"f0_pu", 1.0}};
  t.columns = summary_columns();
  const auto& q = s.ifd_quartiles;
  t.rows.push_back({id_cell(s.bus_id), id_cell(static_cast<long long>(s.bus_index)), s.gfv,
                    id_cell(static_cast<long long>(s.n_realizations)),
                    id_cell(static_cast<long long>(s.failures.size())), q.q1, q.median, q.q3, q.whisker_low,
                    q.whisker_high, q.iqr(), s.coi_std, s.poi_std});
  return t;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

/// Rows of every bus_*/summary.csv under `dir`, ordered by case position.
inline Table report_table(const fs::path& dir) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw DataError("file not found: " + dir.string());
  struct Row {
    long long bus_index;
    std::vector<std::string> cells;
  };
  std::vector<Row> rows;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_directory() || entry.path().filename().string().rfind("bus_", 0) != 0) continue;
    auto path = entry.path() / "summary.csv";
    std::istringstream in(read_text(path.string()));
    std::string line;
    std::vector<std::string> header, values;
    while (std::getline(in, line)) {
      if (line.empty() || line[0] == '#') continue;
      if (header.empty()) {
        header = split_csv_line(line);
      } else {
        values = split_csv_line(line);
        break;
      }
    }
    if (header != summary_columns() || values.size() != header.size())
      throw DataError("malformed summary file: " + path.string());
    rows.push_back({std::stoll(values[1]), values});
  }
  if (rows.empty()) throw DataError("no bus_*/summary.csv files under " + dir.string());
  std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.bus_index < b.bus_index; });

  auto col = [](const char* name) {
    const auto& cols = summary_columns();
    return static_cast<std::size_t>(std::find(cols.begin(), cols.end(), name) - cols.begin());
  };
  Table t;
  t.columns = {"bus_id", "gfv", "median_ifd", "ifd_iqr", "coi_std", "poi_std"};
  for (const auto& r : rows) {
    t.rows.push_back({id_cell(std::stoll(r.cells[col("bus_id")])), std::stod(r.cells[col("gfv")]),
                      std::stod(r.cells[col("ifd_median")]), std::stod(r.cells[col("ifd_iqr")]),
                      std::stod(r.cells[col("coi_std")]), std::stod(r.cells[col("poi_std")])});
  }
  return t;
}

inline void run_mc(const RunConfig& cfg, std::ostream& err) {
  NetworkCase net = load_case(cfg.case_path);
  McConfig mc;
  mc.placement_buses = cfg.buses;
  mc.n_realizations = cfg.n_realizations;
  mc.horizon = cfg.horizon;
  mc.dt = cfg.dt;
  mc.ou = cfg.ou;
  mc.turbine = cfg.turbine;
  mc.swing = cfg.swing;
  mc.powerflow = cfg.powerflow;
  mc.base_seed = cfg.seed;
  mc.bins = cfg.bins;
  mc.threads = thread_cap();
  McSummary summary = run_monte_carlo(net, mc);

  fs::path root(cfg.out_dir);
  fs::create_directories(root);
  for (const auto& p : summary.placements) {
    fs::path dir = root / ("bus_" + std::to_string(p.bus_id));
    fs::create_directories(dir);
    for (const auto& f : p.failures) err << "warning: bus " << p.bus_id << ": " << f << "\n";
    if (p.ifd_samples.empty()) throw NumericalError("every realization failed for bus " + std::to_string(p.bus_id));
    emit_to(histogram_table(p.coi_histogram), dir / "coi_hist.csv", cfg.json);
    emit_to(histogram_table(p.poi_histogram), dir / "poi_hist.csv", cfg.json);
    Table ifd_t;
    ifd_t.columns = {"ifd"};
    for (double v : p.ifd_samples) ifd_t.rows.push_back({v});
    emit_to(ifd_t, dir / "ifd.csv", cfg.json);
    emit_to(summary_table(p), dir / "summary.csv", cfg.json);
  }
  if (summary.partial) err << "warning: Monte Carlo summary is partial (some realizations failed)\n";
}

inline int dispatch(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Generalized Fiedler Vector analysis and stochastic placement study for power grids", "grid-gfv"};
  app.set_config("--config", "", "TOML/INI file with option defaults");
  app.require_subcommand(1);

  RunConfig cfg;
  auto add_case = [&](CLI::App* sub) { sub->add_option("case", cfg.case_path, "Case file (JSON)")->required(); };
  auto add_out = [&](CLI::App* sub) {
    sub->add_option("--out", cfg.out, "Output CSV path (stdout when omitted)");
    sub->add_flag("--json", cfg.json, "Also write a JSON mirror of each CSV");
  };
  auto add_pf = [&](CLI::App* sub) {
    sub->add_option("--tol", cfg.powerflow.tol, "Power-flow mismatch tolerance (pu)")->check(CLI::PositiveNumber);
    sub->add_option("--max-iter", cfg.powerflow.max_iter, "Power-flow iteration limit")->check(CLI::NonNegativeNumber);
  };
  auto add_dyn = [&](CLI::App* sub) {
    sub->add_option("--t", cfg.horizon, "Simulated horizon (s)")->check(CLI::PositiveNumber);
    sub->add_option("--dt", cfg.dt, "Time step (s)")->check(CLI::PositiveNumber);
    sub->add_option("--seed", cfg.seed, "Random seed");
    sub->add_option("--damping", cfg.swing.default_damping, "Damping for generators without `d` (pu)")
        ->check(CLI::NonNegativeNumber);
    sub->add_option("--f-nominal", cfg.swing.f_nominal, "Nominal frequency (Hz)")->check(CLI::PositiveNumber);
    sub->add_option("--mu", cfg.ou.mu, "OU mean wind speed (m/s)");
    sub->add_option("--alpha", cfg.ou.alpha, "OU drift (1/s)")->check(CLI::PositiveNumber);
    sub->add_option("--ou-b", cfg.ou.b, "OU diffusion")->check(CLI::NonNegativeNumber);
    sub->add_option("--rated-power", cfg.turbine.rated_power, "Turbine rated power (pu)");
    sub->add_option("--v-rated", cfg.turbine.v_rated, "Turbine rated wind speed (m/s)")->check(CLI::PositiveNumber);
    sub->add_option("--v-ref", cfg.turbine.v_ref, "Reference wind speed for dP = 0 (m/s)");
  };

  auto* validate = app.add_subcommand("validate", "Check a case file; prints one violation per line");
  add_case(validate);
  auto* pf = app.add_subcommand("pf", "Solve the AC power flow");
  add_case(pf);
  add_out(pf);
  add_pf(pf);
  auto* lap = app.add_subcommand("laplacian", "Dump the weighted network Laplacian");
  add_case(lap);
  add_out(lap);
  add_pf(lap);
  auto* dmat = app.add_subcommand("dmatrix", "Frequency participation matrix (buses x generators)");
  add_case(dmat);
  add_out(dmat);
  auto* inertia = app.add_subcommand("inertia", "Nodal inertia per bus");
  add_case(inertia);
  add_out(inertia);
  add_pf(inertia);
  auto* gfv_cmd = app.add_subcommand("gfv", "Nodal inertia, Fiedler vector and GFV per bus");
  add_case(gfv_cmd);
  add_out(gfv_cmd);
  add_pf(gfv_cmd);
  auto* sim = app.add_subcommand("simulate", "One stochastic wind realization at a bus");
  add_case(sim);
  add_out(sim);
  add_pf(sim);
  add_dyn(sim);
  sim->add_option("--bus", cfg.bus, "Injection bus id")->required();
  auto* mc = app.add_subcommand("mc", "Monte Carlo placement study");
  add_case(mc);
  add_pf(mc);
  add_dyn(mc);
  mc->add_option("--buses", cfg.buses, "Placement bus ids")->delimiter(',')->required();
  mc->add_option("--n", cfg.n_realizations, "Realizations per bus")->check(CLI::PositiveNumber);
  mc->add_option("--bins", cfg.bins, "Histogram bins")->check(CLI::PositiveNumber);
  mc->add_option("--out-dir", cfg.out_dir, "Output directory")->required();
  mc->add_flag("--json", cfg.json, "Also write a JSON mirror of each CSV");
  auto* report = app.add_subcommand("report", "Combine a Monte Carlo output directory into a ranking table");
  report->add_option("dir", cfg.out_dir, "Directory written by `mc`")->required();
  add_out(report);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e, out, err);
    return code == 0 ? 0 : static_cast<int>(ErrorKind::usage);
  }

  try {
    if (validate->parsed()) {
      NetworkCase net = load_case(cfg.case_path);
      auto violations = validate_case(net);
      for (const auto& v : violations) out << v.entity << ": " << v.rule << ": " << v.message << "\n";
      return violations.empty() ? 0 : static_cast<int>(ErrorKind::data);
    }
    if (report->parsed()) {
      emit(report_table(cfg.out_dir), cfg, out);
      return 0;
    }
    if (mc->parsed()) {
      run_mc(cfg, err);
      return 0;
    }

    NetworkCase net = load_case(cfg.case_path);
    require_valid(net);
    if (pf->parsed()) {
      emit(powerflow_table(net, solve_powerflow(net, cfg.powerflow)), cfg, out);
    } else if (lap->parsed()) {
      emit(laplacian_table(build_laplacian(net, solve_powerflow(net, cfg.powerflow))), cfg, out);
    } else if (dmat->parsed()) {
      emit(participation_table(frequency_participation(augment_internal_nodes(build_ybus(net), net))), cfg, out);
    } else if (inertia->parsed()) {
      GridAnalysis a = analyze_case(net, cfg.powerflow);
      Table t;
      t.columns = {"bus_id", "nodal_inertia_s"};
      for (std::size_t i = 0; i < a.inertia.bus_ids.size(); ++i)
        t.rows.push_back({id_cell(a.inertia.bus_ids[i]), a.inertia.h(static_cast<Eigen::Index>(i))});
      emit(t, cfg, out);
    } else if (gfv_cmd->parsed()) {
      GridAnalysis a = analyze_case(net, cfg.powerflow);
      if (a.fiedler.degenerate) err << "warning: lambda2 is degenerate; Fiedler vector is not unique\n";
      if (a.gfv.degenerate) err << "warning: lambda2_bar is degenerate; GFV is not unique\n";
      emit(gfv_table(a), cfg, out);
    } else if (sim->parsed()) {
      if (!net.bus_index(cfg.bus)) throw DataError("bus " + std::to_string(cfg.bus) + " does not exist");
      PowerFlowSolution sol = solve_powerflow(net, cfg.powerflow);
      SwingModel model = build_swing_model(net, sol, internal_emfs(net, sol), cfg.swing);
      OuParams ou = cfg.ou;
      ou.dt = cfg.dt;
      Rng rng = make_rng(cfg.seed, 0);
      auto wind = simulate_ou(ou, sample_count(cfg.horizon, cfg.dt), rng);
      auto dp = wind_to_power(wind, cfg.turbine);
      emit(trajectory_table(model, simulate(model, cfg.bus, dp, cfg.dt)), cfg, out);
    }
    return 0;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(e.kind());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(ErrorKind::data);
  }
}

}  // namespace gridgfv::cli
