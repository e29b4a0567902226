// Command-line front end: simulate, pde, rate and scenario subcommands.

#include "swapcolor/io.hpp"
#include "swapcolor/scenario.hpp"

#include <CLI11.hpp>

#include <iostream>

using namespace swapcolor;

namespace {

struct Common {
  std::uint64_t seed = 1;
  std::string out;
  std::size_t threads = 1;
  std::string format = "csv";

  std::filesystem::path dir(const std::string& leaf) const {
    return (out.empty() ? default_output_dir() : std::filesystem::path(out)) / leaf;
  }
};

struct ModelFlags {
  double lambda = 1.0;
  std::size_t colors = 2;
  double amplitude = 0.0;
  std::string coloring = "proportional";
  double skew = 0.0;

  void attach(CLI::App* app) {
    app->add_option("--lambda", lambda, "swap intensity")->capture_default_str();
    app->add_option("--colors", colors, "number of colours")->capture_default_str();
    app->add_option("--amplitude", amplitude, "total density 1 + a cos(2 pi x)")->capture_default_str();
    app->add_option("--coloring", coloring, "proportional, step or smooth")->capture_default_str();
    app->add_option("--skew", skew, "amplitude of the smooth colouring")->capture_default_str();
  }

  // Scenario carrying the model and initial datum; parse_scenario does the checking.
  Scenario scenario(const std::string& name, const std::string& extra) const {
    std::string text = "schema_version: 1\nname: " + name + "\nmodel: {lambda: " + format_number(lambda) +
                       ", colors: " + std::to_string(colors) + "}\ninitial: {amplitude: " + format_number(amplitude) +
                       ", coloring: " + coloring + (coloring == "smooth" ? ", skew: " + format_number(skew) : "") +
                       "}\n" + extra;
    return parse_scenario(text);
  }
};

Json trajectory_json(const FieldTrajectory& t) {
  Json frames = Json::array();
  for (const auto& f : t.frames) {
    Json cols = Json::array();
    for (std::size_t c = 0; c < f.colors(); ++c) cols.push_back(std::vector<double>(f.color(c).begin(), f.color(c).end()));
    frames.push_back(cols);
  }
  return Json{{"colors", t.colors()}, {"cells", t.cells()}, {"times", t.times}, {"density", frames}};
}

// Writes a table in the requested format and returns the file name.
std::string emit(const std::filesystem::path& dir, const std::string& stem, const CsvTable& table, const Common& common) {
  const std::string file = stem + "." + common.format;
  if (common.format == "json")
    write_json(dir / file, table.to_json());
  else
    table.save(dir / file);
  return file;
}

Json base_manifest(const Common& common, const std::string& command) {
  return Json{{"schema_version", kScenarioSchemaVersion},
              {"tool", "swapcolor"},
              {"version", build_version()},
              {"command", command},
              {"seed", common.seed},
              {"threads", common.threads},
              {"format", common.format}};
}

int cmd_simulate(const Common& common, const ModelFlags& model, std::size_t particles, double dt, double dt_factor,
                 double horizon, std::size_t snapshots, std::size_t cells, const std::string& estimator,
                 double estimator_eps, double density_eps, std::size_t replicas) {
  std::string extra = "sim: {particles: " + std::to_string(particles) + ", dt: " + format_number(dt) +
                      ", dt_factor: " + format_number(dt_factor) + ", horizon: " + format_number(horizon) +
                      ", snapshots: " + std::to_string(snapshots) + ", field_cells: " + std::to_string(cells) +
                      ", estimator: " + estimator + ", estimator_eps: " + format_number(estimator_eps) +
                      ", density_eps: " + format_number(density_eps) + "}\n";
  Scenario s = model.scenario("simulate", extra);
  SimConfig cfg = s.sim_config(particles);
  cfg.seed = common.seed;
  const auto runs = simulate_replicas(cfg, replicas, common.threads);
  const auto dir = common.dir("simulate");
  Json manifest = base_manifest(common, "simulate");
  manifest["sim"] = sim_config_json(cfg);
  manifest["replicas"] = replicas;
  manifest["dt_used"] = runs.front().dt_used;
  manifest["dt_guard_ok"] = runs.front().dt_guard_ok;
  Json hashes = Json::array();
  Json swaps = Json::array();
  for (const auto& r : runs) {
    hashes.push_back(hex64(r.hash()));
    swaps.push_back(r.swaps.total());
  }
  manifest["run_hashes"] = hashes;
  manifest["swaps"] = swaps;
  manifest["outputs"] = {emit(dir, "fields", trajectory_table(replica_average(runs)), common),
                         emit(dir, "runs", run_summary_table(runs), common)};
  write_json(dir / "manifest.json", manifest);
  if (!runs.front().dt_guard_ok) std::cerr << "warning: dt exceeds the guard 0.1/N^2\n";
  std::cout << dir.string() << "\n";
  return 0;
}

int cmd_pde(const Common& common, const ModelFlags& model, const std::string& system, std::size_t cells,
            double horizon, std::size_t frames, const std::string& scheme, double dt) {
  std::string extra = "pde: {cells: " + std::to_string(cells) + ", horizon: " + format_number(horizon) +
                      ", frames: " + std::to_string(frames) + ", scheme: " + scheme + ", dt: " + format_number(dt) + "}\n";
  Scenario s = model.scenario("pde", extra);
  const PdeConfig pc = s.pde_config();
  const ColorField init = s.pde_initial(pc.cells);
  PdeSolution sol;
  if (system == "heat") {
    sol = solve_heat(ColorField::from_density(init.total()), pc);
  } else if (system == "linear") {
    const auto bg = solve_heat(ColorField::from_density(init.total()), pc);
    sol = solve_colored_linear(init, bg.trajectory, pc);
  } else if (system == "colored") {
    sol = solve_colored_system(init, pc);
  } else {
    throw ConfigError("unknown system '" + system + "' (expected heat, linear or colored)");
  }
  const auto dir = common.dir("pde");
  Json manifest = base_manifest(common, "pde");
  manifest["system"] = system;
  manifest["pde"] = pde_config_json(pc);
  manifest["grid"] = {{"cells", pc.cells}, {"dx", pc.dx()}, {"centers", "x_k = (k + 1/2) dx"}};
  manifest["audit"] = audit_json(sol.audit);
  std::string file;
  if (common.format == "json") {
    file = "trajectory.json";
    write_json(dir / file, trajectory_json(sol.trajectory));
  } else {
    file = "trajectory.csv";
    trajectory_table(sol.trajectory).save(dir / file);
  }
  manifest["outputs"] = {file};
  write_json(dir / "manifest.json", manifest);
  std::cout << dir.string() << "\n";
  return 0;
}

int cmd_rate(const Common& common, const std::string& input, double lambda) {
  const FieldTrajectory traj = read_trajectory_csv(input);
  const ColorField& f0 = traj.frames.front();
  std::vector<double> masses(f0.colors());
  for (std::size_t c = 0; c < f0.colors(); ++c) masses[c] = f0.mass(c) / f0.total_mass();
  const ModelParams params(lambda, masses);
  RateOptions ro;
  ro.threads = common.threads;
  ro.keep_residuals = false;
  const RateReport rep = dynamic_rate(traj, params, ro);
  const auto dir = common.dir("rate");
  Json manifest = base_manifest(common, "rate");
  manifest["input"] = input;
  manifest["params"] = params_json(params);
  manifest["elliptic"] = {{"tolerance", ro.elliptic.tolerance}, {"mean_tolerance", ro.elliptic.mean_tolerance}};
  Json report = rate_report_json(rep);
  if (traj.colors() == 1 && rep.feasible) report["uncolored_i_dyn"] = uncolored_rate(traj, ro).i_dyn;
  write_json(dir / "rate.json", report);
  manifest["outputs"] = {"rate.json", emit(dir, "slices", rate_slices_table(rep), common)};
  write_json(dir / "manifest.json", manifest);
  std::cout << report.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Brownian particles with local-time label swaps: simulator, PDE solvers and rate functionals"};
  app.require_subcommand(1);
  Common common;
  app.add_option("--seed", common.seed, "master seed")->capture_default_str();
  app.add_option("--out", common.out, std::string("output directory (default $") + kOutputDirEnv + " or ./swapcolor-out)");
  app.add_option("--threads", common.threads, "worker threads")->capture_default_str()->check(CLI::PositiveNumber);
  app.add_option("--format", common.format, "table format")->check(CLI::IsMember({"csv", "json"}))->capture_default_str();

  ModelFlags model;

  auto* sim = app.add_subcommand("simulate", "run replicas of the particle system")->fallthrough();
  model.attach(sim);
  std::size_t particles = 64, snapshots = 4, field_cells = 32, replicas = 1;
  double dt = 0.0, dt_factor = 1.0, horizon = 0.01, estimator_eps = 0.01, density_eps = 0.0;
  std::string estimator = "bridge";
  sim->add_option("--particles", particles)->capture_default_str();
  sim->add_option("--dt", dt, "time step; 0 means dt-factor * 0.1/N^2")->capture_default_str();
  sim->add_option("--dt-factor", dt_factor)->capture_default_str();
  sim->add_option("--horizon", horizon)->capture_default_str();
  sim->add_option("--snapshots", snapshots)->capture_default_str();
  sim->add_option("--cells", field_cells, "empirical field grid")->capture_default_str();
  sim->add_option("--estimator", estimator, "bridge or band")->capture_default_str();
  sim->add_option("--estimator-eps", estimator_eps)->capture_default_str();
  sim->add_option("--density-eps", density_eps, "> 0 records local-density integrals")->capture_default_str();
  sim->add_option("--replicas", replicas)->capture_default_str();

  auto* pde = app.add_subcommand("pde", "solve the heat, linear colour or coloured system")->fallthrough();
  model.attach(pde);
  std::string system = "colored", scheme = "explicit";
  std::size_t cells = 256, frames = 10;
  double pde_horizon = 0.1, pde_dt = 0.0;
  pde->add_option("--system", system, "heat, linear or colored")->capture_default_str();
  pde->add_option("--cells", cells)->capture_default_str();
  pde->add_option("--horizon", pde_horizon)->capture_default_str();
  pde->add_option("--frames", frames)->capture_default_str();
  pde->add_option("--scheme", scheme, "explicit or semi_implicit")->capture_default_str();
  pde->add_option("--dt", pde_dt, "0 picks the default step")->capture_default_str();

  auto* rate = app.add_subcommand("rate", "dynamic rate of a trajectory written by `pde`")->fallthrough();
  std::string input;
  double rate_lambda = 1.0;
  rate->add_option("--input", input, "trajectory CSV")->required();
  rate->add_option("--lambda", rate_lambda)->capture_default_str();

  auto* scen = app.add_subcommand("scenario", "run scenario files")->require_subcommand(1)->fallthrough();
  auto* run = scen->add_subcommand("run", "run a scenario file, a manifest, or builtin:NAME")->fallthrough();
  std::string source;
  run->add_option("source", source)->required();
  bool seed_given = false, threads_given = false;
  auto* list = scen->add_subcommand("list-builtin", "list built-in scenarios");
  bool show = false;
  list->add_flag("--show", show, "print each scenario file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }
  seed_given = app.get_option("--seed")->count() > 0;
  threads_given = app.get_option("--threads")->count() > 0;

  const auto error_dir = common.out.empty() ? default_output_dir() : std::filesystem::path(common.out);
  auto report_error = [&](int code, const std::string& type, const std::string& what) {
    const Json err{{"error", {{"type", type}, {"message", what}, {"exit_code", code}}}};
    std::cerr << err.dump() << "\n";
    try {
      write_json(error_dir / "error.json", err);
    } catch (...) {
    }
    return code;
  };

  try {
    if (*sim)
      return cmd_simulate(common, model, particles, dt, dt_factor, horizon, snapshots, field_cells, estimator, estimator_eps,
                          density_eps, replicas);
    if (*pde) return cmd_pde(common, model, system, cells, pde_horizon, frames, scheme, pde_dt);
    if (*rate) return cmd_rate(common, input, rate_lambda);
    if (*list) {
      for (const auto& n : builtin_scenario_names()) {
        if (show)
          std::cout << "# builtin:" << n << "\n" << builtin_scenario_text(n) << "\n";
        else
          std::cout << n << "  " << builtin_scenario(n).description << "\n";
      }
      return 0;
    }
    if (*run) {
      RunOptions opts;
      if (seed_given) opts.seed = common.seed;
      if (threads_given) opts.threads = common.threads;
      if (!common.out.empty()) opts.output_dir = common.out;
      opts.format = common.format;
      ScenarioReport report;
      const int code = run_scenario_file(source, opts, &report);
      if (code == kExitPass || code == kExitFail) {
        for (const auto& r : report.results) {
          std::cout << (r.passed ? "PASS " : "FAIL ") << r.kind;
          for (const auto& [k, v] : r.metrics) std::cout << "  " << k << "=" << format_number(v);
          std::cout << "\n";
          for (const auto& w : r.warnings) std::cout << "  warning: " << w << "\n";
        }
        std::cout << report.directory.string() << "\n";
      } else {
        std::cerr << "scenario failed with exit code " << code << "; see error.json\n";
      }
      return code;
    }
  } catch (const ConfigError& e) {
    return report_error(kExitConfig, "config", e.what());
  } catch (const DomainError& e) {
    return report_error(kExitError, "domain", e.what());
  } catch (const std::exception& e) {
    return report_error(kExitError, "runtime", e.what());
  }
  return 0;
}
