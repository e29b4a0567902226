#pragma once

// Experiment harness: scenario files, comparisons between the simulator, the
// PDE solvers and the rate functionals, and report/manifest writing.
//
// Scenario files are YAML (JSON is accepted too, so a manifest can be fed
// back in). The format is documented in README.md; every key is checked and
// unknown keys are configuration errors.

#include "swapcolor/io.hpp"
#include "swapcolor/pde.hpp"
#include "swapcolor/rate.hpp"
#include "swapcolor/sim.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace swapcolor {

inline constexpr int kScenarioSchemaVersion = 1;

/// Initial datum shared by the simulator and the solvers: total density
/// rho = 1 + amplitude cos(2 pi mode x), coloured
///   proportional: rho_c = masses_c rho
///   step:         colour c fills the arc [c/m, (c+1)/m)
///   smooth:       rho_c = rho (1 + skew sin(2 pi x + 2 pi c/m)) / m   (m >= 2)
struct InitialSpec {
  enum class Coloring { proportional, step, smooth };

  double amplitude = 0.0;
  int mode = 1;
  Coloring coloring = Coloring::proportional;
  std::vector<double> masses;  // proportional colouring; empty means equal
  double skew = 0.0;           // smooth colouring

  bool equilibrium() const { return amplitude == 0.0; }
  /// Exact cell averages on a grid of `cells` cells for m colours.
  ColorField build(std::size_t colors, std::size_t cells) const;
  /// Mass of each colour (sums to 1).
  std::vector<double> color_masses(std::size_t colors) const;
};

/// Gradient control U_c(t,x) = amplitude e(t) sin(2 pi mode x + phase_c)
/// with e = 0 on [0, eta] and a half-cosine ramp to 1 at the horizon.
struct PerturbationSpec {
  double amplitude = 0.2;
  int mode = 1;
  std::vector<double> phases;  // one per colour; empty means all zero
  double eta = 0.0;

  GradientControl control(std::size_t colors, double horizon) const;
  /// Drift b = grad U, no swap bias.
  Perturbation drift(std::size_t colors, double horizon) const;
};

struct ComparisonSpec {
  std::string kind;
  std::map<std::string, std::vector<double>> thresholds;
  std::map<std::string, std::vector<double>> options;

  /// Scalar option/threshold lookup with fallback.
  double option(const std::string& key, double fallback) const;
  std::optional<double> threshold(const std::string& key) const;
  std::vector<double> option_list(const std::string& key) const;
};

/// Known comparison kinds.
const std::vector<std::string>& comparison_kinds();

struct Scenario {
  int schema_version = kScenarioSchemaVersion;
  std::string name = "scenario";
  std::string description;
  std::uint64_t seed = 1;
  std::size_t threads = 1;

  double lambda = 1.0;
  std::size_t colors = 2;
  InitialSpec initial;

  // Simulator template: particles, dt and seed are filled per run.
  SimConfig sim;
  std::vector<std::size_t> particles{64};
  double dt_factor = 1.0;  // dt = dt_factor * 0.1 / N^2 unless sim.dt is set
  bool fixed_dt = false;
  std::size_t initial_cells = 1024;  // grid the simulator samples its initial law from

  PdeConfig pde;
  std::optional<PerturbationSpec> perturbation;
  std::size_t replicas = 0;
  std::vector<ComparisonSpec> comparisons;
  std::optional<std::filesystem::path> output_dir;

  ModelParams params() const;
  /// Simulator configuration for N particles (seed is the scenario seed).
  SimConfig sim_config(std::size_t n) const;
  /// Solver configuration with the scenario's parameters filled in.
  PdeConfig pde_config() const;
  ColorField pde_initial(std::size_t cells) const;

  /// Throws ConfigError on any inconsistency.
  void validate() const;
};

/// Parses YAML/JSON text. A document carrying a "scenario" key (a manifest)
/// is unwrapped.
Scenario parse_scenario(const std::string& text);
Scenario load_scenario(const std::filesystem::path& path);
/// Canonical form with every default spelled out; parse_scenario inverts it.
Json scenario_json(const Scenario& s);
/// Hash of the canonical form without threads and output_dir.
std::string scenario_hash(const Scenario& s);

const std::vector<std::string>& builtin_scenario_names();
std::string builtin_scenario_text(const std::string& name);
Scenario builtin_scenario(const std::string& name);

/// Per-time distances between replica-averaged empirical fields and a
/// solver trajectory.
struct SimPdeDistance {
  std::vector<double> times;
  std::vector<std::vector<double>> l1;    // [colour][time], dx * sum |diff|
  std::vector<std::vector<double>> linf;  // [colour][time]

  /// Largest L1 over time for colour c.
  double max_l1(std::size_t c) const;
};

/// The solver grid must refine the simulator grid by an integer factor; the
/// solver fields are averaged onto the simulator grid. Snapshot times must
/// match the frame times. Throws DomainError otherwise.
SimPdeDistance compare_sim_pde(const std::vector<RunRecord>& runs, const FieldTrajectory& pde);

struct TaggedVariance {
  double rate = 0.0;            // fitted slope of Var[x(t) - x(0)]
  double standard_error = 0.0;  // spread of per-replica slopes
  double predicted = 0.0;       // lambda / (lambda + 1)
  std::vector<double> times;
  std::vector<double> variance;
};

/// Least-squares slope over snapshots in [T/2, T], pooled over labels and
/// replicas. Refuses (ConfigError) runs that did not start from the uniform
/// equilibrium law.
TaggedVariance tagged_variance_check(const std::vector<RunRecord>& runs, const ModelParams& params);

struct ComparisonResult {
  std::string kind;
  bool passed = true;
  std::vector<std::pair<std::string, double>> metrics;
  Json thresholds;
  std::string units;
  std::vector<std::string> warnings;
  std::vector<std::pair<std::string, CsvTable>> tables;  // file stem, table
  double seconds = 0.0;

  double metric(const std::string& name) const;
};

struct RunOptions {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
  std::optional<std::filesystem::path> output_dir;
  std::string format = "csv";  // table format: csv or json
  bool write = true;
};

struct ScenarioReport {
  std::string name;
  bool passed = true;
  std::vector<ComparisonResult> results;
  Json manifest;
  std::filesystem::path directory;
};

/// Runs every comparison. Errors propagate as exceptions.
ScenarioReport run_scenario(const Scenario& scenario, const RunOptions& options = {});

/// Exit status of the CLI: 0 all pass, 1 some comparison failed, 2
/// configuration error, 3 any other error. Errors leave error.json in the
/// output directory.
enum ExitCode : int { kExitPass = 0, kExitFail = 1, kExitConfig = 2, kExitError = 3 };
int run_scenario_file(const std::string& source, const RunOptions& options, ScenarioReport* report = nullptr);

}  // namespace swapcolor
