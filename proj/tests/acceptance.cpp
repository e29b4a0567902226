// Acceptance run: one PASS/FAIL line per criterion, each with its runtime
// against the stated limit. Criteria backed by a built-in scenario take their
// tolerances from that scenario's thresholds.
#include "swapcolor/scenario.hpp"

#include <CLI11.hpp>
#include <Eigen/Eigenvalues>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <random>
#include <set>
#include <sstream>
#include <thread>

using namespace swapcolor;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string title;
  double limit_seconds;  // 0 means no stated limit
  std::function<Outcome()> run;
};

struct Settings {
  std::size_t threads = 1;
  fs::path out;
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

ColorField cosine_cells(std::size_t K, double amp) {
  ColorField f(1, K);
  for (std::size_t k = 0; k < K; ++k) {
    const double x0 = static_cast<double>(k) / K, dx = 1.0 / K;
    f.at(0, k) = 1.0 + amp * (std::sin(2 * M_PI * (x0 + dx)) - std::sin(2 * M_PI * x0)) / (2 * M_PI * dx);
  }
  return f;
}

Outcome scenario_outcome(const std::string& name, const Settings& st) {
  RunOptions o;
  o.threads = st.threads;
  o.output_dir = st.out;
  const ScenarioReport rep = run_scenario(builtin_scenario(name), o);
  std::ostringstream d;
  for (const auto& r : rep.results) {
    for (const auto& [k, v] : r.metrics) d << k << "=" << fmt(v) << " ";
    for (const auto& w : r.warnings) d << "[warning: " << w << "] ";
  }
  return {rep.passed, d.str()};
}

Outcome matrix_identities() {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> dens(0.01, 5.0), lam(0.05, 20.0);
  double sym = 0, dac = 0, eig = std::numeric_limits<double>::infinity();
  for (int t = 0; t < 1000; ++t) {
    const std::size_t m = 1 + t % 5;
    Vector rho(static_cast<Eigen::Index>(m));
    for (std::size_t c = 0; c < m; ++c) rho(c) = dens(rng);
    const auto mm = mobility(rho, ModelParams(lam(rng), std::vector<double>(m, 1.0 / m)));
    dac = std::max(dac, (mm.D - mm.A * mm.chi).cwiseAbs().maxCoeff());
    sym = std::max(sym, (mm.A - mm.A.transpose()).cwiseAbs().maxCoeff());
    eig = std::min(eig, Eigen::SelfAdjointEigenSolver<Matrix>(mm.A).eigenvalues().minCoeff());
  }
  return {dac <= 1e-12 && sym <= 1e-12 && eig >= -1e-12,
          "max|D-A chi|=" + fmt(dac) + " max|A-A^T|=" + fmt(sym) + " min eig(A)=" + fmt(eig)};
}

Outcome heat_accuracy() {
  auto error = [](std::size_t K) {
    PdeConfig c;
    c.cells = K;
    c.horizon = 0.25;
    c.params = ModelParams(1.0, {1.0});
    const auto sol = solve_heat(cosine_cells(K, 1.0), c);
    const ColorField exact = cosine_cells(K, std::exp(-2 * M_PI * M_PI * 0.25));
    double e = 0;
    for (std::size_t k = 0; k < K; ++k) e = std::max(e, std::abs(sol.trajectory.frames.back().at(0, k) - exact.at(0, k)));
    return e;
  };
  const double e256 = error(256), e512 = error(512);
  return {e256 <= 1e-4 && e256 / e512 >= 3.5,
          "Linf(K=256)=" + fmt(e256) + " Linf(K=512)=" + fmt(e512) + " ratio=" + fmt(e256 / e512)};
}

Outcome proportional_ansatz() {
  const std::size_t K = 256;
  const ColorField rho0 = cosine_cells(K, 0.5);
  const std::vector<double> masses{0.35, 0.65};
  PdeConfig c;
  c.cells = K;
  c.horizon = 0.1;
  c.frames = 10;
  c.params = ModelParams(1.0, masses);
  const ColorField init = ColorField::proportional(rho0.color(0), masses);
  const auto heat = solve_heat(rho0, c);
  const auto lin = solve_colored_linear(init, heat.trajectory, c);
  const auto sys = solve_colored_system(init, c);
  double dl = 0, ds = 0;
  for (std::size_t l = 0; l < heat.trajectory.size(); ++l)
    for (std::size_t col = 0; col < 2; ++col)
      for (std::size_t k = 0; k < K; ++k) {
        dl = std::max(dl, std::abs(lin.trajectory.frames[l].at(col, k) - masses[col] * heat.trajectory.frames[l].at(0, k)));
        ds = std::max(ds, std::abs(sys.trajectory.frames[l].at(col, k) - masses[col] * sys.trajectory.frames[l].total(k)));
      }
  return {dl <= 1e-6 && ds <= 1e-6, "linear Linf=" + fmt(dl) + " system Linf=" + fmt(ds)};
}

Outcome tagged(const Settings& st) {
  const Outcome a = scenario_outcome("tagged_lambda1", st);
  const Outcome b = scenario_outcome("tagged_lambda3", st);
  return {a.passed && b.passed, "lambda=1: " + a.detail + "| lambda=3: " + b.detail};
}

Outcome m1_consistency() {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0;
  const std::size_t K = 64, L = 20;
  for (int t = 0; t < 10; ++t) {
    const double a1 = 0.6 * u(rng), a2 = 0.3 * u(rng), p1 = 6.28 * u(rng), p2 = 6.28 * u(rng);
    const double w1 = 10 * u(rng), w2 = 10 * u(rng);
    FieldTrajectory traj;
    for (std::size_t l = 0; l <= L; ++l) {
      const double time = 0.05 * l / L;
      ColorField f(1, K);
      for (std::size_t k = 0; k < K; ++k) {
        const double x = (k + 0.5) / K;
        f.at(0, k) = 1.0 + a1 * std::cos(w1 * time) * std::sin(2 * M_PI * x + p1) + a2 * std::sin(4 * M_PI * x + p2 + w2 * time);
      }
      traj.times.push_back(time);
      traj.frames.push_back(f);
    }
    const double lambda = 0.1 + 5 * u(rng);
    const auto a = dynamic_rate(traj, ModelParams(lambda, {1.0}));
    const auto b = uncolored_rate(traj);
    worst = std::max(worst, std::abs(a.i_dyn - b.i_dyn) / std::max(1.0, b.i_dyn));
  }
  return {worst <= 1e-12, "max |dynamic - uncoloured| = " + fmt(worst)};
}

Outcome sanov() {
  const std::size_t K = 1024;
  std::vector<double> q(K, 1.0), r(K);
  for (std::size_t k = 0; k < K; ++k) r[k] = 1.0 + 0.5 * std::cos(2 * M_PI * (k + 0.5) / K);
  const double expect = -std::log((1 + std::sqrt(0.75)) / 2);
  const double got = sanov_initial_rate(q, r).value;
  return {std::abs(got - expect) <= 1e-6, "KL=" + fmt(got) + " closed form=" + fmt(expect) + " diff=" + fmt(std::abs(got - expect))};
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

Outcome determinism(const Settings& st) {
  RunOptions first;
  first.threads = st.threads;
  first.output_dir = st.out / "determinism_first";
  const auto a = run_scenario(builtin_scenario("smoke"), first);
  RunOptions second = first;
  second.output_dir = st.out / "determinism_rerun";
  const fs::path manifest = a.directory / "manifest.json";
  ScenarioReport b;
  const int code = run_scenario_file(manifest.string(), second, &b);
  std::size_t files = 0, equal = 0;
  for (const auto& e : fs::directory_iterator(a.directory)) {
    if (e.path().extension() != ".csv") continue;
    ++files;
    if (slurp(e.path()) == slurp(b.directory / e.path().filename())) ++equal;
  }
  return {code <= kExitFail && files > 0 && equal == files,
          std::to_string(equal) + "/" + std::to_string(files) + " CSV files identical after re-running the manifest"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"swapcolor acceptance criteria"};
  std::vector<int> only, skip;
  Settings st;
  st.threads = std::max(1u, std::thread::hardware_concurrency());
  std::string out = (default_output_dir() / "acceptance").string();
  bool list = false;
  app.add_option("--only", only, "criteria to run (default: all)")->delimiter(',');
  app.add_option("--skip", skip, "criteria to leave out")->delimiter(',');
  app.add_option("--threads", st.threads, "worker threads for replica fan-out")->check(CLI::PositiveNumber);
  app.add_option("--out", out, "directory for scenario outputs and the summary");
  app.add_flag("--list", list, "list criteria and exit");
  CLI11_PARSE(app, argc, argv);
  st.out = out;

  const std::vector<Criterion> criteria{
      {1, "matrix identities", 1, matrix_identities},
      {2, "heat solver accuracy", 5, heat_accuracy},
      {3, "colour closure", 10, [&] { return scenario_outcome("closure", st); }},
      {4, "proportional ansatz", 0, proportional_ansatz},
      {5, "hydrodynamic limit", 600, [&] { return scenario_outcome("hydro_limit", st); }},
      {6, "swap-rate calibration", 120, [&] { return scenario_outcome("swap_rate", st); }},
      {7, "replacement residual", 0, [&] { return scenario_outcome("replacement", st); }},
      {8, "tagged-particle diffusivity", 600, [&] { return tagged(st); }},
      {9, "rate zero at the hydrodynamic solution", 0, [&] { return scenario_outcome("rate_zero", st); }},
      {10, "rate-cost identity", 300, [&] { return scenario_outcome("rate_cost", st); }},
      {11, "single-colour consistency", 0, m1_consistency},
      {12, "Sanov closed form", 0, sanov},
      {13, "determinism", 0, [&] { return determinism(st); }},
  };

  if (list) {
    for (const auto& c : criteria)
      std::cout << c.id << "  " << c.title << (c.limit_seconds > 0 ? "  (limit " + fmt(c.limit_seconds) + " s)" : "") << "\n";
    return 0;
  }

  const std::set<int> want(only.begin(), only.end()), drop(skip.begin(), skip.end());
  Json summary = Json::array();
  int failures = 0;
  for (const auto& c : criteria) {
    if ((!want.empty() && !want.count(c.id)) || drop.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = c.limit_seconds <= 0 || secs <= c.limit_seconds;
    const bool pass = o.passed && in_time;
    failures += pass ? 0 : 1;
    char head[96];
    std::snprintf(head, sizeof head, "%s  %2d  %-40s", pass ? "PASS" : "FAIL", c.id, c.title.c_str());
    std::cout << head << " " << o.detail << " [" << fmt(secs) << " s"
              << (c.limit_seconds > 0 ? " / limit " + fmt(c.limit_seconds) + " s" : "")
              << (in_time ? "" : ", over time limit") << (o.passed ? "" : ", check failed") << "]" << std::endl;
    summary.push_back({{"criterion", c.id},
                       {"title", c.title},
                       {"passed", pass},
                       {"check_passed", o.passed},
                       {"within_time_limit", in_time},
                       {"seconds", secs},
                       {"limit_seconds", c.limit_seconds},
                       {"detail", o.detail},
                       {"threads", st.threads}});
  }
  std::string stamp;
  if (!want.empty()) {
    for (int id : want) stamp += "_" + std::to_string(id);
  }
  write_json(st.out / ("summary" + stamp + ".json"), Json{{"version", build_version()}, {"criteria", summary}});
  return failures == 0 ? 0 : 1;
}
