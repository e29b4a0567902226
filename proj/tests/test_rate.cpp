#include "swapcolor/rate.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace swapcolor;

namespace {

ColorField cos_field(std::size_t K, double amp, std::size_t colors = 1, double share = 1.0) {
  ColorField f(colors, K);
  for (std::size_t k = 0; k < K; ++k) {
    const double r = 1.0 + amp * std::cos(2 * M_PI * (k + 0.5) / K);
    for (std::size_t c = 0; c < colors; ++c) f.at(c, k) = r * (colors == 1 ? 1.0 : (c == 0 ? share : 1.0 - share));
  }
  return f;
}

FieldTrajectory frozen(const ColorField& f, double T, std::size_t frames) {
  FieldTrajectory t;
  for (std::size_t l = 0; l <= frames; ++l) {
    t.times.push_back(T * l / frames);
    t.frames.push_back(f);
  }
  return t;
}

PdeConfig pde(std::size_t K, double T, std::size_t frames, ModelParams p) {
  PdeConfig c;
  c.cells = K;
  c.horizon = T;
  c.frames = frames;
  c.params = std::move(p);
  return c;
}

// int_0^1 sin^2(2 pi x) / (1 + a cos(2 pi x)) dx
double sin2_over(double a) { return (1 - std::sqrt(1 - a * a)) / (a * a); }

}  // namespace

TEST_CASE("weighted norm examples") {
  const std::size_t K = 256;
  const ModelParams p(3.0, {1.0});
  ColorField g(1, K), rho(1, K, 1.0);
  CHECK(h_minus1_a_norm_sq(g, rho, p) == 0.0);
  for (std::size_t k = 0; k < K; ++k) g.at(0, k) = std::cos(2 * M_PI * (k + 0.5) / K);
  const double v = h_minus1_a_norm_sq(g, rho, p);
  CHECK(v == doctest::Approx(0.5 / (4 * M_PI * M_PI)).epsilon(1e-3));
  CHECK(v == doctest::Approx(0.012665).epsilon(1e-3));
  ColorField g2 = g;
  for (double& x : g2.raw()) x *= 2;
  CHECK(h_minus1_a_norm_sq(g2, rho, p) == doctest::Approx(4 * v).epsilon(1e-10));

  // Euler-Lagrange self-consistency: int grad phi A grad phi = <phi, g>
  const auto res = h_minus1_a_norm(g, rho, p);
  double pairing = 0;
  for (std::size_t k = 0; k < K; ++k) pairing += res.phi.at(0, k) * g.at(0, k) / K;
  CHECK(res.value == doctest::Approx(pairing).epsilon(1e-9));
  CHECK(res.diagnostics.relative_residual <= 1e-10);

  ColorField bad(1, K, 1.0);
  CHECK_THROWS_AS(h_minus1_a_norm_sq(bad, rho, p), DomainError);
}

TEST_CASE("coloured norm of a proportional residual equals the uncoloured norm") {
  const std::size_t K = 128;
  const ColorField rho1 = cos_field(K, 0.5);
  const ColorField rho2 = cos_field(K, 0.5, 2, 0.3);
  ColorField g1(1, K), g2(2, K);
  for (std::size_t k = 0; k < K; ++k) {
    const double v = std::sin(4 * M_PI * (k + 0.5) / K);
    g1.at(0, k) = v;
    g2.at(0, k) = 0.3 * v;
    g2.at(1, k) = 0.7 * v;
  }
  const ModelParams p2(0.7, {0.3, 0.7});
  std::vector<double> w(rho1.color(0).begin(), rho1.color(0).end()), gv(g1.color(0).begin(), g1.color(0).end());
  const double u = h_minus1_weighted_norm(gv, w).value;
  CHECK(h_minus1_a_norm_sq(g2, rho2, p2) == doctest::Approx(u).epsilon(1e-9));
  CHECK(h_minus1_a_norm_sq(g1, rho1, ModelParams(0.7, {1.0})) == doctest::Approx(u).epsilon(1e-9));
}

TEST_CASE("rate vanishes along the hydrodynamic solution and shrinks under refinement") {
  const ModelParams p(1.0, {0.4, 0.6});
  double prev = 1e300;
  for (std::size_t K : {64, 128}) {
    const auto sol = solve_colored_system(cos_field(K, 0.5, 2, 0.4), pde(K, 0.1, 50 * K / 64, p));
    const auto r = dynamic_rate(sol.trajectory, p);
    CHECK(r.feasible);
    CHECK(r.i_dyn >= -1e-12);
    CHECK(r.i_dyn < prev);
    prev = r.i_dyn;
    double trap = 0;
    for (std::size_t l = 1; l < r.slices.size(); ++l) trap += 0.5 * (r.slices[l] + r.slices[l - 1]) * (r.times[l] - r.times[l - 1]);
    CHECK(std::abs(trap - r.i_dyn) <= 1e-12);
    for (double s : r.slices) CHECK(s >= -1e-12);
  }
  CHECK(prev < 1e-5);
}

TEST_CASE("frozen non-equilibrium profile against the closed form") {
  const std::size_t K = 256;
  const double T = 1.0;
  // residual (1/4)(2 pi)^2 cos; phi' = rho'/(2 rho), so the slice is
  // (1/2)(1/4) int rho'^2 / rho = (pi^2/2) int sin^2/(1 + cos/2)
  const double oracle = T * 0.5 * M_PI * M_PI * sin2_over(0.5) * 0.25;
  const auto one = uncolored_rate(frozen(cos_field(K, 0.5), T, 10));
  CHECK(one.i_dyn == doctest::Approx(oracle).epsilon(0.01));
  const auto two = dynamic_rate(frozen(cos_field(K, 0.5, 2, 0.25), T, 10), ModelParams(2.0, {0.25, 0.75}));
  CHECK(two.i_dyn == doctest::Approx(oracle).epsilon(0.01));
}

TEST_CASE("single colour dynamic rate equals the uncoloured rate") {
  const std::size_t K = 128;
  const auto heat = solve_heat(cos_field(K, 0.5), pde(K, 0.05, 20, ModelParams(1.0, {1.0})));
  FieldTrajectory rev;
  for (std::size_t l = heat.trajectory.size(); l-- > 0;) {
    rev.times.push_back(0.05 - heat.trajectory.times[l]);
    rev.frames.push_back(heat.trajectory.frames[l]);
  }
  for (double lambda : {0.2, 1.0, 9.0}) {
    const auto a = dynamic_rate(rev, ModelParams(lambda, {1.0}));
    const auto b = uncolored_rate(rev);
    CHECK(std::abs(a.i_dyn - b.i_dyn) <= 1e-12 * std::max(1.0, b.i_dyn));
  }
}

TEST_CASE("time-reversed heat flow") {
  const std::size_t K = 256;
  const double T = 0.1, a0 = 0.5;
  const auto heat = solve_heat(cos_field(K, a0), pde(K, T, 200, ModelParams(1.0, {1.0})));
  FieldTrajectory rev;
  for (std::size_t l = heat.trajectory.size(); l-- > 0;) {
    rev.times.push_back(T - heat.trajectory.times[l]);
    rev.frames.push_back(heat.trajectory.frames[l]);
  }
  const auto r = uncolored_rate(rev);
  // residual -rho'', slice (1/2) int rho'^2/rho = 2 pi^2 (1 - sqrt(1 - a(t)^2))
  double oracle = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double a = a0 * std::exp(-2 * M_PI * M_PI * (i + 0.5) * T / n);
    oracle += 2 * M_PI * M_PI * (1 - std::sqrt(1 - a * a)) * T / n;
  }
  CHECK(r.i_dyn == doctest::Approx(oracle).epsilon(0.01));
  CHECK(oracle == doctest::Approx(0.0661).epsilon(0.01));
  CHECK(r.i_dyn == doctest::Approx(0.066).epsilon(0.01));  // golden
}

TEST_CASE("infeasible trajectories are reported, not returned as infinity") {
  const std::size_t K = 64;
  ColorField f = cos_field(K, 0.5);
  FieldTrajectory t = frozen(f, 0.1, 4);
  t.frames[2].at(0, 5) = -0.1;
  const auto r = uncolored_rate(t);
  CHECK_FALSE(r.feasible);
  CHECK(r.violation == Infeasibility::negativity);
  FieldTrajectory m = frozen(f, 0.1, 4);
  for (double& v : m.frames[3].raw()) v *= 1.1;
  CHECK(uncolored_rate(m).violation == Infeasibility::mass);
  CHECK_THROWS_AS(uncolored_rate(frozen(f, 0.1, 0)), DomainError);
}

TEST_CASE("a colour switched on where it vanished is degenerate") {
  const std::size_t K = 64;
  const ModelParams p(1.0, {0.5, 0.5});
  ColorField step(2, K);
  for (std::size_t k = 0; k < K; ++k) step.at(k < K / 2 ? 0 : 1, k) = 1.0;
  // colour 0 leaks into the right half only after the first frame
  const auto sol = solve_colored_system(step, pde(K, 0.01, 4, p));
  const auto r = dynamic_rate(sol.trajectory, p);
  CHECK_FALSE(r.feasible);
  CHECK(r.violation == Infeasibility::degenerate);
  CHECK(infeasibility_name(r.violation) == "degenerate");
}

TEST_CASE("Sanov initial rate") {
  const std::size_t K = 1024;
  std::vector<double> uni(K, 1.0), rho0(K);
  for (std::size_t k = 0; k < K; ++k) rho0[k] = 1.0 + 0.5 * std::cos(2 * M_PI * (k + 0.5) / K);
  CHECK(sanov_initial_rate(rho0, rho0).value == 0.0);
  const double expect = -std::log((1 + std::sqrt(0.75)) / 2);
  CHECK(expect == doctest::Approx(0.0693).epsilon(1e-3));
  CHECK(std::abs(sanov_initial_rate(uni, rho0).value - expect) <= 1e-6);
  std::vector<double> hole = rho0;
  hole[3] = 0.0;
  for (double& v : hole) v *= K / (K - rho0[3]);
  CHECK(sanov_initial_rate(uni, hole).infinite);
  CHECK_FALSE(sanov_initial_rate(hole, uni).infinite);
}

TEST_CASE("perturbation cost") {
  const std::size_t K = 64;
  const ModelParams p(1.0, {0.5, 0.5});
  const auto traj = frozen(cos_field(K, 0.5, 2, 0.5), 1.0, 10);
  CHECK(perturbation_cost(traj, Perturbation{}, p) == 0.0);

  Perturbation same;
  auto b = [](double, double x) { return std::sin(2 * M_PI * x); };
  same.b = {b, b};
  // (1/2) int b^2 rho = (1/2) int sin^2 (1 + cos/2) = 1/4
  CHECK(perturbation_cost(traj, same, p) == doctest::Approx(0.25).epsilon(1e-3));

  // gradient control: full cost dominates the A-weighted cost
  const auto u = GradientControl::shared([](double, double x) { return std::cos(2 * M_PI * x) / (2 * M_PI); }, 2);
  CHECK(perturbation_cost(traj, same, p) >= control_cost(traj, u, p) - 1e-12);
}

TEST_CASE("optimal controls") {
  Vector rho(2), grad(2), b;
  Matrix gamma;
  rho << 1.0, 1.0;
  grad << 1.0, -1.0;
  optimal_controls_at(rho, grad, 1.0, b, gamma);
  CHECK(b(0) == doctest::Approx(1.0 / 3));
  CHECK(gamma(0, 1) == doctest::Approx(2.0 / 3));
  CHECK(gamma(1, 0) == doctest::Approx(-2.0 / 3));

  grad << 0.7, 0.7;
  optimal_controls_at(rho, grad, 2.5, b, gamma);
  CHECK(b(0) == doctest::Approx(0.7));
  CHECK(b(1) == doctest::Approx(0.7));
  CHECK(gamma.cwiseAbs().maxCoeff() == 0.0);

  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> pos(0.01, 3.0), g(-2.0, 2.0), lam(0.1, 10.0);
  double worst = 0;
  for (int i = 0; i < 1000; ++i) {
    const std::size_t m = 1 + i % 4;
    Vector r(m), gu(m);
    for (std::size_t c = 0; c < m; ++c) {
      r(c) = pos(rng);
      gu(c) = g(rng);
    }
    const double l = lam(rng);
    optimal_controls_at(r, gu, l, b, gamma);
    CHECK((gamma + gamma.transpose()).cwiseAbs().maxCoeff() <= 1e-15);
    // b_c - (1/lambda) sum_k gamma_kc rho_k = dU_c
    const Vector constraint = b - (gamma.transpose() * r) / l;
    worst = std::max(worst, (constraint - gu).cwiseAbs().maxCoeff());
  }
  CHECK(worst <= 1e-12);
}

TEST_CASE("optimizer identity on a trajectory") {
  const std::size_t K = 64;
  const ModelParams p(1.5, {0.3, 0.7});
  const auto sol = solve_colored_system(cos_field(K, 0.5, 2, 0.3), pde(K, 0.05, 10, p));
  GradientControl u;
  u.potential = {[](double t, double x) { return 0.2 * t * std::sin(2 * M_PI * x); },
                 [](double t, double x) { return -0.3 * std::cos(2 * M_PI * x + t); }};
  const auto pert = optimal_controls(sol.trajectory, u, p);
  CHECK_NOTHROW(pert.check_skew(2, {0.01, 0.03}, {0.1, 0.5, 0.9}));
  CHECK(perturbation_cost(sol.trajectory, pert, p) == doctest::Approx(control_cost(sol.trajectory, u, p)).epsilon(1e-10));
}

TEST_CASE("driven solve reproduces the control cost") {
  const std::size_t K = 128;
  const double T = 0.1;
  const ModelParams p(1.0, {0.5, 0.5});
  auto e = [T](double t) { return t <= 0.02 ? 0.0 : 0.5 * (1 - std::cos(M_PI * (t - 0.02) / (T - 0.02))); };
  const auto u = GradientControl::shared([e](double t, double x) { return 0.2 * e(t) * std::sin(2 * M_PI * x); }, 2,
                                         [e](double t, double x) { return 0.4 * M_PI * e(t) * std::cos(2 * M_PI * x); });
  ColorField init(2, K);
  for (std::size_t k = 0; k < K; ++k) {
    const double x = (k + 0.5) / K;
    init.at(0, k) = 0.5 * (1 + 0.3 * std::sin(2 * M_PI * x));
    init.at(1, k) = 0.5 * (1 - 0.3 * std::sin(2 * M_PI * x));
  }
  Perturbation drift;
  drift.eta = 0.02;
  for (std::size_t c = 0; c < 2; ++c) drift.b.push_back([u, c](double t, double x) { return u.grad(c, t, x); });
  const auto sol = solve_perturbed_system(init, drift, pde(K, T, 100, p));
  const auto r = dynamic_rate(sol.trajectory, p);
  const double cost = control_cost(sol.trajectory, u, p);
  CHECK(cost > 1e-4);
  CHECK(r.i_dyn == doctest::Approx(cost).epsilon(0.03));
}

TEST_CASE("energy functional") {
  const ModelParams p(1.0, {0.5, 0.5});
  CHECK(energy_functional(frozen(ColorField(2, 32, 0.5), 1.0, 3), p).value == 0.0);

  const ModelParams one(2.0, {1.0});
  const auto traj = frozen(cos_field(128, 0.5), 1.0, 3);
  const auto e = energy_functional(traj, one);
  CHECK(e.value == doctest::Approx(e.explicit_value).epsilon(1e-10));
  // m = 1: rho'^2 / (lambda + rho) (1 + lambda/rho) = rho'^2 / rho
  CHECK(e.value == doctest::Approx(4 * M_PI * M_PI * 0.25 * sin2_over(0.5)).epsilon(1e-3));

  double vals[2];
  int i = 0;
  for (std::size_t K : {256, 512}) {
    const auto heat = solve_heat(cos_field(K, 0.5), pde(K, 0.05, 5, one));
    vals[i++] = energy_functional(heat.trajectory, one).value;
  }
  CHECK(vals[0] == doctest::Approx(vals[1]).epsilon(0.01));
}

TEST_CASE("tagged drift cost") {
  const auto q = frozen(ColorField(1, 32, 1.0), 1.0, 4);
  CHECK(tagged_drift_cost(q, [](double, double) { return 0.0; }) == 0.0);
  CHECK(tagged_drift_cost(q, [](double, double) { return 1.0; }) == doctest::Approx(0.5));
  auto b = [](double t, double x) { return t * std::sin(2 * M_PI * x); };
  auto b2 = [](double t, double x) { return 2 * t * std::sin(2 * M_PI * x); };
  CHECK(tagged_drift_cost(q, b2) == doctest::Approx(4 * tagged_drift_cost(q, b)));
}
