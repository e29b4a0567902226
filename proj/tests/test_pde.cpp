#include "swapcolor/pde.hpp"

#include <doctest.h>

#include <cmath>

using namespace swapcolor;

namespace {

// Exact cell average of a + b cos(2 pi x) on cell k.
double cos_average(double a, double b, std::size_t k, std::size_t K) {
  const double dx = 1.0 / K, x0 = k * dx;
  return a + b * (std::sin(2 * M_PI * (x0 + dx)) - std::sin(2 * M_PI * x0)) / (2 * M_PI * dx);
}

ColorField cosine_density(std::size_t K, double amp = 0.5) {
  ColorField f(1, K);
  for (std::size_t k = 0; k < K; ++k) f.at(0, k) = cos_average(1.0, amp, k, K);
  return f;
}

// Two colours with a non-proportional split of 1 + 0.5 cos.
ColorField split_density(std::size_t K) {
  ColorField f(2, K);
  for (std::size_t k = 0; k < K; ++k) {
    const double x = (k + 0.5) / K;
    const double r = 1.0 + 0.5 * std::cos(2 * M_PI * x);
    const double share = 0.5 + 0.4 * std::sin(2 * M_PI * x);
    f.at(0, k) = r * share;
    f.at(1, k) = r * (1 - share);
  }
  return f;
}

PdeConfig config(std::size_t K, double T, std::size_t frames, double lambda, std::vector<double> masses) {
  PdeConfig c;
  c.cells = K;
  c.horizon = T;
  c.frames = frames;
  c.params = ModelParams(lambda, std::move(masses));
  return c;
}

double heat_error(std::size_t K) {
  const auto sol = solve_heat(cosine_density(K), config(K, 0.1, 1, 1.0, {1.0}));
  const double decay = std::exp(-2 * M_PI * M_PI * 0.1);
  double err = 0;
  for (std::size_t k = 0; k < K; ++k)
    err = std::max(err, std::abs(sol.trajectory.frames.back().at(0, k) - cos_average(1.0, 0.5 * decay, k, K)));
  return err;
}

}  // namespace

TEST_CASE("heat equation decays a cosine at the predicted rate") {
  const double amp = 0.5 * std::exp(-2 * M_PI * M_PI * 0.1);
  CHECK(amp == doctest::Approx(0.0695).epsilon(1e-3));
  const std::size_t K = 256;
  const auto sol = solve_heat(cosine_density(K), config(K, 0.1, 1, 1.0, {1.0}));
  // the largest cell sits next to x = 0
  CHECK(sol.trajectory.frames.back().at(0, 0) - 1.0 == doctest::Approx(amp).epsilon(1e-3));

  const double e64 = heat_error(64), e128 = heat_error(128);
  CHECK(e128 < 1e-4);
  CHECK(e64 / e128 == doctest::Approx(4.0).epsilon(0.25));
}

TEST_CASE("constant states are stationary") {
  const std::size_t K = 64;
  ColorField f(3, K);
  for (std::size_t k = 0; k < K; ++k) {
    f.at(0, k) = 0.2;
    f.at(1, k) = 0.3;
    f.at(2, k) = 0.5;
  }
  const auto sol = solve_colored_system(f, config(K, 0.05, 2, 1.5, {0.2, 0.3, 0.5}));
  CHECK(max_abs_difference(sol.trajectory, FieldTrajectory{sol.trajectory.times, {f, f, f}}) < 1e-14);
}

TEST_CASE("even initial data stay even") {
  const std::size_t K = 128;
  ColorField f(2, K);
  for (std::size_t k = 0; k < K; ++k) {
    const double x = (k + 0.5) / K;
    f.at(0, k) = 1.0 + 0.6 * std::cos(2 * M_PI * x);
    f.at(1, k) = 0.5 + 0.4 * std::cos(4 * M_PI * x);
  }
  const auto sol = solve_colored_system(f, config(K, 0.02, 1, 1.0, {0.5, 0.5}));
  const auto& end = sol.trajectory.frames.back();
  double asym = 0;
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t k = 0; k < K; ++k) asym = std::max(asym, std::abs(end.at(c, k) - end.at(c, K - 1 - k)));
  CHECK(asym < 1e-12);
}

TEST_CASE("proportional colourings follow the heat flow") {
  const std::size_t K = 128;
  const auto rho0 = cosine_density(K);
  const auto heat = solve_heat(rho0, config(K, 0.05, 5, 1.0, {1.0}));
  const std::vector<double> masses{0.3, 0.7};
  const ColorField init = ColorField::proportional(rho0.color(0), masses);

  for (double lambda : {0.3, 1.0, 5.0}) {
    const auto sys = solve_colored_system(init, config(K, 0.05, 5, lambda, masses));
    const auto lin = solve_colored_linear(init, heat.trajectory, config(K, 0.05, 5, lambda, masses));
    for (std::size_t l = 0; l < heat.trajectory.size(); ++l)
      for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t k = 0; k < K; ++k) {
          const double expect = masses[c] * heat.trajectory.frames[l].at(0, k);
          CHECK(std::abs(sys.trajectory.frames[l].at(c, k) - expect) < 1e-12);
          CHECK(std::abs(lin.trajectory.frames[l].at(c, k) - expect) < 1e-8);
        }
  }
}

TEST_CASE("one colour on the heat background is the heat equation") {
  const std::size_t K = 128;
  const auto rho0 = cosine_density(K);
  const auto cfg = config(K, 0.05, 50, 2.0, {1.0});
  const auto heat = solve_heat(rho0, cfg);
  const auto lin = solve_colored_linear(rho0, heat.trajectory, cfg);
  CHECK(max_abs_difference(heat.trajectory, lin.trajectory) < 1e-8);
}

TEST_CASE("colour totals close onto the heat equation") {
  SUBCASE("linear equation") {
    const std::size_t K = 128;
    const auto init = split_density(K);
    const auto cfg = config(K, 0.1, 100, 1.0, {init.mass(0), init.mass(1)});
    const auto heat = solve_heat(ColorField::from_density(init.total()), cfg);
    const auto lin = solve_colored_linear(init, heat.trajectory, cfg);
    CHECK(max_abs_difference(total_density(lin.trajectory), heat.trajectory) <= 1e-8);
    CHECK(lin.audit.max_mass_drift < 1e-13);
  }
  SUBCASE("quasi-linear system") {
    const std::size_t K = 256;
    const auto init = split_density(K);
    const auto cfg = config(K, 0.1, 10, 1.0, {init.mass(0), init.mass(1)});
    const auto heat = solve_heat(ColorField::from_density(init.total()), cfg);
    const auto sys = solve_colored_system(init, cfg);
    CHECK(max_abs_difference(total_density(sys.trajectory), heat.trajectory) <= 1e-6);
    CHECK(sys.audit.max_mass_drift < 1e-13);
    CHECK(sys.audit.clipped_mass == 0.0);
  }
}

TEST_CASE("perturbed solver") {
  const std::size_t K = 128;
  const auto init = split_density(K);
  const auto cfg = config(K, 0.05, 5, 1.0, {init.mass(0), init.mass(1)});
  const auto base = solve_colored_system(init, cfg);

  SUBCASE("zero perturbation") {
    const auto p = solve_perturbed_system(init, Perturbation{}, cfg);
    CHECK(max_abs_difference(p.trajectory, base.trajectory) == 0.0);
  }

  SUBCASE("equal drifts move the total like a single drift-diffusion") {
    auto b = [](double, double x) { return 0.8 * std::sin(2 * M_PI * x); };
    Perturbation pert;
    pert.b = {b, b};
    const auto sol = solve_perturbed_system(init, pert, cfg);

    // independent explicit solver for d rho/dt = (1/2) rho'' - (rho b)'
    std::vector<double> rho = init.total(), next(K), flux(K);
    const double dx = 1.0 / K;
    const double interval = cfg.horizon / cfg.frames;
    const std::size_t per = static_cast<std::size_t>(std::ceil(interval / (0.9 * dx * dx) - 1e-9));
    const double dt = interval / per;
    double worst = 0, t = 0;
    for (std::size_t l = 1; l <= cfg.frames; ++l) {
      for (std::size_t s = 0; s < per; ++s) {
        for (std::size_t k = 0; k < K; ++k) {
          const std::size_t k1 = (k + 1) % K;
          flux[k] = 0.5 * (rho[k1] - rho[k]) / dx - 0.5 * (rho[k] + rho[k1]) * b(t, (k + 1) * dx);
        }
        for (std::size_t k = 0; k < K; ++k) next[k] = rho[k] + dt * (flux[k] - flux[(k + K - 1) % K]) / dx;
        rho.swap(next);
        t = cfg.horizon * ((l - 1) + double(s + 1) / per) / cfg.frames;
      }
      const auto tot = sol.trajectory.frames[l].total();
      for (std::size_t k = 0; k < K; ++k) worst = std::max(worst, std::abs(tot[k] - rho[k]));
    }
    CHECK(worst <= 1e-6);
  }

  SUBCASE("a pure swap bias leaves the total on the heat flow") {
    Perturbation pert;
    pert.gamma = [](double, double x) {
      Matrix g = Matrix::Zero(2, 2);
      g(0, 1) = 3.0 * std::cos(2 * M_PI * x);
      g(1, 0) = -g(0, 1);
      return g;
    };
    const auto sol = solve_perturbed_system(init, pert, cfg);
    CHECK(max_abs_difference(total_density(sol.trajectory), total_density(base.trajectory)) < 1e-12);
    CHECK(max_abs_difference(sol.trajectory, base.trajectory) > 1e-4);
  }

  SUBCASE("gating by eta") {
    Perturbation pert;
    pert.b = {[](double, double) { return 1.0; }, [](double, double) { return -1.0; }};
    pert.eta = 1.0;
    const auto sol = solve_perturbed_system(init, pert, cfg);
    CHECK(max_abs_difference(sol.trajectory, base.trajectory) == 0.0);
  }

  SUBCASE("non-skew bias is rejected") {
    Perturbation pert;
    pert.gamma = [](double, double) {
      Matrix g = Matrix::Zero(2, 2);
      g(0, 1) = 1.0;
      g(1, 0) = 1.0;
      return g;
    };
    CHECK_THROWS_AS(pert.check_skew(2, {0.1}, {0.3}), DomainError);
    CHECK_THROWS_AS(solve_perturbed_system(init, pert, cfg), DomainError);
  }
}

TEST_CASE("semi-implicit scheme") {
  const std::size_t K = 128;
  const auto init = split_density(K);
  auto cfg = config(K, 0.05, 5, 1.0, {init.mass(0), init.mass(1)});
  const auto ex = solve_colored_system(init, cfg);
  cfg.scheme = Scheme::semi_implicit;
  const auto im = solve_colored_system(init, cfg);
  CHECK(im.audit.cfl == doctest::Approx(9.0).epsilon(0.05));
  CHECK(im.audit.steps * 8 < ex.audit.steps);
  CHECK(max_abs_difference(ex.trajectory, im.trajectory) < 5e-3);
  CHECK(im.audit.max_mass_drift < 1e-12);
}

TEST_CASE("configuration errors") {
  PdeConfig c = config(64, 0.1, 1, 1.0, {1.0});
  c.dt = 2.0 / (64.0 * 64.0);
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.dt = 0;
  c.frames = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.frames = 1;
  CHECK_THROWS_AS(solve_heat(cosine_density(32), c), ConfigError);
  ColorField neg = cosine_density(64);
  neg.at(0, 3) = -1.0;
  CHECK_THROWS_AS(solve_heat(neg, c), DomainError);
  CHECK_THROWS_AS(parse_scheme("crank"), ConfigError);
}

TEST_CASE("face operators") {
  const double rho[2] = {0.5, 1.5}, g[2] = {1.0, -2.0};
  double out[2];
  apply_diffusion(rho, g, 2, 2.0, out);
  // (lambda g_c + rho_c sum g) / (lambda + rho)
  CHECK(out[0] == doctest::Approx((2.0 * 1.0 + 0.5 * -1.0) / 4.0));
  CHECK(out[1] == doctest::Approx((2.0 * -2.0 + 1.5 * -1.0) / 4.0));
  apply_onsager(rho, g, 2, 2.0, out);
  const double s = 0.5 * 1.0 + 1.5 * -2.0;
  CHECK(out[0] == doctest::Approx(0.5 * (2.0 * 1.0 + s) / 4.0));
  CHECK(out[1] == doctest::Approx(1.5 * (2.0 * -2.0 + s) / 4.0));
}
