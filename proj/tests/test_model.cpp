#include "swapcolor/model.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace swapcolor;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

ColorField uniform_field(std::size_t cells) { return ColorField(1, cells, 1.0); }

}  // namespace

TEST_CASE("model params validation") {
  CHECK_NOTHROW(ModelParams(1.0, {0.5, 0.5}).validate());
  CHECK_THROWS_AS(ModelParams(0.0, {1.0}).validate(), ConfigError);
  CHECK_THROWS_AS(ModelParams(1.0, {0.5, 0.4}).validate(), ConfigError);
  CHECK_THROWS_AS(ModelParams(1.0, {1.2, -0.2}).validate(), ConfigError);
  CHECK(ModelParams::uniform(2.0, 4).color_masses[3] == doctest::Approx(0.25));
}

TEST_CASE("torus points wrap and measure arcs") {
  CHECK(TorusPoint(1.25).value() == doctest::Approx(0.25));
  CHECK(TorusPoint(-0.25).value() == doctest::Approx(0.75));
  CHECK(TorusPoint::wrap(1.0) == 0.0);
  CHECK(TorusPoint::distance(0.05, 0.95) == doctest::Approx(0.1));
  CHECK(TorusPoint::forward_distance(0.9, 0.1) == doctest::Approx(0.2));
}

TEST_CASE("diffusion matrix examples") {
  SUBCASE("single colour is the heat equation") {
    const Matrix d = diffusion_matrix(vec({1.0}), ModelParams(2.0, {1.0}));
    CHECK(d(0, 0) == doctest::Approx(1.0));
  }
  SUBCASE("two colours at unit density") {
    const Matrix d = diffusion_matrix(vec({1.0, 1.0}), ModelParams(1.0, {0.5, 0.5}));
    CHECK(d(0, 0) == doctest::Approx(2.0 / 3.0));
    CHECK(d(0, 1) == doctest::Approx(1.0 / 3.0));
    CHECK(d(1, 0) == doctest::Approx(1.0 / 3.0));
    CHECK(d(1, 1) == doctest::Approx(2.0 / 3.0));
  }
  SUBCASE("vacuum") {
    const Matrix d = diffusion_matrix(vec({0.0, 0.0}), ModelParams(1.0, {0.5, 0.5}));
    CHECK((d - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-15);
  }
}

TEST_CASE("onsager matrix examples") {
  const ModelParams p(1.0, {0.5, 0.5});
  const Matrix a = onsager_matrix(vec({1.0, 1.0}), p);
  CHECK(a(0, 0) == doctest::Approx(2.0 / 3.0));
  CHECK(a(0, 1) == doctest::Approx(1.0 / 3.0));

  for (double r : {0.3, 1.0, 4.0})
    for (double lam : {0.5, 1.0, 7.0}) CHECK(onsager_matrix(vec({r}), ModelParams(lam, {1.0}))(0, 0) == doctest::Approx(r));

  const Matrix z = onsager_matrix(vec({2.0, 0.0}), p);
  CHECK(z(0, 0) == doctest::Approx(2.0));
  CHECK(z(0, 1) == 0.0);
  CHECK(z(1, 0) == 0.0);
  CHECK(z(1, 1) == 0.0);
}

TEST_CASE("chi matrix") {
  CHECK((chi_matrix(vec({1.0, 1.0})) - Matrix::Identity(2, 2)).norm() == 0.0);
  const Matrix c = chi_matrix(vec({2.0, 4.0}));
  CHECK(c(0, 0) == doctest::Approx(0.5));
  CHECK(c(1, 1) == doctest::Approx(0.25));
  CHECK(c(0, 1) == 0.0);
  CHECK_THROWS_AS(chi_matrix(vec({1.0, 0.0})), DomainError);
  bool reg = false;
  chi_matrix_regularized(vec({1.0, 0.0}), &reg);
  CHECK(reg);
}

TEST_CASE("explicit energy density matches the matrix form for every lambda") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.05, 2.0), g(-1.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t m = 1 + trial % 4;
    Vector rho(m), grad(m);
    for (std::size_t c = 0; c < m; ++c) {
      rho(c) = u(rng);
      grad(c) = g(rng);
    }
    const ModelParams p(u(rng) * 3.0, std::vector<double>(m, 1.0 / m));
    const auto mm = mobility(rho, p);
    const double matrix_form = grad.dot(mm.chi * mm.A * mm.chi * grad);
    CHECK(chi_a_chi_explicit(rho, grad, p) == doctest::Approx(matrix_form).epsilon(1e-10));
  }
}

TEST_CASE("change of coordinates on the uniform field") {
  const ColorField f = uniform_field(256);
  const ModelParams p(1.0, {1.0});
  CHECK(f_map(f, TorusPoint(0.3), p) == doctest::Approx(0.55).epsilon(1e-9));
  CHECK(g_map(f, 0.55, p).value() == doctest::Approx(0.3).epsilon(1e-9));

  // unit slope of F and G
  for (double x : {0.1, 0.37, 0.8}) {
    const double h = 1e-4;
    const double dF = (f_map(f, TorusPoint(x + h), p) - f_map(f, TorusPoint(x - h), p)) / (2 * h);
    CHECK(dF == doctest::Approx(1.0).epsilon(1e-6));
    const double y = f_map(f, TorusPoint(x), p);
    const double dG = (g_map(f, y + h, p).value() - g_map(f, y - h, p).value()) / (2 * h);
    CHECK(dG == doctest::Approx(1.0).epsilon(1e-6));
  }

  // large lambda switches the correction off
  CHECK(f_map(f, TorusPoint(0.3), ModelParams(1e9, {1.0})) == doctest::Approx(0.3).epsilon(1e-8));
}

TEST_CASE("g_map inverts f_map on a non-uniform field") {
  const std::size_t K = 128;
  ColorField f(2, K);
  for (std::size_t k = 0; k < K; ++k) {
    const double x = (k + 0.5) / K;
    const double r = 1.0 + 0.5 * std::cos(2 * M_PI * x);
    f.at(0, k) = r * (0.5 + 0.3 * std::sin(2 * M_PI * x));
    f.at(1, k) = r - f.at(0, k);
  }
  const ModelParams p(2.0, {0.5, 0.5});
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 64; ++i) {
    const double x = u(rng);
    const double back = g_map(f, f_map(f, TorusPoint(x), p), p).value();
    CHECK(TorusPoint::distance(back, x) <= 1e-10);
  }
}

TEST_CASE("tagged generator coefficients") {
  const ColorField f = uniform_field(64);
  auto c1 = tagged_generator_coeffs(f, TorusPoint(0.4), ModelParams(1.0, {1.0}));
  CHECK(c1.diffusion == doctest::Approx(0.5));
  CHECK(c1.drift == doctest::Approx(0.0));
  auto c3 = tagged_generator_coeffs(f, TorusPoint(0.4), ModelParams(3.0, {1.0}));
  CHECK(c3.diffusion == doctest::Approx(0.75));
  auto big = tagged_generator_coeffs(f, TorusPoint(0.4), ModelParams(1e12, {1.0}));
  CHECK(big.diffusion == doctest::Approx(1.0));
}

TEST_CASE("colour field bookkeeping") {
  std::vector<double> rho(8, 1.0);
  const std::vector<double> masses{0.25, 0.75};
  const ColorField f = ColorField::proportional(rho, masses);
  CHECK(f.mass(0) == doctest::Approx(0.25));
  CHECK(f.total_mass() == doctest::Approx(1.0));
  CHECK(f.total(3) == doctest::Approx(1.0));
  CHECK(f.grid().center(0) == doctest::Approx(1.0 / 16));
  CHECK(f.grid().prev(0) == 7);

  FieldTrajectory t;
  t.times = {0.0, 1.0};
  t.frames = {f, f};
  CHECK_NOTHROW(t.validate());
  CHECK(t.interpolate(0.5, 1, 2) == doctest::Approx(0.75));
  t.times = {1.0, 0.0};
  CHECK_THROWS_AS(t.validate(), DomainError);
}

TEST_CASE("centred gradient of a periodic sine") {
  const std::size_t K = 256;
  std::vector<double> v(K);
  for (std::size_t k = 0; k < K; ++k) v[k] = std::sin(2 * M_PI * (k + 0.5) / K);
  const auto g = centered_gradient(v);
  double err = 0;
  for (std::size_t k = 0; k < K; ++k) err = std::max(err, std::abs(g[k] - 2 * M_PI * std::cos(2 * M_PI * (k + 0.5) / K)));
  CHECK(err < 1e-3);
}
