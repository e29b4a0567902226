#include "swapcolor/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace swapcolor {

namespace {

constexpr double kUnitMassTolerance = 1e-9;

void check_nonnegative(const Vector& rho) {
  for (Eigen::Index c = 0; c < rho.size(); ++c) {
    if (!(rho(c) >= 0.0)) {
      throw DomainError("negative colour density " + std::to_string(rho(c)) + " for colour " + std::to_string(c));
    }
  }
}

}  // namespace

ModelParams::ModelParams(double lam, std::vector<double> masses) : lambda(lam), color_masses(std::move(masses)) {
  validate();
}

ModelParams ModelParams::uniform(double lam, std::size_t m) {
  return ModelParams(lam, std::vector<double>(m, 1.0 / static_cast<double>(m)));
}

void ModelParams::validate() const {
  if (!(lambda > 0.0)) throw ConfigError("lambda must be positive");
  if (color_masses.empty()) throw ConfigError("at least one colour is required");
  double sum = 0.0;
  for (double r : color_masses) {
    if (!(r > 0.0)) throw ConfigError("colour masses must be positive");
    sum += r;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("colour masses must sum to 1");
}

double TorusPoint::wrap(double x) {
  double r = x - std::floor(x);
  // floor can round up to exactly 1 for tiny negative x
  return r >= 1.0 ? 0.0 : r;
}

double TorusPoint::distance(double a, double b) {
  double d = wrap(b - a);
  return std::min(d, 1.0 - d);
}

ColorField::ColorField(std::size_t colors, std::size_t cells, double fill)
    : colors_(colors), cells_(cells), values_(colors * cells, fill) {}

double ColorField::total(std::size_t k) const {
  double s = 0.0;
  for (std::size_t c = 0; c < colors_; ++c) s += at(c, k);
  return s;
}

std::vector<double> ColorField::total() const {
  std::vector<double> out(cells_);
  for (std::size_t k = 0; k < cells_; ++k) out[k] = total(k);
  return out;
}

double ColorField::mass(std::size_t c) const {
  auto v = color(c);
  return dx() * std::accumulate(v.begin(), v.end(), 0.0);
}

double ColorField::total_mass() const {
  double s = 0.0;
  for (std::size_t c = 0; c < colors_; ++c) s += mass(c);
  return s;
}

Vector ColorField::at_cell(std::size_t k) const {
  Vector v(static_cast<Eigen::Index>(colors_));
  for (std::size_t c = 0; c < colors_; ++c) v(static_cast<Eigen::Index>(c)) = at(c, k);
  return v;
}

ColorField ColorField::from_density(std::span<const double> density) {
  ColorField f(1, density.size());
  std::copy(density.begin(), density.end(), f.values_.begin());
  return f;
}

ColorField ColorField::proportional(std::span<const double> density, std::span<const double> color_masses) {
  ColorField f(color_masses.size(), density.size());
  for (std::size_t c = 0; c < color_masses.size(); ++c)
    for (std::size_t k = 0; k < density.size(); ++k) f.at(c, k) = color_masses[c] * density[k];
  return f;
}

void FieldTrajectory::validate() const {
  if (frames.size() != times.size()) throw DomainError("trajectory times and frames differ in length");
  if (frames.empty()) throw DomainError("empty trajectory");
  for (std::size_t l = 0; l < frames.size(); ++l) {
    if (frames[l].colors() != frames[0].colors() || frames[l].cells() != frames[0].cells())
      throw DomainError("trajectory frames have inconsistent shape");
    if (l > 0 && !(times[l] > times[l - 1])) throw DomainError("trajectory times must increase strictly");
  }
}

double FieldTrajectory::interpolate(double t, std::size_t c, std::size_t k) const {
  if (t <= times.front()) return frames.front().at(c, k);
  if (t >= times.back()) return frames.back().at(c, k);
  auto it = std::upper_bound(times.begin(), times.end(), t);
  std::size_t hi = static_cast<std::size_t>(it - times.begin());
  std::size_t lo = hi - 1;
  double w = (t - times[lo]) / (times[hi] - times[lo]);
  return (1.0 - w) * frames[lo].at(c, k) + w * frames[hi].at(c, k);
}

Matrix diffusion_matrix(const Vector& rho, const ModelParams& params) {
  check_nonnegative(rho);
  const double lam = params.lambda;
  const double denom = lam + rho.sum();
  const Eigen::Index m = rho.size();
  Matrix d(m, m);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < m; ++j) d(i, j) = ((i == j ? lam : 0.0) + rho(i)) / denom;
  return d;
}

Matrix onsager_matrix(const Vector& rho, const ModelParams& params) {
  check_nonnegative(rho);
  const double lam = params.lambda;
  const double denom = lam + rho.sum();
  const Eigen::Index m = rho.size();
  Matrix a(m, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = i; j < m; ++j) {
      double v = ((i == j ? lam * rho(j) : 0.0) + rho(i) * rho(j)) / denom;
      a(i, j) = v;
      a(j, i) = v;
    }
  }
  return a;
}

Matrix chi_matrix(const Vector& rho) {
  for (Eigen::Index c = 0; c < rho.size(); ++c) {
    if (!(rho(c) > 0.0)) throw DomainError("singular mobility: colour " + std::to_string(c) + " has zero density");
  }
  return rho.cwiseInverse().asDiagonal();
}

Matrix chi_matrix_regularized(const Vector& rho, bool* regularized) {
  Vector r = rho;
  bool used = false;
  for (Eigen::Index c = 0; c < r.size(); ++c) {
    if (r(c) < kDensityFloor) {
      r(c) = kDensityFloor;
      used = true;
    }
  }
  if (regularized) *regularized = used;
  return r.cwiseInverse().asDiagonal();
}

MobilityMatrices mobility(const Vector& rho, const ModelParams& params) {
  MobilityMatrices out;
  out.D = diffusion_matrix(rho, params);
  out.A = onsager_matrix(rho, params);
  out.chi = chi_matrix_regularized(rho, &out.regularized);
  return out;
}

double chi_a_chi_explicit(const Vector& rho, const Vector& grad, const ModelParams& params) {
  const double total = rho.sum();
  const double denom = params.lambda + total;
  const double grad_total = grad.sum();
  double s = grad_total * grad_total / denom;
  for (Eigen::Index c = 0; c < rho.size(); ++c) {
    s += params.lambda * grad(c) * grad(c) / (denom * std::max(rho(c), kDensityFloor));
  }
  return s;
}

double density_at(const ColorField& field, double x) {
  const std::size_t k_count = field.cells();
  auto k = static_cast<std::size_t>(TorusPoint::wrap(x) * static_cast<double>(k_count));
  return field.total(std::min(k, k_count - 1));
}

double f_map(const ColorField& field, TorusPoint x, const ModelParams& params) {
  const double mass = field.total_mass();
  if (std::abs(mass - 1.0) > kUnitMassTolerance) {
    throw DomainError("f_map requires a field of unit total mass, got " + std::to_string(mass));
  }
  const double x0 = x.value();
  const double h = field.dx();
  // Exact integral of the piecewise-constant density against nu(y - x).
  double integral = 0.0;
  for (std::size_t k = 0; k < field.cells(); ++k) {
    const double v = field.total(k);
    if (v == 0.0) continue;
    const double a = static_cast<double>(k) * h;
    const double b = a + h;
    auto piece = [x0](double lo, double hi, double shift) {
      return 0.5 * (hi * hi - lo * lo) - (x0 - shift) * (hi - lo);
    };
    double s;
    if (b <= x0) {
      s = piece(a, b, 1.0);
    } else if (a >= x0) {
      s = piece(a, b, 0.0);
    } else {
      s = piece(a, x0, 1.0) + piece(x0, b, 0.0);
    }
    integral += v * s;
  }
  return x0 + integral / (params.lambda + 1.0);
}

TorusPoint g_map(const ColorField& field, double y, const ModelParams& params) {
  const double f0 = f_map(field, TorusPoint(0.0), params);
  const double target = y - std::floor(y - f0);  // in [f0, f0 + 1)
  auto residual = [&](double x) {
    // F(1) = F(0) + 1; f_map wraps its argument so evaluate at 1 explicitly.
    if (x >= 1.0) return f0 + 1.0 - target;
    return f_map(field, TorusPoint(x), params) - target;
  };
  double lo = 0.0;
  double hi = 1.0;
  for (int it = 0; it < 60 && hi - lo > 1e-9; ++it) {
    double mid = 0.5 * (lo + hi);
    if (residual(mid) < 0.0) lo = mid;
    else hi = mid;
  }
  double x = 0.5 * (lo + hi);
  for (int it = 0; it < 8; ++it) {
    double r = residual(x);
    if (std::abs(r) <= 1e-14) break;
    double slope = (params.lambda + density_at(field, x)) / (params.lambda + 1.0);
    double next = x - r / slope;
    if (!(next >= lo && next <= hi)) break;
    x = next;
  }
  return TorusPoint(x);
}

std::vector<double> centered_gradient(std::span<const double> values) {
  const std::size_t n = values.size();
  const double inv = static_cast<double>(n) / 2.0;
  std::vector<double> g(n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t kp = k + 1 == n ? 0 : k + 1;
    const std::size_t km = k == 0 ? n - 1 : k - 1;
    g[k] = (values[kp] - values[km]) * inv;
  }
  return g;
}

TaggedCoefficients tagged_generator_coeffs(const ColorField& field, TorusPoint x, const ModelParams& params) {
  const std::vector<double> rho = field.total();
  const std::vector<double> grad = centered_gradient(rho);
  const Grid grid = field.grid();
  // linear interpolation between the two nearest cell centres
  double s = x.value() * static_cast<double>(grid.cells) - 0.5;
  double base = std::floor(s);
  double w = s - base;
  auto k0 = static_cast<std::size_t>((static_cast<long>(base) % static_cast<long>(grid.cells) +
                                      static_cast<long>(grid.cells)) %
                                     static_cast<long>(grid.cells));
  std::size_t k1 = grid.next(k0);
  const double r = (1.0 - w) * rho[k0] + w * rho[k1];
  const double dr = (1.0 - w) * grad[k0] + w * grad[k1];
  const double lam = params.lambda;
  TaggedCoefficients out;
  out.diffusion = lam / (lam + r);
  out.drift = -(2.0 * lam + r) * dr / (2.0 * (lam + r) * (lam + r));
  return out;
}

}  // namespace swapcolor
