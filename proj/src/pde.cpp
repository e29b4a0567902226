#include "swapcolor/pde.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <memory>
#include <sstream>

namespace swapcolor {

namespace {

constexpr double kNegativeAbort = -1e-12;
constexpr double kClipBudget = 1e-10;

// Face fluxes written as G_c = sum_j alpha_cj (rho_j[k+1] - rho_j[k])
//                             + beta_cj (rho_j[k+1] + rho_j[k]) / 2
// with the flux pointing towards increasing x, so cells gain
// (G[k] - G[k-1]) / dx. The linear part is what the semi-implicit scheme
// treats implicitly; `extra` is always explicit.
struct FaceCoefficients {
  std::size_t m = 0;
  std::size_t cells = 0;
  std::vector<double> alpha;
  std::vector<double> beta;
  bool has_beta = false;

  void reset(std::size_t colors, std::size_t k) {
    m = colors;
    cells = k;
    alpha.assign(k * m * m, 0.0);
    beta.assign(has_beta ? k * m * m : 0, 0.0);
  }
  double& a(std::size_t k, std::size_t c, std::size_t j) { return alpha[(k * m + c) * m + j]; }
  double& b(std::size_t k, std::size_t c, std::size_t j) { return beta[(k * m + c) * m + j]; }
};

using CoefficientFn = std::function<void(double t, const ColorField& rho, FaceCoefficients& out)>;
using ExtraFluxFn = std::function<void(double t, const ColorField& rho, std::vector<double>& flux)>;

void linear_flux(const FaceCoefficients& fc, const ColorField& rho, std::vector<double>& flux) {
  const std::size_t m = fc.m;
  const std::size_t n = fc.cells;
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t k1 = k + 1 == n ? 0 : k + 1;
    for (std::size_t c = 0; c < m; ++c) {
      double g = 0.0;
      const double* arow = fc.alpha.data() + (k * m + c) * m;
      for (std::size_t j = 0; j < m; ++j) g += arow[j] * (rho.at(j, k1) - rho.at(j, k));
      if (fc.has_beta) {
        const double* brow = fc.beta.data() + (k * m + c) * m;
        for (std::size_t j = 0; j < m; ++j) g += brow[j] * 0.5 * (rho.at(j, k1) + rho.at(j, k));
      }
      flux[c * n + k] += g;
    }
  }
}

// Sparse operator L with (L rho)_c[k] = (G_c[k] - G_c[k-1]) / dx for the
// linear part of the flux.
Eigen::SparseMatrix<double> assemble(const FaceCoefficients& fc, double dx) {
  const std::size_t m = fc.m;
  const std::size_t n = fc.cells;
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(n * m * m * 4);
  const double inv = 1.0 / dx;
  auto idx = [n](std::size_t c, std::size_t k) { return static_cast<int>(c * n + k); };
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t k1 = k + 1 == n ? 0 : k + 1;
    for (std::size_t c = 0; c < m; ++c) {
      for (std::size_t j = 0; j < m; ++j) {
        double w_right = fc.alpha[(k * m + c) * m + j];
        double w_left = -w_right;
        if (fc.has_beta) {
          w_right += 0.5 * fc.beta[(k * m + c) * m + j];
          w_left += 0.5 * fc.beta[(k * m + c) * m + j];
        }
        // face k adds to cell k and subtracts from cell k+1
        trip.emplace_back(idx(c, k), idx(j, k1), w_right * inv);
        trip.emplace_back(idx(c, k), idx(j, k), w_left * inv);
        trip.emplace_back(idx(c, k1), idx(j, k1), -w_right * inv);
        trip.emplace_back(idx(c, k1), idx(j, k), -w_left * inv);
      }
    }
  }
  Eigen::SparseMatrix<double> mat(static_cast<int>(n * m), static_cast<int>(n * m));
  mat.setFromTriplets(trip.begin(), trip.end());
  return mat;
}

void check_initial(const ColorField& initial, const PdeConfig& config) {
  if (initial.cells() != config.cells) throw ConfigError("initial field grid does not match the solver grid");
  for (double v : initial.raw())
    if (!(v >= 0.0)) throw DomainError("initial densities must be non-negative");
}

// Handles tiny negative values left by rounding; anything else aborts.
void enforce_positivity(ColorField& rho, double t, PdeAudit& audit) {
  const double dx = rho.dx();
  for (std::size_t c = 0; c < rho.colors(); ++c) {
    auto v = rho.color(c);
    double removed = 0.0;
    for (std::size_t k = 0; k < v.size(); ++k) {
      audit.min_value = std::min(audit.min_value, v[k]);
      if (v[k] >= 0.0) continue;
      if (v[k] < kNegativeAbort) {
        std::ostringstream msg;
        msg << "negative density " << v[k] << " for colour " << c << " at cell " << k << ", t = " << t
            << "; reduce dt or refine the grid";
        throw DomainError(msg.str());
      }
      removed -= v[k] * dx;
      v[k] = 0.0;
    }
    if (removed == 0.0) continue;
    audit.clipped_mass += removed;
    if (audit.clipped_mass > kClipBudget) throw DomainError("clipping budget exceeded; solution is unstable");
    double mass = 0.0;
    for (double x : v) mass += x * dx;
    const double scale = (mass - removed) / mass;
    for (double& x : v) x *= scale;
  }
}

struct Problem {
  CoefficientFn coefficients;
  ExtraFluxFn extra;  // may be empty
  bool has_beta = false;
};

PdeSolution run(const ColorField& initial, const PdeConfig& config, const Problem& problem) {
  config.validate();
  check_initial(initial, config);
  const std::size_t m = initial.colors();
  const std::size_t n = initial.cells();
  const double dx = config.dx();

  PdeSolution out;
  PdeAudit& audit = out.audit;
  audit.scheme = config.scheme;
  audit.min_value = *std::min_element(initial.raw().begin(), initial.raw().end());

  const std::size_t intervals = config.horizon > 0.0 ? config.frames : 0;
  std::size_t per_interval = 0;
  double dt = 0.0;
  if (intervals > 0) {
    const double interval = config.horizon / static_cast<double>(intervals);
    per_interval = static_cast<std::size_t>(std::ceil(interval / config.target_dt() - 1e-9));
    per_interval = std::max<std::size_t>(per_interval, 1);
    dt = interval / static_cast<double>(per_interval);
  }
  audit.dt = dt;
  audit.cfl = dt / config.stability_limit();
  if (config.scheme == Scheme::explicit_euler && audit.cfl > 1.0 + 1e-12) {
    throw ConfigError("explicit step violates the stability limit: dt = " + std::to_string(dt) +
                      " > " + std::to_string(config.stability_limit()));
  }

  ColorField rho = initial;
  ColorField next(m, n);
  FaceCoefficients fc;
  fc.has_beta = problem.has_beta;
  std::vector<double> flux(m * n);
  std::vector<double> mass_before(m);

  out.trajectory.times.push_back(0.0);
  out.trajectory.frames.push_back(rho);

  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  Eigen::VectorXd rhs(static_cast<Eigen::Index>(m * n));
  const bool implicit = config.scheme == Scheme::semi_implicit;

  double t = 0.0;
  for (std::size_t l = 1; l <= intervals; ++l) {
    for (std::size_t s = 0; s < per_interval; ++s) {
      for (std::size_t c = 0; c < m; ++c) mass_before[c] = rho.mass(c);
      std::fill(flux.begin(), flux.end(), 0.0);
      if (problem.extra) problem.extra(t, rho, flux);
      if (!implicit) {
        fc.reset(m, n);
        problem.coefficients(t, rho, fc);
        linear_flux(fc, rho, flux);
        for (std::size_t c = 0; c < m; ++c) {
          for (std::size_t k = 0; k < n; ++k) {
            const std::size_t km = k == 0 ? n - 1 : k - 1;
            next.at(c, k) = rho.at(c, k) + dt * (flux[c * n + k] - flux[c * n + km]) / dx;
          }
        }
      } else {
        // backward Euler on the linear part with coefficients lagged at t
        fc.reset(m, n);
        problem.coefficients(t, rho, fc);
        Eigen::SparseMatrix<double> op = assemble(fc, dx);
        Eigen::SparseMatrix<double> sys(op.rows(), op.cols());
        sys.setIdentity();
        sys -= dt * op;
        lu.compute(sys);
        if (lu.info() != Eigen::Success) throw DomainError("semi-implicit factorization failed");
        for (std::size_t c = 0; c < m; ++c) {
          for (std::size_t k = 0; k < n; ++k) {
            const std::size_t km = k == 0 ? n - 1 : k - 1;
            rhs(static_cast<Eigen::Index>(c * n + k)) = rho.at(c, k) + dt * (flux[c * n + k] - flux[c * n + km]) / dx;
          }
        }
        Eigen::VectorXd sol = lu.solve(rhs);
        for (std::size_t q = 0; q < m * n; ++q) next.raw()[q] = sol(static_cast<Eigen::Index>(q));
      }
      std::swap(rho, next);
      t = config.horizon * (static_cast<double>(l - 1) + static_cast<double>(s + 1) / static_cast<double>(per_interval)) /
          static_cast<double>(intervals);
      enforce_positivity(rho, t, audit);
      for (std::size_t c = 0; c < m; ++c)
        audit.max_mass_drift = std::max(audit.max_mass_drift, std::abs(rho.mass(c) - mass_before[c]));
      ++audit.steps;
    }
    out.trajectory.times.push_back(config.horizon * static_cast<double>(l) / static_cast<double>(intervals));
    out.trajectory.frames.push_back(rho);
  }
  return out;
}

}  // namespace

std::string scheme_name(Scheme s) { return s == Scheme::explicit_euler ? "explicit" : "semi_implicit"; }

Scheme parse_scheme(const std::string& name) {
  if (name == "explicit") return Scheme::explicit_euler;
  if (name == "semi_implicit") return Scheme::semi_implicit;
  throw ConfigError("unknown scheme '" + name + "' (expected explicit or semi_implicit)");
}

double PdeConfig::stability_limit() const { return dx() * dx(); }

double PdeConfig::target_dt() const {
  if (dt > 0.0) return dt;
  return (scheme == Scheme::semi_implicit ? 9.0 : 0.9) * stability_limit();
}

void PdeConfig::validate() const {
  params.validate();
  if (cells < 3) throw ConfigError("PDE grid needs at least 3 cells");
  if (dt < 0.0) throw ConfigError("PDE dt must be non-negative");
  if (horizon < 0.0) throw ConfigError("PDE horizon must be non-negative");
  if (frames == 0) throw ConfigError("PDE frames must be at least 1");
  if (scheme == Scheme::explicit_euler && dt > stability_limit() * (1.0 + 1e-12)) {
    throw ConfigError("explicit step violates the stability limit dx^2");
  }
}

void Perturbation::check_skew(std::size_t colors, const std::vector<double>& times, const std::vector<double>& xs,
                              double tol) const {
  if (!b.empty() && b.size() != colors) throw DomainError("perturbation drift needs one function per colour");
  if (!gamma) return;
  for (double t : times) {
    for (double x : xs) {
      const Matrix g = gamma(t, x);
      if (g.rows() != static_cast<Eigen::Index>(colors) || g.cols() != static_cast<Eigen::Index>(colors))
        throw DomainError("swap bias has the wrong shape");
      for (Eigen::Index i = 0; i < g.rows(); ++i) {
        if (std::abs(g(i, i)) > tol) throw DomainError("swap bias must vanish on the diagonal");
        for (Eigen::Index j = i + 1; j < g.cols(); ++j) {
          if (std::abs(g(i, j) + g(j, i)) > tol) {
            std::ostringstream msg;
            msg << "swap bias is not skew-symmetric at t = " << t << ", x = " << x << " (" << i << ", " << j << ")";
            throw DomainError(msg.str());
          }
        }
      }
    }
  }
}

void apply_diffusion(const double* rho, const double* grad, std::size_t m, double lambda, double* out) {
  double total = 0.0;
  double gsum = 0.0;
  for (std::size_t c = 0; c < m; ++c) {
    total += rho[c];
    gsum += grad[c];
  }
  const double inv = 1.0 / (lambda + total);
  for (std::size_t c = 0; c < m; ++c) out[c] = (lambda * grad[c] + rho[c] * gsum) * inv;
}

void apply_onsager(const double* rho, const double* v, std::size_t m, double lambda, double* out) {
  double total = 0.0;
  double weighted = 0.0;
  for (std::size_t c = 0; c < m; ++c) {
    total += rho[c];
    weighted += rho[c] * v[c];
  }
  const double inv = 1.0 / (lambda + total);
  for (std::size_t c = 0; c < m; ++c) out[c] = rho[c] * (lambda * v[c] + weighted) * inv;
}

PdeSolution solve_heat(const ColorField& initial, const PdeConfig& config) {
  if (initial.colors() != 1) throw DomainError("solve_heat expects a single density");
  const double half_over_dx = 0.5 / config.dx();
  Problem p;
  p.coefficients = [half_over_dx](double, const ColorField&, FaceCoefficients& fc) {
    std::fill(fc.alpha.begin(), fc.alpha.end(), half_over_dx);
  };
  return run(initial, config, p);
}

PdeSolution solve_colored_linear(const ColorField& initial, const FieldTrajectory& background,
                                 const PdeConfig& config) {
  background.validate();
  if (background.cells() != initial.cells()) throw DomainError("background grid does not match the initial field");
  const std::size_t n = initial.cells();
  const ColorField& b0 = background.frames.front();
  double worst = 0.0;
  for (std::size_t k = 0; k < n; ++k) worst = std::max(worst, std::abs(initial.total(k) - b0.total(k)));
  if (worst > 1e-10) {
    throw DomainError("initial colours do not sum to the background density (max gap " + std::to_string(worst) + ")");
  }
  const double lambda = config.params.lambda;
  const double dx = config.dx();
  // Between frames the total is carried forward by the discrete heat flow
  // from the latest frame at or before t; the equation assumes the total
  // solves the heat equation, so this keeps the colour sum on it exactly.
  struct BackgroundState {
    std::size_t frame = 0;
    double time = -1.0;
    std::vector<double> value, flux;
  };
  auto state = std::make_shared<BackgroundState>();
  auto total_at = [&background, n, dx, state](double t) -> const std::vector<double>& {
    BackgroundState& s = *state;
    const auto& times = background.times;
    std::size_t l = static_cast<std::size_t>(std::upper_bound(times.begin(), times.end(), t + 1e-15) - times.begin());
    l = l == 0 ? 0 : l - 1;
    if (s.time < 0.0 || t < s.time || l != s.frame) {
      s.frame = l;
      s.time = times[l];
      s.value = background.frames[l].total();
      s.flux.assign(n, 0.0);
    }
    const double span = t - s.time;
    if (span <= 0.0) return s.value;
    const std::size_t steps = static_cast<std::size_t>(std::ceil(span / (0.9 * dx * dx) - 1e-9));
    const double h = span / static_cast<double>(std::max<std::size_t>(steps, 1));
    const double alpha = 0.5 / dx;
    for (std::size_t q = 0; q < std::max<std::size_t>(steps, 1); ++q) {
      for (std::size_t k = 0; k < n; ++k) s.flux[k] = alpha * (s.value[k + 1 == n ? 0 : k + 1] - s.value[k]);
      for (std::size_t k = 0; k < n; ++k) s.value[k] += h * (s.flux[k] - s.flux[k == 0 ? n - 1 : k - 1]) / dx;
    }
    s.time = t;
    return s.value;
  };
  Problem p;
  p.has_beta = true;
  p.coefficients = [=](double t, const ColorField& rho, FaceCoefficients& fc) {
    const auto& bg = total_at(t);
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t k1 = k + 1 == n ? 0 : k + 1;
      const double face = 0.5 * (bg[k] + bg[k1]);
      const double grad = (bg[k1] - bg[k]) / dx;
      const double inv = 1.0 / (lambda + face);
      for (std::size_t c = 0; c < rho.colors(); ++c) {
        fc.a(k, c, c) = 0.5 * lambda * inv / dx;
        fc.b(k, c, c) = 0.5 * grad * inv;
      }
    }
  };
  return run(initial, config, p);
}

namespace {

Problem colored_problem(const PdeConfig& config, std::size_t m) {
  const double lambda = config.params.lambda;
  const double dx = config.dx();
  Problem p;
  p.coefficients = [lambda, dx, m](double, const ColorField& rho, FaceCoefficients& fc) {
    const std::size_t n = rho.cells();
    std::vector<double> face(m);
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t k1 = k + 1 == n ? 0 : k + 1;
      double total = 0.0;
      for (std::size_t c = 0; c < m; ++c) {
        face[c] = 0.5 * (rho.at(c, k) + rho.at(c, k1));
        total += face[c];
      }
      const double scale = 0.5 / (dx * (lambda + total));
      for (std::size_t c = 0; c < m; ++c)
        for (std::size_t j = 0; j < m; ++j) fc.a(k, c, j) = ((c == j ? lambda : 0.0) + face[c]) * scale;
    }
  };
  return p;
}

}  // namespace

PdeSolution solve_colored_system(const ColorField& initial, const PdeConfig& config) {
  return run(initial, config, colored_problem(config, initial.colors()));
}

PdeSolution solve_perturbed_system(const ColorField& initial, const Perturbation& perturbation,
                                   const PdeConfig& config) {
  const std::size_t m = initial.colors();
  if (perturbation.has_drift() && perturbation.b.size() != m)
    throw DomainError("perturbation drift needs one function per colour");
  Problem p = colored_problem(config, m);
  if (perturbation.has_drift() || perturbation.has_bias()) {
    const double lambda = config.params.lambda;
    const Grid grid{config.cells};
    p.extra = [perturbation, lambda, grid, m](double t, const ColorField& rho, std::vector<double>& flux) {
      if (!perturbation.active(t)) return;
      const std::size_t n = grid.cells;
      std::vector<double> face(m), v(m), av(m);
      for (std::size_t k = 0; k < n; ++k) {
        const std::size_t k1 = grid.next(k);
        const double x = grid.face(k);
        for (std::size_t c = 0; c < m; ++c) face[c] = 0.5 * (rho.at(c, k) + rho.at(c, k1));
        for (std::size_t c = 0; c < m; ++c) v[c] = perturbation.has_drift() ? perturbation.b[c](t, x) : 0.0;
        if (perturbation.has_bias()) {
          const Matrix g = perturbation.gamma(t, x);
          for (std::size_t c = 0; c < m; ++c) {
            const auto ci = static_cast<Eigen::Index>(c);
            if (std::abs(g(ci, ci)) > 1e-12) throw DomainError("swap bias must vanish on the diagonal");
            for (std::size_t q = c + 1; q < m; ++q) {
              const auto qi = static_cast<Eigen::Index>(q);
              if (std::abs(g(ci, qi) + g(qi, ci)) > 1e-12) throw DomainError("swap bias is not skew-symmetric");
            }
            double contraction = 0.0;  // sum_q gamma_{qc} rho_q
            for (std::size_t q = 0; q < m; ++q) contraction += g(static_cast<Eigen::Index>(q), ci) * face[q];
            v[c] -= contraction / lambda;
          }
        }
        apply_onsager(face.data(), v.data(), m, lambda, av.data());
        for (std::size_t c = 0; c < m; ++c) flux[c * n + k] -= av[c];
      }
    };
  }
  return run(initial, config, p);
}

double max_abs_difference(const FieldTrajectory& a, const FieldTrajectory& b) {
  if (a.size() != b.size() || a.colors() != b.colors() || a.cells() != b.cells())
    throw DomainError("trajectories have different shapes");
  double worst = 0.0;
  for (std::size_t l = 0; l < a.size(); ++l) {
    auto x = a.frames[l].raw();
    auto y = b.frames[l].raw();
    for (std::size_t q = 0; q < x.size(); ++q) worst = std::max(worst, std::abs(x[q] - y[q]));
  }
  return worst;
}

FieldTrajectory total_density(const FieldTrajectory& traj) {
  FieldTrajectory out;
  out.times = traj.times;
  for (const auto& f : traj.frames) out.frames.push_back(ColorField::from_density(f.total()));
  return out;
}

}  // namespace swapcolor
