#pragma once

// Finite-volume solvers for the heat equation, the linear colour equation on
// a heat background, the quasi-linear coloured system and its driven version.
//
// Unknowns are cell averages on the periodic grid of model.hpp. Every solver
// writes fluxes at the K faces and updates cells by flux differences, so mass
// is conserved to rounding. Face mobilities use arithmetic means of the two
// adjacent cells.

#include "swapcolor/model.hpp"

#include <functional>
#include <string>
#include <vector>

namespace swapcolor {

enum class Scheme { explicit_euler, semi_implicit };

std::string scheme_name(Scheme s);
Scheme parse_scheme(const std::string& name);

struct PdeConfig {
  std::size_t cells = 256;
  double dt = 0.0;       // 0 picks 0.9 of the stability limit
  double horizon = 0.0;
  Scheme scheme = Scheme::explicit_euler;
  ModelParams params;
  std::size_t frames = 1;  // number of equal intervals between stored frames

  double dx() const { return 1.0 / static_cast<double>(cells); }
  /// Explicit stability limit dx^2 / (2 kappa). kappa is half the largest
  /// eigenvalue of D, and that eigenvalue is 1 for every density.
  double stability_limit() const;
  /// Step actually used before landing on frame times: dt, or 0.9 of the
  /// stability limit (ten times that for the semi-implicit scheme).
  double target_dt() const;
  void validate() const;
};

/// Per-colour drift b_c(t, x) and swap bias Gamma(t, x), switched off for
/// t <= eta when eta > 0.
struct Perturbation {
  using Scalar = std::function<double(double t, double x)>;
  using MatrixFn = std::function<Matrix(double t, double x)>;

  std::vector<Scalar> b;  // empty means zero drift
  MatrixFn gamma;         // empty means zero bias
  double eta = 0.0;

  bool active(double t) const { return eta <= 0.0 || t > eta; }
  bool has_drift() const { return !b.empty(); }
  bool has_bias() const { return static_cast<bool>(gamma); }

  /// Throws DomainError unless Gamma is skew at the sampled points, within tol.
  void check_skew(std::size_t colors, const std::vector<double>& times, const std::vector<double>& xs,
                  double tol = 1e-12) const;
};

/// Bookkeeping reported next to every solve.
struct PdeAudit {
  Scheme scheme = Scheme::explicit_euler;
  double dt = 0.0;
  std::size_t steps = 0;
  double cfl = 0.0;                 // dt / stability_limit
  double max_mass_drift = 0.0;      // largest per-step change of any colour mass
  double clipped_mass = 0.0;        // total mass removed by clipping tiny negatives
  double min_value = 0.0;           // smallest density seen
};

struct PdeSolution {
  FieldTrajectory trajectory;
  PdeAudit audit;
};

/// d rho/dt = (1/2) rho''.
PdeSolution solve_heat(const ColorField& initial, const PdeConfig& config);

/// d rho_c/dt = (1/2) [ (lambda/(lambda+rho)) rho_c' + (rho'/(lambda+rho)) rho_c ]'
/// on a prescribed total density rho(t), interpolated linearly between the
/// frames of `background`.
PdeSolution solve_colored_linear(const ColorField& initial, const FieldTrajectory& background,
                                 const PdeConfig& config);

/// d rho~/dt = (1/2) div(D(rho~) grad rho~).
PdeSolution solve_colored_system(const ColorField& initial, const PdeConfig& config);

/// d rho~/dt = (1/2) div(D grad rho~) - div(A (b - (1/lambda) Gamma rho~)), where
/// (Gamma rho)_c = sum_k gamma_{kc} rho_k. Gated off for t <= eta when eta > 0.
PdeSolution solve_perturbed_system(const ColorField& initial, const Perturbation& perturbation,
                                   const PdeConfig& config);

/// Face values used by every colour solver, exposed for tests.
/// out_c = sum_j D_cj(rho) g_j = (lambda g_c + rho_c sum_j g_j) / (lambda + rho).
void apply_diffusion(const double* rho, const double* grad, std::size_t m, double lambda, double* out);
/// out_c = sum_j A_cj(rho) v_j = rho_c (lambda v_c + sum_j rho_j v_j) / (lambda + rho).
void apply_onsager(const double* rho, const double* v, std::size_t m, double lambda, double* out);

/// Largest |a - b| over all colours, cells and frames; shapes must agree.
double max_abs_difference(const FieldTrajectory& a, const FieldTrajectory& b);

/// Frame-wise sum over colours as a single-colour trajectory.
FieldTrajectory total_density(const FieldTrajectory& traj);

}  // namespace swapcolor
