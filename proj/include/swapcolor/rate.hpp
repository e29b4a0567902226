#pragma once

// Large-deviation rate functionals on grid trajectories: the weighted
// H^{-1,A} norm, the dynamic rate, the Sanov initial rate, perturbation
// costs, the optimal (Lagrange) controls and the energy functional.

#include "swapcolor/model.hpp"
#include "swapcolor/pde.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace swapcolor {

struct EllipticDiagnostics {
  std::size_t iterations = 0;
  double relative_residual = 0.0;  // ||g - L phi|| / ||g|| on the full system
  double mean_margin = 0.0;        // largest |mean g_c| / mean |g_c| before the gauge check
  bool regularized = false;        // some face density was floored
  bool degenerate = false;         // unresolvable on floored faces; value is +inf
};

struct NormResult {
  double value = 0.0;  // ||g||^2_{-1,A}
  ColorField phi;      // maximizer of <phi,g> - (1/2) int grad phi^T A grad phi
  EllipticDiagnostics diagnostics;
};

struct EllipticOptions {
  double tolerance = 1e-10;      // relative residual of the CG solve
  double mean_tolerance = 1e-8;  // allowed |mean g_c| relative to mean |g_c|
  double mean_floor = 0.0;       // absolute allowance for rounding in g
};

/// Solves -div(A(rho~) grad phi) = g with the face discretization of the
/// solvers and returns int grad phi^T A grad phi. Each g_c must have zero mean.
NormResult h_minus1_a_norm(const ColorField& g, const ColorField& rho, const ModelParams& params,
                           const EllipticOptions& options = {});
double h_minus1_a_norm_sq(const ColorField& g, const ColorField& rho, const ModelParams& params);

/// Weighted H^{-1} norm for one density with face weight w = rho (the m = 1
/// case written without the mobility matrix).
NormResult h_minus1_weighted_norm(const std::vector<double>& g, const std::vector<double>& weight,
                                  const EllipticOptions& options = {});

enum class Infeasibility { none, negativity, mass, energy, degenerate };
std::string infeasibility_name(Infeasibility v);

struct RateReport {
  bool feasible = true;
  Infeasibility violation = Infeasibility::none;
  std::string detail;

  std::optional<double> i_init;
  double i_dyn = 0.0;
  std::optional<double> i_dyn_richardson;  // (4 I(h) - I(2h)) / 3 when frames allow
  std::vector<double> times;
  std::vector<double> slices;  // (1/2) ||g_t||^2_{-1,A}
  std::vector<ColorField> residuals;
  std::vector<EllipticDiagnostics> diagnostics;
  bool regularized = false;
};

struct RateOptions {
  EllipticOptions elliptic;
  std::size_t threads = 1;
  bool keep_residuals = true;
};

/// Residual g = d rho~/dt - (1/2) div(D grad rho~) at frame l. Time
/// derivative: centred in the interior, second-order one-sided at the ends.
ColorField rate_residual(const FieldTrajectory& traj, std::size_t l, const ModelParams& params);

/// I_dyn = (1/2) int ||g_t||^2_{-1,A} dt, trapezoid over frames.
RateReport dynamic_rate(const FieldTrajectory& traj, const ModelParams& params, const RateOptions& options = {});

/// Same functional for one density: (1/2) int ||d rho/dt - (1/2) rho''||^2_{-1,rho} dt.
RateReport uncolored_rate(const FieldTrajectory& traj, const RateOptions& options = {});

struct SanovRate {
  double value = 0.0;
  bool infinite = false;  // q0 charges a cell where rho0 vanishes
};

/// int q0 log(q0 / rho0) dx with midpoint quadrature.
SanovRate sanov_initial_rate(const std::vector<double>& q0, const std::vector<double>& rho0);

/// (1/2) int int { sum_c b_c^2 rho_c + (1/lambda) sum_{c1<c2} gamma_{c1c2}^2 rho_c1 rho_c2 }.
double perturbation_cost(const FieldTrajectory& traj, const Perturbation& pert, const ModelParams& params);

/// Per-colour potentials U_c(t, x). Gradients default to a fourth-order
/// finite difference of the potential.
struct GradientControl {
  using Fn = std::function<double(double t, double x)>;
  std::vector<Fn> potential;
  std::vector<Fn> gradient;  // optional, same length as potential

  /// Single potential shared by all colours.
  static GradientControl shared(Fn u, std::size_t colors, Fn grad = nullptr);

  std::size_t colors() const { return potential.size(); }
  double grad(std::size_t c, double t, double x) const;
};

/// b_c = (lambda dU_c + sum_k rho_k dU_k)/(lambda + rho) and
/// gamma_{c1c2} = lambda (dU_c1 - dU_c2)/(lambda + rho), evaluated at one
/// point.
void optimal_controls_at(const Vector& rho, const Vector& grad_u, double lambda, Vector& b, Matrix& gamma);

/// Optimal perturbation along a trajectory, as functions of (t, x) that
/// interpolate the frames linearly in t and x.
Perturbation optimal_controls(const FieldTrajectory& traj, const GradientControl& u, const ModelParams& params);

/// (1/2) int int grad U^T A(rho~) grad U, midpoint in space, trapezoid in time.
double control_cost(const FieldTrajectory& traj, const GradientControl& u, const ModelParams& params);

struct EnergyReport {
  double value = 0.0;           // matrix form grad^T chi A chi grad
  double explicit_value = 0.0;  // closed form
  bool regularized = false;
};

/// int int grad rho~^T chi A chi grad rho~ on faces, trapezoid in time.
EnergyReport energy_functional(const FieldTrajectory& traj, const ModelParams& params);

/// (1/2) int int b^2 q for one density q.
double tagged_drift_cost(const FieldTrajectory& q, const std::function<double(double t, double x)>& b);

}  // namespace swapcolor
