#pragma once

// Shared geometry, colored density fields and the mobility matrices of the
// colored hydrodynamic equation on the unit circle.

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace swapcolor {

struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Densities below this floor are clamped inside reciprocals (chi, rates).
inline constexpr double kDensityFloor = 1e-12;

/// Static physics of the swap model.
struct ModelParams {
  double lambda = 1.0;               // swap intensity per unit local time, per factor N
  std::vector<double> color_masses;  // average density of each color, sums to 1

  ModelParams() = default;
  ModelParams(double lam, std::vector<double> masses);

  /// Equal masses 1/m for each of m colors.
  static ModelParams uniform(double lam, std::size_t m);

  std::size_t colors() const { return color_masses.size(); }

  /// Throws ConfigError when an invariant is broken.
  void validate() const;
};

/// Point on the unit circle, always stored in [0, 1).
class TorusPoint {
 public:
  TorusPoint() = default;
  explicit TorusPoint(double x) : x_(wrap(x)) {}

  double value() const { return x_; }

  static double wrap(double x);

  /// Representative of (to - from) mod 1 in [0, 1): clockwise distance.
  static double forward_distance(double from, double to) { return wrap(to - from); }

  /// Shortest arc length between two points, in [0, 1/2].
  static double distance(double a, double b);

 private:
  double x_ = 0.0;
};

/// Cell-centred periodic grid on [0,1): x_k = (k + 1/2)/K.
struct Grid {
  std::size_t cells = 0;

  double dx() const { return 1.0 / static_cast<double>(cells); }
  double center(std::size_t k) const { return (static_cast<double>(k) + 0.5) * dx(); }
  double face(std::size_t k) const { return static_cast<double>(k + 1) * dx(); }  // face k+1/2
  std::size_t next(std::size_t k) const { return k + 1 == cells ? 0 : k + 1; }
  std::size_t prev(std::size_t k) const { return k == 0 ? cells - 1 : k - 1; }
};

/// m colour densities sampled at the cell centres of one grid.
class ColorField {
 public:
  ColorField() = default;
  ColorField(std::size_t colors, std::size_t cells, double fill = 0.0);

  std::size_t colors() const { return colors_; }
  std::size_t cells() const { return cells_; }
  Grid grid() const { return Grid{cells_}; }
  double dx() const { return 1.0 / static_cast<double>(cells_); }

  double& at(std::size_t c, std::size_t k) { return values_[c * cells_ + k]; }
  double at(std::size_t c, std::size_t k) const { return values_[c * cells_ + k]; }

  std::span<double> color(std::size_t c) { return {values_.data() + c * cells_, cells_}; }
  std::span<const double> color(std::size_t c) const { return {values_.data() + c * cells_, cells_}; }

  std::span<const double> raw() const { return values_; }
  std::span<double> raw() { return values_; }

  /// Sum over colours at cell k.
  double total(std::size_t k) const;
  std::vector<double> total() const;

  /// dx * sum_k values[c][k].
  double mass(std::size_t c) const;
  double total_mass() const;

  /// Vector (rho_1, ..., rho_m) at cell k.
  Vector at_cell(std::size_t k) const;

  /// Single-colour field from a density sampled on the grid.
  static ColorField from_density(std::span<const double> density);

  /// Each colour is color_masses[c] * density (proportional colouring).
  static ColorField proportional(std::span<const double> density, std::span<const double> color_masses);

 private:
  std::size_t colors_ = 0;
  std::size_t cells_ = 0;
  std::vector<double> values_;
};

/// Time-indexed sequence of colour fields on a common grid.
struct FieldTrajectory {
  std::vector<double> times;
  std::vector<ColorField> frames;

  std::size_t size() const { return frames.size(); }
  std::size_t colors() const { return frames.empty() ? 0 : frames.front().colors(); }
  std::size_t cells() const { return frames.empty() ? 0 : frames.front().cells(); }

  /// Throws DomainError if frames disagree on shape or times do not increase.
  void validate() const;

  /// Linear interpolation in time of colour c at cell k.
  double interpolate(double t, std::size_t c, std::size_t k) const;
};

/// D, A and chi evaluated at one colour vector.
struct MobilityMatrices {
  Matrix D;
  Matrix A;
  Matrix chi;
  bool regularized = false;  // chi used the density floor for some colour
};

/// D_ij = (delta_ij lambda + rho_i) / (lambda + rho).
Matrix diffusion_matrix(const Vector& rho, const ModelParams& params);

/// A_ij = (delta_ij lambda rho_j + rho_i rho_j) / (lambda + rho). Symmetric.
Matrix onsager_matrix(const Vector& rho, const ModelParams& params);

/// diag(1 / rho_c). Throws DomainError if some rho_c is zero.
Matrix chi_matrix(const Vector& rho);

/// diag(1 / max(rho_c, floor)); sets *regularized when the floor was used.
Matrix chi_matrix_regularized(const Vector& rho, bool* regularized = nullptr);

MobilityMatrices mobility(const Vector& rho, const ModelParams& params);

/// grad^T chi A chi grad written out:
/// (sum grad)^2/(lambda+rho) + lambda sum grad_c^2/((lambda+rho) rho_c).
double chi_a_chi_explicit(const Vector& rho, const Vector& grad, const ModelParams& params);

/// Total density of a field evaluated at an arbitrary point (piecewise
/// constant per cell).
double density_at(const ColorField& field, double x);

/// Change of coordinates F(x) = x + <rho(y), nu(y - x)> / (lambda + 1),
/// nu(u) = u mod 1. The field must carry unit total mass.
double f_map(const ColorField& field, TorusPoint x, const ModelParams& params);

/// Inverse of f_map: returns the point x with f_map(x) = y modulo 1 shifts.
TorusPoint g_map(const ColorField& field, double y, const ModelParams& params);

struct TaggedCoefficients {
  double diffusion = 0.0;  // sigma^2 of the tagged SDE: lambda/(lambda+rho)
  double drift = 0.0;      // -(2 lambda + rho) rho' / (2 (lambda+rho)^2)
};

/// Coefficients of the tagged-particle generator at x. Density and its
/// gradient come from linear interpolation of cell values and centred
/// differences.
TaggedCoefficients tagged_generator_coeffs(const ColorField& field, TorusPoint x, const ModelParams& params);

/// Centred-difference gradient of a periodic grid function.
std::vector<double> centered_gradient(std::span<const double> values);

}  // namespace swapcolor
