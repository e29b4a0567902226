#include "swapcolor/rate.hpp"
#include "swapcolor/parallel.hpp"

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <sstream>

namespace swapcolor {

namespace {

// Face weight matrices W[k] (m x m, symmetric) for the operator
// (L phi)_c[k] = sum_j W_cj[k-1/2](phi_j[k] - phi_j[k-1]) - W_cj[k+1/2](phi_j[k+1] - phi_j[k]),
// scaled by 1/dx^2.
struct FaceWeights {
  std::size_t m = 0;
  std::size_t cells = 0;
  std::vector<double> w;  // face-major, m x m per face
  bool regularized = false;

  double at(std::size_t k, std::size_t c, std::size_t j) const { return w[(k * m + c) * m + j]; }
};

FaceWeights onsager_weights(const ColorField& rho, const ModelParams& params) {
  FaceWeights fw;
  fw.m = rho.colors();
  fw.cells = rho.cells();
  fw.w.assign(fw.cells * fw.m * fw.m, 0.0);
  const double lambda = params.lambda;
  std::vector<double> face(fw.m);
  for (std::size_t k = 0; k < fw.cells; ++k) {
    const std::size_t k1 = k + 1 == fw.cells ? 0 : k + 1;
    double total = 0.0;
    for (std::size_t c = 0; c < fw.m; ++c) {
      face[c] = 0.5 * (rho.at(c, k) + rho.at(c, k1));
      if (face[c] < kDensityFloor) {
        face[c] = kDensityFloor;
        fw.regularized = true;
      }
      total += face[c];
    }
    const double inv = 1.0 / (lambda + total);
    for (std::size_t c = 0; c < fw.m; ++c)
      for (std::size_t j = 0; j < fw.m; ++j)
        fw.w[(k * fw.m + c) * fw.m + j] = ((c == j ? lambda * face[j] : 0.0) + face[c] * face[j]) * inv;
  }
  return fw;
}

void apply_operator(const FaceWeights& fw, const Eigen::VectorXd& phi, Eigen::VectorXd& out) {
  const std::size_t m = fw.m;
  const std::size_t n = fw.cells;
  const double inv = static_cast<double>(n) * static_cast<double>(n);
  out.setZero(phi.size());
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t k1 = k + 1 == n ? 0 : k + 1;
    for (std::size_t c = 0; c < m; ++c) {
      double flux = 0.0;
      for (std::size_t j = 0; j < m; ++j)
        flux += fw.at(k, c, j) * (phi(static_cast<Eigen::Index>(j * n + k1)) - phi(static_cast<Eigen::Index>(j * n + k)));
      out(static_cast<Eigen::Index>(c * n + k)) -= flux * inv;
      out(static_cast<Eigen::Index>(c * n + k1)) += flux * inv;
    }
  }
}

// One cell per colour is pinned to zero so the matrix is positive definite;
// the dropped equation is implied by the zero-mean data.
Eigen::SparseMatrix<double> pinned_matrix(const FaceWeights& fw) {
  const std::size_t m = fw.m;
  const std::size_t n = fw.cells;
  const double inv = static_cast<double>(n) * static_cast<double>(n);
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(n * m * m * 4 + m);
  auto idx = [n](std::size_t c, std::size_t k) { return static_cast<int>(c * n + k); };
  auto pinned = [n](int i) { return static_cast<std::size_t>(i) % n == 0; };
  double diag_scale = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t k1 = k + 1 == n ? 0 : k + 1;
    for (std::size_t c = 0; c < m; ++c) {
      diag_scale = std::max(diag_scale, fw.at(k, c, c) * inv);
      for (std::size_t j = 0; j < m; ++j) {
        const double v = fw.at(k, c, j) * inv;
        const int rows[4] = {idx(c, k), idx(c, k), idx(c, k1), idx(c, k1)};
        const int cols[4] = {idx(j, k), idx(j, k1), idx(j, k), idx(j, k1)};
        const double vals[4] = {v, -v, -v, v};
        for (int q = 0; q < 4; ++q)
          if (!pinned(rows[q]) && !pinned(cols[q])) trip.emplace_back(rows[q], cols[q], vals[q]);
      }
    }
  }
  for (std::size_t c = 0; c < m; ++c) trip.emplace_back(idx(c, 0), idx(c, 0), diag_scale > 0.0 ? diag_scale : 1.0);
  Eigen::SparseMatrix<double> mat(static_cast<int>(n * m), static_cast<int>(n * m));
  mat.setFromTriplets(trip.begin(), trip.end());
  return mat;
}

NormResult solve_norm(const FaceWeights& fw, const std::vector<double>& g_in, const EllipticOptions& options) {
  const std::size_t m = fw.m;
  const std::size_t n = fw.cells;
  const double dx = 1.0 / static_cast<double>(n);
  NormResult out;
  out.phi = ColorField(m, n);
  out.diagnostics.regularized = fw.regularized;

  Eigen::VectorXd g(static_cast<Eigen::Index>(m * n));
  double scale = 0.0;
  for (std::size_t c = 0; c < m; ++c) {
    double mean = 0.0;
    double abs_mean = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      mean += g_in[c * n + k];
      abs_mean += std::abs(g_in[c * n + k]);
    }
    mean /= static_cast<double>(n);
    abs_mean /= static_cast<double>(n);
    scale = std::max(scale, abs_mean);
    const double margin = abs_mean > 0.0 ? std::abs(mean) / abs_mean : 0.0;
    out.diagnostics.mean_margin = std::max(out.diagnostics.mean_margin, margin);
    if (std::abs(mean) > options.mean_tolerance * abs_mean + options.mean_floor) {
      std::ostringstream msg;
      msg << "component " << c << " of the H^-1 data has nonzero mean " << mean << " (relative " << margin
          << "); the trajectory does not conserve mass";
      throw DomainError(msg.str());
    }
    // rounding-level mean removed so the pinned system is exactly consistent
    for (std::size_t k = 0; k < n; ++k) g(static_cast<Eigen::Index>(c * n + k)) = g_in[c * n + k] - mean;
  }
  if (scale == 0.0) return out;

  Eigen::VectorXd rhs = g;
  for (std::size_t c = 0; c < m; ++c) rhs(static_cast<Eigen::Index>(c * n)) = 0.0;
  const Eigen::SparseMatrix<double> mat = pinned_matrix(fw);
  Eigen::ConjugateGradient<Eigen::SparseMatrix<double>, Eigen::Lower | Eigen::Upper, Eigen::IncompleteCholesky<double>>
      cg;
  cg.setTolerance(options.tolerance);
  cg.setMaxIterations(static_cast<Eigen::Index>(20 * m * n));
  cg.compute(mat);
  if (cg.info() != Eigen::Success) throw DomainError("H^-1 preconditioner failed");
  Eigen::VectorXd phi = cg.solve(rhs);
  out.diagnostics.iterations = static_cast<std::size_t>(cg.iterations());

  Eigen::VectorXd lphi;
  auto finish = [&] {
    // gauge: zero mean per colour
    for (std::size_t c = 0; c < m; ++c) {
      const double mean = phi.segment(static_cast<Eigen::Index>(c * n), static_cast<Eigen::Index>(n)).mean();
      phi.segment(static_cast<Eigen::Index>(c * n), static_cast<Eigen::Index>(n)).array() -= mean;
    }
    apply_operator(fw, phi, lphi);
    out.diagnostics.relative_residual = (g - lphi).norm() / g.norm();
  };
  finish();
  // Floored weights leave CG with a condition number near 1/floor; a direct
  // factorization still resolves the (huge but finite) discrete norm.
  if (fw.regularized && !(out.diagnostics.relative_residual <= 1e3 * options.tolerance)) {
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(mat);
    if (ldlt.info() == Eigen::Success) {
      phi = ldlt.solve(rhs);
      finish();
    }
  }
  if (fw.regularized && !(out.diagnostics.relative_residual <= 1e3 * options.tolerance)) {
    // the data lives where the weights were floored: the norm is infinite
    out.value = std::numeric_limits<double>::infinity();
    out.diagnostics.degenerate = true;
    return out;
  }
  if (!(out.diagnostics.relative_residual <= 1e3 * options.tolerance)) {
    std::ostringstream msg;
    msg << "H^-1 solve did not converge: relative residual " << out.diagnostics.relative_residual;
    throw DomainError(msg.str());
  }
  // 2<phi,g> - <phi,L phi>: equals <phi,g> at the exact solution and is
  // second order in the solver error
  out.value = dx * (2.0 * phi.dot(g) - phi.dot(lphi));
  for (std::size_t q = 0; q < m * n; ++q) out.phi.raw()[q] = phi(static_cast<Eigen::Index>(q));
  return out;
}

double trapezoid(const std::vector<double>& t, const std::vector<double>& f) {
  double s = 0.0;
  for (std::size_t l = 1; l < t.size(); ++l) s += 0.5 * (t[l] - t[l - 1]) * (f[l] + f[l - 1]);
  return s;
}

// Derivative weights at frame l from up to three neighbouring frames.
void derivative_weights(const std::vector<double>& t, std::size_t l, std::size_t idx[3], double w[3]) {
  const std::size_t last = t.size() - 1;
  if (t.size() == 2) {
    idx[0] = 0;
    idx[1] = 1;
    idx[2] = 1;
    const double h = t[1] - t[0];
    w[0] = -1.0 / h;
    w[1] = 1.0 / h;
    w[2] = 0.0;
    return;
  }
  if (l == 0) {
    const double h1 = t[1] - t[0];
    const double h2 = t[2] - t[1];
    idx[0] = 0;
    idx[1] = 1;
    idx[2] = 2;
    w[0] = -(2.0 * h1 + h2) / (h1 * (h1 + h2));
    w[1] = (h1 + h2) / (h1 * h2);
    w[2] = -h1 / (h2 * (h1 + h2));
  } else if (l == last) {
    const double h1 = t[last] - t[last - 1];
    const double h2 = t[last - 1] - t[last - 2];
    idx[0] = last;
    idx[1] = last - 1;
    idx[2] = last - 2;
    w[0] = (2.0 * h1 + h2) / (h1 * (h1 + h2));
    w[1] = -(h1 + h2) / (h1 * h2);
    w[2] = h1 / (h2 * (h1 + h2));
  } else {
    const double h1 = t[l] - t[l - 1];
    const double h2 = t[l + 1] - t[l];
    idx[0] = l - 1;
    idx[1] = l;
    idx[2] = l + 1;
    w[0] = -h2 / (h1 * (h1 + h2));
    w[1] = (h2 - h1) / (h1 * h2);
    w[2] = h1 / (h2 * (h1 + h2));
  }
}

ColorField time_derivative(const FieldTrajectory& traj, std::size_t l) {
  std::size_t idx[3];
  double w[3];
  derivative_weights(traj.times, l, idx, w);
  ColorField out(traj.colors(), traj.cells());
  auto o = out.raw();
  for (int q = 0; q < 3; ++q) {
    if (w[q] == 0.0) continue;
    auto f = traj.frames[idx[q]].raw();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] += w[q] * f[i];
  }
  return out;
}

std::optional<std::pair<Infeasibility, std::string>> check_domain(const FieldTrajectory& traj,
                                                                  const ModelParams& params) {
  for (std::size_t l = 0; l < traj.size(); ++l) {
    const auto& f = traj.frames[l];
    for (std::size_t c = 0; c < f.colors(); ++c)
      for (std::size_t k = 0; k < f.cells(); ++k)
        if (f.at(c, k) < -1e-12) {
          std::ostringstream msg;
          msg << "density " << f.at(c, k) << " < 0 at frame " << l << ", colour " << c << ", cell " << k;
          return std::make_pair(Infeasibility::negativity, msg.str());
        }
  }
  for (std::size_t c = 0; c < traj.colors(); ++c) {
    const double m0 = traj.frames.front().mass(c);
    for (std::size_t l = 1; l < traj.size(); ++l) {
      const double ml = traj.frames[l].mass(c);
      if (std::abs(ml - m0) > 1e-9 * std::max(1.0, std::abs(m0))) {
        std::ostringstream msg;
        msg << "mass of colour " << c << " changes from " << m0 << " to " << ml << " at frame " << l;
        return std::make_pair(Infeasibility::mass, msg.str());
      }
    }
  }
  const EnergyReport e = energy_functional(traj, params);
  if (!std::isfinite(e.value) || e.value > 1e12) {
    std::ostringstream msg;
    msg << "energy " << e.value << " diverges (a colour vanishes where its gradient does not)";
    return std::make_pair(Infeasibility::energy, msg.str());
  }
  return std::nullopt;
}

using SliceFn = std::function<NormResult(std::size_t l, ColorField& residual)>;

void integrate(RateReport& report, const FieldTrajectory& traj, const RateOptions& options, const SliceFn& slice) {
  const std::size_t frames = traj.size();
  report.times = traj.times;
  report.slices.assign(frames, 0.0);
  report.diagnostics.assign(frames, {});
  report.residuals.assign(options.keep_residuals ? frames : 0, ColorField());
  parallel_for(frames, options.threads, [&](std::size_t l) {
    ColorField residual;
    NormResult r = slice(l, residual);
    report.slices[l] = 0.5 * r.value;
    report.diagnostics[l] = r.diagnostics;
    if (options.keep_residuals) report.residuals[l] = std::move(residual);
  });
  for (const auto& d : report.diagnostics) report.regularized = report.regularized || d.regularized;
  report.i_dyn = trapezoid(report.times, report.slices);
  for (std::size_t l = 0; l < frames; ++l)
    if (report.diagnostics[l].degenerate) {
      std::ostringstream msg;
      msg << "slice at t = " << report.times[l] << " is infinite: a colour vanishes where the residual does not";
      report.feasible = false;
      report.violation = Infeasibility::degenerate;
      report.detail = msg.str();
      break;
    }
}

FieldTrajectory every_other_frame(const FieldTrajectory& traj) {
  FieldTrajectory out;
  for (std::size_t l = 0; l < traj.size(); l += 2) {
    out.times.push_back(traj.times[l]);
    out.frames.push_back(traj.frames[l]);
  }
  return out;
}

bool richardson_possible(const FieldTrajectory& traj) {
  const std::size_t intervals = traj.size() - 1;
  return intervals >= 4 && intervals % 2 == 0;
}

void require_frames(const FieldTrajectory& traj) {
  traj.validate();
  if (traj.size() < 2) throw DomainError("the dynamic rate needs at least two frames");
}

// Rounding in finite differences of frames is about eps * max|rho| / dt.
RateOptions with_rounding_floor(const FieldTrajectory& traj, RateOptions options) {
  double peak = 0.0;
  for (const auto& f : traj.frames)
    for (double v : f.raw()) peak = std::max(peak, std::abs(v));
  double step = traj.times.back() - traj.times.front();
  for (std::size_t l = 1; l < traj.size(); ++l) step = std::min(step, traj.times[l] - traj.times[l - 1]);
  const double n = static_cast<double>(traj.cells());
  options.elliptic.mean_floor = std::max(options.elliptic.mean_floor, 1e-10 * peak * (1.0 / step + n * n));
  return options;
}

}  // namespace

NormResult h_minus1_a_norm(const ColorField& g, const ColorField& rho, const ModelParams& params,
                           const EllipticOptions& options) {
  if (g.colors() != rho.colors() || g.cells() != rho.cells()) throw DomainError("H^-1 data and density differ in shape");
  const FaceWeights fw = onsager_weights(rho, params);
  std::vector<double> data(g.raw().begin(), g.raw().end());
  return solve_norm(fw, data, options);
}

double h_minus1_a_norm_sq(const ColorField& g, const ColorField& rho, const ModelParams& params) {
  return h_minus1_a_norm(g, rho, params).value;
}

NormResult h_minus1_weighted_norm(const std::vector<double>& g, const std::vector<double>& weight,
                                  const EllipticOptions& options) {
  if (g.size() != weight.size()) throw DomainError("H^-1 data and weight differ in length");
  FaceWeights fw;
  fw.m = 1;
  fw.cells = g.size();
  fw.w.resize(fw.cells);
  for (std::size_t k = 0; k < fw.cells; ++k) {
    const std::size_t k1 = k + 1 == fw.cells ? 0 : k + 1;
    double face = 0.5 * (weight[k] + weight[k1]);
    if (face < kDensityFloor) {
      face = kDensityFloor;
      fw.regularized = true;
    }
    fw.w[k] = face;
  }
  return solve_norm(fw, g, options);
}

std::string infeasibility_name(Infeasibility v) {
  switch (v) {
    case Infeasibility::none: return "none";
    case Infeasibility::negativity: return "negativity";
    case Infeasibility::mass: return "mass";
    case Infeasibility::energy: return "energy";
    case Infeasibility::degenerate: return "degenerate";
  }
  return "unknown";
}

ColorField rate_residual(const FieldTrajectory& traj, std::size_t l, const ModelParams& params) {
  ColorField g = time_derivative(traj, l);
  const ColorField& rho = traj.frames[l];
  const std::size_t m = rho.colors();
  const std::size_t n = rho.cells();
  const double inv_dx = static_cast<double>(n);
  std::vector<double> face(m), grad(m), flux(m), prev(m);
  auto face_flux = [&](std::size_t k, std::vector<double>& out) {
    const std::size_t k1 = k + 1 == n ? 0 : k + 1;
    for (std::size_t c = 0; c < m; ++c) {
      face[c] = 0.5 * (rho.at(c, k) + rho.at(c, k1));
      grad[c] = (rho.at(c, k1) - rho.at(c, k)) * inv_dx;
    }
    apply_diffusion(face.data(), grad.data(), m, params.lambda, out.data());
    for (double& v : out) v *= 0.5;
  };
  face_flux(n - 1, prev);
  for (std::size_t k = 0; k < n; ++k) {
    face_flux(k, flux);
    for (std::size_t c = 0; c < m; ++c) g.at(c, k) -= (flux[c] - prev[c]) * inv_dx;
    std::swap(prev, flux);
  }
  return g;
}

RateReport dynamic_rate(const FieldTrajectory& traj, const ModelParams& params, const RateOptions& opts) {
  require_frames(traj);
  const RateOptions options = with_rounding_floor(traj, opts);
  if (traj.colors() != params.colors()) throw DomainError("trajectory colours do not match the model");
  RateReport report;
  if (auto bad = check_domain(traj, params)) {
    report.feasible = false;
    report.violation = bad->first;
    report.detail = bad->second;
    return report;
  }
  integrate(report, traj, options, [&](std::size_t l, ColorField& residual) {
    residual = rate_residual(traj, l, params);
    return h_minus1_a_norm(residual, traj.frames[l], params, options.elliptic);
  });
  if (report.feasible && richardson_possible(traj)) {
    RateOptions coarse = options;
    coarse.keep_residuals = false;
    const RateReport r2 = dynamic_rate(every_other_frame(traj), params, coarse);
    report.i_dyn_richardson = (4.0 * report.i_dyn - r2.i_dyn) / 3.0;
  }
  return report;
}

RateReport uncolored_rate(const FieldTrajectory& traj, const RateOptions& opts) {
  require_frames(traj);
  const RateOptions options = with_rounding_floor(traj, opts);
  if (traj.colors() != 1) throw DomainError("uncolored_rate expects a single density");
  RateReport report;
  const ModelParams unit = ModelParams::uniform(1.0, 1);
  if (auto bad = check_domain(traj, unit)) {
    report.feasible = false;
    report.violation = bad->first;
    report.detail = bad->second;
    return report;
  }
  const std::size_t n = traj.cells();
  const double inv_dx2 = static_cast<double>(n) * static_cast<double>(n);
  integrate(report, traj, options, [&](std::size_t l, ColorField& residual) {
    residual = time_derivative(traj, l);
    const auto rho = traj.frames[l].color(0);
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t kp = k + 1 == n ? 0 : k + 1;
      const std::size_t km = k == 0 ? n - 1 : k - 1;
      residual.at(0, k) -= 0.5 * (rho[kp] - 2.0 * rho[k] + rho[km]) * inv_dx2;
    }
    const auto g = residual.color(0);
    return h_minus1_weighted_norm(std::vector<double>(g.begin(), g.end()), std::vector<double>(rho.begin(), rho.end()),
                                  options.elliptic);
  });
  if (report.feasible && richardson_possible(traj)) {
    RateOptions coarse = options;
    coarse.keep_residuals = false;
    const RateReport r2 = uncolored_rate(every_other_frame(traj), coarse);
    report.i_dyn_richardson = (4.0 * report.i_dyn - r2.i_dyn) / 3.0;
  }
  return report;
}

SanovRate sanov_initial_rate(const std::vector<double>& q0, const std::vector<double>& rho0) {
  if (q0.size() != rho0.size() || q0.empty()) throw DomainError("Sanov rate needs two densities on one grid");
  const double dx = 1.0 / static_cast<double>(q0.size());
  double mq = 0.0;
  double mr = 0.0;
  for (std::size_t k = 0; k < q0.size(); ++k) {
    if (q0[k] < 0.0 || rho0[k] < 0.0) throw DomainError("Sanov rate needs non-negative densities");
    mq += q0[k] * dx;
    mr += rho0[k] * dx;
  }
  if (std::abs(mq - 1.0) > 1e-9 || std::abs(mr - 1.0) > 1e-9) throw DomainError("Sanov rate needs unit-mass densities");
  SanovRate out;
  for (std::size_t k = 0; k < q0.size(); ++k) {
    if (q0[k] == 0.0) continue;
    if (rho0[k] == 0.0) {
      out.infinite = true;
      out.value = 0.0;
      return out;
    }
    out.value += dx * q0[k] * std::log(q0[k] / rho0[k]);
  }
  out.value = std::max(out.value, 0.0);
  return out;
}

double perturbation_cost(const FieldTrajectory& traj, const Perturbation& pert, const ModelParams& params) {
  traj.validate();
  const std::size_t m = traj.colors();
  const std::size_t n = traj.cells();
  if (pert.has_drift() && pert.b.size() != m) throw DomainError("perturbation drift needs one function per colour");
  const Grid grid{n};
  const double dx = grid.dx();
  std::vector<double> density(traj.size(), 0.0);
  for (std::size_t l = 0; l < traj.size(); ++l) {
    const double t = traj.times[l];
    if (!pert.active(t)) continue;
    const auto& f = traj.frames[l];
    double s = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      const double x = grid.center(k);
      if (pert.has_drift())
        for (std::size_t c = 0; c < m; ++c) {
          const double b = pert.b[c](t, x);
          s += b * b * f.at(c, k);
        }
      if (pert.has_bias()) {
        const Matrix g = pert.gamma(t, x);
        for (std::size_t c1 = 0; c1 < m; ++c1)
          for (std::size_t c2 = c1 + 1; c2 < m; ++c2) {
            const double v = g(static_cast<Eigen::Index>(c1), static_cast<Eigen::Index>(c2));
            s += v * v * f.at(c1, k) * f.at(c2, k) / params.lambda;
          }
      }
    }
    density[l] = 0.5 * dx * s;
  }
  return trapezoid(traj.times, density);
}

GradientControl GradientControl::shared(Fn u, std::size_t colors, Fn grad) {
  GradientControl g;
  g.potential.assign(colors, u);
  if (grad) g.gradient.assign(colors, grad);
  return g;
}

double GradientControl::grad(std::size_t c, double t, double x) const {
  if (!gradient.empty() && gradient[c]) return gradient[c](t, x);
  constexpr double h = 1e-3;
  const auto& u = potential[c];
  return (8.0 * (u(t, x + h) - u(t, x - h)) - (u(t, x + 2 * h) - u(t, x - 2 * h))) / (12.0 * h);
}

void optimal_controls_at(const Vector& rho, const Vector& grad_u, double lambda, Vector& b, Matrix& gamma) {
  const Eigen::Index m = rho.size();
  const double denom = lambda + rho.sum();
  const double weighted = rho.dot(grad_u);
  b.resize(m);
  gamma.setZero(m, m);
  for (Eigen::Index c = 0; c < m; ++c) {
    b(c) = (lambda * grad_u(c) + weighted) / denom;
    for (Eigen::Index q = c + 1; q < m; ++q) {
      gamma(c, q) = lambda * (grad_u(c) - grad_u(q)) / denom;
      gamma(q, c) = -gamma(c, q);
    }
  }
}

namespace {

// Linear interpolation of a trajectory in t and, periodically, in x between
// cell centres.
Vector interpolate_point(const FieldTrajectory& traj, double t, double x) {
  const std::size_t n = traj.cells();
  double s = TorusPoint::wrap(x) * static_cast<double>(n) - 0.5;
  const double base = std::floor(s);
  const double w = s - base;
  const long nn = static_cast<long>(n);
  const auto k0 = static_cast<std::size_t>(((static_cast<long>(base) % nn) + nn) % nn);
  const std::size_t k1 = k0 + 1 == n ? 0 : k0 + 1;
  Vector out(static_cast<Eigen::Index>(traj.colors()));
  for (std::size_t c = 0; c < traj.colors(); ++c)
    out(static_cast<Eigen::Index>(c)) = (1.0 - w) * traj.interpolate(t, c, k0) + w * traj.interpolate(t, c, k1);
  return out;
}

Vector control_gradient(const GradientControl& u, double t, double x) {
  Vector g(static_cast<Eigen::Index>(u.colors()));
  for (std::size_t c = 0; c < u.colors(); ++c) g(static_cast<Eigen::Index>(c)) = u.grad(c, t, x);
  return g;
}

}  // namespace

Perturbation optimal_controls(const FieldTrajectory& traj, const GradientControl& u, const ModelParams& params) {
  traj.validate();
  if (u.colors() != traj.colors()) throw DomainError("one potential per colour is required");
  auto shared = std::make_shared<const FieldTrajectory>(traj);
  auto control = std::make_shared<const GradientControl>(u);
  const double lambda = params.lambda;
  Perturbation p;
  for (std::size_t c = 0; c < traj.colors(); ++c) {
    p.b.push_back([shared, control, lambda, c](double t, double x) {
      Vector b;
      Matrix g;
      optimal_controls_at(interpolate_point(*shared, t, x), control_gradient(*control, t, x), lambda, b, g);
      return b(static_cast<Eigen::Index>(c));
    });
  }
  p.gamma = [shared, control, lambda](double t, double x) {
    Vector b;
    Matrix g;
    optimal_controls_at(interpolate_point(*shared, t, x), control_gradient(*control, t, x), lambda, b, g);
    return g;
  };
  return p;
}

double control_cost(const FieldTrajectory& traj, const GradientControl& u, const ModelParams& params) {
  traj.validate();
  if (u.colors() != traj.colors()) throw DomainError("one potential per colour is required");
  const std::size_t n = traj.cells();
  const Grid grid{n};
  std::vector<double> density(traj.size());
  for (std::size_t l = 0; l < traj.size(); ++l) {
    const double t = traj.times[l];
    double s = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      const Vector g = control_gradient(u, t, grid.center(k));
      s += g.dot(onsager_matrix(traj.frames[l].at_cell(k), params) * g);
    }
    density[l] = 0.5 * grid.dx() * s;
  }
  return trapezoid(traj.times, density);
}

EnergyReport energy_functional(const FieldTrajectory& traj, const ModelParams& params) {
  traj.validate();
  const std::size_t m = traj.colors();
  const std::size_t n = traj.cells();
  const double dx = 1.0 / static_cast<double>(n);
  EnergyReport out;
  std::vector<double> mat(traj.size()), expl(traj.size());
  Vector face(static_cast<Eigen::Index>(m)), grad(static_cast<Eigen::Index>(m));
  for (std::size_t l = 0; l < traj.size(); ++l) {
    const auto& f = traj.frames[l];
    double sm = 0.0;
    double se = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t k1 = k + 1 == n ? 0 : k + 1;
      for (std::size_t c = 0; c < m; ++c) {
        face(static_cast<Eigen::Index>(c)) = std::max(0.0, 0.5 * (f.at(c, k) + f.at(c, k1)));
        grad(static_cast<Eigen::Index>(c)) = (f.at(c, k1) - f.at(c, k)) / dx;
      }
      bool reg = false;
      const Matrix chi = chi_matrix_regularized(face, &reg);
      out.regularized = out.regularized || reg;
      const Vector cg = chi * grad;
      sm += cg.dot(onsager_matrix(face, params) * cg);
      se += chi_a_chi_explicit(face, grad, params);
    }
    mat[l] = dx * sm;
    expl[l] = dx * se;
  }
  out.value = trapezoid(traj.times, mat);
  out.explicit_value = trapezoid(traj.times, expl);
  if (traj.size() == 1) {
    out.value = mat[0];
    out.explicit_value = expl[0];
  }
  return out;
}

double tagged_drift_cost(const FieldTrajectory& q, const std::function<double(double t, double x)>& b) {
  q.validate();
  if (q.colors() != 1) throw DomainError("tagged drift cost expects a single density");
  const Grid grid{q.cells()};
  std::vector<double> density(q.size());
  for (std::size_t l = 0; l < q.size(); ++l) {
    double s = 0.0;
    for (std::size_t k = 0; k < grid.cells; ++k) {
      const double v = b(q.times[l], grid.center(k));
      s += v * v * q.frames[l].at(0, k);
    }
    density[l] = 0.5 * grid.dx() * s;
  }
  return trapezoid(q.times, density);
}

}  // namespace swapcolor
