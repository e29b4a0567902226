#pragma once

// Monte-Carlo engine for N Brownian particles on the circle that reflect on
// contact and exchange labels at Poisson times along their pair local time.
//
// Unlabeled positions are N independent Brownian motions kept in cyclic
// sorted order ("slots"); labels ride on slots (reflection) and two adjacent
// labels exchange slots at the jumps of a Poisson clock run along the local
// time of that slot pair.

#include "swapcolor/model.hpp"

#include <cstdint>
#include <optional>
#include <boost/random/mersenne_twister.hpp>

#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace swapcolor {

enum class EstimatorKind { band, bridge };

struct LocalTimeEstimator {
  EstimatorKind kind = EstimatorKind::bridge;
  double eps = 0.01;  // band half-width; unused by the bridge estimator

  std::string name() const { return kind == EstimatorKind::band ? "band" : "bridge"; }
};

/// Initial law: i.i.d. positions from a (coloured) grid density, or explicit
/// per-label positions.
struct InitialLaw {
  std::optional<ColorField> density;
  std::vector<double> positions;  // by label, used when density is empty
  std::vector<std::size_t> colors;  // optional explicit colours by label

  static InitialLaw uniform(std::size_t cells = 1);
  static InitialLaw deterministic(std::vector<double> positions, std::vector<std::size_t> colors = {});
};

struct SimConfig {
  ModelParams params;
  std::size_t particles = 2;
  double dt = 1e-5;
  double horizon = 0.0;
  std::uint64_t seed = 0;
  InitialLaw initial = InitialLaw::uniform();
  std::vector<std::size_t> color_counts;  // |I_c|; empty means round(N * color_mass)
  LocalTimeEstimator estimator;
  std::optional<std::size_t> tagged_index;

  std::size_t snapshots = 1;     // number of equal intervals between recorded frames
  std::size_t field_cells = 64;  // grid for empirical colour fields
  double bandwidth = 0.0;        // box kernel width; 0 means one cell
  double density_eps = 0.0;      // > 0 accumulates time integrals of local densities
  bool record_swaps = false;

  /// Largest step resolving the typical gap 1/N: 0.1 / N^2.
  double dt_max() const;

  /// Partition sizes actually used (sums to N).
  std::vector<std::size_t> partition() const;

  void validate() const;
};

struct ParticleSystemState {
  // slot_position[k] is the lifted position of the k-th particle in cyclic
  // order: nondecreasing and slot_position[N-1] <= slot_position[0] + 1.
  std::vector<double> slot_position;
  std::vector<std::size_t> slot_label;
  std::vector<std::size_t> label_slot;
  std::vector<std::size_t> color;   // by label
  std::vector<long long> winding;   // lifted(label) = slot_position[slot] + winding
  double time = 0.0;

  std::size_t size() const { return slot_position.size(); }
  double position(std::size_t label) const { return TorusPoint::wrap(slot_position[label_slot[label]]); }
  double lifted(std::size_t label) const {
    return slot_position[label_slot[label]] + static_cast<double>(winding[label]);
  }
  /// Gap from slot k to its clockwise neighbour.
  double gap(std::size_t k) const;

  std::vector<std::size_t> color_counts(std::size_t colors) const;
};

/// Accumulated local times. Pair values use the half-mass delta convention;
/// per-particle values carry the 1/N average.
struct LocalTimeLedger {
  std::size_t particles = 0;
  std::size_t colors = 0;
  std::vector<double> pair_adjacent;  // by slot pair k = (k, k+1)
  std::vector<double> per_color;      // A_{i,c}, label-major N x m
  std::vector<double> signed_time;    // sum_j A_ij - A_ji, by label

  LocalTimeLedger() = default;
  LocalTimeLedger(std::size_t n, std::size_t m);

  double per_particle_color(std::size_t i, std::size_t c) const { return per_color[i * colors + c]; }
  /// A_i = sum_c A_{i,c}.
  double per_particle(std::size_t i) const;
  /// A^N = (1/N) sum_i A_i.
  double total() const;
  double pair_total() const;
};

struct SwapEvent {
  double time = 0.0;
  std::size_t left_label = 0;
  std::size_t right_label = 0;
};

struct SwapEventLog {
  std::vector<SwapEvent> events;     // only filled when recording is enabled
  std::vector<std::uint64_t> counts;  // m x m, (left colour, right colour)
  std::size_t colors = 0;

  std::uint64_t total() const;
};

/// Expected local time (half-mass convention) of a reflected pair gap over a
/// step of length dt, given the gap at both ends.
double bridge_local_time(double gap_start, double gap_end, double dt);

/// Draw of the same local time from its conditional law given both gaps;
/// u is uniform on (0, 1]. Its mean over u is bridge_local_time.
double sample_bridge_local_time(double gap_start, double gap_end, double dt, double u);

/// Band estimator: dt * 1[gap <= eps] / (2 eps).
double band_local_time(double gap_start, double dt, double eps);

/// Probability that a Poisson clock of rate lambda*N fires at least once
/// while the pair accrues local time dl.
double swap_probability(double lambda_n, double dl);

/// Derived seed for replica r; independent streams for distinct r.
std::uint64_t replica_seed(std::uint64_t seed, std::uint64_t replica);

using Rng = boost::random::mt19937_64;

/// Path pairs starting farther apart than this many sqrt(dt) are skipped.
inline constexpr double kBridgeReach = 7.0;
/// Pairs whose gaps keep one sign with gap_start * gap_end > kContactCutoff * dt
/// touch with probability below exp(-kContactCutoff) and are skipped.
inline constexpr double kContactCutoff = 40.0;

ParticleSystemState init(const SimConfig& config, Rng& rng);

/// Time-stepping engine for one replica.
class Simulator {
 public:
  explicit Simulator(SimConfig config);
  /// Starts from a prepared state instead of sampling the initial law.
  Simulator(SimConfig config, ParticleSystemState state);

  const SimConfig& config() const { return config_; }
  const ParticleSystemState& state() const { return state_; }
  const LocalTimeLedger& ledger() const { return ledger_; }
  const SwapEventLog& swaps() const { return swaps_; }
  const std::vector<double>& density_integrals() const { return density_integrals_; }
  double dt() const { return dt_; }
  bool dt_guard_ok() const { return dt_ <= config_.dt_max() * (1.0 + 1e-12); }

  /// Overrides the step length (e.g. to land exactly on snapshot times).
  void set_dt(double dt) { dt_ = dt; }

  /// Advances one step; returns the number of label exchanges it performed.
  std::size_t step();

 private:
  void accumulate_local_densities();
  void accrue_bridge_local_times();
  void resort(std::span<const double> moved);
  void exchange(std::size_t k, double time);

  SimConfig config_;
  Rng rng_;
  ParticleSystemState state_;
  LocalTimeLedger ledger_;
  SwapEventLog swaps_;
  std::vector<double> clocks_;  // remaining lambda*N*local time until next jump, by slot pair
  std::vector<double> density_integrals_;  // label-major N x m
  double dt_;

  // scratch
  std::vector<double> moved_;
  struct Contact {
    std::size_t slot;  // left slot of the pair that met
    double local_time;
  };
  std::vector<Contact> contacts_;  // this step, in generation order
  std::vector<double> frac_;
  std::vector<std::pair<double, std::size_t>> pending_;  // (fraction of step, slot pair)
};

/// Brute-force local density (1/2N eps) #{j != i of colour c within eps of x_i}.
double local_density(const ParticleSystemState& state, std::size_t i, std::size_t c, double eps);

/// Local densities of every label and colour at once (label-major N x m),
/// using a sliding window over the sorted slots.
std::vector<double> local_densities(const ParticleSystemState& state, std::size_t colors, double eps);

/// Box-kernel smoothed histogram per colour; colour c integrates to |I_c|/N.
ColorField empirical_color_field(const ParticleSystemState& state, std::size_t colors, std::size_t cells,
                                 double bandwidth);

/// z_i = x_i + (1/(N(lambda+1))) sum_{j != i} nu(x_j - x_i), with x_i lifted.
double adjusted_process(const ParticleSystemState& state, std::size_t i, const ModelParams& params);

struct LedgerSnapshot {
  double time = 0.0;
  std::vector<double> per_color;    // N x m
  std::vector<double> signed_time;  // N
  double total = 0.0;               // A^N
  double pair_total = 0.0;          // sum over slot pairs
};

/// Output of one simulated replica.
struct RunRecord {
  SimConfig config;
  double dt_used = 0.0;
  bool dt_guard_ok = true;
  std::vector<std::size_t> colors;  // by label
  std::vector<double> times;
  std::vector<ColorField> frames;
  std::vector<std::vector<double>> lifted;  // per snapshot, by label
  std::vector<LedgerSnapshot> ledgers;
  std::vector<std::vector<double>> density_integrals;  // per snapshot, N x m
  SwapEventLog swaps;

  std::size_t particles() const { return colors.size(); }
  /// Index of the snapshot at time t; throws DomainError if none matches.
  std::size_t snapshot_index(double t) const;
  /// FNV-1a over every recorded number.
  std::uint64_t hash() const;
};

RunRecord simulate(const SimConfig& config);

/// Independent replicas with derived seeds, fanned over a bounded worker
/// pool. Output order is the replica order regardless of scheduling.
std::vector<RunRecord> simulate_replicas(const SimConfig& config, std::size_t replicas, std::size_t threads = 1);

/// (1/N) sum_{i in I_c1} | int_t1^t2 rho_eps,i^(c2) dt - (A_{i,c2}(t2) - A_{i,c2}(t1)) |.
double replacement_residual(const RunRecord& run, std::size_t c1, std::size_t c2, double eps, double t1, double t2);

/// Fraction of labels whose lifted path moves at least eps within some
/// window of length delta.
double tightness_statistic(const RunRecord& run, double eps, double delta);

}  // namespace swapcolor
