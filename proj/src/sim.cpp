#include "swapcolor/sim.hpp"
#include "swapcolor/parallel.hpp"

#include <boost/random/discrete_distribution.hpp>
#include <boost/random/exponential_distribution.hpp>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_01.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <deque>
#include <numeric>

namespace swapcolor {

namespace {

constexpr double kSqrtPi = 1.7724538509055160273;
constexpr double kSqrt2Pi = 2.5066282746310005024;

// exp(z^2) erfc(z) for z >= 0.
double erfcx(double z) {
  if (z < 10.0) return std::exp(z * z) * std::erfc(z);
  const double w = 1.0 / (z * z);
  return (1.0 - 0.5 * w * (1.0 - 1.5 * w * (1.0 - 2.5 * w * (1.0 - 3.5 * w)))) / (z * kSqrtPi);
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

struct Fnv1a {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 0x100000001b3ULL;
    }
  }
  template <class T>
  void span(std::span<const T> v) {
    bytes(v.data(), v.size() * sizeof(T));
  }
  void value(double v) { bytes(&v, sizeof v); }
};

}  // namespace

InitialLaw InitialLaw::uniform(std::size_t cells) {
  InitialLaw law;
  law.density = ColorField(1, cells, 1.0);
  return law;
}

InitialLaw InitialLaw::deterministic(std::vector<double> positions, std::vector<std::size_t> colors) {
  InitialLaw law;
  law.positions = std::move(positions);
  law.colors = std::move(colors);
  return law;
}

double SimConfig::dt_max() const {
  const double n = static_cast<double>(particles);
  return 0.1 / (n * n);
}

std::vector<std::size_t> SimConfig::partition() const {
  const std::size_t m = params.colors();
  if (!color_counts.empty()) return color_counts;
  std::vector<std::size_t> counts(m, 0);
  long long assigned = 0;
  for (std::size_t c = 0; c + 1 < m; ++c) {
    counts[c] = static_cast<std::size_t>(std::llround(static_cast<double>(particles) * params.color_masses[c]));
    assigned += static_cast<long long>(counts[c]);
  }
  const long long rest = static_cast<long long>(particles) - assigned;
  if (rest < 0) throw ConfigError("colour partition exceeds the particle count");
  counts[m - 1] = static_cast<std::size_t>(rest);
  return counts;
}

void SimConfig::validate() const {
  params.validate();
  if (particles < 2) throw ConfigError("at least two particles are required");
  if (!(dt > 0.0)) throw ConfigError("dt must be positive");
  if (!(horizon >= 0.0)) throw ConfigError("horizon must be non-negative");
  if (snapshots == 0) throw ConfigError("snapshots must be at least 1");
  if (field_cells == 0) throw ConfigError("field_cells must be positive");
  if (bandwidth < 0.0) throw ConfigError("bandwidth must be non-negative");
  if (density_eps < 0.0 || density_eps > 0.5) throw ConfigError("density_eps must lie in [0, 1/2]");
  if (estimator.kind == EstimatorKind::band && !(estimator.eps > 0.0 && estimator.eps < 0.5))
    throw ConfigError("band estimator needs 0 < eps < 1/2");
  const std::size_t m = params.colors();
  const auto counts = partition();
  if (counts.size() != m) throw ConfigError("colour partition must list one count per colour");
  if (std::accumulate(counts.begin(), counts.end(), std::size_t{0}) != particles)
    throw ConfigError("colour partition must sum to the particle count");
  if (tagged_index && *tagged_index >= particles) throw ConfigError("tagged index out of range");
  if (initial.density) {
    const ColorField& d = *initial.density;
    if (d.colors() != 1 && d.colors() != m) throw ConfigError("initial density must have 1 or m colours");
    for (double v : d.raw())
      if (!(v >= 0.0)) throw ConfigError("initial density must be non-negative");
    if (std::abs(d.total_mass() - 1.0) > 1e-9) throw ConfigError("initial density is not normalized");
    if (d.colors() == m && m > 1) {
      for (std::size_t c = 0; c < m; ++c) {
        if (std::abs(d.mass(c) - params.color_masses[c]) > 1e-6)
          throw ConfigError("initial colour " + std::to_string(c) + " mass differs from its average density");
      }
    }
  } else {
    if (initial.positions.size() != particles) throw ConfigError("deterministic law needs one position per particle");
    if (!initial.colors.empty()) {
      if (initial.colors.size() != particles) throw ConfigError("deterministic colours need one entry per particle");
      std::vector<std::size_t> seen(m, 0);
      for (std::size_t c : initial.colors) {
        if (c >= m) throw ConfigError("colour id out of range");
        ++seen[c];
      }
      if (!color_counts.empty() && seen != color_counts)
        throw ConfigError("explicit colours disagree with the colour partition");
    }
  }
}

double ParticleSystemState::gap(std::size_t k) const {
  const std::size_t n = size();
  return k + 1 == n ? slot_position[0] + 1.0 - slot_position[k] : slot_position[k + 1] - slot_position[k];
}

std::vector<std::size_t> ParticleSystemState::color_counts(std::size_t colors) const {
  std::vector<std::size_t> counts(colors, 0);
  for (std::size_t c : color) ++counts[c];
  return counts;
}

LocalTimeLedger::LocalTimeLedger(std::size_t n, std::size_t m)
    : particles(n), colors(m), pair_adjacent(n, 0.0), per_color(n * m, 0.0), signed_time(n, 0.0) {}

double LocalTimeLedger::per_particle(std::size_t i) const {
  double s = 0.0;
  for (std::size_t c = 0; c < colors; ++c) s += per_color[i * colors + c];
  return s;
}

double LocalTimeLedger::total() const {
  double s = 0.0;
  for (std::size_t i = 0; i < particles; ++i) s += per_particle(i);
  return s / static_cast<double>(particles);
}

double LocalTimeLedger::pair_total() const {
  return std::accumulate(pair_adjacent.begin(), pair_adjacent.end(), 0.0);
}

std::uint64_t SwapEventLog::total() const {
  return std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
}

double bridge_local_time(double gap_start, double gap_end, double dt) {
  const double product = gap_start * gap_end / dt;
  if (product > 40.0) return 0.0;
  const double z = (std::abs(gap_start) + std::abs(gap_end)) / (2.0 * std::sqrt(dt));
  return 0.5 * kSqrtPi * std::sqrt(dt) * erfcx(z) * std::exp(-std::max(product, 0.0));
}

namespace {

// Joint law of (W_t, L_t) for W of variance 2t started at gap_start:
// P(L > l | W_t = gap_end) = exp(-((|g0| + |g1| + l)^2 - (g1 - g0)^2) / (4 dt)).
// e is the Exp(1) variate -log u.
double bridge_local_time_from_exponential(double gap_start, double gap_end, double dt, double e) {
  const double span = std::abs(gap_start) + std::abs(gap_end);
  const double jump = gap_end - gap_start;
  const double reach = std::sqrt(jump * jump + 4.0 * dt * e);
  return reach > span ? 0.5 * (reach - span) : 0.0;
}

}  // namespace

double sample_bridge_local_time(double gap_start, double gap_end, double dt, double u) {
  return bridge_local_time_from_exponential(gap_start, gap_end, dt, -std::log(u));
}

double band_local_time(double gap_start, double dt, double eps) {
  return gap_start <= eps ? dt / (2.0 * eps) : 0.0;
}

double swap_probability(double lambda_n, double dl) { return -std::expm1(-lambda_n * dl); }

std::uint64_t replica_seed(std::uint64_t seed, std::uint64_t replica) {
  return splitmix64(seed ^ splitmix64(replica + 1));
}

ParticleSystemState init(const SimConfig& config, Rng& rng) {
  config.validate();
  const std::size_t n = config.particles;
  const std::size_t m = config.params.colors();
  const auto counts = config.partition();

  std::vector<double> pos(n);
  std::vector<std::size_t> col(n);
  if (config.initial.density) {
    const ColorField& d = *config.initial.density;
    boost::random::uniform_01<double> unit;
    std::size_t label = 0;
    for (std::size_t c = 0; c < m; ++c) {
      auto shape = d.color(d.colors() == 1 ? 0 : c);
      boost::random::discrete_distribution<std::size_t, double> pick(shape.begin(), shape.end());
      for (std::size_t r = 0; r < counts[c]; ++r, ++label) {
        const std::size_t cell = pick(rng);
        pos[label] = TorusPoint::wrap((static_cast<double>(cell) + unit(rng)) * d.dx());
        col[label] = c;
      }
    }
  } else {
    std::size_t label = 0;
    for (std::size_t c = 0; c < m; ++c)
      for (std::size_t r = 0; r < counts[c]; ++r) col[label++] = c;
    if (!config.initial.colors.empty()) col = config.initial.colors;
    for (std::size_t i = 0; i < n; ++i) pos[i] = TorusPoint::wrap(config.initial.positions[i]);
  }

  ParticleSystemState s;
  s.slot_label.resize(n);
  std::iota(s.slot_label.begin(), s.slot_label.end(), std::size_t{0});
  std::sort(s.slot_label.begin(), s.slot_label.end(), [&](std::size_t a, std::size_t b) {
    return pos[a] < pos[b] || (pos[a] == pos[b] && a < b);
  });
  s.slot_position.resize(n);
  s.label_slot.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    s.slot_position[k] = pos[s.slot_label[k]];
    s.label_slot[s.slot_label[k]] = k;
  }
  s.color = std::move(col);
  s.winding.assign(n, 0);
  s.time = 0.0;
  return s;
}

Simulator::Simulator(SimConfig config) : config_(std::move(config)), rng_(config_.seed), dt_(config_.dt) {
  state_ = init(config_, rng_);
  ledger_ = LocalTimeLedger(state_.size(), config_.params.colors());
  swaps_.colors = config_.params.colors();
  swaps_.counts.assign(swaps_.colors * swaps_.colors, 0);
  boost::random::exponential_distribution<double> expo(1.0);
  clocks_.resize(state_.size());
  for (double& c : clocks_) c = expo(rng_);
  if (config_.density_eps > 0.0) density_integrals_.assign(state_.size() * config_.params.colors(), 0.0);
}

Simulator::Simulator(SimConfig config, ParticleSystemState state)
    : config_(std::move(config)), rng_(config_.seed), state_(std::move(state)), dt_(config_.dt) {
  ledger_ = LocalTimeLedger(state_.size(), config_.params.colors());
  swaps_.colors = config_.params.colors();
  swaps_.counts.assign(swaps_.colors * swaps_.colors, 0);
  boost::random::exponential_distribution<double> expo(1.0);
  clocks_.resize(state_.size());
  for (double& c : clocks_) c = expo(rng_);
  if (config_.density_eps > 0.0) density_integrals_.assign(state_.size() * config_.params.colors(), 0.0);
}

void Simulator::accumulate_local_densities() {
  const auto rho = local_densities(state_, config_.params.colors(), config_.density_eps);
  for (std::size_t q = 0; q < rho.size(); ++q) density_integrals_[q] += dt_ * rho[q];
}

// Re-establishes cyclic order after independent moves. The new slot k takes
// the (k+s)-th point of the periodic sorted sequence, with s chosen so the
// sum of lifted positions is unchanged.
void Simulator::resort(std::span<const double> moved) {
  const std::size_t n = moved.size();
  long long shift = 0;
  frac_.resize(n);
  std::size_t start = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const double fl = std::floor(moved[k]);
    shift += static_cast<long long>(fl);
    frac_[k] = moved[k] - fl;
    if (frac_[k] >= 1.0) {  // rounding guard
      frac_[k] = 0.0;
      shift += 1;
    }
    if (frac_[k] < frac_[start]) start = k;
  }
  std::rotate(frac_.begin(), frac_.begin() + static_cast<std::ptrdiff_t>(start), frac_.end());
  // nearly sorted: insertion sort is linear in practice
  for (std::size_t a = 1; a < n; ++a) {
    const double v = frac_[a];
    std::size_t b = a;
    while (b > 0 && frac_[b - 1] > v) {
      frac_[b] = frac_[b - 1];
      --b;
    }
    frac_[b] = v;
  }
  const long long nn = static_cast<long long>(n);
  for (std::size_t k = 0; k < n; ++k) {
    const long long j = static_cast<long long>(k) + shift;
    long long q = j / nn;
    long long r = j % nn;
    if (r < 0) {
      r += nn;
      q -= 1;
    }
    state_.slot_position[k] = frac_[static_cast<std::size_t>(r)] + static_cast<double>(q);
  }
}

void Simulator::exchange(std::size_t k, double time) {
  const std::size_t n = state_.size();
  const std::size_t k2 = k + 1 == n ? 0 : k + 1;
  const std::size_t left = state_.slot_label[k];
  const std::size_t right = state_.slot_label[k2];
  if (k + 1 == n) {
    state_.winding[left] += 1;
    state_.winding[right] -= 1;
  }
  state_.slot_label[k] = right;
  state_.slot_label[k2] = left;
  state_.label_slot[right] = k;
  state_.label_slot[left] = k2;
  ++swaps_.counts[state_.color[left] * swaps_.colors + state_.color[right]];
  if (config_.record_swaps) swaps_.events.push_back({time, left, right});
}

// Local time accrued this step by the independent paths that started in
// slots k and k + r, attributed to the adjacent slot pair where they met.
void Simulator::accrue_bridge_local_times() {
  const std::size_t n = state_.size();
  const double reach = kBridgeReach * std::sqrt(dt_);
  boost::random::exponential_distribution<double> expo(1.0);
  contacts_.clear();
  for (std::size_t k = 0; k < n; ++k) {
    const double p0 = state_.slot_position[k];
    const double q0 = moved_[k];
    for (std::size_t r = 1; r < n; ++r) {
      const std::size_t b = k + r < n ? k + r : k + r - n;
      const double lift = k + r < n ? 0.0 : 1.0;
      const double start = state_.slot_position[b] + lift - p0;
      if (start > reach) break;
      const double end = moved_[b] + lift - q0;
      const double product = start * end;
      if (product > kContactCutoff * dt_) continue;
      // -log u of the conditional sampler; no contact unless it beats start*end/dt
      const double e = expo(rng_);
      if (product > e * dt_) continue;
      const double dl = bridge_local_time_from_exponential(start, end, dt_, e);
      std::size_t meet = k;
      if (r > 1) {
        // midpoint ordering: paths in between that ended left of the pair's
        // midpoint were overtaken from the left
        const double mid = 0.5 * (q0 + moved_[b] + lift);
        std::size_t left_of = 0;
        for (std::size_t q = 1; q < r; ++q) {
          const std::size_t c = k + q < n ? k + q : k + q - n;
          const double pos = moved_[c] + (k + q < n ? 0.0 : 1.0);
          if (pos < mid) ++left_of;
        }
        meet = k + std::min(left_of, r - 1);
        if (meet >= n) meet -= n;
      }
      contacts_.push_back({meet, dl});
    }
  }
}

std::size_t Simulator::step() {
  const std::size_t n = state_.size();
  const std::size_t m = config_.params.colors();
  if (config_.density_eps > 0.0) accumulate_local_densities();

  const bool bridge = config_.estimator.kind == EstimatorKind::bridge;
  if (!bridge) {
    contacts_.clear();
    for (std::size_t k = 0; k < n; ++k) {
      const double dl = band_local_time(state_.gap(k), dt_, config_.estimator.eps);
      if (dl > 0.0) contacts_.push_back({k, dl});
    }
  }

  boost::random::normal_distribution<double> normal(0.0, std::sqrt(dt_));
  moved_.resize(n);
  for (std::size_t k = 0; k < n; ++k) moved_[k] = state_.slot_position[k] + normal(rng_);
  if (bridge) accrue_bridge_local_times();
  resort(moved_);

  const double inv_n = 1.0 / static_cast<double>(n);
  const double rate = config_.params.lambda * static_cast<double>(n);
  boost::random::exponential_distribution<double> expo(1.0);
  boost::random::uniform_01<double> uniform;
  pending_.clear();
  for (const auto& [k, dl] : contacts_) {
    const std::size_t k2 = k + 1 == n ? 0 : k + 1;
    const std::size_t i = state_.slot_label[k];
    const std::size_t j = state_.slot_label[k2];
    ledger_.pair_adjacent[k] += dl;
    ledger_.per_color[i * m + state_.color[j]] += dl * inv_n;
    ledger_.per_color[j * m + state_.color[i]] += dl * inv_n;
    ledger_.signed_time[i] += dl;
    ledger_.signed_time[j] -= dl;
    clocks_[k] -= rate * dl;
    if (clocks_[k] > 0.0) continue;
    const double when = uniform(rng_);
    while (clocks_[k] <= 0.0) {
      pending_.emplace_back(when, k);
      clocks_[k] += expo(rng_);
    }
  }
  // Exchanges do not commute. Each contact is one burst at a uniform time
  // within the step; bursts are applied in time order so a label can hop
  // several slots.
  std::sort(pending_.begin(), pending_.end());
  for (const auto& [frac, k] : pending_) exchange(k, state_.time + frac * dt_);
  state_.time += dt_;
  return pending_.size();
}

double local_density(const ParticleSystemState& state, std::size_t i, std::size_t c, double eps) {
  const std::size_t n = state.size();
  const double xi = state.position(i);
  std::size_t count = 0;
  for (std::size_t j = 0; j < n; ++j) {
    if (j == i || state.color[j] != c) continue;
    if (TorusPoint::distance(xi, state.position(j)) <= eps) ++count;
  }
  return static_cast<double>(count) / (2.0 * static_cast<double>(n) * eps);
}

std::vector<double> local_densities(const ParticleSystemState& state, std::size_t colors, double eps) {
  const std::size_t n = state.size();
  const long long nn = static_cast<long long>(n);
  std::vector<double> out(n * colors, 0.0);
  const double scale = 1.0 / (2.0 * static_cast<double>(n) * eps);
  if (eps >= 0.5) {
    const auto totals = state.color_counts(colors);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < colors; ++c)
        out[i * colors + c] = static_cast<double>(totals[c] - (state.color[i] == c ? 1 : 0)) * scale;
    return out;
  }
  auto point = [&](long long j) {
    long long q = j / nn;
    long long r = j % nn;
    if (r < 0) {
      r += nn;
      q -= 1;
    }
    return state.slot_position[static_cast<std::size_t>(r)] + static_cast<double>(q);
  };
  auto color_of = [&](long long j) {
    long long r = ((j % nn) + nn) % nn;
    return state.color[state.slot_label[static_cast<std::size_t>(r)]];
  };
  std::vector<long long> counts(colors, 0);
  long long lo = -nn + 1;
  long long hi = lo - 1;
  for (long long k = 0; k < nn; ++k) {
    const double x = state.slot_position[static_cast<std::size_t>(k)];
    while (hi + 1 < k + nn && point(hi + 1) <= x + eps) {
      ++hi;
      ++counts[color_of(hi)];
    }
    while (lo <= hi && point(lo) < x - eps) {
      --counts[color_of(lo)];
      ++lo;
    }
    const std::size_t label = state.slot_label[static_cast<std::size_t>(k)];
    for (std::size_t c = 0; c < colors; ++c) {
      long long cnt = counts[c] - (state.color[label] == c ? 1 : 0);
      out[label * colors + c] = static_cast<double>(cnt) * scale;
    }
  }
  return out;
}

ColorField empirical_color_field(const ParticleSystemState& state, std::size_t colors, std::size_t cells,
                                 double bandwidth) {
  ColorField field(colors, cells);
  const double dx = field.dx();
  const double h = bandwidth > 0.0 ? bandwidth : dx;
  if (h < dx * (1.0 - 1e-12)) throw ConfigError("kernel bandwidth must be at least one grid cell");
  const std::size_t n = state.size();
  const double weight = 1.0 / (static_cast<double>(n) * h * dx);
  const long long kk = static_cast<long long>(cells);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = state.position(i);
    const double left = x - 0.5 * h;
    const double right = x + 0.5 * h;
    const auto first = static_cast<long long>(std::floor(left / dx));
    const auto last = static_cast<long long>(std::floor(right / dx));
    for (long long q = first; q <= last; ++q) {
      const double overlap = std::min(right, static_cast<double>(q + 1) * dx) - std::max(left, static_cast<double>(q) * dx);
      if (overlap <= 0.0) continue;
      const auto cell = static_cast<std::size_t>(((q % kk) + kk) % kk);
      field.at(state.color[i], cell) += weight * overlap;
    }
  }
  return field;
}

double adjusted_process(const ParticleSystemState& state, std::size_t i, const ModelParams& params) {
  const std::size_t n = state.size();
  const double xi = state.position(i);
  double s = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    if (j != i) s += TorusPoint::forward_distance(xi, state.position(j));
  }
  return state.lifted(i) + s / (static_cast<double>(n) * (params.lambda + 1.0));
}

std::size_t RunRecord::snapshot_index(double t) const {
  const double tol = 1e-9 * std::max(1.0, config.horizon);
  for (std::size_t l = 0; l < times.size(); ++l)
    if (std::abs(times[l] - t) <= tol) return l;
  throw DomainError("no snapshot recorded at t = " + std::to_string(t));
}

std::uint64_t RunRecord::hash() const {
  Fnv1a f;
  f.span<double>(times);
  for (const auto& fr : frames) f.span<double>(fr.raw());
  for (const auto& l : lifted) f.span<double>(l);
  for (const auto& s : ledgers) {
    f.value(s.time);
    f.span<double>(s.per_color);
    f.span<double>(s.signed_time);
    f.value(s.total);
    f.value(s.pair_total);
  }
  for (const auto& d : density_integrals) f.span<double>(d);
  f.span<std::uint64_t>(swaps.counts);
  for (const auto& e : swaps.events) {
    f.value(e.time);
    f.bytes(&e.left_label, sizeof e.left_label);
    f.bytes(&e.right_label, sizeof e.right_label);
  }
  return f.h;
}

namespace {

void record_snapshot(RunRecord& run, const Simulator& sim) {
  const SimConfig& cfg = sim.config();
  const ParticleSystemState& s = sim.state();
  const std::size_t m = cfg.params.colors();
  run.times.push_back(s.time);
  run.frames.push_back(empirical_color_field(s, m, cfg.field_cells, cfg.bandwidth));
  std::vector<double> lifted(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) lifted[i] = s.lifted(i);
  run.lifted.push_back(std::move(lifted));
  LedgerSnapshot snap;
  snap.time = s.time;
  snap.per_color = sim.ledger().per_color;
  snap.signed_time = sim.ledger().signed_time;
  snap.total = sim.ledger().total();
  snap.pair_total = sim.ledger().pair_total();
  run.ledgers.push_back(std::move(snap));
  if (cfg.density_eps > 0.0) run.density_integrals.push_back(sim.density_integrals());
}

}  // namespace

RunRecord simulate(const SimConfig& config) {
  config.validate();
  Simulator sim(config);
  RunRecord run;
  run.config = config;
  run.colors = sim.state().color;

  const double interval = config.horizon / static_cast<double>(config.snapshots);
  std::size_t steps_per_interval = 0;
  if (config.horizon > 0.0) {
    steps_per_interval = static_cast<std::size_t>(std::ceil(interval / config.dt - 1e-9));
    steps_per_interval = std::max<std::size_t>(steps_per_interval, 1);
    sim.set_dt(interval / static_cast<double>(steps_per_interval));
  }
  run.dt_used = config.horizon > 0.0 ? sim.dt() : config.dt;
  run.dt_guard_ok = run.dt_used <= config.dt_max() * (1.0 + 1e-12);

  record_snapshot(run, sim);
  if (config.horizon > 0.0) {
    for (std::size_t l = 1; l <= config.snapshots; ++l) {
      for (std::size_t s = 0; s < steps_per_interval; ++s) sim.step();
      record_snapshot(run, sim);
      run.times.back() = interval * static_cast<double>(l);
    }
  }
  run.swaps = sim.swaps();
  return run;
}

std::vector<RunRecord> simulate_replicas(const SimConfig& config, std::size_t replicas, std::size_t threads) {
  std::vector<RunRecord> out(replicas);
  parallel_for(replicas, threads, [&](std::size_t r) {
    SimConfig cfg = config;
    cfg.seed = replica_seed(config.seed, r);
    out[r] = simulate(cfg);
  });
  return out;
}

double replacement_residual(const RunRecord& run, std::size_t c1, std::size_t c2, double eps, double t1, double t2) {
  const double horizon = run.config.horizon;
  if (t1 < -1e-12 || t2 > horizon * (1.0 + 1e-12) + 1e-12 || t1 > t2)
    throw DomainError("residual window must satisfy 0 <= t1 <= t2 <= T");
  if (run.density_integrals.empty() || std::abs(run.config.density_eps - eps) > 1e-12 * eps)
    throw DomainError("run carries no local-density integrals for this eps");
  const std::size_t m = run.config.params.colors();
  if (c1 >= m || c2 >= m) throw DomainError("colour id out of range");
  const std::size_t l1 = run.snapshot_index(t1);
  const std::size_t l2 = run.snapshot_index(t2);
  const std::size_t n = run.particles();
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (run.colors[i] != c1) continue;
    const double integral = run.density_integrals[l2][i * m + c2] - run.density_integrals[l1][i * m + c2];
    const double local = run.ledgers[l2].per_color[i * m + c2] - run.ledgers[l1].per_color[i * m + c2];
    s += std::abs(integral - local);
  }
  return s / static_cast<double>(n);
}

double tightness_statistic(const RunRecord& run, double eps, double delta) {
  if (delta <= 0.0) return 0.0;
  const auto& t = run.times;
  for (std::size_t l = 1; l < t.size(); ++l) {
    if (t[l] - t[l - 1] > delta * (1.0 + 1e-12))
      throw DomainError("snapshot spacing is coarser than delta");
  }
  const std::size_t n = run.particles();
  std::size_t hits = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::deque<std::size_t> maxq;
    std::deque<std::size_t> minq;
    std::size_t head = 0;
    bool hit = false;
    for (std::size_t l = 0; l < t.size() && !hit; ++l) {
      const double x = run.lifted[l][i];
      while (!maxq.empty() && run.lifted[maxq.back()][i] <= x) maxq.pop_back();
      maxq.push_back(l);
      while (!minq.empty() && run.lifted[minq.back()][i] >= x) minq.pop_back();
      minq.push_back(l);
      while (t[l] - t[head] > delta * (1.0 + 1e-12)) ++head;
      while (maxq.front() < head) maxq.pop_front();
      while (minq.front() < head) minq.pop_front();
      if (run.lifted[maxq.front()][i] - run.lifted[minq.front()][i] >= eps) hit = true;
    }
    if (hit) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(n);
}

}  // namespace swapcolor
