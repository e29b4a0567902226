#include "swapcolor/scenario.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

namespace swapcolor {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// ---------------------------------------------------------------- YAML reading

// Wraps a mapping node and rejects keys that were never asked for.
class Section {
 public:
  Section(const YAML::Node& node, std::string where) : node_(node), where_(std::move(where)) {
    if (node_ && !node_.IsNull() && !node_.IsMap()) throw ConfigError(where_ + " must be a mapping");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return node_ && node_.IsMap() && node_[key] && !node_[key].IsNull();
  }

  YAML::Node get(const std::string& key) {
    seen_.insert(key);
    if (!node_ || !node_.IsMap()) return YAML::Node();
    return node_[key];
  }

  template <typename T>
  T value(const std::string& key, T fallback) {
    if (!has(key)) return fallback;
    try {
      return node_[key].as<T>();
    } catch (const YAML::Exception&) {
      throw ConfigError(where_ + "." + key + " has the wrong type");
    }
  }

  std::vector<double> numbers(const std::string& key) {
    if (!has(key)) return {};
    return to_numbers(node_[key], where_ + "." + key);
  }

  static std::vector<double> to_numbers(const YAML::Node& n, const std::string& where) {
    try {
      if (n.IsSequence()) return n.as<std::vector<double>>();
      return {n.as<double>()};
    } catch (const YAML::Exception&) {
      throw ConfigError(where + " must be a number or a list of numbers");
    }
  }

  void finish() const {
    if (!node_ || !node_.IsMap()) return;
    for (const auto& kv : node_) {
      const auto key = kv.first.as<std::string>();
      if (!seen_.count(key)) throw ConfigError("unknown key '" + key + "' in " + where_);
    }
  }

 private:
  YAML::Node node_;
  std::string where_;
  std::set<std::string> seen_;
};

std::map<std::string, std::vector<double>> number_table(const YAML::Node& node, const std::string& where) {
  std::map<std::string, std::vector<double>> out;
  if (!node || node.IsNull()) return out;
  if (!node.IsMap()) throw ConfigError(where + " must be a mapping");
  for (const auto& kv : node) {
    const auto key = kv.first.as<std::string>();
    if (kv.second.IsScalar() && (kv.second.Scalar() == "true" || kv.second.Scalar() == "false")) {
      out[key] = {kv.second.Scalar() == "true" ? 1.0 : 0.0};
    } else {
      out[key] = Section::to_numbers(kv.second, where + "." + key);
    }
  }
  return out;
}

Json number_table_json(const std::map<std::string, std::vector<double>>& t) {
  Json j = Json::object();
  for (const auto& [k, v] : t) j[k] = v.size() == 1 ? Json(v.front()) : Json(v);
  return j;
}

InitialSpec::Coloring parse_coloring(const std::string& s) {
  if (s == "proportional") return InitialSpec::Coloring::proportional;
  if (s == "step") return InitialSpec::Coloring::step;
  if (s == "smooth") return InitialSpec::Coloring::smooth;
  throw ConfigError("unknown colouring '" + s + "' (expected proportional, step or smooth)");
}

std::string coloring_name(InitialSpec::Coloring c) {
  switch (c) {
    case InitialSpec::Coloring::step:
      return "step";
    case InitialSpec::Coloring::smooth:
      return "smooth";
    default:
      return "proportional";
  }
}

EstimatorKind parse_estimator(const std::string& s) {
  if (s == "bridge") return EstimatorKind::bridge;
  if (s == "band") return EstimatorKind::band;
  throw ConfigError("unknown estimator '" + s + "' (expected bridge or band)");
}

// Integral of 1 + a cos(2 pi m x) over [lo, hi].
double profile_integral(double a, int mode, double lo, double hi) {
  const double w = kTwoPi * mode;
  return (hi - lo) + a / w * (std::sin(w * hi) - std::sin(w * lo));
}

double elapsed(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string suffix_n(std::size_t n) { return "_N" + std::to_string(n); }

}  // namespace

// ---------------------------------------------------------------- specs

ColorField InitialSpec::build(std::size_t colors, std::size_t cells) const {
  ColorField f(colors, cells);
  const double dx = 1.0 / static_cast<double>(cells);
  const auto masses = color_masses(colors);
  for (std::size_t k = 0; k < cells; ++k) {
    const double lo = dx * static_cast<double>(k), hi = lo + dx;
    if (coloring == Coloring::proportional) {
      const double avg = profile_integral(amplitude, mode, lo, hi) / dx;
      for (std::size_t c = 0; c < colors; ++c) f.at(c, k) = masses[c] * avg;
    } else if (coloring == Coloring::smooth) {
      // 8-point Gauss-Legendre cell averages
      static constexpr double node[4] = {0.1834346424956498, 0.5255324099163290, 0.7966664774136267,
                                         0.9602898564975363};
      static constexpr double weight[4] = {0.3626837833783620, 0.3137066458778873, 0.2223810344533745,
                                           0.1012285362903763};
      for (std::size_t c = 0; c < colors; ++c) {
        const double phase = kTwoPi * static_cast<double>(c) / static_cast<double>(colors);
        double acc = 0.0;
        for (int q = 0; q < 8; ++q) {
          const double x = lo + 0.5 * dx * (1.0 + (q < 4 ? -node[q] : node[q - 4]));
          const double rho = 1.0 + amplitude * std::cos(kTwoPi * mode * x);
          acc += 0.5 * weight[q % 4] * rho * (1.0 + skew * std::sin(kTwoPi * x + phase));
        }
        f.at(c, k) = acc / static_cast<double>(colors);
      }
    } else {
      for (std::size_t c = 0; c < colors; ++c) {
        const double a = std::max(lo, static_cast<double>(c) / static_cast<double>(colors));
        const double b = std::min(hi, static_cast<double>(c + 1) / static_cast<double>(colors));
        f.at(c, k) = b > a ? profile_integral(amplitude, mode, a, b) / dx : 0.0;
      }
    }
  }
  return f;
}

std::vector<double> InitialSpec::color_masses(std::size_t colors) const {
  std::vector<double> m(colors, 1.0 / static_cast<double>(colors));
  if (coloring == Coloring::proportional) {
    if (!masses.empty()) m = masses;
  } else if (coloring == Coloring::smooth) {
    // the cross term integrates to (amplitude skew / 2) sin(phase) for mode 1
    for (std::size_t c = 0; c < colors; ++c) {
      const double phase = kTwoPi * static_cast<double>(c) / static_cast<double>(colors);
      const double cross = mode == 1 ? 0.5 * amplitude * skew * std::sin(phase) : 0.0;
      m[c] = (1.0 + cross) / static_cast<double>(colors);
    }
  } else {
    for (std::size_t c = 0; c < colors; ++c)
      m[c] = profile_integral(amplitude, mode, static_cast<double>(c) / static_cast<double>(colors),
                              static_cast<double>(c + 1) / static_cast<double>(colors));
  }
  return m;
}

GradientControl PerturbationSpec::control(std::size_t colors, double horizon) const {
  const double eta_ = eta, amp = amplitude, w = kTwoPi * mode;
  auto ramp = [eta_, horizon](double t) {
    if (t <= eta_) return 0.0;
    const double s = std::min(1.0, (t - eta_) / (horizon - eta_));
    return 0.5 * (1.0 - std::cos(std::numbers::pi * s));
  };
  GradientControl u;
  for (std::size_t c = 0; c < colors; ++c) {
    const double ph = phases.empty() ? 0.0 : phases[c];
    u.potential.push_back([=](double t, double x) { return amp * ramp(t) * std::sin(w * x + ph); });
    u.gradient.push_back([=](double t, double x) { return amp * ramp(t) * w * std::cos(w * x + ph); });
  }
  return u;
}

Perturbation PerturbationSpec::drift(std::size_t colors, double horizon) const {
  const GradientControl u = control(colors, horizon);
  Perturbation p;
  p.eta = eta;
  p.b = u.gradient;
  return p;
}

double ComparisonSpec::option(const std::string& key, double fallback) const {
  auto it = options.find(key);
  return it == options.end() || it->second.empty() ? fallback : it->second.front();
}

std::optional<double> ComparisonSpec::threshold(const std::string& key) const {
  auto it = thresholds.find(key);
  if (it == thresholds.end() || it->second.empty()) return std::nullopt;
  return it->second.front();
}

std::vector<double> ComparisonSpec::option_list(const std::string& key) const {
  auto it = options.find(key);
  return it == options.end() ? std::vector<double>{} : it->second;
}

const std::vector<std::string>& comparison_kinds() {
  static const std::vector<std::string> kinds{"sim_vs_pde",     "rate_zero",     "rate_cost_match",
                                              "tagged_variance", "replacement_residual", "tightness",
                                              "color_closure",  "swap_rate"};
  return kinds;
}

ModelParams Scenario::params() const { return ModelParams(lambda, initial.color_masses(colors)); }

SimConfig Scenario::sim_config(std::size_t n) const {
  SimConfig c = sim;
  c.params = params();
  c.particles = n;
  c.seed = seed;
  c.initial = InitialLaw{};
  c.initial.density = initial.build(colors, initial_cells);
  if (!fixed_dt) c.dt = dt_factor * c.dt_max();
  return c;
}

PdeConfig Scenario::pde_config() const {
  PdeConfig c = pde;
  c.params = params();
  return c;
}

ColorField Scenario::pde_initial(std::size_t cells) const { return initial.build(colors, cells); }

void Scenario::validate() const {
  if (schema_version != kScenarioSchemaVersion)
    throw ConfigError("unsupported schema_version " + std::to_string(schema_version));
  if (name.empty()) throw ConfigError("scenario name must not be empty");
  if (colors == 0) throw ConfigError("model.colors must be at least 1");
  if (!(lambda > 0.0)) throw ConfigError("model.lambda must be positive");
  if (initial.coloring == InitialSpec::Coloring::proportional && !initial.masses.empty() &&
      initial.masses.size() != colors)
    throw ConfigError("initial.masses must list one mass per colour");
  if (std::abs(initial.amplitude) >= 1.0) throw ConfigError("initial.amplitude must lie in (-1, 1)");
  if (initial.coloring == InitialSpec::Coloring::smooth && (colors < 2 || std::abs(initial.skew) >= 1.0))
    throw ConfigError("smooth colouring needs at least 2 colours and |skew| < 1");
  if (initial.mode < 1) throw ConfigError("initial.mode must be at least 1");
  if (threads == 0) throw ConfigError("threads must be at least 1");
  if (!(dt_factor > 0.0)) throw ConfigError("sim.dt_factor must be positive");
  if (initial_cells < 1) throw ConfigError("sim.initial_cells must be at least 1");
  for (std::size_t n : particles)
    if (n < 2) throw ConfigError("sim.particles entries must be at least 2");
  params().validate();
  pde_config().validate();
  if (perturbation) {
    if (!perturbation->phases.empty() && perturbation->phases.size() != colors)
      throw ConfigError("perturbation.phases must list one phase per colour");
    if (perturbation->eta < 0.0 || perturbation->eta >= pde.horizon)
      throw ConfigError("perturbation.eta must lie in [0, pde.horizon)");
  }

  std::set<std::string> needs;
  for (const auto& c : comparisons) {
    const auto& kinds = comparison_kinds();
    if (std::find(kinds.begin(), kinds.end(), c.kind) == kinds.end())
      throw ConfigError("unknown comparison '" + c.kind + "'");
    needs.insert(c.kind);
  }
  const bool uses_sim = needs.count("sim_vs_pde") || needs.count("tagged_variance") ||
                        needs.count("replacement_residual") || needs.count("tightness") || needs.count("swap_rate");
  if (uses_sim) {
    if (replicas == 0) throw ConfigError("simulator comparisons need replicas >= 1");
    if (particles.empty()) throw ConfigError("sim.particles must list at least one size");
    for (std::size_t n : particles) sim_config(n).validate();
  }
  if (needs.count("sim_vs_pde")) {
    if (pde.cells % sim.field_cells != 0)
      throw ConfigError("pde.cells must be a multiple of sim.field_cells");
    const double h = sim.bandwidth > 0.0 ? sim.bandwidth : 1.0 / static_cast<double>(sim.field_cells);
    if (h < pde.dx() * (1.0 - 1e-12)) throw ConfigError("simulator kernel bandwidth must be at least the PDE dx");
    if (std::abs(sim.horizon - pde.horizon) > 1e-12 || sim.snapshots != pde.frames)
      throw ConfigError("sim_vs_pde needs matching horizons and snapshot counts");
  }
  if (needs.count("replacement_residual") && !(sim.density_eps > 0.0))
    throw ConfigError("replacement_residual needs sim.density_eps > 0");
  if (needs.count("rate_cost_match") && !perturbation)
    throw ConfigError("rate_cost_match needs a perturbation section");
  if (needs.count("tagged_variance") && !initial.equilibrium())
    throw ConfigError("tagged_variance needs the uniform equilibrium start (initial.amplitude = 0)");
}

// ---------------------------------------------------------------- parse / emit

Scenario parse_scenario(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("scenario is not valid YAML: ") + e.what());
  }
  if (!root.IsMap()) throw ConfigError("scenario must be a mapping");
  if (root["scenario"] && root["scenario"].IsMap()) root = root["scenario"];

  Scenario s;
  Section top(root, "scenario");
  s.schema_version = top.value<int>("schema_version", kScenarioSchemaVersion);
  s.name = top.value<std::string>("name", s.name);
  s.description = top.value<std::string>("description", "");
  s.seed = top.value<std::uint64_t>("seed", s.seed);
  s.threads = top.value<std::size_t>("threads", s.threads);
  s.replicas = top.value<std::size_t>("replicas", 0);
  if (top.has("output_dir")) s.output_dir = top.value<std::string>("output_dir", "");

  Section model(top.get("model"), "model");
  s.lambda = model.value<double>("lambda", s.lambda);
  s.colors = model.value<std::size_t>("colors", s.colors);
  model.finish();

  Section init(top.get("initial"), "initial");
  s.initial.amplitude = init.value<double>("amplitude", 0.0);
  s.initial.mode = init.value<int>("mode", 1);
  s.initial.coloring = parse_coloring(init.value<std::string>("coloring", "proportional"));
  s.initial.masses = init.numbers("masses");
  s.initial.skew = init.value<double>("skew", 0.0);
  init.finish();

  Section sim(top.get("sim"), "sim");
  if (sim.has("particles")) {
    s.particles.clear();
    for (double v : sim.numbers("particles")) {
      if (v < 0 || v != std::floor(v)) throw ConfigError("sim.particles must be non-negative integers");
      s.particles.push_back(static_cast<std::size_t>(v));
    }
  }
  const double dt = sim.value<double>("dt", 0.0);
  if (dt < 0.0) throw ConfigError("sim.dt must be non-negative");
  s.fixed_dt = dt > 0.0;
  s.sim.dt = s.fixed_dt ? dt : 1e-5;
  s.dt_factor = sim.value<double>("dt_factor", 1.0);
  s.sim.horizon = sim.value<double>("horizon", 0.0);
  s.sim.snapshots = sim.value<std::size_t>("snapshots", 1);
  s.sim.field_cells = sim.value<std::size_t>("field_cells", 64);
  s.sim.bandwidth = sim.value<double>("bandwidth", 0.0);
  s.sim.estimator.kind = parse_estimator(sim.value<std::string>("estimator", "bridge"));
  s.sim.estimator.eps = sim.value<double>("estimator_eps", s.sim.estimator.eps);
  s.sim.density_eps = sim.value<double>("density_eps", 0.0);
  if (sim.has("tagged_index")) s.sim.tagged_index = sim.value<std::size_t>("tagged_index", 0);
  s.sim.record_swaps = sim.value<bool>("record_swaps", false);
  s.initial_cells = sim.value<std::size_t>("initial_cells", s.initial_cells);
  sim.finish();

  Section pde(top.get("pde"), "pde");
  s.pde.cells = pde.value<std::size_t>("cells", s.pde.cells);
  s.pde.dt = pde.value<double>("dt", 0.0);
  s.pde.horizon = pde.value<double>("horizon", s.sim.horizon);
  s.pde.scheme = parse_scheme(pde.value<std::string>("scheme", "explicit"));
  s.pde.frames = pde.value<std::size_t>("frames", 1);
  pde.finish();

  if (top.has("perturbation")) {
    Section pert(top.get("perturbation"), "perturbation");
    PerturbationSpec p;
    const auto kind = pert.value<std::string>("kind", "gradient_control");
    if (kind != "gradient_control") throw ConfigError("perturbation.kind must be gradient_control");
    p.amplitude = pert.value<double>("amplitude", p.amplitude);
    p.mode = pert.value<int>("mode", p.mode);
    p.phases = pert.numbers("phases");
    p.eta = pert.value<double>("eta", p.eta);
    pert.finish();
    s.perturbation = p;
  }

  const YAML::Node comps = top.get("comparisons");
  if (comps && !comps.IsNull()) {
    if (!comps.IsSequence()) throw ConfigError("comparisons must be a list");
    for (std::size_t i = 0; i < comps.size(); ++i) {
      const std::string where = "comparisons[" + std::to_string(i) + "]";
      ComparisonSpec c;
      if (comps[i].IsScalar()) {
        c.kind = comps[i].as<std::string>();
      } else {
        Section cs(comps[i], where);
        c.kind = cs.value<std::string>("kind", "");
        c.thresholds = number_table(cs.get("thresholds"), where + ".thresholds");
        c.options = number_table(cs.get("options"), where + ".options");
        cs.finish();
      }
      s.comparisons.push_back(std::move(c));
    }
  }
  top.finish();
  s.validate();
  return s;
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read scenario file " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_scenario(ss.str());
}

Json scenario_json(const Scenario& s) {
  Json j;
  j["schema_version"] = s.schema_version;
  j["name"] = s.name;
  j["description"] = s.description;
  j["seed"] = s.seed;
  j["threads"] = s.threads;
  j["model"] = {{"lambda", s.lambda}, {"colors", s.colors}};
  Json init{{"amplitude", s.initial.amplitude}, {"mode", s.initial.mode}, {"coloring", coloring_name(s.initial.coloring)}};
  if (!s.initial.masses.empty()) init["masses"] = s.initial.masses;
  if (s.initial.coloring == InitialSpec::Coloring::smooth) init["skew"] = s.initial.skew;
  j["initial"] = init;
  Json sim{{"particles", s.particles},
           {"dt", s.fixed_dt ? s.sim.dt : 0.0},
           {"dt_factor", s.dt_factor},
           {"horizon", s.sim.horizon},
           {"snapshots", s.sim.snapshots},
           {"field_cells", s.sim.field_cells},
           {"bandwidth", s.sim.bandwidth},
           {"estimator", s.sim.estimator.name()},
           {"estimator_eps", s.sim.estimator.eps},
           {"density_eps", s.sim.density_eps},
           {"record_swaps", s.sim.record_swaps},
           {"initial_cells", s.initial_cells}};
  if (s.sim.tagged_index) sim["tagged_index"] = *s.sim.tagged_index;
  j["sim"] = sim;
  j["pde"] = {{"cells", s.pde.cells},
              {"dt", s.pde.dt},
              {"horizon", s.pde.horizon},
              {"scheme", scheme_name(s.pde.scheme)},
              {"frames", s.pde.frames}};
  if (s.perturbation) {
    Json p{{"kind", "gradient_control"},
           {"amplitude", s.perturbation->amplitude},
           {"mode", s.perturbation->mode},
           {"eta", s.perturbation->eta}};
    if (!s.perturbation->phases.empty()) p["phases"] = s.perturbation->phases;
    j["perturbation"] = p;
  }
  j["replicas"] = s.replicas;
  Json comps = Json::array();
  for (const auto& c : s.comparisons)
    comps.push_back({{"kind", c.kind}, {"thresholds", number_table_json(c.thresholds)}, {"options", number_table_json(c.options)}});
  j["comparisons"] = comps;
  if (s.output_dir) j["output_dir"] = s.output_dir->string();
  return j;
}

std::string scenario_hash(const Scenario& s) {
  // threads and output_dir do not change any result
  Json j = scenario_json(s);
  j.erase("threads");
  j.erase("output_dir");
  return hex64(fnv1a(j.dump()));
}

// ---------------------------------------------------------------- analyses

double SimPdeDistance::max_l1(std::size_t c) const { return *std::max_element(l1[c].begin(), l1[c].end()); }

SimPdeDistance compare_sim_pde(const std::vector<RunRecord>& runs, const FieldTrajectory& pde) {
  const FieldTrajectory avg = replica_average(runs);
  pde.validate();
  if (avg.size() != pde.size()) throw DomainError("time grids mismatch: different number of frames");
  const double scale = std::max(1.0, std::abs(pde.times.back()));
  for (std::size_t l = 0; l < avg.size(); ++l)
    if (std::abs(avg.times[l] - pde.times[l]) > 1e-9 * scale) throw DomainError("time grids mismatch");
  if (avg.colors() != pde.colors()) throw DomainError("colour counts differ");
  const std::size_t cells = avg.cells();
  if (pde.cells() % cells != 0) throw DomainError("solver grid must refine the simulator grid");
  const std::size_t q = pde.cells() / cells;
  const double dx = 1.0 / static_cast<double>(cells);

  SimPdeDistance d;
  d.times = pde.times;
  d.l1.assign(avg.colors(), std::vector<double>(avg.size(), 0.0));
  d.linf = d.l1;
  for (std::size_t l = 0; l < avg.size(); ++l)
    for (std::size_t c = 0; c < avg.colors(); ++c)
      for (std::size_t k = 0; k < cells; ++k) {
        double ref = 0.0;
        for (std::size_t j = 0; j < q; ++j) ref += pde.frames[l].at(c, k * q + j);
        const double diff = std::abs(avg.frames[l].at(c, k) - ref / static_cast<double>(q));
        d.l1[c][l] += diff * dx;
        d.linf[c][l] = std::max(d.linf[c][l], diff);
      }
  return d;
}

namespace {

bool uniform_start(const SimConfig& cfg) {
  if (!cfg.initial.density) return false;
  const ColorField& d = *cfg.initial.density;
  for (std::size_t c = 0; c < d.colors(); ++c) {
    auto v = d.color(c);
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    if (*hi - *lo > 1e-12 * std::max(1.0, std::abs(*hi))) return false;
  }
  return true;
}

// Slope of y on t by least squares with intercept.
double ls_slope(const std::vector<double>& t, const std::vector<double>& y) {
  const double n = static_cast<double>(t.size());
  double st = 0, sy = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    st += t[i];
    sy += y[i];
  }
  const double mt = st / n, my = sy / n;
  double num = 0, den = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    num += (t[i] - mt) * (y[i] - my);
    den += (t[i] - mt) * (t[i] - mt);
  }
  return num / den;
}

}  // namespace

TaggedVariance tagged_variance_check(const std::vector<RunRecord>& runs, const ModelParams& params) {
  if (runs.empty()) throw DomainError("no replicas");
  for (const auto& r : runs)
    if (!uniform_start(r.config))
      throw ConfigError("tagged variance prediction holds only for the uniform equilibrium start");
  const RunRecord& first = runs.front();
  const double horizon = first.times.back();
  std::vector<std::size_t> window;
  for (std::size_t l = 0; l < first.times.size(); ++l)
    if (first.times[l] >= 0.5 * horizon - 1e-12 && first.times[l] > 0.0) window.push_back(l);
  if (window.size() < 2) throw DomainError("need at least two snapshots in [T/2, T] to fit a slope");

  TaggedVariance out;
  out.predicted = params.lambda / (params.lambda + 1.0);
  std::vector<double> wt;
  for (std::size_t l : window) wt.push_back(first.times[l]);

  auto variance = [](const RunRecord& r, std::size_t l, double& s1, double& s2, double& n) {
    for (std::size_t i = 0; i < r.particles(); ++i) {
      const double d = r.lifted[l][i] - r.lifted[0][i];
      s1 += d;
      s2 += d * d;
      n += 1.0;
    }
  };
  for (std::size_t l = 0; l < first.times.size(); ++l) {
    double s1 = 0, s2 = 0, n = 0;
    for (const auto& r : runs) variance(r, l, s1, s2, n);
    out.times.push_back(first.times[l]);
    out.variance.push_back(s2 / n - (s1 / n) * (s1 / n));
  }
  std::vector<double> wy;
  for (std::size_t l : window) wy.push_back(out.variance[l]);
  out.rate = ls_slope(wt, wy);

  if (runs.size() >= 2) {
    std::vector<double> slopes;
    for (const auto& r : runs) {
      std::vector<double> y;
      for (std::size_t l : window) {
        double s1 = 0, s2 = 0, n = 0;
        variance(r, l, s1, s2, n);
        y.push_back(s2 / n - (s1 / n) * (s1 / n));
      }
      slopes.push_back(ls_slope(wt, y));
    }
    double m = 0;
    for (double s : slopes) m += s;
    m /= static_cast<double>(slopes.size());
    double v = 0;
    for (double s : slopes) v += (s - m) * (s - m);
    v /= static_cast<double>(slopes.size() - 1);
    out.standard_error = std::sqrt(v / static_cast<double>(slopes.size()));
  }
  return out;
}

double ComparisonResult::metric(const std::string& name) const {
  for (const auto& [k, v] : metrics)
    if (k == name) return v;
  throw std::out_of_range("no metric " + name);
}

// ---------------------------------------------------------------- comparisons

namespace {

struct Context {
  const Scenario& s;
  std::size_t threads;
  std::size_t index;
  Json run_hashes = Json::array();
};

std::vector<RunRecord> run_replicas(Context& ctx, std::size_t n, ComparisonResult& res) {
  SimConfig cfg = ctx.s.sim_config(n);
  cfg.seed = replica_seed(ctx.s.seed + 7919 * ctx.index, n);
  auto runs = simulate_replicas(cfg, ctx.s.replicas, ctx.threads);
  if (!runs.empty() && !runs.front().dt_guard_ok)
    res.warnings.push_back("dt " + format_number(runs.front().dt_used) + " exceeds the guard 0.1/N^2 = " +
                           format_number(cfg.dt_max()) + " at N=" + std::to_string(n));
  std::uint64_t h = 1469598103934665603ull;
  for (const auto& r : runs) {
    h ^= r.hash();
    h *= 1099511628211ull;
  }
  ctx.run_hashes.push_back({{"comparison", ctx.index}, {"particles", n}, {"replicas", runs.size()}, {"hash", hex64(h)}});
  return runs;
}

bool strictly_decreasing(const std::vector<double>& v) {
  for (std::size_t i = 1; i < v.size(); ++i)
    if (!(v[i] < v[i - 1])) return false;
  return true;
}

void sim_vs_pde(Context& ctx, const ComparisonSpec& spec, ComparisonResult& res) {
  const Scenario& s = ctx.s;
  const PdeConfig pc = s.pde_config();
  const FieldTrajectory pde = solve_colored_system(s.pde_initial(pc.cells), pc).trajectory;
  res.units = "L1 and Linf distances of colour densities (mass per unit length)";
  CsvTable table({"particles", "time", "color", "l1", "linf"});
  std::vector<std::vector<double>> worst(s.colors);
  for (std::size_t n : s.particles) {
    const auto runs = run_replicas(ctx, n, res);
    const SimPdeDistance d = compare_sim_pde(runs, pde);
    for (std::size_t c = 0; c < s.colors; ++c) {
      for (std::size_t l = 0; l < d.times.size(); ++l) table.row().add(n).add(d.times[l]).add(c).add(d.l1[c][l]).add(d.linf[c][l]);
      worst[c].push_back(d.max_l1(c));
      res.metrics.emplace_back("l1_max_c" + std::to_string(c) + suffix_n(n), d.max_l1(c));
    }
  }
  if (auto cap = spec.threshold("l1_max")) {
    for (std::size_t c = 0; c < s.colors; ++c) res.passed = res.passed && worst[c].back() <= *cap;
  }
  if (spec.threshold("decreasing").value_or(0.0) > 0.5) {
    for (std::size_t c = 0; c < s.colors; ++c) res.passed = res.passed && strictly_decreasing(worst[c]);
  }
  res.tables.emplace_back("distances", std::move(table));
}

void tagged_variance(Context& ctx, const ComparisonSpec& spec, ComparisonResult& res) {
  const Scenario& s = ctx.s;
  res.units = "variance growth rate (length^2 per unit time)";
  CsvTable table({"particles", "time", "variance"});
  for (std::size_t n : s.particles) {
    const auto runs = run_replicas(ctx, n, res);
    const TaggedVariance tv = tagged_variance_check(runs, s.params());
    for (std::size_t l = 0; l < tv.times.size(); ++l) table.row().add(n).add(tv.times[l]).add(tv.variance[l]);
    const double rel = std::abs(tv.rate / tv.predicted - 1.0);
    res.metrics.emplace_back("variance_rate" + suffix_n(n), tv.rate);
    res.metrics.emplace_back("standard_error" + suffix_n(n), tv.standard_error);
    res.metrics.emplace_back("predicted" + suffix_n(n), tv.predicted);
    res.metrics.emplace_back("relative_error" + suffix_n(n), rel);
    if (auto tol = spec.threshold("rel_tol")) res.passed = res.passed && rel <= *tol;
  }
  res.tables.emplace_back("variance", std::move(table));
}

void replacement(Context& ctx, const ComparisonSpec& spec, ComparisonResult& res) {
  const Scenario& s = ctx.s;
  res.units = "mean absolute replacement residual (time)";
  const auto c1 = static_cast<std::size_t>(spec.option("c1", 0));
  const auto c2 = static_cast<std::size_t>(spec.option("c2", 0));
  const double t1 = spec.option("t1", 0.0), t2 = spec.option("t2", s.sim.horizon);
  CsvTable table({"particles", "replica", "residual"});
  std::vector<double> means;
  for (std::size_t n : s.particles) {
    const auto runs = run_replicas(ctx, n, res);
    double sum = 0.0;
    for (std::size_t r = 0; r < runs.size(); ++r) {
      const double v = replacement_residual(runs[r], c1, c2, s.sim.density_eps, t1, t2);
      table.row().add(n).add(r).add(v);
      sum += v;
    }
    means.push_back(sum / static_cast<double>(runs.size()));
    res.metrics.emplace_back("residual" + suffix_n(n), means.back());
  }
  if (spec.threshold("decreasing").value_or(0.0) > 0.5) res.passed = res.passed && strictly_decreasing(means);
  if (auto cap = spec.threshold("residual_max")) res.passed = res.passed && means.back() <= *cap;
  res.tables.emplace_back("residuals", std::move(table));
}

void tightness(Context& ctx, const ComparisonSpec& spec, ComparisonResult& res) {
  const Scenario& s = ctx.s;
  res.units = "fraction of labels";
  const double eps = spec.option("eps", 0.1), delta = spec.option("delta", 0.01);
  CsvTable table({"particles", "replica", "fraction"});
  for (std::size_t n : s.particles) {
    const auto runs = run_replicas(ctx, n, res);
    double sum = 0.0;
    for (std::size_t r = 0; r < runs.size(); ++r) {
      const double v = tightness_statistic(runs[r], eps, delta);
      table.row().add(n).add(r).add(v);
      sum += v;
    }
    const double mean = sum / static_cast<double>(runs.size());
    res.metrics.emplace_back("fraction" + suffix_n(n), mean);
    if (auto cap = spec.threshold("max_fraction")) res.passed = res.passed && mean <= *cap;
  }
  res.tables.emplace_back("tightness", std::move(table));
}

void swap_rate(Context& ctx, const ComparisonSpec& spec, ComparisonResult& res) {
  const Scenario& s = ctx.s;
  res.units = "swaps per unit pair local time";
  CsvTable table({"particles", "replica", "swaps", "pair_local_time", "ratio"});
  for (std::size_t n : s.particles) {
    const auto runs = run_replicas(ctx, n, res);
    double swaps = 0, local = 0;
    std::vector<double> ratios;
    for (std::size_t r = 0; r < runs.size(); ++r) {
      const double k = static_cast<double>(runs[r].swaps.total());
      const double l = runs[r].ledgers.back().pair_total;
      swaps += k;
      local += l;
      ratios.push_back(l > 0 ? k / l : 0.0);
      table.row().add(n).add(r).add(k).add(l).add(ratios.back());
    }
    const double observed = swaps / local;
    const double expected = s.lambda * static_cast<double>(n);
    double m = 0, v = 0;
    for (double x : ratios) m += x;
    m /= static_cast<double>(ratios.size());
    for (double x : ratios) v += (x - m) * (x - m);
    const double se = ratios.size() > 1 ? std::sqrt(v / static_cast<double>(ratios.size() - 1) / static_cast<double>(ratios.size()))
                                        : std::sqrt(swaps) / local;
    const double z = std::abs(observed - expected) / se;
    res.metrics.emplace_back("observed" + suffix_n(n), observed);
    res.metrics.emplace_back("expected" + suffix_n(n), expected);
    res.metrics.emplace_back("standard_error" + suffix_n(n), se);
    res.metrics.emplace_back("standard_errors_off" + suffix_n(n), z);
    if (auto cap = spec.threshold("max_standard_errors")) res.passed = res.passed && z <= *cap;
  }
  res.tables.emplace_back("swaps", std::move(table));
}

void color_closure(Context& ctx, const ComparisonSpec& spec, ComparisonResult& res) {
  const Scenario& s = ctx.s;
  res.units = "Linf distance of total densities";
  const PdeConfig pc = s.pde_config();
  const ColorField init = s.pde_initial(pc.cells);
  const auto colored = solve_colored_system(init, pc);
  const auto heat = solve_heat(ColorField::from_density(init.total()), pc);
  const FieldTrajectory total = total_density(colored.trajectory);
  CsvTable table({"time", "linf"});
  double worst = 0.0;
  for (std::size_t l = 0; l < total.size(); ++l) {
    double d = 0.0;
    for (std::size_t k = 0; k < total.cells(); ++k)
      d = std::max(d, std::abs(total.frames[l].at(0, k) - heat.trajectory.frames[l].at(0, k)));
    table.row().add(total.times[l]).add(d);
    worst = std::max(worst, d);
  }
  res.metrics.emplace_back("linf", worst);
  res.metrics.emplace_back("max_mass_drift", colored.audit.max_mass_drift);
  res.metrics.emplace_back("cfl", colored.audit.cfl);
  if (auto cap = spec.threshold("linf_max")) res.passed = res.passed && worst <= *cap;
  res.tables.emplace_back("closure", std::move(table));
}

void rate_zero(Context& ctx, const ComparisonSpec& spec, ComparisonResult& res) {
  const Scenario& s = ctx.s;
  res.units = "dynamic rate (dimensionless)";
  CsvTable table({"cells", "frames", "i_dyn", "i_dyn_richardson"});
  RateOptions ro;
  ro.threads = ctx.threads;
  ro.keep_residuals = false;
  std::vector<double> values;
  const auto factor = static_cast<std::size_t>(spec.option("refine", 2));
  for (std::size_t level = 0; level < 2; ++level) {
    PdeConfig pc = s.pde_config();
    const std::size_t f = level == 0 ? 1 : factor;
    pc.cells *= f;
    pc.frames *= f;
    if (pc.dt > 0) pc.dt /= static_cast<double>(f * f);
    const auto sol = solve_colored_system(s.pde_initial(pc.cells), pc);
    const RateReport rep = dynamic_rate(sol.trajectory, pc.params, ro);
    if (!rep.feasible) throw DomainError("reference trajectory reported infeasible: " + rep.detail);
    values.push_back(rep.i_dyn);
    table.row().add(pc.cells).add(pc.frames).add(rep.i_dyn).add(rep.i_dyn_richardson.value_or(std::nan("")));
    res.metrics.emplace_back("i_dyn_K" + std::to_string(pc.cells), rep.i_dyn);
  }
  if (auto cap = spec.threshold("rate_max")) res.passed = res.passed && values[0] <= *cap;
  if (spec.threshold("decreasing").value_or(0.0) > 0.5) res.passed = res.passed && values[1] < values[0];
  res.tables.emplace_back("rates", std::move(table));
}

void rate_cost(Context& ctx, const ComparisonSpec& spec, ComparisonResult& res) {
  const Scenario& s = ctx.s;
  res.units = "dynamic rate and control cost (dimensionless)";
  std::vector<double> levels = spec.option_list("cells");
  if (levels.empty()) levels.push_back(static_cast<double>(s.pde.cells));
  std::vector<double> tols;
  if (auto it = spec.thresholds.find("rel_tol"); it != spec.thresholds.end()) tols = it->second;
  RateOptions ro;
  ro.threads = ctx.threads;
  ro.keep_residuals = false;
  CsvTable table({"cells", "i_dyn", "i_dyn_richardson", "control_cost", "perturbation_cost", "relative_error"});
  for (std::size_t i = 0; i < levels.size(); ++i) {
    PdeConfig pc = s.pde_config();
    pc.cells = static_cast<std::size_t>(levels[i]);
    pc.dt = 0.0;
    const ColorField init = s.pde_initial(pc.cells);
    const GradientControl u = s.perturbation->control(s.colors, pc.horizon);
    const auto first = solve_perturbed_system(init, s.perturbation->drift(s.colors, pc.horizon), pc);
    Perturbation opt = optimal_controls(first.trajectory, u, pc.params);
    opt.eta = s.perturbation->eta;
    const auto driven = solve_perturbed_system(init, opt, pc);
    const RateReport rep = dynamic_rate(driven.trajectory, pc.params, ro);
    if (!rep.feasible) throw DomainError("driven trajectory reported infeasible: " + rep.detail);
    const double cost = control_cost(driven.trajectory, u, pc.params);
    const double pcost = perturbation_cost(driven.trajectory, opt, pc.params);
    const double rel = std::abs(rep.i_dyn / cost - 1.0);
    table.row().add(pc.cells).add(rep.i_dyn).add(rep.i_dyn_richardson.value_or(std::nan(""))).add(cost).add(pcost).add(rel);
    const std::string k = "_K" + std::to_string(pc.cells);
    res.metrics.emplace_back("i_dyn" + k, rep.i_dyn);
    res.metrics.emplace_back("control_cost" + k, cost);
    res.metrics.emplace_back("relative_error" + k, rel);
    if (!tols.empty()) res.passed = res.passed && rel <= tols[std::min(i, tols.size() - 1)];
  }
  res.tables.emplace_back("rate_cost", std::move(table));
}

ComparisonResult run_comparison(Context& ctx, const ComparisonSpec& spec) {
  ComparisonResult res;
  res.kind = spec.kind;
  res.thresholds = number_table_json(spec.thresholds);
  const auto t0 = std::chrono::steady_clock::now();
  if (spec.kind == "sim_vs_pde") sim_vs_pde(ctx, spec, res);
  else if (spec.kind == "tagged_variance") tagged_variance(ctx, spec, res);
  else if (spec.kind == "replacement_residual") replacement(ctx, spec, res);
  else if (spec.kind == "tightness") tightness(ctx, spec, res);
  else if (spec.kind == "swap_rate") swap_rate(ctx, spec, res);
  else if (spec.kind == "color_closure") color_closure(ctx, spec, res);
  else if (spec.kind == "rate_zero") rate_zero(ctx, spec, res);
  else if (spec.kind == "rate_cost_match") rate_cost(ctx, spec, res);
  else throw ConfigError("unknown comparison '" + spec.kind + "'");
  res.seconds = elapsed(t0);
  return res;
}

Json result_json(const ComparisonResult& r, const std::vector<std::string>& files) {
  Json metrics = Json::object();
  for (const auto& [k, v] : r.metrics) metrics[k] = v;
  return Json{{"kind", r.kind},     {"passed", r.passed},   {"units", r.units},     {"metrics", metrics},
              {"thresholds", r.thresholds}, {"warnings", r.warnings}, {"tables", files}, {"seconds", r.seconds}};
}

}  // namespace

ScenarioReport run_scenario(const Scenario& input, const RunOptions& options) {
  Scenario s = input;
  if (options.seed) s.seed = *options.seed;
  if (options.threads) s.threads = *options.threads;
  if (options.format != "csv" && options.format != "json") throw ConfigError("format must be csv or json");
  s.validate();

  ScenarioReport report;
  report.name = s.name;
  const std::filesystem::path base = options.output_dir ? *options.output_dir : s.output_dir ? *s.output_dir : default_output_dir();
  report.directory = base / s.name;

  Json outputs = Json::array();
  Json results = Json::array();
  Json run_hashes = Json::array();
  for (std::size_t i = 0; i < s.comparisons.size(); ++i) {
    Context ctx{s, s.threads, i};
    ComparisonResult res = run_comparison(ctx, s.comparisons[i]);
    for (auto& h : ctx.run_hashes) run_hashes.push_back(h);
    std::vector<std::string> files;
    for (const auto& [stem, table] : res.tables) {
      const std::string file = std::to_string(i) + "_" + res.kind + "_" + stem + "." + options.format;
      files.push_back(file);
      std::string text;
      if (options.format == "csv") {
        std::ostringstream os;
        table.write(os);
        text = os.str();
      } else {
        text = table.to_json().dump(1) + "\n";
      }
      if (options.write) write_text(report.directory / file, text);
      outputs.push_back({{"file", file}, {"fnv1a", hex64(fnv1a(text))}});
    }
    results.push_back(result_json(res, files));
    report.passed = report.passed && res.passed;
    report.results.push_back(std::move(res));
  }

  report.manifest = Json{{"schema_version", kScenarioSchemaVersion},
                         {"tool", "swapcolor"},
                         {"version", build_version()},
                         {"config_hash", scenario_hash(s)},
                         {"seed", s.seed},
                         {"threads", s.threads},
                         {"format", options.format},
                         {"scenario", scenario_json(s)},
                         {"run_hashes", run_hashes},
                         {"outputs", outputs}};
  if (options.write) {
    write_json(report.directory / "manifest.json", report.manifest);
    write_json(report.directory / "report.json",
               Json{{"scenario", s.name}, {"passed", report.passed}, {"comparisons", results}, {"manifest", report.manifest}});
  }
  return report;
}

int run_scenario_file(const std::string& source, const RunOptions& options, ScenarioReport* out) {
  const std::filesystem::path base = options.output_dir ? *options.output_dir : default_output_dir();
  auto fail = [&](int code, const std::string& type, const std::string& message) {
    if (options.write) {
      try {
        write_json(base / "error.json", Json{{"error", {{"type", type}, {"message", message}, {"source", source}, {"exit_code", code}}}});
      } catch (...) {
      }
    }
    return code;
  };
  try {
    const Scenario s = source.rfind("builtin:", 0) == 0 ? builtin_scenario(source.substr(8)) : load_scenario(source);
    ScenarioReport report = run_scenario(s, options);
    const int code = report.passed ? kExitPass : kExitFail;
    if (out) *out = std::move(report);
    return code;
  } catch (const ConfigError& e) {
    return fail(kExitConfig, "config", e.what());
  } catch (const DomainError& e) {
    return fail(kExitError, "domain", e.what());
  } catch (const std::exception& e) {
    return fail(kExitError, "runtime", e.what());
  }
}

}  // namespace swapcolor
