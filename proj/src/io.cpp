#include "swapcolor/io.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#ifndef SWAPCOLOR_GIT_DESCRIBE
#define SWAPCOLOR_GIT_DESCRIBE "unknown"
#endif

namespace swapcolor {

std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string build_version() { return SWAPCOLOR_GIT_DESCRIBE; }

std::filesystem::path default_output_dir() {
  if (const char* env = std::getenv(kOutputDirEnv); env && *env) return env;
  return "swapcolor-out";
}

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string hex64(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

CsvTable& CsvTable::add(double v) {
  rows_.back().push_back(format_number(v));
  return *this;
}

CsvTable& CsvTable::add(std::size_t v) {
  rows_.back().push_back(std::to_string(v));
  return *this;
}

CsvTable& CsvTable::add(const std::string& v) {
  rows_.back().push_back(v);
  return *this;
}

void CsvTable::write(std::ostream& os) const {
  for (std::size_t i = 0; i < header_.size(); ++i) os << (i ? "," : "") << header_[i];
  os << '\n';
  for (const auto& r : rows_) {
    for (std::size_t i = 0; i < r.size(); ++i) os << (i ? "," : "") << r[i];
    os << '\n';
  }
}

void CsvTable::save(const std::filesystem::path& path) const {
  std::ostringstream os;
  write(os);
  write_text(path, os.str());
}

Json CsvTable::to_json() const {
  Json arr = Json::array();
  for (const auto& r : rows_) {
    Json obj = Json::object();
    for (std::size_t i = 0; i < r.size() && i < header_.size(); ++i) {
      char* end = nullptr;
      const double v = std::strtod(r[i].c_str(), &end);
      if (!r[i].empty() && end && *end == '\0')
        obj[header_[i]] = v;
      else
        obj[header_[i]] = r[i];
    }
    arr.push_back(std::move(obj));
  }
  return arr;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os << text;
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

void write_json(const std::filesystem::path& path, const Json& doc) { write_text(path, doc.dump(2) + "\n"); }

CsvTable trajectory_table(const FieldTrajectory& traj) {
  CsvTable t({"time", "color", "cell", "x", "density"});
  for (std::size_t l = 0; l < traj.size(); ++l) {
    const ColorField& f = traj.frames[l];
    const Grid g = f.grid();
    for (std::size_t c = 0; c < f.colors(); ++c)
      for (std::size_t k = 0; k < f.cells(); ++k) t.row().add(traj.times[l]).add(c).add(k).add(g.center(k)).add(f.at(c, k));
  }
  return t;
}

FieldTrajectory read_trajectory_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read trajectory file " + path.string());
  std::string line;
  if (!std::getline(is, line) || line.rfind("time,color,cell", 0) != 0)
    throw ConfigError("trajectory file must start with the header time,color,cell,x,density");
  struct Entry {
    std::size_t c, k;
    double v;
  };
  std::map<double, std::vector<Entry>> by_time;
  std::size_t colors = 0, cells = 0;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    double t, x, v;
    unsigned long long c, k;
    if (std::sscanf(line.c_str(), "%lf,%llu,%llu,%lf,%lf", &t, &c, &k, &x, &v) != 5)
      throw ConfigError("malformed trajectory row at line " + std::to_string(lineno));
    by_time[t].push_back({static_cast<std::size_t>(c), static_cast<std::size_t>(k), v});
    colors = std::max<std::size_t>(colors, c + 1);
    cells = std::max<std::size_t>(cells, k + 1);
  }
  if (by_time.empty()) throw ConfigError("trajectory file has no rows");
  FieldTrajectory traj;
  for (const auto& [t, entries] : by_time) {
    if (entries.size() != colors * cells) throw ConfigError("incomplete frame in trajectory file");
    ColorField f(colors, cells);
    for (const auto& e : entries) f.at(e.c, e.k) = e.v;
    traj.times.push_back(t);
    traj.frames.push_back(std::move(f));
  }
  traj.validate();
  return traj;
}

Json audit_json(const PdeAudit& a) {
  return Json{{"scheme", scheme_name(a.scheme)},
              {"dt", a.dt},
              {"steps", a.steps},
              {"cfl", a.cfl},
              {"max_mass_drift", a.max_mass_drift},
              {"clipped_mass", a.clipped_mass},
              {"min_value", a.min_value}};
}

Json params_json(const ModelParams& p) { return Json{{"lambda", p.lambda}, {"color_masses", p.color_masses}}; }

Json sim_config_json(const SimConfig& c) {
  Json j{{"params", params_json(c.params)},
         {"particles", c.particles},
         {"dt", c.dt},
         {"dt_max", c.dt_max()},
         {"horizon", c.horizon},
         {"seed", c.seed},
         {"partition", c.partition()},
         {"estimator", c.estimator.name()},
         {"estimator_eps", c.estimator.eps},
         {"snapshots", c.snapshots},
         {"field_cells", c.field_cells},
         {"bandwidth", c.bandwidth},
         {"density_eps", c.density_eps},
         {"record_swaps", c.record_swaps}};
  if (c.tagged_index) j["tagged_index"] = *c.tagged_index;
  return j;
}

Json pde_config_json(const PdeConfig& c) {
  return Json{{"params", params_json(c.params)}, {"cells", c.cells},   {"dx", c.dx()},
              {"dt", c.target_dt()},           {"horizon", c.horizon}, {"scheme", scheme_name(c.scheme)},
              {"frames", c.frames},            {"stability_limit", c.stability_limit()}};
}

CsvTable run_summary_table(const std::vector<RunRecord>& runs) {
  CsvTable t({"replica", "time", "local_time_total", "pair_local_time"});
  for (std::size_t r = 0; r < runs.size(); ++r)
    for (const auto& s : runs[r].ledgers) t.row().add(r).add(s.time).add(s.total).add(s.pair_total);
  return t;
}

FieldTrajectory replica_average(const std::vector<RunRecord>& runs) {
  if (runs.empty()) throw DomainError("no replicas to average");
  FieldTrajectory avg;
  avg.times = runs.front().times;
  avg.frames = runs.front().frames;
  for (std::size_t r = 1; r < runs.size(); ++r) {
    if (runs[r].times.size() != avg.times.size()) throw DomainError("replicas disagree on snapshot times");
    for (std::size_t l = 0; l < avg.size(); ++l) {
      auto dst = avg.frames[l].raw();
      auto src = runs[r].frames[l].raw();
      if (src.size() != dst.size()) throw DomainError("replicas disagree on field grids");
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    }
  }
  const double inv = 1.0 / static_cast<double>(runs.size());
  for (auto& f : avg.frames)
    for (double& v : f.raw()) v *= inv;
  return avg;
}

CsvTable rate_slices_table(const RateReport& report) {
  CsvTable t({"time", "slice", "iterations", "relative_residual", "mean_margin"});
  for (std::size_t l = 0; l < report.slices.size(); ++l) {
    t.row().add(report.times[l]).add(report.slices[l]);
    if (l < report.diagnostics.size()) {
      const auto& d = report.diagnostics[l];
      t.add(d.iterations).add(d.relative_residual).add(d.mean_margin);
    } else {
      t.add(std::string("")).add(std::string("")).add(std::string(""));
    }
  }
  return t;
}

Json rate_report_json(const RateReport& r) {
  Json j{{"feasible", r.feasible}, {"violation", infeasibility_name(r.violation)}};
  if (!r.detail.empty()) j["detail"] = r.detail;
  if (!r.feasible) return j;
  j["units"] = "dimensionless rate per unit N (speed N)";
  j["i_dyn"] = r.i_dyn;
  j["i_dyn_richardson"] = r.i_dyn_richardson ? Json(*r.i_dyn_richardson) : Json(nullptr);
  j["i_init"] = r.i_init ? Json(*r.i_init) : Json(nullptr);
  j["slices"] = r.slices.size();
  j["regularized"] = r.regularized;
  double worst_res = 0.0, worst_mean = 0.0;
  for (const auto& d : r.diagnostics) {
    worst_res = std::max(worst_res, d.relative_residual);
    worst_mean = std::max(worst_mean, d.mean_margin);
  }
  j["max_relative_residual"] = worst_res;
  j["max_mean_margin"] = worst_mean;
  return j;
}

}  // namespace swapcolor
