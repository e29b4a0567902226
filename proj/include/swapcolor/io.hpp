#pragma once

// Plain-text outputs: CSV with 17 significant digits and JSON documents.

#include "swapcolor/model.hpp"
#include "swapcolor/pde.hpp"
#include "swapcolor/rate.hpp"
#include "swapcolor/sim.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace swapcolor {

using Json = nlohmann::ordered_json;

/// Round-trip decimal form of a double ("%.17g").
std::string format_number(double v);

/// Build version baked in at configure time.
std::string build_version();

/// Default output directory: $SWAPCOLOR_OUT_DIR, else "swapcolor-out".
std::filesystem::path default_output_dir();
inline constexpr const char* kOutputDirEnv = "SWAPCOLOR_OUT_DIR";

/// FNV-1a 64-bit over bytes, rendered as 16 hex digits.
std::uint64_t fnv1a(std::string_view bytes);
std::string hex64(std::uint64_t h);

/// Minimal CSV table; numbers are stored pre-formatted.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

  CsvTable& row() {
    rows_.emplace_back();
    return *this;
  }
  CsvTable& add(double v);
  CsvTable& add(std::size_t v);
  CsvTable& add(const std::string& v);

  const std::vector<std::string>& header() const { return header_; }
  std::size_t size() const { return rows_.size(); }

  void write(std::ostream& os) const;
  void save(const std::filesystem::path& path) const;
  /// Array of objects keyed by column; numeric cells become numbers.
  Json to_json() const;

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

/// Writes text and creates parent directories.
void write_text(const std::filesystem::path& path, const std::string& text);
void write_json(const std::filesystem::path& path, const Json& doc);

/// Long format: time, color, cell, x, density.
CsvTable trajectory_table(const FieldTrajectory& traj);
/// Reads the long format back; frames are ordered by time.
FieldTrajectory read_trajectory_csv(const std::filesystem::path& path);

Json audit_json(const PdeAudit& audit);
Json params_json(const ModelParams& params);
Json sim_config_json(const SimConfig& config);
Json pde_config_json(const PdeConfig& config);

/// Per-snapshot ledger summary of each replica: time, A^N, summed pair local time.
CsvTable run_summary_table(const std::vector<RunRecord>& runs);
/// Replica-averaged colour fields in the long trajectory format.
FieldTrajectory replica_average(const std::vector<RunRecord>& runs);

/// time, slice, iterations, relative_residual, mean_margin.
CsvTable rate_slices_table(const RateReport& report);
Json rate_report_json(const RateReport& report);

}  // namespace swapcolor
