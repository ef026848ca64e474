#ifndef NVNM_TRACE_IO_HPP
#define NVNM_TRACE_IO_HPP

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "nvnm/diagnostics.hpp"
#include "nvnm/quantum_oracle.hpp"
#include "nvnm/samplers.hpp"

// Dataset ingestion and result serialization.
//
// Trace CSV schema: header `t_us,x,y` plus derived `r`, or magnitude-only
// `t_us,r`; metadata travels in `# key=value` comment lines (phi_rad, seed,
// norm_scale, norm_offset). Column names carry the unit (t_us is in
// microseconds; x, y, r are dimensionless coherence units). JSON mirrors the
// CoherenceTrace fields. All writes go through a temp file + rename.

namespace nvnm {

enum class FileFormat { Csv, Json };

FileFormat format_from_path(const std::filesystem::path& path);

CoherenceTrace load_trace(const std::filesystem::path& path, FileFormat format);
CoherenceTrace load_trace(const std::filesystem::path& path);  // by extension

void save_trace(const std::filesystem::path& path, const CoherenceTrace& trace,
                FileFormat format);

// (phi_rad, value) measure observations: CSV columns `phi_rad,nm_value`.
std::vector<std::pair<double, double>> load_nm_points(const std::filesystem::path& path);
void save_nm_points(const std::filesystem::path& path,
                    const std::vector<std::pair<double, double>>& points);

// Flat draws table: `chain,iteration,<param...>[,<derived...>]`, one row per
// retained draw.
void save_draws_csv(const std::filesystem::path& path, const PosteriorSamples& samples,
                    const std::vector<std::string>& derived_names = {},
                    const std::vector<Eigen::ArrayXd>& derived_draws = {});

struct LoadedDraws {
  std::vector<std::string> names;  // parameter columns only
  PosteriorSamples samples;
};
LoadedDraws load_draws_csv(const std::filesystem::path& path);

// Self-describing result record: input fingerprint, resolved config echo,
// summaries, reports and curves. Bit-identical on re-run except timestamps.
struct ResultsBundle {
  std::string kind;
  std::string fingerprint;
  std::uint64_t seed = 0;
  nlohmann::json config;
  nlohmann::json payload;
  std::string started;
  std::string finished;

  nlohmann::json to_json() const;
  static ResultsBundle from_json(const nlohmann::json& j);
};

void save_results(const std::filesystem::path& path, const ResultsBundle& bundle);
ResultsBundle load_results(const std::filesystem::path& path);

nlohmann::json summaries_to_json(const std::vector<ParamSummary>& rows);

// FNV-1a 64-bit over the raw bytes of the named files, in order.
std::string fingerprint_files(const std::vector<std::filesystem::path>& paths);

// Write-temp-then-rename.
void atomic_write(const std::filesystem::path& path, const std::string& contents);

std::string format_double(double value);  // shortest round-trip decimal

}  // namespace nvnm

#endif  // NVNM_TRACE_IO_HPP
