#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pebssim/analyzer.hpp"
#include "pebssim/cache_model.hpp"
#include "pebssim/pebs_core.hpp"
#include "pebssim/trace_io.hpp"
#include "pebssim/workloads.hpp"

namespace pebssim {

inline constexpr const char* kToolVersion = "1.0.0";
/// Knights Landing 7250 base clock.
inline constexpr double kDefaultCpuHz = 1.4e9;

struct ReportSelection {
  bool heatmap = true;
  bool intervals = true;
  bool histogram = true;
  bool hot_pages = true;
  bool coverage = true;
};

struct AnalysisOptions {
  std::uint64_t map_threshold_bytes = kDefaultMapThresholdBytes;
  std::uint64_t hot_threshold = kDefaultHotThreshold;
  std::uint64_t block_pages = kDefaultBlockPages;
  double interval_bin_width = 0.0;
  ReportSelection reports;
};

struct RunConfig {
  WorkloadSpec workload;
  /// When set, loads (and optionally mappings) come from CSV instead of a generator.
  std::filesystem::path trace_csv;
  std::filesystem::path mappings_csv;
  CacheConfig cache;
  SamplerConfig sampler;
  AnalysisOptions analysis;
  std::filesystem::path out_dir = ".";
  /// Dump file stem; empty derives one from the pattern and sampler settings.
  std::string name;
  double cpu_hz = kDefaultCpuHz;
  bool parallel = true;

  /// Throws ConfigError on the first invalid field.
  void validate() const;
  std::string stem() const;
};

nlohmann::json to_json(const RunConfig& config);
/// Overlays the keys present in `j` onto `base`. Unknown keys are rejected.
RunConfig apply_json(const nlohmann::json& j, RunConfig base = {});

struct SimulationSummary {
  std::uint64_t threads = 0;
  std::uint64_t loads = 0;
  std::uint64_t hits = 0;
  std::uint64_t misses = 0;
  std::uint64_t records = 0;
  std::uint64_t batches = 0;
  std::uint64_t dropped = 0;
  std::uint64_t overflow_lost = 0;
  Timestamp duration = 0;  // logical cycles from first to last load, inclusive

  /// Misses per second per thread at `cpu_hz`, taking logical time as cycles.
  double miss_rate(double cpu_hz) const;
};

struct SimulationResult {
  TraceDump dump;
  SimulationSummary summary;
  Workload workload;
};

/// Workload -> cache -> per-thread samplers -> dump, all in memory.
SimulationResult simulate(const RunConfig& config);

/// Runs simulate() and writes `<stem>.pebs` plus `<stem>.manifest.json` into
/// the output directory. Returns the dump path.
std::filesystem::path cmd_simulate(const RunConfig& config, std::ostream& log);

struct MappingReport {
  std::size_t mapping_id = 0;
  LiveRange range;
  std::uint64_t samples = 0;
  std::uint64_t coverage = 0;
  std::vector<std::uint64_t> hot_pages;
  Heatmap heatmap;
  PageHistogram histogram;
};

struct AnalysisResult {
  MappingHistory history;
  Classification classification;
  IntervalStats intervals;
  std::vector<MappingReport> mappings;
  std::vector<std::filesystem::path> files;
};

/// Runs the full analysis over an in-memory dump without touching disk.
AnalysisResult analyze(const TraceDump& dump, const AnalysisOptions& options);

/// Reads a dump, writes the selected reports as
/// `<dump-stem>.<mapping_id>.<artifact>.{csv,svg}` plus a summary and a
/// manifest into `out_dir`.
AnalysisResult cmd_analyze(const std::filesystem::path& dump_path, const AnalysisOptions& options,
                           const std::filesystem::path& out_dir, std::ostream& log);

struct SweepRow {
  std::uint64_t reset = 0;
  std::uint64_t buffer_bytes = 0;
  std::uint64_t threshold_records = 0;
  std::uint64_t records = 0;
  std::uint64_t batches = 0;
  std::uint64_t coverage = 0;
  double overhead = 0.0;

  friend bool operator==(const SweepRow&, const SweepRow&) = default;
};

/// Cross product of resets x buffer sizes over one workload, in row-major
/// (reset outer) order. `threshold_records` in the base config is ignored so
/// each buffer size gets its full capacity.
std::vector<SweepRow> sweep(const RunConfig& config, const std::vector<std::uint64_t>& resets,
                            const std::vector<std::uint64_t>& buffers);

/// Writes `<stem>.sweep.csv` and a manifest; prints the table to `log`.
std::filesystem::path cmd_sweep(const RunConfig& config, const std::vector<std::uint64_t>& resets,
                                const std::vector<std::uint64_t>& buffers, std::ostream& log);

/// Hex SHA-256 of a file's contents.
std::string sha256_file(const std::filesystem::path& path);

void write_manifest(const std::filesystem::path& path, const std::string& command, const nlohmann::json& config,
                    const std::vector<std::filesystem::path>& outputs);

}  // namespace pebssim
