#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "pebssim/types.hpp"

namespace pebssim {

enum class Pattern { stride_sweep, hot_set, uniform_random, two_phase };

Pattern parse_pattern(const std::string& text);
std::string to_string(Pattern pattern);

/// Parameters for the synthetic generators. Not every field applies to every
/// pattern; see the generator docs.
struct WorkloadSpec {
  Pattern pattern = Pattern::stride_sweep;
  Address region_start = 0x7f0000000000;
  std::uint64_t region_len = 6 * (std::uint64_t{1} << 20);
  std::uint64_t stride_bytes = 64;
  std::uint64_t iterations = 1;
  /// Loads per logical time unit.
  double events_per_unit_time = 1.0;
  std::uint64_t seed = 1;
  std::uint64_t thread_count = 1;

  /// Loads per thread for hot_set and uniform_random.
  std::uint64_t load_count = 100'000;
  std::uint64_t hot_pages = 10;
  double hot_share = 0.9;

  /// two_phase: loads per phase, and how many times slower the second
  /// phase issues loads.
  std::uint64_t phase_loads = 50'000;
  double phase_slowdown = 2.0;

  void validate() const;
};

/// Generated stream plus the exact per-page load counts it contains.
struct Workload {
  std::vector<LoadEvent> loads;  // grouped by thread, time-ordered within a thread
  std::vector<MappingEvent> mappings;
  std::map<std::uint64_t, std::uint64_t> page_counts;  // page number -> loads
  std::vector<std::uint64_t> hot_set;                  // hot_set pattern only, page numbers
};

/// 64-bit Mersenne Twister (std::mt19937_64, whose output sequence is fixed by
/// the C++ standard) with portable conversions. std::uniform_*_distribution
/// are implementation-defined, so they are not used.
class PortableRng {
 public:
  explicit PortableRng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  /// Uniform in [0, bound) by rejection.
  std::uint64_t below(std::uint64_t bound);
  /// Uniform in [0, 1) with 53 bits of precision.
  double unit();

 private:
  std::mt19937_64 engine_;
};

/// One mmap of the region, `iterations` ascending sweeps at `stride_bytes`
/// per thread, one munmap after the last load. With several threads the
/// region is split into page-aligned slices, one per thread.
Workload gen_stride_sweep(const WorkloadSpec& spec);

/// A seeded set of `hot_pages` pages takes `hot_share` of the loads; the rest
/// fall uniformly over the region. The hot set is shared by all threads.
Workload gen_hot_set(const WorkloadSpec& spec);

/// Seeded uniform pages over the region.
Workload gen_uniform_random(const WorkloadSpec& spec);

/// Stride sweep whose load rate alternates every `phase_loads` loads between
/// `events_per_unit_time` and `events_per_unit_time / phase_slowdown`.
Workload gen_two_phase(const WorkloadSpec& spec);

Workload generate(const WorkloadSpec& spec);

class CsvError : public std::runtime_error {
 public:
  CsvError(const std::string& path, std::size_t line, const std::string& message);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Reads a load CSV (`thread_id,addr,time`) and an optional mapping CSV
/// (`kind,start,length,time`). Numbers accept decimal or 0x-prefixed hex.
Workload ingest_csv(const std::filesystem::path& loads_path,
                    const std::filesystem::path& mappings_path = {});

void write_loads_csv(const std::filesystem::path& path, std::span<const LoadEvent> loads);
void write_mappings_csv(const std::filesystem::path& path, std::span<const MappingEvent> mappings);

/// Per-page load counts of a stream.
std::map<std::uint64_t, std::uint64_t> count_pages(std::span<const LoadEvent> loads);

}  // namespace pebssim
