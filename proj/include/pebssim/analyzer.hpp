#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pebssim/pebs_core.hpp"
#include "pebssim/trace_io.hpp"
#include "pebssim/types.hpp"

namespace pebssim {

inline constexpr std::uint64_t kDefaultMapThresholdBytes = 4 * (std::uint64_t{1} << 20);
inline constexpr std::uint64_t kDefaultBlockPages = 4;
inline constexpr std::uint64_t kDefaultHotThreshold = 50;
inline constexpr std::size_t kDefaultIntervalBins = 50;

/// A tracked address range and the logical time span during which it was mapped.
struct LiveRange {
  std::size_t id = 0;
  Address start = 0;
  std::uint64_t length = 0;
  Timestamp t_begin = 0;
  std::optional<Timestamp> t_end;  // nullopt: never unmapped

  Address end() const { return start + length; }
  bool contains(Address addr) const { return addr >= start && addr - start < length; }
  bool live_at(Timestamp t) const { return t >= t_begin && (!t_end || t < *t_end); }

  friend bool operator==(const LiveRange&, const LiveRange&) = default;
};

struct MappingHistory {
  std::vector<LiveRange> ranges;  // indexed by id
  std::vector<std::string> warnings;
  std::uint64_t threshold_bytes = kDefaultMapThresholdBytes;
};

/// Replays mmap/munmap events. Only mmaps strictly larger than
/// `threshold_bytes` are tracked; every munmap is applied and closes the
/// ranges it touches, reopening the uncovered remainders (of any size) from
/// the munmap time. An mmap overlapping a live range is reported and unmaps
/// the overlap first. Events must be time ordered (throws std::invalid_argument).
MappingHistory reconstruct(std::span<const MappingEvent> events,
                           std::uint64_t threshold_bytes = kDefaultMapThresholdBytes);

struct Sample {
  ThreadId thread_id = 0;
  std::uint64_t batch_seq = 0;
  Timestamp timestamp = 0;
  Address addr = 0;

  friend bool operator==(const Sample&, const Sample&) = default;
};

struct Classification {
  std::vector<std::vector<Sample>> per_mapping;  // indexed by LiveRange::id
  std::uint64_t assigned = 0;
  std::uint64_t discarded = 0;
};

/// Assigns each sample to the range containing its address at its batch
/// timestamp, or discards it.
Classification classify(const TraceDump& dump, const MappingHistory& history);

/// Sample counts binned by (batch_seq, block of `block_pages` pages from the
/// range start). Sparse.
struct Heatmap {
  std::size_t mapping_id = 0;
  std::uint64_t block_pages = kDefaultBlockPages;
  std::uint64_t block_count = 0;  // rows spanned by the range
  std::uint64_t batch_count = 0;  // max batch_seq + 1
  std::map<std::pair<std::uint64_t, std::uint64_t>, std::uint64_t> cells;

  std::uint64_t total() const;
  std::uint64_t at(std::uint64_t batch_seq, std::uint64_t block) const;
  /// Distinct nonzero block indices of each batch that has samples.
  std::map<std::uint64_t, std::vector<std::uint64_t>> blocks_by_batch() const;
};

Heatmap heatmap(std::span<const Sample> samples, const LiveRange& range,
                std::uint64_t block_pages = kDefaultBlockPages);

/// Whether each batch's nonzero blocks form one contiguous run whose start
/// never moves backwards from batch to batch.
bool is_diagonal_band(const Heatmap& map);

struct PageHistogram {
  std::map<std::uint64_t, std::uint64_t> page_counts;  // page number -> samples
  std::map<std::uint64_t, std::uint64_t> histogram;    // samples -> pages with that count

  std::uint64_t total() const;
};

PageHistogram page_histogram(std::span<const Sample> samples);

/// Pages with more than `threshold` samples, by descending count (page number
/// breaks ties).
std::vector<std::uint64_t> hot_pages(const PageHistogram& hist,
                                     std::uint64_t threshold = kDefaultHotThreshold);

/// The k most sampled pages, same ordering as hot_pages.
std::vector<std::uint64_t> top_pages(const PageHistogram& hist, std::size_t k);

/// Distinct pages with at least one sample.
std::uint64_t coverage(std::span<const Sample> samples);

struct IntervalOptions {
  /// 0 selects max delta / bins.
  double bin_width = 0.0;
  std::size_t bins = kDefaultIntervalBins;
  /// Skip batches holding fewer than threshold_records addresses (exit
  /// flushes, polling drains).
  bool full_batches_only = true;
};

struct IntervalStats {
  std::map<ThreadId, std::vector<std::uint64_t>> deltas;
  double mean = 0.0;
  double median = 0.0;
  double bin_width = 0.0;
  std::vector<std::uint64_t> histogram;

  std::size_t count() const;
};

/// Timestamp deltas between consecutive interrupts of each thread. Only pairs
/// with adjacent batch_seq contribute, so batches lost to ring overwrites do
/// not stretch an interval.
IntervalStats interrupt_intervals(const TraceDump& dump, const IntervalOptions& options = {});

/// Local maxima of a histogram, largest first (lower bin wins ties). A
/// plateau counts once, at its first bin.
std::vector<std::size_t> histogram_modes(std::span<const std::uint64_t> histogram);

/// Fraction of CPU time spent in the PEBS interrupt handler:
/// miss_rate / (reset * threshold) interrupts per second, each costing
/// handler_cycles.
double overhead_estimate(const SamplerConfig& config, double miss_rate, double cpu_hz);

}  // namespace pebssim
