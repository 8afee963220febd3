#include "pebssim/analyzer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>
#include <stdexcept>

namespace pebssim {

namespace {

std::string hex(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "0x%llx", static_cast<unsigned long long>(v));
  return buf;
}

class HistoryBuilder {
 public:
  explicit HistoryBuilder(std::uint64_t threshold) { history_.threshold_bytes = threshold; }

  // Closes every live range overlapping [start, start+length) at `t` and
  // reopens the parts outside it. Returns whether anything overlapped.
  bool unmap(Address start, std::uint64_t length, Timestamp t) {
    const Address end = start + length;
    bool touched = false;
    std::vector<std::size_t> still_live;
    std::vector<LiveRange> reopened;
    for (auto id : live_) {
      auto& r = history_.ranges[id];
      if (r.end() <= start || r.start >= end) {
        still_live.push_back(id);
        continue;
      }
      touched = true;
      r.t_end = t;
      if (r.start < start) {
        reopened.push_back({0, r.start, start - r.start, t, std::nullopt});
      }
      if (end < r.end()) {
        reopened.push_back({0, end, r.end() - end, t, std::nullopt});
      }
    }
    live_ = std::move(still_live);
    for (auto& r : reopened) {
      add(r);
    }
    return touched;
  }

  void add(LiveRange r) {
    r.id = history_.ranges.size();
    live_.push_back(r.id);
    history_.ranges.push_back(r);
  }

  void warn(std::string message) { history_.warnings.push_back(std::move(message)); }

  MappingHistory take() { return std::move(history_); }

 private:
  MappingHistory history_;
  std::vector<std::size_t> live_;
};

}  // namespace

MappingHistory reconstruct(std::span<const MappingEvent> events, std::uint64_t threshold_bytes) {
  HistoryBuilder builder(threshold_bytes);
  for (std::size_t i = 0; i < events.size(); ++i) {
    const auto& e = events[i];
    if (i > 0 && e.time < events[i - 1].time) {
      throw std::invalid_argument("mapping events are not time ordered at index " + std::to_string(i));
    }
    if (e.kind == MappingKind::munmap) {
      if (!builder.unmap(e.start, e.length, e.time)) {
        builder.warn("munmap of [" + hex(e.start) + ", +" + std::to_string(e.length) + ") at t=" +
                     std::to_string(e.time) + " matches no tracked range");
      }
      continue;
    }
    if (e.length <= threshold_bytes) {
      continue;
    }
    if (builder.unmap(e.start, e.length, e.time)) {
      builder.warn("mmap of [" + hex(e.start) + ", +" + std::to_string(e.length) + ") at t=" +
                   std::to_string(e.time) + " overlaps a live tracked range; the overlap is replaced");
    }
    builder.add({0, e.start, e.length, e.time, std::nullopt});
  }
  return builder.take();
}

Classification classify(const TraceDump& dump, const MappingHistory& history) {
  Classification out;
  out.per_mapping.resize(history.ranges.size());
  for (const auto& thread : dump.threads) {
    for (const auto& batch : thread.batches) {
      for (auto addr : batch.addrs) {
        const auto it = std::find_if(history.ranges.begin(), history.ranges.end(), [&](const LiveRange& r) {
          return r.contains(addr) && r.live_at(batch.timestamp);
        });
        if (it == history.ranges.end()) {
          ++out.discarded;
          continue;
        }
        out.per_mapping[it->id].push_back({thread.thread_id, batch.batch_seq, batch.timestamp, addr});
        ++out.assigned;
      }
    }
  }
  return out;
}

std::uint64_t Heatmap::total() const {
  std::uint64_t n = 0;
  for (const auto& [_, c] : cells) n += c;
  return n;
}

std::uint64_t Heatmap::at(std::uint64_t batch_seq, std::uint64_t block) const {
  const auto it = cells.find({batch_seq, block});
  return it == cells.end() ? 0 : it->second;
}

std::map<std::uint64_t, std::vector<std::uint64_t>> Heatmap::blocks_by_batch() const {
  std::map<std::uint64_t, std::vector<std::uint64_t>> out;
  for (const auto& [key, count] : cells) {
    if (count > 0) out[key.first].push_back(key.second);
  }
  return out;
}

Heatmap heatmap(std::span<const Sample> samples, const LiveRange& range, std::uint64_t block_pages) {
  if (block_pages == 0) {
    throw std::invalid_argument("block_pages must be >= 1");
  }
  Heatmap map;
  map.mapping_id = range.id;
  map.block_pages = block_pages;
  const std::uint64_t block_bytes = block_pages * kPageSize;
  map.block_count = (range.length + block_bytes - 1) / block_bytes;
  for (const auto& s : samples) {
    ++map.cells[{s.batch_seq, (s.addr - range.start) / block_bytes}];
    map.batch_count = std::max(map.batch_count, s.batch_seq + 1);
  }
  return map;
}

bool is_diagonal_band(const Heatmap& map) {
  std::optional<std::uint64_t> prev_start;
  for (const auto& [batch, blocks] : map.blocks_by_batch()) {
    // blocks arrive sorted because cells are keyed by (batch, block)
    if (blocks.back() - blocks.front() + 1 != blocks.size()) {
      return false;
    }
    if (prev_start && blocks.front() < *prev_start) {
      return false;
    }
    prev_start = blocks.front();
  }
  return true;
}

std::uint64_t PageHistogram::total() const {
  std::uint64_t n = 0;
  for (const auto& [_, c] : page_counts) n += c;
  return n;
}

PageHistogram page_histogram(std::span<const Sample> samples) {
  PageHistogram hist;
  for (const auto& s : samples) {
    ++hist.page_counts[page_of(s.addr)];
  }
  for (const auto& [_, count] : hist.page_counts) {
    ++hist.histogram[count];
  }
  return hist;
}

namespace {

std::vector<std::pair<std::uint64_t, std::uint64_t>> by_count(const PageHistogram& hist) {
  std::vector<std::pair<std::uint64_t, std::uint64_t>> pages(hist.page_counts.begin(), hist.page_counts.end());
  std::stable_sort(pages.begin(), pages.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  return pages;
}

}  // namespace

std::vector<std::uint64_t> hot_pages(const PageHistogram& hist, std::uint64_t threshold) {
  std::vector<std::uint64_t> out;
  for (const auto& [page, count] : by_count(hist)) {
    if (count <= threshold) break;
    out.push_back(page);
  }
  return out;
}

std::vector<std::uint64_t> top_pages(const PageHistogram& hist, std::size_t k) {
  std::vector<std::uint64_t> out;
  for (const auto& [page, count] : by_count(hist)) {
    if (out.size() == k) break;
    out.push_back(page);
  }
  return out;
}

std::uint64_t coverage(std::span<const Sample> samples) {
  std::set<std::uint64_t> pages;
  for (const auto& s : samples) pages.insert(page_of(s.addr));
  return pages.size();
}

std::size_t IntervalStats::count() const {
  std::size_t n = 0;
  for (const auto& [_, d] : deltas) n += d.size();
  return n;
}

IntervalStats interrupt_intervals(const TraceDump& dump, const IntervalOptions& options) {
  IntervalStats stats;
  std::vector<std::uint64_t> all;
  const auto threshold = dump.header.threshold_records;
  for (const auto& thread : dump.threads) {
    const HarvestBatch* prev = nullptr;
    for (const auto& batch : thread.batches) {
      if (options.full_batches_only && batch.addrs.size() < threshold) {
        prev = nullptr;
        continue;
      }
      if (prev != nullptr && batch.batch_seq == prev->batch_seq + 1) {
        const auto d = batch.timestamp - prev->timestamp;
        stats.deltas[thread.thread_id].push_back(d);
        all.push_back(d);
      }
      prev = &batch;
    }
  }
  if (all.empty()) {
    return stats;
  }

  stats.mean = std::accumulate(all.begin(), all.end(), 0.0) / static_cast<double>(all.size());
  std::vector<std::uint64_t> sorted = all;
  std::sort(sorted.begin(), sorted.end());
  const auto n = sorted.size();
  stats.median = n % 2 == 1 ? static_cast<double>(sorted[n / 2])
                            : (static_cast<double>(sorted[n / 2 - 1]) + static_cast<double>(sorted[n / 2])) / 2.0;

  const auto max_delta = static_cast<double>(sorted.back());
  const std::size_t bins = std::max<std::size_t>(options.bins, 1);
  std::size_t bin_total = bins;
  if (options.bin_width > 0.0) {
    stats.bin_width = options.bin_width;
    bin_total = static_cast<std::size_t>(std::floor(max_delta / stats.bin_width)) + 1;
  } else {
    stats.bin_width = max_delta > 0.0 ? max_delta / static_cast<double>(bins) : 1.0;
  }
  stats.histogram.assign(bin_total, 0);
  for (auto d : all) {
    auto bin = static_cast<std::size_t>(std::floor(static_cast<double>(d) / stats.bin_width));
    ++stats.histogram[std::min(bin, bin_total - 1)];
  }
  return stats;
}

std::vector<std::size_t> histogram_modes(std::span<const std::uint64_t> histogram) {
  std::vector<std::size_t> modes;
  std::size_t i = 0;
  while (i < histogram.size()) {
    if (histogram[i] == 0) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j + 1 < histogram.size() && histogram[j + 1] == histogram[i]) ++j;
    const bool left_lower = i == 0 || histogram[i - 1] < histogram[i];
    const bool right_lower = j + 1 == histogram.size() || histogram[j + 1] < histogram[i];
    if (left_lower && right_lower) {
      modes.push_back(i);
    }
    i = j + 1;
  }
  std::stable_sort(modes.begin(), modes.end(),
                   [&](std::size_t a, std::size_t b) { return histogram[a] > histogram[b]; });
  return modes;
}

double overhead_estimate(const SamplerConfig& config, double miss_rate, double cpu_hz) {
  if (!(miss_rate >= 0.0)) {
    throw std::invalid_argument("miss_rate must be >= 0");
  }
  if (!(cpu_hz > 0.0)) {
    throw std::invalid_argument("cpu_hz must be > 0");
  }
  const auto resolved = config.resolved();
  const double interrupts_per_sec =
      miss_rate / (static_cast<double>(resolved.reset) * static_cast<double>(resolved.threshold_records));
  return interrupts_per_sec * static_cast<double>(resolved.handler_cycles) / cpu_hz;
}

}  // namespace pebssim
