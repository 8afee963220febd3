#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "pebssim/analyzer.hpp"

namespace pebssim {

/// `batch_seq,block,count` for every nonzero cell.
void write_heatmap_csv(const Heatmap& map, const std::filesystem::path& path);

/// Heatmap rendering: sample set id on X, address block on Y (low addresses
/// at the bottom), log-scaled color.
void write_heatmap_svg(const Heatmap& map, const LiveRange& range, const std::filesystem::path& path);

/// `misses,pages` rows of the histogram, then nothing else.
void write_page_histogram_csv(const PageHistogram& hist, const std::filesystem::path& path);
void write_page_histogram_svg(const PageHistogram& hist, const std::filesystem::path& path);

/// `rank,page_addr,count`.
void write_hot_pages_csv(const PageHistogram& hist, std::span<const std::uint64_t> pages,
                         const std::filesystem::path& path);

/// `thread_id,delta` rows.
void write_intervals_csv(const IntervalStats& stats, const std::filesystem::path& path);
/// `bin,lower,upper,count` rows.
void write_interval_histogram_csv(const IntervalStats& stats, const std::filesystem::path& path);
void write_interval_histogram_svg(const IntervalStats& stats, const std::filesystem::path& path);

}  // namespace pebssim
