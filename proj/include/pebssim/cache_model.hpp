#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pebssim/types.hpp"

namespace pebssim {

/// Private, per-thread set-associative LRU cache standing in for a KNL L2.
/// Defaults: 64 B lines, 16 ways, 1024 sets (1 MiB).
struct CacheConfig {
  std::uint64_t line_bytes = 64;
  std::uint64_t ways = 16;
  std::uint64_t sets = 1024;
  /// Every load is reported as a miss.
  bool bypass = false;

  std::uint64_t capacity_bytes() const { return line_bytes * ways * sets; }
  void validate() const;

  /// Accepts "bypass" or "<sets>,<ways>,<line>".
  static CacheConfig parse(const std::string& text);
  std::string to_string() const;
};

enum class AccessResult { Hit, Miss };

class Cache {
 public:
  explicit Cache(const CacheConfig& config);

  AccessResult access(Address addr);

  /// Resident tags of one set, most recent first.
  std::span<const std::uint64_t> set_contents(std::uint64_t set) const;

 private:
  CacheConfig config_;
  unsigned line_shift_;
  std::uint64_t set_mask_;
  // sets_ * ways_ tags laid out set-major; occupancy_ tracks fill per set.
  std::vector<std::uint64_t> tags_;
  std::vector<std::uint32_t> occupancy_;
};

struct ClassifiedStream {
  std::vector<MissEvent> misses;
  std::uint64_t hit_count = 0;
  std::uint64_t miss_count = 0;
};

/// Runs each thread's loads through its own cache and keeps the misses, in
/// input order. Throws MonotonicityError if a thread's time goes backwards.
ClassifiedStream classify_stream(std::span<const LoadEvent> loads, const CacheConfig& config);

}  // namespace pebssim
