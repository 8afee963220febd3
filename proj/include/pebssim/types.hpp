#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace pebssim {

using Address = std::uint64_t;
using Timestamp = std::uint64_t;  // logical cycles
using ThreadId = std::uint64_t;

inline constexpr std::uint64_t kPageSize = 4096;

inline constexpr std::uint64_t page_of(Address addr) { return addr / kPageSize; }

/// A memory load as issued by a thread, before cache classification.
struct LoadEvent {
  ThreadId thread_id = 0;
  Address addr = 0;
  Timestamp time = 0;

  friend bool operator==(const LoadEvent&, const LoadEvent&) = default;
};

/// A load that missed in L2; the event the sampler counts.
struct MissEvent {
  ThreadId thread_id = 0;
  Address addr = 0;
  Timestamp time = 0;

  friend bool operator==(const MissEvent&, const MissEvent&) = default;
};

enum class MappingKind : std::uint8_t { mmap = 0, munmap = 1 };

struct MappingEvent {
  MappingKind kind = MappingKind::mmap;
  Address start = 0;
  std::uint64_t length = 0;
  Timestamp time = 0;

  friend bool operator==(const MappingEvent&, const MappingEvent&) = default;
};

/// Raised when a per-thread stream goes backwards in time.
class MonotonicityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised for out-of-domain configuration values.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace pebssim
