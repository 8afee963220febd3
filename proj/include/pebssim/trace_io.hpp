#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "pebssim/pebs_core.hpp"
#include "pebssim/types.hpp"

namespace pebssim {

// On-disk layout, all integers little-endian:
//
//   header (40 bytes)
//     magic "PEBSDUMP"            8
//     version          u32        4
//     page_size        u32        4
//     reset            u64        8
//     buffer_bytes     u64        8
//     threshold_records u64       8
//   mapping_count      u64
//   mapping record (32 bytes) x mapping_count
//     kind u8, 7 zero bytes, start u64, length u64, time u64
//   thread_count       u64
//   per thread: thread_id u64, dropped u64, batch_count u64
//     per batch: batch_seq u64, timestamp u64, addr_count u64, addr u64 x addr_count

inline constexpr char kDumpMagic[8] = {'P', 'E', 'B', 'S', 'D', 'U', 'M', 'P'};
inline constexpr std::uint32_t kDumpVersion = 1;
inline constexpr std::size_t kDumpHeaderBytes = 40;

struct DumpHeader {
  std::uint32_t version = kDumpVersion;
  std::uint32_t page_size = static_cast<std::uint32_t>(kPageSize);
  std::uint64_t reset = 0;
  std::uint64_t buffer_bytes = 0;
  std::uint64_t threshold_records = 0;

  friend bool operator==(const DumpHeader&, const DumpHeader&) = default;
};

struct ThreadTrace {
  ThreadId thread_id = 0;
  std::uint64_t dropped = 0;
  std::vector<HarvestBatch> batches;

  friend bool operator==(const ThreadTrace&, const ThreadTrace&) = default;
};

struct TraceDump {
  DumpHeader header;
  std::vector<MappingEvent> mappings;
  std::vector<ThreadTrace> threads;

  std::uint64_t sample_count() const;

  friend bool operator==(const TraceDump&, const TraceDump&) = default;
};

/// Builds a dump from sampler output. Thread order follows `runs`.
TraceDump make_dump(const SamplerConfig& config, std::vector<MappingEvent> mappings,
                    std::vector<ThreadRun> runs);

enum class DumpErrorKind { BadMagic, UnsupportedVersion, Truncated, OrderingViolation, InvalidField, Io };

const char* to_string(DumpErrorKind kind);

class DumpError : public std::runtime_error {
 public:
  DumpError(DumpErrorKind kind, const std::string& message);
  DumpErrorKind kind() const { return kind_; }

 private:
  DumpErrorKind kind_;
};

/// Throws DumpError (OrderingViolation / InvalidField) when the dump breaks an
/// invariant: batches by strictly increasing batch_seq with non-decreasing
/// timestamps, thread ids strictly increasing, mappings by time, aligned
/// mapping starts with positive lengths.
void validate(const TraceDump& dump);

std::vector<std::uint8_t> serialize(const TraceDump& dump);
TraceDump deserialize(std::span<const std::uint8_t> bytes);

void write_dump(const TraceDump& dump, const std::filesystem::path& path, bool sync = false);
TraceDump read_dump(const std::filesystem::path& path);

/// One row per sample: `thread_id,batch_seq,timestamp,addr`.
void dump_to_csv(const TraceDump& dump, const std::filesystem::path& path);

}  // namespace pebssim
