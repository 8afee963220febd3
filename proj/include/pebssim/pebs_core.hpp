#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pebssim/types.hpp"

namespace pebssim {

/// Size of one hardware PEBS record on Knights Landing: 24 fields of 8 bytes.
inline constexpr std::uint64_t kDefaultRecordBytes = 24 * 8;
inline constexpr std::uint64_t kDefaultHandlerCycles = 20'000;
inline constexpr std::uint64_t kDefaultRingCapacity = std::uint64_t{1} << 20;

enum class HarvestKind { interrupt, polling };

struct HarvestMode {
  HarvestKind kind = HarvestKind::interrupt;
  Timestamp period = 0;  // polling only

  static HarvestMode interrupt() { return {}; }
  static HarvestMode polling(Timestamp period) { return {HarvestKind::polling, period}; }

  /// Accepts "interrupt" or "polling:<period>".
  static HarvestMode parse(const std::string& text);
  std::string to_string() const;

  friend bool operator==(const HarvestMode&, const HarvestMode&) = default;
};

struct SamplerConfig {
  std::uint64_t reset = 64;
  std::uint64_t buffer_bytes = 8192;
  std::uint64_t record_bytes = kDefaultRecordBytes;
  /// 0 selects the buffer capacity.
  std::uint64_t threshold_records = 0;
  HarvestMode harvest;
  std::uint64_t handler_cycles = kDefaultHandlerCycles;
  /// Added to the triggering event time to form an interrupt batch timestamp.
  Timestamp handler_latency = 0;
  /// Harvest ring size, in batches.
  std::uint64_t ring_capacity = kDefaultRingCapacity;

  /// Fills in defaults and checks the domain. Throws ConfigError.
  SamplerConfig resolved() const;
  void validate() const;
  std::uint64_t effective_threshold() const;
};

/// Number of records that fit in the CPU PEBS buffer.
std::uint64_t buffer_capacity(const SamplerConfig& config);

/// The driver keeps only the load address of each hardware record.
struct PebsRecord {
  Address load_addr = 0;
};

struct HarvestBatch {
  ThreadId thread_id = 0;
  std::uint64_t batch_seq = 0;
  Timestamp timestamp = 0;
  std::vector<Address> addrs;

  friend bool operator==(const HarvestBatch&, const HarvestBatch&) = default;
};

class ModeError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// PEBS state machine of one hardware thread.
///
/// Every `reset`-th fed miss stores a record in the CPU buffer; the event that
/// brings the countdown to zero is the one recorded. In interrupt mode a full
/// threshold raises an interrupt whose handler harvests the buffer into a
/// batch stamped with the handler time. In polling mode batches come only from
/// poll_harvest(); records arriving while the buffer is full are lost.
class Sampler {
 public:
  Sampler(const SamplerConfig& config, ThreadId thread_id);

  std::optional<HarvestBatch> feed(const MissEvent& event);
  std::optional<HarvestBatch> poll_harvest(Timestamp now);
  std::optional<HarvestBatch> flush(Timestamp now);

  const SamplerConfig& config() const { return config_; }
  ThreadId thread_id() const { return thread_id_; }
  std::uint64_t countdown() const { return countdown_; }
  std::uint64_t buffer_occupancy() const { return buffer_.size(); }
  std::uint64_t records_emitted() const { return records_emitted_; }
  std::uint64_t overflow_lost() const { return overflow_lost_; }
  std::uint64_t next_batch_seq() const { return next_seq_; }
  std::optional<Timestamp> last_time() const { return last_time_; }

 private:
  void check_time(Timestamp t, const char* what) const;
  HarvestBatch drain(Timestamp stamp);

  SamplerConfig config_;
  ThreadId thread_id_;
  std::uint64_t threshold_;
  std::uint64_t countdown_;
  std::vector<PebsRecord> buffer_;
  std::uint64_t next_seq_ = 0;
  std::uint64_t records_emitted_ = 0;
  std::uint64_t overflow_lost_ = 0;
  std::optional<Timestamp> last_time_;
};

/// Per-thread circular buffer of harvested batches. Overwrites the oldest
/// batch when full; `dropped` counts the addresses lost that way.
class HarvestRing {
 public:
  explicit HarvestRing(std::uint64_t capacity);

  void push(HarvestBatch batch);
  std::vector<HarvestBatch> take();
  std::uint64_t dropped() const { return dropped_; }
  std::size_t size() const { return batches_.size(); }

 private:
  std::uint64_t capacity_;
  std::deque<HarvestBatch> batches_;
  std::uint64_t dropped_ = 0;
};

struct ThreadRun {
  ThreadId thread_id = 0;
  std::vector<HarvestBatch> batches;
  std::uint64_t dropped = 0;        // addresses overwritten in the ring
  std::uint64_t records = 0;        // records produced by the sampler
  std::uint64_t overflow_lost = 0;  // polling mode: records lost to a full buffer

  friend bool operator==(const ThreadRun&, const ThreadRun&) = default;
};

/// Feeds a whole per-thread miss stream through a fresh sampler, harvests into
/// a ring and flushes at the last event time. In polling mode the buffer is
/// drained at every multiple of the polling period.
ThreadRun run_thread(const SamplerConfig& config, ThreadId thread_id,
                     std::span<const MissEvent> stream);

/// Splits a mixed stream by thread and runs each thread independently.
/// Results are ordered by thread id.
std::vector<ThreadRun> run_threads(const SamplerConfig& config, std::span<const MissEvent> stream,
                                   bool parallel = true);

}  // namespace pebssim
