#include "pebssim/pebs_core.hpp"

#include <algorithm>
#include <charconv>
#include <future>
#include <map>
#include <utility>

namespace pebssim {

HarvestMode HarvestMode::parse(const std::string& text) {
  if (text == "interrupt") {
    return interrupt();
  }
  const std::string prefix = "polling:";
  if (text.rfind(prefix, 0) == 0) {
    const char* first = text.data() + prefix.size();
    const char* last = text.data() + text.size();
    Timestamp period = 0;
    auto [ptr, ec] = std::from_chars(first, last, period);
    if (ec != std::errc{} || ptr != last || period == 0) {
      throw ConfigError("harvest: polling period must be a positive integer, got '" + text + "'");
    }
    return polling(period);
  }
  throw ConfigError("harvest: expected 'interrupt' or 'polling:<period>', got '" + text + "'");
}

std::string HarvestMode::to_string() const {
  if (kind == HarvestKind::interrupt) {
    return "interrupt";
  }
  return "polling:" + std::to_string(period);
}

std::uint64_t buffer_capacity(const SamplerConfig& config) {
  if (config.record_bytes == 0) {
    throw ConfigError("record_bytes must be positive");
  }
  return config.buffer_bytes / config.record_bytes;
}

std::uint64_t SamplerConfig::effective_threshold() const {
  return threshold_records == 0 ? buffer_capacity(*this) : threshold_records;
}

void SamplerConfig::validate() const {
  if (reset == 0) {
    throw ConfigError("reset must be >= 1");
  }
  if (record_bytes == 0) {
    throw ConfigError("record_bytes must be >= 1");
  }
  if (buffer_bytes == 0) {
    throw ConfigError("buffer_bytes must be >= 1");
  }
  if (buffer_capacity(*this) == 0) {
    throw ConfigError("buffer of " + std::to_string(buffer_bytes) + " bytes cannot hold one " +
                      std::to_string(record_bytes) + "-byte record");
  }
  const auto threshold = effective_threshold();
  if (threshold > buffer_capacity(*this)) {
    throw ConfigError("threshold_records " + std::to_string(threshold) + " x record_bytes " +
                      std::to_string(record_bytes) + " exceeds buffer_bytes " +
                      std::to_string(buffer_bytes));
  }
  if (harvest.kind == HarvestKind::polling && harvest.period == 0) {
    throw ConfigError("polling period must be >= 1");
  }
  if (ring_capacity == 0) {
    throw ConfigError("ring_capacity must be >= 1");
  }
}

SamplerConfig SamplerConfig::resolved() const {
  validate();
  SamplerConfig out = *this;
  out.threshold_records = effective_threshold();
  return out;
}

Sampler::Sampler(const SamplerConfig& config, ThreadId thread_id)
    : config_(config.resolved()),
      thread_id_(thread_id),
      threshold_(config_.threshold_records),
      countdown_(config_.reset) {
  buffer_.reserve(threshold_);
}

void Sampler::check_time(Timestamp t, const char* what) const {
  if (last_time_ && t < *last_time_) {
    throw MonotonicityError(std::string(what) + ": time " + std::to_string(t) +
                            " precedes last event time " + std::to_string(*last_time_) +
                            " on thread " + std::to_string(thread_id_));
  }
}

HarvestBatch Sampler::drain(Timestamp stamp) {
  HarvestBatch batch;
  batch.thread_id = thread_id_;
  batch.batch_seq = next_seq_++;
  batch.timestamp = stamp;
  batch.addrs.reserve(buffer_.size());
  for (const auto& record : buffer_) {
    batch.addrs.push_back(record.load_addr);
  }
  buffer_.clear();
  return batch;
}

std::optional<HarvestBatch> Sampler::feed(const MissEvent& event) {
  check_time(event.time, "feed");
  last_time_ = event.time;

  if (--countdown_ != 0) {
    return std::nullopt;
  }
  countdown_ = config_.reset;

  if (buffer_.size() >= threshold_) {
    // Only reachable in polling mode: the hardware has nowhere to write.
    ++overflow_lost_;
    return std::nullopt;
  }
  buffer_.push_back(PebsRecord{event.addr});
  ++records_emitted_;

  if (config_.harvest.kind == HarvestKind::interrupt && buffer_.size() == threshold_) {
    return drain(event.time + config_.handler_latency);
  }
  return std::nullopt;
}

std::optional<HarvestBatch> Sampler::poll_harvest(Timestamp now) {
  if (config_.harvest.kind != HarvestKind::polling) {
    throw ModeError("poll_harvest called on a sampler in interrupt mode");
  }
  check_time(now, "poll_harvest");
  if (buffer_.empty()) {
    return std::nullopt;
  }
  return drain(now);
}

std::optional<HarvestBatch> Sampler::flush(Timestamp now) {
  check_time(now, "flush");
  if (buffer_.empty()) {
    return std::nullopt;
  }
  return drain(now);
}

HarvestRing::HarvestRing(std::uint64_t capacity) : capacity_(capacity) {
  if (capacity_ == 0) {
    throw ConfigError("ring_capacity must be >= 1");
  }
}

void HarvestRing::push(HarvestBatch batch) {
  if (batches_.size() == capacity_) {
    dropped_ += batches_.front().addrs.size();
    batches_.pop_front();
  }
  batches_.push_back(std::move(batch));
}

std::vector<HarvestBatch> HarvestRing::take() {
  std::vector<HarvestBatch> out(std::make_move_iterator(batches_.begin()),
                                std::make_move_iterator(batches_.end()));
  batches_.clear();
  return out;
}

ThreadRun run_thread(const SamplerConfig& config, ThreadId thread_id,
                     std::span<const MissEvent> stream) {
  Sampler sampler(config, thread_id);
  HarvestRing ring(sampler.config().ring_capacity);
  const bool polling = sampler.config().harvest.kind == HarvestKind::polling;
  const Timestamp period = sampler.config().harvest.period;
  Timestamp next_poll = period;

  for (const auto& event : stream) {
    if (polling && next_poll <= event.time) {
      if (auto batch = sampler.poll_harvest(next_poll)) {
        ring.push(std::move(*batch));
      }
      // Polls between here and event.time would find the buffer empty.
      next_poll = (event.time / period + 1) * period;
    }
    if (auto batch = sampler.feed(event)) {
      ring.push(std::move(*batch));
    }
  }
  if (const auto last = sampler.last_time()) {
    if (auto batch = sampler.flush(*last + sampler.config().handler_latency)) {
      ring.push(std::move(*batch));
    }
  }

  ThreadRun run;
  run.thread_id = thread_id;
  run.dropped = ring.dropped();
  run.batches = ring.take();
  run.records = sampler.records_emitted();
  run.overflow_lost = sampler.overflow_lost();
  return run;
}

std::vector<ThreadRun> run_threads(const SamplerConfig& config, std::span<const MissEvent> stream,
                                   bool parallel) {
  std::map<ThreadId, std::vector<MissEvent>> per_thread;
  for (const auto& event : stream) {
    per_thread[event.thread_id].push_back(event);
  }

  std::vector<ThreadRun> runs;
  runs.reserve(per_thread.size());
  if (!parallel || per_thread.size() < 2) {
    for (const auto& [tid, events] : per_thread) {
      runs.push_back(run_thread(config, tid, events));
    }
    return runs;
  }

  std::vector<std::future<ThreadRun>> pending;
  pending.reserve(per_thread.size());
  for (const auto& [tid, events] : per_thread) {
    pending.push_back(std::async(std::launch::async, [&config, tid = tid, &events = events] {
      return run_thread(config, tid, events);
    }));
  }
  for (auto& f : pending) {
    runs.push_back(f.get());
  }
  return runs;
}

}  // namespace pebssim
