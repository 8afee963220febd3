#include "pebssim/cache_model.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <map>
#include <memory>

namespace pebssim {

namespace {

std::uint64_t parse_u64(std::string_view text, const char* what) {
  std::uint64_t value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw ConfigError(std::string("cache: bad ") + what + " '" + std::string(text) + "'");
  }
  return value;
}

}  // namespace

void CacheConfig::validate() const {
  if (bypass) {
    return;
  }
  if (line_bytes == 0 || !std::has_single_bit(line_bytes)) {
    throw ConfigError("cache line_bytes must be a power of two");
  }
  if (sets == 0 || !std::has_single_bit(sets)) {
    throw ConfigError("cache sets must be a power of two");
  }
  if (ways == 0 || ways > 0xffffffffu) {
    throw ConfigError("cache ways must be positive");
  }
}

CacheConfig CacheConfig::parse(const std::string& text) {
  if (text == "bypass") {
    CacheConfig c;
    c.bypass = true;
    return c;
  }
  const auto first = text.find(',');
  const auto second = first == std::string::npos ? first : text.find(',', first + 1);
  if (second == std::string::npos) {
    throw ConfigError("cache: expected 'bypass' or '<sets>,<ways>,<line>', got '" + text + "'");
  }
  std::string_view view(text);
  CacheConfig c;
  c.sets = parse_u64(view.substr(0, first), "sets");
  c.ways = parse_u64(view.substr(first + 1, second - first - 1), "ways");
  c.line_bytes = parse_u64(view.substr(second + 1), "line size");
  c.validate();
  return c;
}

std::string CacheConfig::to_string() const {
  if (bypass) {
    return "bypass";
  }
  return std::to_string(sets) + "," + std::to_string(ways) + "," + std::to_string(line_bytes);
}

Cache::Cache(const CacheConfig& config) : config_(config) {
  config_.validate();
  if (config_.bypass) {
    line_shift_ = 0;
    set_mask_ = 0;
    return;
  }
  line_shift_ = static_cast<unsigned>(std::countr_zero(config_.line_bytes));
  set_mask_ = config_.sets - 1;
  tags_.assign(config_.sets * config_.ways, 0);
  occupancy_.assign(config_.sets, 0);
}

AccessResult Cache::access(Address addr) {
  if (config_.bypass) {
    return AccessResult::Miss;
  }
  const std::uint64_t line = addr >> line_shift_;
  const std::uint64_t set = line & set_mask_;
  const std::uint64_t tag = line >> std::countr_zero(config_.sets);
  auto* base = tags_.data() + set * config_.ways;
  const auto used = occupancy_[set];

  auto* end = base + used;
  auto* found = std::find(base, end, tag);
  if (found != end) {
    std::rotate(base, found, found + 1);
    return AccessResult::Hit;
  }
  if (used < config_.ways) {
    ++occupancy_[set];
    ++end;
  }
  // Shift everything down one slot (dropping the LRU tag when full) and
  // install the new tag at MRU.
  std::move_backward(base, end - 1, end);
  *base = tag;
  return AccessResult::Miss;
}

std::span<const std::uint64_t> Cache::set_contents(std::uint64_t set) const {
  if (config_.bypass) {
    return {};
  }
  return {tags_.data() + set * config_.ways, occupancy_.at(set)};
}

ClassifiedStream classify_stream(std::span<const LoadEvent> loads, const CacheConfig& config) {
  config.validate();
  struct PerThread {
    Cache cache;
    Timestamp last = 0;
    bool seen = false;
  };
  std::map<ThreadId, std::unique_ptr<PerThread>> threads;

  ClassifiedStream out;
  for (const auto& load : loads) {
    auto& slot = threads[load.thread_id];
    if (!slot) {
      slot = std::make_unique<PerThread>(PerThread{Cache(config)});
    }
    if (slot->seen && load.time < slot->last) {
      throw MonotonicityError("load time " + std::to_string(load.time) +
                              " precedes previous time " + std::to_string(slot->last) +
                              " on thread " + std::to_string(load.thread_id));
    }
    slot->seen = true;
    slot->last = load.time;
    if (slot->cache.access(load.addr) == AccessResult::Hit) {
      ++out.hit_count;
    } else {
      ++out.miss_count;
      out.misses.push_back(MissEvent{load.thread_id, load.addr, load.time});
    }
  }
  return out;
}

}  // namespace pebssim
