#include "pebssim/workloads.hpp"

#include <algorithm>
#include <charconv>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <string_view>

namespace pebssim {

namespace {

Timestamp time_at(double origin, std::uint64_t index, double rate) {
  return static_cast<Timestamp>(std::floor(origin + static_cast<double>(index) / rate));
}

std::uint64_t thread_seed(std::uint64_t seed, std::uint64_t thread) {
  // splitmix64 finalizer over (seed, thread)
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (thread + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

struct Slice {
  Address start;
  std::uint64_t len;
};

// Page-aligned partition of the region, one slice per thread.
std::vector<Slice> slice_region(const WorkloadSpec& spec) {
  if (spec.thread_count == 1) {
    return {{spec.region_start, spec.region_len}};
  }
  const std::uint64_t pages = spec.region_len / kPageSize;
  const std::uint64_t per = pages / spec.thread_count;
  std::vector<Slice> slices;
  for (std::uint64_t t = 0; t < spec.thread_count; ++t) {
    const Address start = spec.region_start + t * per * kPageSize;
    const std::uint64_t len =
        t + 1 == spec.thread_count ? spec.region_start + spec.region_len - start : per * kPageSize;
    slices.push_back({start, len});
  }
  return slices;
}

void finish(Workload& w, const WorkloadSpec& spec) {
  Timestamp end = 0;
  for (const auto& l : w.loads) {
    end = std::max(end, l.time);
  }
  w.mappings = {
      MappingEvent{MappingKind::mmap, spec.region_start, spec.region_len, 0},
      MappingEvent{MappingKind::munmap, spec.region_start, spec.region_len, end + 1},
  };
  w.page_counts = count_pages(w.loads);
}

std::uint64_t parse_number(std::string_view text, const std::string& path, std::size_t line,
                           const char* what) {
  int base = 10;
  if (text.size() > 2 && text[0] == '0' && (text[1] == 'x' || text[1] == 'X')) {
    text.remove_prefix(2);
    base = 16;
  }
  std::uint64_t value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value, base);
  if (text.empty() || ec != std::errc{} || ptr != text.data() + text.size()) {
    throw CsvError(path, line, std::string("invalid ") + what + " '" + std::string(text) + "'");
  }
  return value;
}

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t pos = 0;
  while (true) {
    const auto comma = line.find(',', pos);
    fields.push_back(line.substr(pos, comma == std::string_view::npos ? comma : comma - pos));
    if (comma == std::string_view::npos) {
      break;
    }
    pos = comma + 1;
  }
  return fields;
}

// Calls on_row(fields, line_no) for every data row after checking the header.
template <typename F>
void read_csv(const std::filesystem::path& path, std::string_view header, F&& on_row) {
  std::ifstream in(path);
  if (!in) {
    throw CsvError(path.string(), 0, "cannot open file");
  }
  std::string line;
  std::size_t line_no = 0;
  bool saw_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') {
      line.pop_back();
    }
    if (!saw_header) {
      if (line != header) {
        throw CsvError(path.string(), line_no,
                       "expected header '" + std::string(header) + "', got '" + line + "'");
      }
      saw_header = true;
      continue;
    }
    if (line.empty()) {
      continue;
    }
    on_row(split(line), line_no);
  }
  if (!saw_header) {
    throw CsvError(path.string(), 0, "missing header");
  }
}

std::string hex(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "0x%" PRIx64, v);
  return buf;
}

}  // namespace

Pattern parse_pattern(const std::string& text) {
  if (text == "stride-sweep" || text == "stride_sweep") return Pattern::stride_sweep;
  if (text == "hot-set" || text == "hot_set") return Pattern::hot_set;
  if (text == "uniform-random" || text == "uniform_random") return Pattern::uniform_random;
  if (text == "two-phase" || text == "two_phase") return Pattern::two_phase;
  throw ConfigError("unknown pattern '" + text + "'");
}

std::string to_string(Pattern pattern) {
  switch (pattern) {
    case Pattern::stride_sweep: return "stride-sweep";
    case Pattern::hot_set: return "hot-set";
    case Pattern::uniform_random: return "uniform-random";
    case Pattern::two_phase: return "two-phase";
  }
  return "?";
}

void WorkloadSpec::validate() const {
  if (region_start % kPageSize != 0) {
    throw ConfigError("region_start must be page aligned");
  }
  if (stride_bytes == 0 || region_len < stride_bytes) {
    throw ConfigError("need region_len >= stride_bytes > 0");
  }
  if (region_start + region_len < region_start) {
    throw ConfigError("region wraps the address space");
  }
  if (!(events_per_unit_time > 0.0) || !std::isfinite(events_per_unit_time)) {
    throw ConfigError("events_per_unit_time must be positive");
  }
  if (thread_count == 0) {
    throw ConfigError("thread_count must be >= 1");
  }
  if (thread_count > 1 && region_len / kPageSize < thread_count) {
    throw ConfigError("region has fewer pages than threads");
  }
  if (iterations == 0) {
    throw ConfigError("iterations must be >= 1");
  }
  if (pattern == Pattern::hot_set || pattern == Pattern::uniform_random) {
    if (region_len < kPageSize) {
      throw ConfigError("random patterns need a region of at least one page");
    }
  }
  if (pattern == Pattern::hot_set) {
    if (hot_pages == 0 || hot_pages > region_len / kPageSize) {
      throw ConfigError("hot_pages must be in [1, region pages]");
    }
    if (!(hot_share >= 0.0 && hot_share <= 1.0)) {
      throw ConfigError("hot_share must be in [0, 1]");
    }
  }
  if (pattern == Pattern::two_phase) {
    if (phase_loads == 0) {
      throw ConfigError("phase_loads must be >= 1");
    }
    if (!(phase_slowdown > 0.0) || !std::isfinite(phase_slowdown)) {
      throw ConfigError("phase_slowdown must be positive");
    }
  }
}

std::uint64_t PortableRng::below(std::uint64_t bound) {
  if (bound <= 1) {
    return 0;
  }
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return x % bound;
}

double PortableRng::unit() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

Workload gen_stride_sweep(const WorkloadSpec& spec) {
  spec.validate();
  Workload w;
  const auto slices = slice_region(spec);
  for (std::uint64_t t = 0; t < slices.size(); ++t) {
    std::uint64_t index = 0;
    for (std::uint64_t it = 0; it < spec.iterations; ++it) {
      for (std::uint64_t off = 0; off < slices[t].len; off += spec.stride_bytes) {
        w.loads.push_back({t, slices[t].start + off, time_at(0.0, index++, spec.events_per_unit_time)});
      }
    }
  }
  finish(w, spec);
  return w;
}

Workload gen_hot_set(const WorkloadSpec& spec) {
  spec.validate();
  Workload w;
  const std::uint64_t pages = spec.region_len / kPageSize;
  const std::uint64_t first_page = page_of(spec.region_start);

  PortableRng chooser(spec.seed);
  std::set<std::uint64_t> hot;
  while (hot.size() < spec.hot_pages) {
    hot.insert(chooser.below(pages));
  }
  const std::vector<std::uint64_t> hot_list(hot.begin(), hot.end());
  for (auto p : hot_list) {
    w.hot_set.push_back(first_page + p);
  }

  constexpr std::uint64_t kLinesPerPage = kPageSize / 64;
  for (std::uint64_t t = 0; t < spec.thread_count; ++t) {
    PortableRng rng(thread_seed(spec.seed, t));
    for (std::uint64_t i = 0; i < spec.load_count; ++i) {
      std::uint64_t page;
      if (rng.unit() < spec.hot_share) {
        page = hot_list[rng.below(hot_list.size())];
      } else {
        page = rng.below(pages);
      }
      const Address addr = spec.region_start + page * kPageSize + rng.below(kLinesPerPage) * 64;
      w.loads.push_back({t, addr, time_at(0.0, i, spec.events_per_unit_time)});
    }
  }
  finish(w, spec);
  return w;
}

Workload gen_uniform_random(const WorkloadSpec& spec) {
  spec.validate();
  Workload w;
  const std::uint64_t pages = spec.region_len / kPageSize;
  constexpr std::uint64_t kLinesPerPage = kPageSize / 64;
  for (std::uint64_t t = 0; t < spec.thread_count; ++t) {
    PortableRng rng(thread_seed(spec.seed, t));
    for (std::uint64_t i = 0; i < spec.load_count; ++i) {
      const std::uint64_t page = rng.below(pages);
      const Address addr = spec.region_start + page * kPageSize + rng.below(kLinesPerPage) * 64;
      w.loads.push_back({t, addr, time_at(0.0, i, spec.events_per_unit_time)});
    }
  }
  finish(w, spec);
  return w;
}

Workload gen_two_phase(const WorkloadSpec& spec) {
  spec.validate();
  Workload w;
  const auto slices = slice_region(spec);
  const double fast = spec.events_per_unit_time;
  const double slow = spec.events_per_unit_time / spec.phase_slowdown;
  for (std::uint64_t t = 0; t < slices.size(); ++t) {
    std::uint64_t off = 0;
    double phase_origin = 0.0;
    std::uint64_t in_phase = 0;
    bool slow_phase = false;
    for (std::uint64_t i = 0; i < spec.load_count; ++i) {
      if (in_phase == spec.phase_loads) {
        phase_origin += static_cast<double>(spec.phase_loads) / (slow_phase ? slow : fast);
        slow_phase = !slow_phase;
        in_phase = 0;
      }
      w.loads.push_back({t, slices[t].start + off, time_at(phase_origin, in_phase, slow_phase ? slow : fast)});
      ++in_phase;
      off += spec.stride_bytes;
      if (off >= slices[t].len) {
        off = 0;
      }
    }
  }
  finish(w, spec);
  return w;
}

Workload generate(const WorkloadSpec& spec) {
  switch (spec.pattern) {
    case Pattern::stride_sweep: return gen_stride_sweep(spec);
    case Pattern::hot_set: return gen_hot_set(spec);
    case Pattern::uniform_random: return gen_uniform_random(spec);
    case Pattern::two_phase: return gen_two_phase(spec);
  }
  throw ConfigError("unknown pattern");
}

CsvError::CsvError(const std::string& path, std::size_t line, const std::string& message)
    : std::runtime_error(path + ":" + std::to_string(line) + ": " + message), line_(line) {}

Workload ingest_csv(const std::filesystem::path& loads_path,
                    const std::filesystem::path& mappings_path) {
  Workload w;
  std::map<ThreadId, Timestamp> last_time;
  const auto lpath = loads_path.string();
  read_csv(loads_path, "thread_id,addr,time", [&](const auto& f, std::size_t line) {
    if (f.size() != 3) {
      throw CsvError(lpath, line, "expected 3 fields, got " + std::to_string(f.size()));
    }
    LoadEvent e{parse_number(f[0], lpath, line, "thread_id"), parse_number(f[1], lpath, line, "addr"),
                parse_number(f[2], lpath, line, "time")};
    auto [it, fresh] = last_time.try_emplace(e.thread_id, e.time);
    if (!fresh) {
      if (e.time < it->second) {
        throw CsvError(lpath, line, "time " + std::to_string(e.time) + " goes backwards on thread " +
                                        std::to_string(e.thread_id));
      }
      it->second = e.time;
    }
    w.loads.push_back(e);
  });

  if (!mappings_path.empty()) {
    const auto mpath = mappings_path.string();
    read_csv(mappings_path, "kind,start,length,time", [&](const auto& f, std::size_t line) {
      if (f.size() != 4) {
        throw CsvError(mpath, line, "expected 4 fields, got " + std::to_string(f.size()));
      }
      MappingEvent m;
      if (f[0] == "mmap") {
        m.kind = MappingKind::mmap;
      } else if (f[0] == "munmap") {
        m.kind = MappingKind::munmap;
      } else {
        throw CsvError(mpath, line, "kind must be mmap or munmap");
      }
      m.start = parse_number(f[1], mpath, line, "start");
      m.length = parse_number(f[2], mpath, line, "length");
      m.time = parse_number(f[3], mpath, line, "time");
      if (m.start % kPageSize != 0) {
        throw CsvError(mpath, line, "start is not page aligned");
      }
      if (m.length == 0) {
        throw CsvError(mpath, line, "length must be positive");
      }
      if (!w.mappings.empty() && m.time < w.mappings.back().time) {
        throw CsvError(mpath, line, "mapping events out of time order");
      }
      w.mappings.push_back(m);
    });
  }
  w.page_counts = count_pages(w.loads);
  return w;
}

void write_loads_csv(const std::filesystem::path& path, std::span<const LoadEvent> loads) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("cannot write " + path.string());
  }
  out << "thread_id,addr,time\n";
  for (const auto& l : loads) {
    out << l.thread_id << ',' << hex(l.addr) << ',' << l.time << '\n';
  }
  if (!out) {
    throw std::runtime_error("write failed: " + path.string());
  }
}

void write_mappings_csv(const std::filesystem::path& path, std::span<const MappingEvent> mappings) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("cannot write " + path.string());
  }
  out << "kind,start,length,time\n";
  for (const auto& m : mappings) {
    out << (m.kind == MappingKind::mmap ? "mmap" : "munmap") << ',' << hex(m.start) << ','
        << m.length << ',' << m.time << '\n';
  }
  if (!out) {
    throw std::runtime_error("write failed: " + path.string());
  }
}

std::map<std::uint64_t, std::uint64_t> count_pages(std::span<const LoadEvent> loads) {
  std::map<std::uint64_t, std::uint64_t> counts;
  for (const auto& l : loads) {
    ++counts[page_of(l.addr)];
  }
  return counts;
}

}  // namespace pebssim
