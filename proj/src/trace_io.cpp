#include "pebssim/trace_io.hpp"

#include <algorithm>
#include <cinttypes>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

#include <fcntl.h>
#include <unistd.h>

namespace pebssim {

namespace {

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

  void need(std::size_t n, const char* what) const {
    if (in_.size() - pos_ < n) {
      throw DumpError(DumpErrorKind::Truncated, std::string("truncated while reading ") + what +
                                                    " at offset " + std::to_string(pos_));
    }
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return in_[pos_++];
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{in_[pos_ + i]} << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{in_[pos_ + i]} << (8 * i);
    pos_ += 8;
    return v;
  }
  std::span<const std::uint8_t> bytes(std::size_t n, const char* what) {
    need(n, what);
    auto s = in_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return in_.size() - pos_; }
  [[noreturn]] void truncated(const char* what) const {
    throw DumpError(DumpErrorKind::Truncated, std::string(what) + " count at offset " +
                                                  std::to_string(pos_) + " exceeds the file size");
  }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

[[noreturn]] void ordering(const std::string& message) {
  throw DumpError(DumpErrorKind::OrderingViolation, message);
}

[[noreturn]] void invalid(const std::string& message) {
  throw DumpError(DumpErrorKind::InvalidField, message);
}

}  // namespace

const char* to_string(DumpErrorKind kind) {
  switch (kind) {
    case DumpErrorKind::BadMagic: return "BadMagic";
    case DumpErrorKind::UnsupportedVersion: return "UnsupportedVersion";
    case DumpErrorKind::Truncated: return "Truncated";
    case DumpErrorKind::OrderingViolation: return "OrderingViolation";
    case DumpErrorKind::InvalidField: return "InvalidField";
    case DumpErrorKind::Io: return "Io";
  }
  return "?";
}

DumpError::DumpError(DumpErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

std::uint64_t TraceDump::sample_count() const {
  std::uint64_t n = 0;
  for (const auto& t : threads) {
    for (const auto& b : t.batches) {
      n += b.addrs.size();
    }
  }
  return n;
}

TraceDump make_dump(const SamplerConfig& config, std::vector<MappingEvent> mappings,
                    std::vector<ThreadRun> runs) {
  const auto resolved = config.resolved();
  TraceDump dump;
  dump.header.reset = resolved.reset;
  dump.header.buffer_bytes = resolved.buffer_bytes;
  dump.header.threshold_records = resolved.threshold_records;
  std::stable_sort(mappings.begin(), mappings.end(),
                   [](const auto& a, const auto& b) { return a.time < b.time; });
  dump.mappings = std::move(mappings);
  for (auto& run : runs) {
    dump.threads.push_back({run.thread_id, run.dropped, std::move(run.batches)});
  }
  return dump;
}

void validate(const TraceDump& dump) {
  if (dump.header.version != kDumpVersion) {
    throw DumpError(DumpErrorKind::UnsupportedVersion,
                    "version " + std::to_string(dump.header.version));
  }
  if (dump.header.page_size == 0) {
    invalid("page_size is zero");
  }
  for (std::size_t i = 0; i < dump.mappings.size(); ++i) {
    const auto& m = dump.mappings[i];
    if (m.kind != MappingKind::mmap && m.kind != MappingKind::munmap) {
      invalid("mapping " + std::to_string(i) + " has unknown kind");
    }
    if (m.start % dump.header.page_size != 0) {
      invalid("mapping " + std::to_string(i) + " start is not page aligned");
    }
    if (m.length == 0) {
      invalid("mapping " + std::to_string(i) + " has zero length");
    }
    if (i > 0 && m.time < dump.mappings[i - 1].time) {
      ordering("mapping " + std::to_string(i) + " precedes its predecessor in time");
    }
  }
  for (std::size_t t = 0; t < dump.threads.size(); ++t) {
    const auto& thread = dump.threads[t];
    if (t > 0 && thread.thread_id <= dump.threads[t - 1].thread_id) {
      ordering("thread ids not strictly increasing at thread " + std::to_string(thread.thread_id));
    }
    for (std::size_t b = 0; b < thread.batches.size(); ++b) {
      const auto& batch = thread.batches[b];
      if (batch.thread_id != thread.thread_id) {
        invalid("batch " + std::to_string(batch.batch_seq) + " belongs to another thread");
      }
      if (b > 0) {
        const auto& prev = thread.batches[b - 1];
        if (batch.batch_seq <= prev.batch_seq) {
          ordering("thread " + std::to_string(thread.thread_id) + ": batch_seq " +
                   std::to_string(batch.batch_seq) + " after " + std::to_string(prev.batch_seq));
        }
        if (batch.timestamp < prev.timestamp) {
          ordering("thread " + std::to_string(thread.thread_id) + ": batch " +
                   std::to_string(batch.batch_seq) + " timestamp goes backwards");
        }
      }
    }
  }
}

std::vector<std::uint8_t> serialize(const TraceDump& dump) {
  validate(dump);
  Writer w;
  w.bytes(kDumpMagic, sizeof kDumpMagic);
  w.u32(dump.header.version);
  w.u32(dump.header.page_size);
  w.u64(dump.header.reset);
  w.u64(dump.header.buffer_bytes);
  w.u64(dump.header.threshold_records);
  w.u64(dump.mappings.size());
  for (const auto& m : dump.mappings) {
    w.u8(static_cast<std::uint8_t>(m.kind));
    for (int i = 0; i < 7; ++i) w.u8(0);
    w.u64(m.start);
    w.u64(m.length);
    w.u64(m.time);
  }
  w.u64(dump.threads.size());
  for (const auto& t : dump.threads) {
    w.u64(t.thread_id);
    w.u64(t.dropped);
    w.u64(t.batches.size());
    for (const auto& b : t.batches) {
      w.u64(b.batch_seq);
      w.u64(b.timestamp);
      w.u64(b.addrs.size());
      for (auto a : b.addrs) w.u64(a);
    }
  }
  return w.take();
}

TraceDump deserialize(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  if (bytes.size() < sizeof kDumpMagic ||
      std::memcmp(bytes.data(), kDumpMagic, sizeof kDumpMagic) != 0) {
    throw DumpError(DumpErrorKind::BadMagic, "file does not start with PEBSDUMP");
  }
  r.bytes(sizeof kDumpMagic, "magic");

  TraceDump dump;
  dump.header.version = r.u32("version");
  if (dump.header.version != kDumpVersion) {
    throw DumpError(DumpErrorKind::UnsupportedVersion,
                    "version " + std::to_string(dump.header.version) + ", expected " +
                        std::to_string(kDumpVersion));
  }
  dump.header.page_size = r.u32("page_size");
  dump.header.reset = r.u64("reset");
  dump.header.buffer_bytes = r.u64("buffer_bytes");
  dump.header.threshold_records = r.u64("threshold_records");

  // Counts are bounded by the bytes left so corrupt counts fail as
  // truncation rather than as giant allocations.
  const auto mapping_count = r.u64("mapping_count");
  if (mapping_count > r.remaining() / 32) {
    r.truncated("mapping records");
  }
  dump.mappings.reserve(mapping_count);
  for (std::uint64_t i = 0; i < mapping_count; ++i) {
    MappingEvent m;
    const auto kind = r.u8("mapping kind");
    if (kind > 1) {
      invalid("mapping " + std::to_string(i) + " has kind byte " + std::to_string(kind));
    }
    m.kind = static_cast<MappingKind>(kind);
    const auto pad = r.bytes(7, "mapping padding");
    if (std::any_of(pad.begin(), pad.end(), [](auto b) { return b != 0; })) {
      invalid("mapping " + std::to_string(i) + " has nonzero padding");
    }
    m.start = r.u64("mapping start");
    m.length = r.u64("mapping length");
    m.time = r.u64("mapping time");
    dump.mappings.push_back(m);
  }

  const auto thread_count = r.u64("thread_count");
  if (thread_count > r.remaining() / 24) {
    r.truncated("thread records");
  }
  for (std::uint64_t t = 0; t < thread_count; ++t) {
    ThreadTrace thread;
    thread.thread_id = r.u64("thread_id");
    thread.dropped = r.u64("dropped");
    const auto batch_count = r.u64("batch_count");
    if (batch_count > r.remaining() / 24) {
      r.truncated("batches");
    }
    thread.batches.reserve(batch_count);
    for (std::uint64_t b = 0; b < batch_count; ++b) {
      HarvestBatch batch;
      batch.thread_id = thread.thread_id;
      batch.batch_seq = r.u64("batch_seq");
      batch.timestamp = r.u64("timestamp");
      const auto addr_count = r.u64("addr_count");
      if (addr_count > r.remaining() / 8) {
        r.truncated("batch addresses");
      }
      batch.addrs.resize(addr_count);
      for (auto& a : batch.addrs) a = r.u64("addr");
      thread.batches.push_back(std::move(batch));
    }
    dump.threads.push_back(std::move(thread));
  }
  if (r.remaining() != 0) {
    invalid(std::to_string(r.remaining()) + " trailing bytes after last thread");
  }
  validate(dump);
  return dump;
}

void write_dump(const TraceDump& dump, const std::filesystem::path& path, bool sync) {
  const auto bytes = serialize(dump);
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw DumpError(DumpErrorKind::Io, "cannot open " + path.string() + " for writing");
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    out.close();
    if (!out) {
      throw DumpError(DumpErrorKind::Io, "write failed: " + path.string());
    }
  }
  if (sync) {
    const int fd = ::open(path.c_str(), O_RDONLY);
    if (fd < 0 || ::fsync(fd) != 0) {
      if (fd >= 0) ::close(fd);
      throw DumpError(DumpErrorKind::Io, "fsync failed: " + path.string());
    }
    ::close(fd);
  }
}

TraceDump read_dump(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw DumpError(DumpErrorKind::Io, "cannot open " + path.string());
  }
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

void dump_to_csv(const TraceDump& dump, const std::filesystem::path& path) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (f == nullptr) {
    throw DumpError(DumpErrorKind::Io, "cannot open " + path.string() + " for writing");
  }
  std::fputs("thread_id,batch_seq,timestamp,addr\n", f);
  for (const auto& t : dump.threads) {
    for (const auto& b : t.batches) {
      for (auto a : b.addrs) {
        std::fprintf(f, "%" PRIu64 ",%" PRIu64 ",%" PRIu64 ",0x%" PRIx64 "\n", t.thread_id,
                     b.batch_seq, b.timestamp, a);
      }
    }
  }
  if (std::fclose(f) != 0) {
    throw DumpError(DumpErrorKind::Io, "write failed: " + path.string());
  }
}

}  // namespace pebssim
