#include "pebssim/pipeline.hpp"

#include <algorithm>
#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <future>
#include <iomanip>
#include <ostream>
#include <set>
#include <sstream>

#include <openssl/evp.h>

#include "pebssim/report.hpp"

namespace pebssim {

using nlohmann::json;

namespace {

std::string hex(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "0x%" PRIx64, v);
  return buf;
}

std::uint64_t json_u64(const json& v, const char* key) {
  if (v.is_number_unsigned()) {
    return v.get<std::uint64_t>();
  }
  if (v.is_number_integer() && v.get<std::int64_t>() >= 0) {
    return static_cast<std::uint64_t>(v.get<std::int64_t>());
  }
  if (v.is_string()) {
    const auto text = v.get<std::string>();
    try {
      std::size_t used = 0;
      const auto value = std::stoull(text, &used, 0);
      if (used == text.size()) {
        return value;
      }
    } catch (const std::exception&) {
    }
  }
  throw ConfigError(std::string("config key '") + key + "' must be a non-negative integer");
}

double json_double(const json& v, const char* key) {
  if (!v.is_number()) {
    throw ConfigError(std::string("config key '") + key + "' must be a number");
  }
  return v.get<double>();
}

std::string json_string(const json& v, const char* key) {
  if (!v.is_string()) {
    throw ConfigError(std::string("config key '") + key + "' must be a string");
  }
  return v.get<std::string>();
}

struct PreparedStream {
  Workload workload;
  ClassifiedStream classified;
  std::set<ThreadId> thread_ids;
  Timestamp duration = 0;
};

PreparedStream prepare(const RunConfig& config) {
  PreparedStream p;
  p.workload = config.trace_csv.empty() ? generate(config.workload)
                                        : ingest_csv(config.trace_csv, config.mappings_csv);
  p.classified = classify_stream(p.workload.loads, config.cache);
  if (!p.workload.loads.empty()) {
    Timestamp lo = p.workload.loads.front().time, hi = lo;
    for (const auto& l : p.workload.loads) {
      lo = std::min(lo, l.time);
      hi = std::max(hi, l.time);
      p.thread_ids.insert(l.thread_id);
    }
    p.duration = hi - lo + 1;
  }
  return p;
}

SimulationResult sample(const PreparedStream& p, const SamplerConfig& sampler, bool parallel) {
  auto runs = run_threads(sampler, p.classified.misses, parallel);
  // Threads that never missed still get an (empty) entry in the dump.
  for (auto tid : p.thread_ids) {
    const bool present = std::any_of(runs.begin(), runs.end(), [&](const auto& r) { return r.thread_id == tid; });
    if (!present) {
      runs.push_back(ThreadRun{tid, {}, 0, 0, 0});
    }
  }
  std::sort(runs.begin(), runs.end(), [](const auto& a, const auto& b) { return a.thread_id < b.thread_id; });

  SimulationResult result;
  auto& s = result.summary;
  s.threads = p.thread_ids.size();
  s.loads = p.workload.loads.size();
  s.hits = p.classified.hit_count;
  s.misses = p.classified.miss_count;
  s.duration = p.duration;
  for (const auto& r : runs) {
    s.records += r.records;
    s.batches += r.batches.size();
    s.dropped += r.dropped;
    s.overflow_lost += r.overflow_lost;
  }
  result.dump = make_dump(sampler, p.workload.mappings, std::move(runs));
  return result;
}

std::uint64_t total_coverage(const TraceDump& dump, const AnalysisOptions& options) {
  AnalysisOptions light = options;
  light.reports = {false, false, false, false, true};
  const auto analysis = analyze(dump, light);
  std::uint64_t pages = 0;
  for (const auto& m : analysis.mappings) pages += m.coverage;
  return pages;
}

void print_summary(std::ostream& log, const SimulationSummary& s) {
  log << "threads:  " << s.threads << '\n'
      << "events:   " << s.loads << '\n'
      << "hits:     " << s.hits << '\n'
      << "misses:   " << s.misses << '\n'
      << "records:  " << s.records << '\n'
      << "batches:  " << s.batches << '\n'
      << "dropped:  " << s.dropped << '\n';
  if (s.overflow_lost != 0) {
    log << "overflow: " << s.overflow_lost << " records lost to a full buffer between polls\n";
  }
}

}  // namespace

void RunConfig::validate() const {
  if (trace_csv.empty()) {
    workload.validate();
  }
  cache.validate();
  sampler.validate();
  if (analysis.block_pages == 0) {
    throw ConfigError("block_pages must be >= 1");
  }
  if (!(cpu_hz > 0.0)) {
    throw ConfigError("cpu_hz must be > 0");
  }
  if (analysis.interval_bin_width < 0.0) {
    throw ConfigError("interval_bin_width must be >= 0");
  }
  if (name.find('/') != std::string::npos) {
    throw ConfigError("name must not contain '/'");
  }
}

std::string RunConfig::stem() const {
  if (!name.empty()) {
    return name;
  }
  const std::string source = trace_csv.empty() ? to_string(workload.pattern) : trace_csv.stem().string();
  return source + "-r" + std::to_string(sampler.reset) + "-b" + std::to_string(sampler.buffer_bytes);
}

json to_json(const RunConfig& c) {
  json j;
  j["pattern"] = to_string(c.workload.pattern);
  j["seed"] = c.workload.seed;
  j["threads"] = c.workload.thread_count;
  j["region_start"] = hex(c.workload.region_start);
  j["region_bytes"] = c.workload.region_len;
  j["stride"] = c.workload.stride_bytes;
  j["iterations"] = c.workload.iterations;
  j["rate"] = c.workload.events_per_unit_time;
  j["loads"] = c.workload.load_count;
  j["hot_pages"] = c.workload.hot_pages;
  j["hot_share"] = c.workload.hot_share;
  j["phase_loads"] = c.workload.phase_loads;
  j["phase_slowdown"] = c.workload.phase_slowdown;
  j["trace"] = c.trace_csv.string();
  j["mappings"] = c.mappings_csv.string();
  j["cache"] = c.cache.to_string();
  j["reset"] = c.sampler.reset;
  j["buffer_bytes"] = c.sampler.buffer_bytes;
  j["record_bytes"] = c.sampler.record_bytes;
  j["threshold_records"] = c.sampler.threshold_records;
  j["harvest"] = c.sampler.harvest.to_string();
  j["handler_cycles"] = c.sampler.handler_cycles;
  j["handler_latency"] = c.sampler.handler_latency;
  j["ring_capacity"] = c.sampler.ring_capacity;
  j["map_threshold_bytes"] = c.analysis.map_threshold_bytes;
  j["hot_threshold"] = c.analysis.hot_threshold;
  j["block_pages"] = c.analysis.block_pages;
  j["interval_bin_width"] = c.analysis.interval_bin_width;
  j["out"] = c.out_dir.string();
  j["name"] = c.name;
  j["cpu_hz"] = c.cpu_hz;
  return j;
}

RunConfig apply_json(const json& j, RunConfig c) {
  if (!j.is_object()) {
    throw ConfigError("config file must hold a JSON object");
  }
  for (const auto& [key, v] : j.items()) {
    const char* k = key.c_str();
    if (key == "pattern") c.workload.pattern = parse_pattern(json_string(v, k));
    else if (key == "seed") c.workload.seed = json_u64(v, k);
    else if (key == "threads") c.workload.thread_count = json_u64(v, k);
    else if (key == "region_start") c.workload.region_start = json_u64(v, k);
    else if (key == "region_bytes") c.workload.region_len = json_u64(v, k);
    else if (key == "stride") c.workload.stride_bytes = json_u64(v, k);
    else if (key == "iterations") c.workload.iterations = json_u64(v, k);
    else if (key == "rate") c.workload.events_per_unit_time = json_double(v, k);
    else if (key == "loads") c.workload.load_count = json_u64(v, k);
    else if (key == "hot_pages") c.workload.hot_pages = json_u64(v, k);
    else if (key == "hot_share") c.workload.hot_share = json_double(v, k);
    else if (key == "phase_loads") c.workload.phase_loads = json_u64(v, k);
    else if (key == "phase_slowdown") c.workload.phase_slowdown = json_double(v, k);
    else if (key == "trace") c.trace_csv = json_string(v, k);
    else if (key == "mappings") c.mappings_csv = json_string(v, k);
    else if (key == "cache") c.cache = CacheConfig::parse(json_string(v, k));
    else if (key == "reset") c.sampler.reset = json_u64(v, k);
    else if (key == "buffer_bytes") c.sampler.buffer_bytes = json_u64(v, k);
    else if (key == "record_bytes") c.sampler.record_bytes = json_u64(v, k);
    else if (key == "threshold_records") c.sampler.threshold_records = json_u64(v, k);
    else if (key == "harvest") c.sampler.harvest = HarvestMode::parse(json_string(v, k));
    else if (key == "handler_cycles") c.sampler.handler_cycles = json_u64(v, k);
    else if (key == "handler_latency") c.sampler.handler_latency = json_u64(v, k);
    else if (key == "ring_capacity") c.sampler.ring_capacity = json_u64(v, k);
    else if (key == "map_threshold_bytes") c.analysis.map_threshold_bytes = json_u64(v, k);
    else if (key == "hot_threshold") c.analysis.hot_threshold = json_u64(v, k);
    else if (key == "block_pages") c.analysis.block_pages = json_u64(v, k);
    else if (key == "interval_bin_width") c.analysis.interval_bin_width = json_double(v, k);
    else if (key == "out") c.out_dir = json_string(v, k);
    else if (key == "name") c.name = json_string(v, k);
    else if (key == "cpu_hz") c.cpu_hz = json_double(v, k);
    else throw ConfigError("unknown config key '" + key + "'");
  }
  return c;
}

double SimulationSummary::miss_rate(double cpu_hz) const {
  if (duration == 0 || threads == 0) {
    return 0.0;
  }
  return static_cast<double>(misses) / static_cast<double>(threads) / static_cast<double>(duration) * cpu_hz;
}

SimulationResult simulate(const RunConfig& config) {
  config.validate();
  auto prepared = prepare(config);
  auto result = sample(prepared, config.sampler, config.parallel);
  result.workload = std::move(prepared.workload);
  return result;
}

std::filesystem::path cmd_simulate(const RunConfig& config, std::ostream& log) {
  const auto result = simulate(config);
  std::filesystem::create_directories(config.out_dir);
  const auto dump_path = config.out_dir / (config.stem() + ".pebs");
  write_dump(result.dump, dump_path);
  write_manifest(config.out_dir / (config.stem() + ".manifest.json"), "simulate", to_json(config), {dump_path});
  print_summary(log, result.summary);
  log << "dump:     " << dump_path.string() << '\n';
  return dump_path;
}

AnalysisResult analyze(const TraceDump& dump, const AnalysisOptions& options) {
  AnalysisResult result;
  result.history = reconstruct(dump.mappings, options.map_threshold_bytes);
  result.classification = classify(dump, result.history);
  if (options.reports.intervals) {
    IntervalOptions io;
    io.bin_width = options.interval_bin_width;
    result.intervals = interrupt_intervals(dump, io);
  }
  for (const auto& range : result.history.ranges) {
    const auto& samples = result.classification.per_mapping[range.id];
    if (samples.empty()) {
      continue;
    }
    MappingReport m;
    m.mapping_id = range.id;
    m.range = range;
    m.samples = samples.size();
    m.coverage = coverage(samples);
    if (options.reports.heatmap) {
      m.heatmap = heatmap(samples, range, options.block_pages);
    }
    if (options.reports.histogram || options.reports.hot_pages) {
      m.histogram = page_histogram(samples);
      m.hot_pages = pebssim::hot_pages(m.histogram, options.hot_threshold);
    }
    result.mappings.push_back(std::move(m));
  }
  return result;
}

AnalysisResult cmd_analyze(const std::filesystem::path& dump_path, const AnalysisOptions& options,
                           const std::filesystem::path& out_dir, std::ostream& log) {
  const auto dump = read_dump(dump_path);
  auto result = analyze(dump, options);
  std::filesystem::create_directories(out_dir);
  const std::string stem = dump_path.stem().string();
  auto out = [&](const std::string& id, const std::string& artifact) {
    auto p = out_dir / (stem + "." + id + "." + artifact);
    result.files.push_back(p);
    return p;
  };

  for (const auto& m : result.mappings) {
    const auto id = std::to_string(m.mapping_id);
    if (options.reports.heatmap) {
      write_heatmap_csv(m.heatmap, out(id, "heatmap.csv"));
      write_heatmap_svg(m.heatmap, m.range, out(id, "heatmap.svg"));
    }
    if (options.reports.histogram) {
      write_page_histogram_csv(m.histogram, out(id, "histogram.csv"));
      write_page_histogram_svg(m.histogram, out(id, "histogram.svg"));
    }
    if (options.reports.hot_pages) {
      write_hot_pages_csv(m.histogram, m.hot_pages, out(id, "hotpages.csv"));
    }
  }
  if (options.reports.intervals) {
    write_intervals_csv(result.intervals, out("all", "intervals.csv"));
    write_interval_histogram_csv(result.intervals, out("all", "interval_histogram.csv"));
    write_interval_histogram_svg(result.intervals, out("all", "interval_histogram.svg"));
  }

  std::ostringstream summary;
  summary << "dump: " << dump_path.string() << '\n'
          << "reset: " << dump.header.reset << " buffer_bytes: " << dump.header.buffer_bytes
          << " threshold_records: " << dump.header.threshold_records << '\n'
          << "threads: " << dump.threads.size() << " samples: " << dump.sample_count() << '\n'
          << "tracked ranges: " << result.history.ranges.size() << '\n'
          << "assigned: " << result.classification.assigned << " discarded: " << result.classification.discarded
          << '\n';
  for (const auto& w : result.history.warnings) {
    summary << "warning: " << w << '\n';
  }
  for (const auto& m : result.mappings) {
    summary << "mapping " << m.mapping_id << " [" << hex(m.range.start) << ", " << hex(m.range.end())
            << ") samples=" << m.samples;
    if (options.reports.coverage) {
      summary << " pages_touched=" << m.coverage;
    }
    if (options.reports.hot_pages) {
      summary << " hot_pages=" << m.hot_pages.size() << " (threshold " << options.hot_threshold << ")";
    }
    summary << '\n';
  }
  if (options.reports.intervals) {
    summary << "intervals: " << result.intervals.count();
    if (result.intervals.count() > 0) {
      summary << " mean=" << result.intervals.mean << " median=" << result.intervals.median
              << " bin_width=" << result.intervals.bin_width;
      const auto modes = histogram_modes(result.intervals.histogram);
      summary << " modes=";
      for (std::size_t i = 0; i < std::min<std::size_t>(modes.size(), 3); ++i) {
        summary << (i ? "," : "") << modes[i];
      }
    }
    summary << '\n';
  }

  const auto summary_path = out("all", "summary.txt");
  {
    std::ofstream f(summary_path);
    f << summary.str();
    if (!f) {
      throw std::runtime_error("write failed: " + summary_path.string());
    }
  }
  json cfg = {{"dump", dump_path.string()},
              {"map_threshold_bytes", options.map_threshold_bytes},
              {"hot_threshold", options.hot_threshold},
              {"block_pages", options.block_pages},
              {"interval_bin_width", options.interval_bin_width}};
  write_manifest(out_dir / (stem + ".analyze.manifest.json"), "analyze", cfg, result.files);
  log << summary.str();
  return result;
}

std::vector<SweepRow> sweep(const RunConfig& config, const std::vector<std::uint64_t>& resets,
                            const std::vector<std::uint64_t>& buffers) {
  if (resets.empty() || buffers.empty()) {
    throw ConfigError("sweep needs at least one reset and one buffer size");
  }
  std::vector<SamplerConfig> cells;
  for (auto r : resets) {
    for (auto b : buffers) {
      SamplerConfig s = config.sampler;
      s.reset = r;
      s.buffer_bytes = b;
      s.threshold_records = 0;
      s.validate();
      cells.push_back(s);
    }
  }
  config.validate();
  const auto prepared = prepare(config);

  auto run_cell = [&](const SamplerConfig& s) {
    const auto result = sample(prepared, s, false);
    SweepRow row;
    row.reset = s.reset;
    row.buffer_bytes = s.buffer_bytes;
    row.threshold_records = s.effective_threshold();
    row.records = result.summary.records;
    row.batches = result.summary.batches;
    row.coverage = total_coverage(result.dump, config.analysis);
    row.overhead = overhead_estimate(s, result.summary.miss_rate(config.cpu_hz), config.cpu_hz);
    return row;
  };

  std::vector<SweepRow> rows;
  if (!config.parallel) {
    for (const auto& s : cells) rows.push_back(run_cell(s));
    return rows;
  }
  std::vector<std::future<SweepRow>> pending;
  for (const auto& s : cells) {
    pending.push_back(std::async(std::launch::async, run_cell, std::cref(s)));
  }
  for (auto& f : pending) rows.push_back(f.get());
  return rows;
}

std::filesystem::path cmd_sweep(const RunConfig& config, const std::vector<std::uint64_t>& resets,
                                const std::vector<std::uint64_t>& buffers, std::ostream& log) {
  const auto rows = sweep(config, resets, buffers);
  std::filesystem::create_directories(config.out_dir);
  const auto stem = config.name.empty() ? to_string(config.workload.pattern) : config.name;
  const auto path = config.out_dir / (stem + ".sweep.csv");
  {
    std::ofstream f(path);
    f << "reset,buffer_bytes,threshold_records,records,batches,coverage,overhead\n";
    for (const auto& r : rows) {
      f << r.reset << ',' << r.buffer_bytes << ',' << r.threshold_records << ',' << r.records << ',' << r.batches
        << ',' << r.coverage << ',' << std::setprecision(6) << r.overhead << '\n';
    }
    if (!f) {
      throw std::runtime_error("write failed: " + path.string());
    }
  }
  auto cfg = to_json(config);
  cfg["resets"] = resets;
  cfg["buffers"] = buffers;
  write_manifest(config.out_dir / (stem + ".sweep.manifest.json"), "sweep", cfg, {path});

  log << std::left << std::setw(8) << "reset" << std::setw(10) << "buffer" << std::setw(11) << "threshold"
      << std::setw(10) << "records" << std::setw(9) << "batches" << std::setw(10) << "coverage"
      << "overhead\n";
  for (const auto& r : rows) {
    log << std::left << std::setw(8) << r.reset << std::setw(10) << r.buffer_bytes << std::setw(11)
        << r.threshold_records << std::setw(10) << r.records << std::setw(9) << r.batches << std::setw(10)
        << r.coverage << std::setprecision(4) << r.overhead * 100 << "%\n";
  }
  log << "table:    " << path.string() << '\n';
  return path;
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("cannot read " + path.string());
  }
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("sha256 init failed");
  }
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    if (in.gcount() > 0) {
      EVP_DigestUpdate(ctx.get(), buf, static_cast<std::size_t>(in.gcount()));
    }
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), digest, &len);
  std::string out;
  char hexbyte[3];
  for (unsigned i = 0; i < len; ++i) {
    std::snprintf(hexbyte, sizeof hexbyte, "%02x", digest[i]);
    out += hexbyte;
  }
  return out;
}

void write_manifest(const std::filesystem::path& path, const std::string& command, const json& config,
                    const std::vector<std::filesystem::path>& outputs) {
  json m;
  m["tool"] = "pebssim";
  m["version"] = kToolVersion;
  m["dump_format_version"] = kDumpVersion;
  m["command"] = command;
  m["config"] = config;
  m["outputs"] = json::array();
  for (const auto& p : outputs) {
    m["outputs"].push_back(
        {{"file", p.filename().string()}, {"bytes", std::filesystem::file_size(p)}, {"sha256", sha256_file(p)}});
  }
  std::ofstream f(path);
  f << m.dump(2) << '\n';
  if (!f) {
    throw std::runtime_error("write failed: " + path.string());
  }
}

}  // namespace pebssim
