// pebssim command-line front end: simulate, analyze, sweep, dump-to-csv.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pebssim/pipeline.hpp"
#include "pebssim/trace_io.hpp"

namespace {

using namespace pebssim;

std::uint64_t parse_u64(const std::string& text) {
  std::size_t used = 0;
  const auto value = std::stoull(text, &used, 0);
  if (used != text.size() || text.front() == '-') {
    throw std::invalid_argument(text);
  }
  return value;
}

// Flag values for one run. Everything is optional so that only flags the user
// actually passed override the config file.
struct RunFlags {
  std::optional<std::string> config_file;
  std::optional<std::string> pattern;
  std::optional<std::uint64_t> seed, threads, region_bytes, stride, iterations, loads, hot_pages, phase_loads;
  std::optional<std::string> region_start;
  std::optional<double> rate, hot_share, phase_slowdown;
  std::optional<std::string> trace, mappings;
  std::optional<std::uint64_t> reset, buffer_bytes, record_bytes, threshold_records, handler_cycles,
      handler_latency, ring_capacity;
  std::optional<std::string> harvest, cache;
  std::optional<std::uint64_t> map_threshold_bytes, hot_threshold, block_pages;
  std::optional<double> cpu_hz;
  std::optional<std::string> out, name;
  bool serial = false;

  void add_workload(CLI::App* app) {
    app->add_option("--config", config_file, "JSON run configuration; flags override it")->check(CLI::ExistingFile);
    app->add_option("--pattern", pattern, "stride-sweep | hot-set | uniform-random | two-phase");
    app->add_option("--seed", seed, "PRNG seed (mt19937_64)");
    app->add_option("--threads", threads, "simulated hardware threads");
    app->add_option("--region-start", region_start, "page-aligned region start address");
    app->add_option("--region-bytes", region_bytes, "region length in bytes");
    app->add_option("--stride", stride, "sweep stride in bytes");
    app->add_option("--iterations", iterations, "stride-sweep passes over the region");
    app->add_option("--rate", rate, "loads per logical time unit");
    app->add_option("--loads", loads, "loads per thread (hot-set, uniform-random, two-phase)");
    app->add_option("--hot-pages", hot_pages, "hot-set: number of hot pages");
    app->add_option("--hot-share", hot_share, "hot-set: fraction of loads on hot pages");
    app->add_option("--phase-loads", phase_loads, "two-phase: loads per phase");
    app->add_option("--phase-slowdown", phase_slowdown, "two-phase: load-rate ratio between phases");
    app->add_option("--trace", trace, "ingest loads from CSV (thread_id,addr,time)")->check(CLI::ExistingFile);
    app->add_option("--mappings", mappings, "ingest mappings from CSV (kind,start,length,time)")
        ->check(CLI::ExistingFile);
  }

  void add_sampler(CLI::App* app, bool with_reset_and_buffer) {
    if (with_reset_and_buffer) {
      app->add_option("--reset", reset, "qualifying events between PEBS records");
      app->add_option("--buffer-bytes", buffer_bytes, "CPU PEBS buffer size in bytes");
      app->add_option("--threshold-records", threshold_records, "records that raise an interrupt (default: capacity)");
    }
    app->add_option("--record-bytes", record_bytes, "PEBS record size (default 192)");
    app->add_option("--harvest", harvest, "interrupt | polling:<period>");
    app->add_option("--handler-cycles", handler_cycles, "interrupt handler cost in cycles (default 20000)");
    app->add_option("--handler-latency", handler_latency, "logical time added to interrupt timestamps");
    app->add_option("--ring-capacity", ring_capacity, "per-thread harvest ring size in batches");
    app->add_option("--cache", cache, "bypass | <sets>,<ways>,<line>");
    app->add_option("--cpu-hz", cpu_hz, "clock used by the overhead estimate (default 1.4e9)");
  }

  void add_analysis(CLI::App* app) {
    app->add_option("--map-threshold-bytes", map_threshold_bytes, "track mappings larger than this (default 4194304)");
    app->add_option("--hot-threshold", hot_threshold, "hot page: more than this many samples (default 50)");
    app->add_option("--block-pages", block_pages, "heatmap block height in pages (default 4)");
  }

  void add_output(CLI::App* app) {
    app->add_option("--out", out, "output directory (default $PEBSSIM_OUT or .)");
    app->add_option("--name", name, "output file stem");
    app->add_flag("--serial", serial, "run threads and sweep cells sequentially");
  }

  RunConfig build() const {
    RunConfig c;
    if (const char* env = std::getenv("PEBSSIM_OUT"); env != nullptr && *env != '\0') {
      c.out_dir = env;
    }
    if (config_file) {
      std::ifstream in(*config_file);
      nlohmann::json j;
      try {
        in >> j;
      } catch (const nlohmann::json::exception& e) {
        throw ConfigError(*config_file + ": " + e.what());
      }
      c = apply_json(j, c);
    }
    if (pattern) c.workload.pattern = parse_pattern(*pattern);
    if (seed) c.workload.seed = *seed;
    if (threads) c.workload.thread_count = *threads;
    if (region_start) {
      try {
        c.workload.region_start = parse_u64(*region_start);
      } catch (const std::exception&) {
        throw ConfigError("--region-start: not an address: " + *region_start);
      }
    }
    if (region_bytes) c.workload.region_len = *region_bytes;
    if (stride) c.workload.stride_bytes = *stride;
    if (iterations) c.workload.iterations = *iterations;
    if (rate) c.workload.events_per_unit_time = *rate;
    if (loads) c.workload.load_count = *loads;
    if (hot_pages) c.workload.hot_pages = *hot_pages;
    if (hot_share) c.workload.hot_share = *hot_share;
    if (phase_loads) c.workload.phase_loads = *phase_loads;
    if (phase_slowdown) c.workload.phase_slowdown = *phase_slowdown;
    if (trace) c.trace_csv = *trace;
    if (mappings) c.mappings_csv = *mappings;
    if (reset) c.sampler.reset = *reset;
    if (buffer_bytes) c.sampler.buffer_bytes = *buffer_bytes;
    if (record_bytes) c.sampler.record_bytes = *record_bytes;
    if (threshold_records) c.sampler.threshold_records = *threshold_records;
    if (harvest) c.sampler.harvest = HarvestMode::parse(*harvest);
    if (handler_cycles) c.sampler.handler_cycles = *handler_cycles;
    if (handler_latency) c.sampler.handler_latency = *handler_latency;
    if (ring_capacity) c.sampler.ring_capacity = *ring_capacity;
    if (cache) c.cache = CacheConfig::parse(*cache);
    if (cpu_hz) c.cpu_hz = *cpu_hz;
    if (map_threshold_bytes) c.analysis.map_threshold_bytes = *map_threshold_bytes;
    if (hot_threshold) c.analysis.hot_threshold = *hot_threshold;
    if (block_pages) c.analysis.block_pages = *block_pages;
    if (out) c.out_dir = *out;
    if (name) c.name = *name;
    if (serial) c.parallel = false;
    c.validate();
    return c;
  }
};

std::vector<std::uint64_t> parse_list(const std::string& text, const char* what) {
  std::vector<std::uint64_t> values;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      values.push_back(parse_u64(item));
    } catch (const std::exception&) {
      throw ConfigError(std::string(what) + ": not a positive integer: '" + item + "'");
    }
  }
  if (values.empty()) {
    throw ConfigError(std::string(what) + " must not be empty");
  }
  return values;
}

ReportSelection parse_reports(const std::string& text) {
  ReportSelection r{false, false, false, false, false};
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item == "all") r = ReportSelection{};
    else if (item == "heatmap") r.heatmap = true;
    else if (item == "intervals") r.intervals = true;
    else if (item == "histogram") r.histogram = true;
    else if (item == "hotpages") r.hot_pages = true;
    else if (item == "coverage") r.coverage = true;
    else throw ConfigError("--reports: unknown report '" + item + "'");
  }
  return r;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pebssim: PEBS memory-access sampling simulator and trace analyzer"};
  app.require_subcommand(1);

  RunFlags sim_flags;
  auto* simulate = app.add_subcommand("simulate", "run a workload through the cache and PEBS sampler, write a dump");
  sim_flags.add_workload(simulate);
  sim_flags.add_sampler(simulate, true);
  sim_flags.add_output(simulate);

  std::string dump_path;
  RunFlags an_flags;
  std::string reports = "all";
  double bin_width = 0.0;
  auto* analyze = app.add_subcommand("analyze", "reconstruct mappings and write heatmaps, histograms, intervals");
  analyze->add_option("dump", dump_path, "dump file")->required()->check(CLI::ExistingFile);
  an_flags.add_analysis(analyze);
  analyze->add_option("--reports", reports, "comma list: heatmap,intervals,histogram,hotpages,coverage,all");
  analyze->add_option("--interval-bin-width", bin_width, "interval histogram bin width (default max/50)");
  analyze->add_option("--out", an_flags.out, "output directory (default $PEBSSIM_OUT or .)");

  RunFlags sweep_flags;
  std::string resets = "64,128,256";
  std::string buffers = "8192,16384,32768";
  auto* sweep = app.add_subcommand("sweep", "simulate every reset x buffer combination and tabulate");
  sweep_flags.add_workload(sweep);
  sweep_flags.add_sampler(sweep, false);
  sweep_flags.add_analysis(sweep);
  sweep_flags.add_output(sweep);
  sweep->add_option("--resets", resets, "comma list of reset values");
  sweep->add_option("--buffers", buffers, "comma list of buffer sizes in bytes");

  std::string csv_dump;
  std::optional<std::string> csv_out;
  auto* to_csv = app.add_subcommand("dump-to-csv", "write a dump's samples and mappings as CSV");
  to_csv->add_option("dump", csv_dump, "dump file")->required()->check(CLI::ExistingFile);
  to_csv->add_option("--out", csv_out, "output directory (default $PEBSSIM_OUT or .)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (simulate->parsed()) {
      cmd_simulate(sim_flags.build(), std::cout);
    } else if (analyze->parsed()) {
      RunFlags defaults = an_flags;
      const auto base = defaults.build();
      AnalysisOptions options = base.analysis;
      options.reports = parse_reports(reports);
      if (bin_width < 0.0) {
        throw ConfigError("--interval-bin-width must be >= 0");
      }
      options.interval_bin_width = bin_width;
      cmd_analyze(dump_path, options, base.out_dir, std::cout);
    } else if (sweep->parsed()) {
      cmd_sweep(sweep_flags.build(), parse_list(resets, "--resets"), parse_list(buffers, "--buffers"), std::cout);
    } else if (to_csv->parsed()) {
      std::filesystem::path out_dir = ".";
      if (const char* env = std::getenv("PEBSSIM_OUT"); env != nullptr && *env != '\0') out_dir = env;
      if (csv_out) out_dir = *csv_out;
      const auto dump = read_dump(csv_dump);
      std::filesystem::create_directories(out_dir);
      const auto stem = std::filesystem::path(csv_dump).stem().string();
      const auto samples = out_dir / (stem + ".samples.csv");
      const auto maps = out_dir / (stem + ".mappings.csv");
      dump_to_csv(dump, samples);
      write_mappings_csv(maps, dump.mappings);
      std::cout << samples.string() << '\n' << maps.string() << '\n';
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const DumpError& e) {
    std::cerr << "dump error (" << to_string(e.kind()) << "): " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
