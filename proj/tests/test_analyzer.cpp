#include <doctest.h>

#include <random>
#include <set>

#include "pebssim/analyzer.hpp"
#include "pebssim/cache_model.hpp"
#include "pebssim/workloads.hpp"

using namespace pebssim;

namespace {

constexpr std::uint64_t MiB = std::uint64_t{1} << 20;
constexpr Address A = 0x10000000;

TraceDump dump_with(std::vector<MappingEvent> maps, std::vector<HarvestBatch> batches) {
  TraceDump d;
  d.header.reset = 1;
  d.header.buffer_bytes = 8192;
  d.header.threshold_records = 42;
  d.mappings = std::move(maps);
  ThreadTrace t;
  for (auto& b : batches) t.batches.push_back(std::move(b));
  d.threads.push_back(std::move(t));
  return d;
}

std::vector<MissEvent> to_misses(const std::vector<LoadEvent>& loads) {
  std::vector<MissEvent> out;
  for (const auto& l : loads) out.push_back({l.thread_id, l.addr, l.time});
  return out;
}

TraceDump sample_workload(const Workload& w, std::uint64_t reset, std::uint64_t buffer = 8192) {
  SamplerConfig c;
  c.reset = reset;
  c.buffer_bytes = buffer;
  return make_dump(c, w.mappings, run_threads(c, to_misses(w.loads), false));
}

}  // namespace

TEST_CASE("reconstruct") {
  SUBCASE("8 MiB mapping is tracked") {
    const std::vector<MappingEvent> ev = {{MappingKind::mmap, A, 8 * MiB, 0}};
    const auto h = reconstruct(ev);
    REQUIRE(h.ranges.size() == 1);
    CHECK(h.ranges[0] == LiveRange{0, A, 8 * MiB, 0, std::nullopt});
  }
  SUBCASE("3 MiB mapping is filtered, 4 MiB exactly too") {
    const std::vector<MappingEvent> ev = {{MappingKind::mmap, A, 3 * MiB, 0}, {MappingKind::mmap, A + 16 * MiB, 4 * MiB, 1}};
    CHECK(reconstruct(ev).ranges.empty());
  }
  SUBCASE("munmap in the middle splits into two remainders") {
    const std::vector<MappingEvent> ev = {{MappingKind::mmap, A, 8 * MiB, 0},
                                          {MappingKind::munmap, A + 2 * MiB, 1 * MiB, 5}};
    const auto h = reconstruct(ev);
    REQUIRE(h.ranges.size() == 3);
    CHECK(h.ranges[0] == LiveRange{0, A, 8 * MiB, 0, Timestamp{5}});
    CHECK(h.ranges[1] == LiveRange{1, A, 2 * MiB, 5, std::nullopt});
    CHECK(h.ranges[2] == LiveRange{2, A + 3 * MiB, 5 * MiB, 5, std::nullopt});
    CHECK(h.warnings.empty());
  }
  SUBCASE("munmap at an edge truncates, full cover closes") {
    const std::vector<MappingEvent> ev = {{MappingKind::mmap, A, 8 * MiB, 0},
                                          {MappingKind::munmap, A, 1 * MiB, 2},
                                          {MappingKind::munmap, A, 16 * MiB, 4}};
    const auto h = reconstruct(ev);
    REQUIRE(h.ranges.size() == 2);
    CHECK(h.ranges[1] == LiveRange{1, A + MiB, 7 * MiB, 2, Timestamp{4}});
  }
  SUBCASE("munmap over nothing warns") {
    const std::vector<MappingEvent> ev = {{MappingKind::munmap, A, 4096, 1}};
    const auto h = reconstruct(ev);
    CHECK(h.ranges.empty());
    CHECK(h.warnings.size() == 1);
  }
  SUBCASE("overlapping mmap is reported and replaces the overlap") {
    const std::vector<MappingEvent> ev = {{MappingKind::mmap, A, 8 * MiB, 0},
                                          {MappingKind::mmap, A + 4 * MiB, 8 * MiB, 3}};
    const auto h = reconstruct(ev);
    CHECK(h.warnings.size() == 1);
    std::vector<LiveRange> live;
    for (const auto& r : h.ranges)
      if (!r.t_end) live.push_back(r);
    REQUIRE(live.size() == 2);
    CHECK(live[0].end() <= live[1].start);
  }
  SUBCASE("configurable threshold") {
    const std::vector<MappingEvent> ev = {{MappingKind::mmap, A, 3 * MiB, 0}};
    CHECK(reconstruct(ev, 2 * MiB).ranges.size() == 1);
  }
  SUBCASE("unordered events are rejected") {
    const std::vector<MappingEvent> ev = {{MappingKind::mmap, A, 8 * MiB, 5}, {MappingKind::munmap, A, 8 * MiB, 1}};
    CHECK_THROWS_AS(reconstruct(ev), std::invalid_argument);
  }
}

TEST_CASE("property: live ranges never overlap at the same time") {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<MappingEvent> ev;
    Timestamp t = 0;
    for (int i = 0; i < 30; ++i) {
      t += rng() % 3;
      const auto kind = rng() % 2 ? MappingKind::mmap : MappingKind::munmap;
      ev.push_back({kind, A + (rng() % 64) * MiB, (1 + rng() % 16) * MiB, t});
    }
    const auto h = reconstruct(ev);
    for (const auto& a : h.ranges) {
      for (const auto& b : h.ranges) {
        if (a.id >= b.id) continue;
        const auto a_end = a.t_end.value_or(UINT64_MAX), b_end = b.t_end.value_or(UINT64_MAX);
        const bool time_overlap = a.t_begin < b_end && b.t_begin < a_end;
        const bool addr_overlap = a.start < b.end() && b.start < a.end();
        CHECK_FALSE((time_overlap && addr_overlap));
      }
    }
  }
}

TEST_CASE("classify") {
  const std::vector<MappingEvent> maps = {{MappingKind::mmap, A, 8 * MiB, 100}};
  const auto h = reconstruct(maps);

  SUBCASE("inside the live range") {
    const auto d = dump_with(maps, {{0, 0, 150, {A + 4096}}});
    const auto c = classify(d, h);
    CHECK(c.assigned == 1);
    CHECK(c.per_mapping[0] == std::vector<Sample>{{0, 0, 150, A + 4096}});
  }
  SUBCASE("below every range") {
    const auto c = classify(dump_with(maps, {{0, 0, 150, {A - 8}}}), h);
    CHECK(c.discarded == 1);
    CHECK(c.assigned == 0);
  }
  SUBCASE("before the mmap time") {
    const auto c = classify(dump_with(maps, {{0, 0, 99, {A}}}), h);
    CHECK(c.discarded == 1);
  }
  SUBCASE("a split routes samples to the remainder live at their timestamp") {
    const std::vector<MappingEvent> split = {{MappingKind::mmap, A, 8 * MiB, 0},
                                             {MappingKind::munmap, A + 2 * MiB, MiB, 5}};
    const auto hs = reconstruct(split);
    const auto d = dump_with(split, {{0, 0, 4, {A + 2 * MiB, A + 6 * MiB}}, {0, 1, 5, {A + 2 * MiB, A + 6 * MiB, A}}});
    const auto c = classify(d, hs);
    CHECK(c.per_mapping[0].size() == 2);
    CHECK(c.per_mapping[1].size() == 1);
    CHECK(c.per_mapping[2].size() == 1);
    CHECK(c.discarded == 1);
    CHECK(c.assigned + c.discarded == d.sample_count());
  }
}

TEST_CASE("heatmap") {
  const LiveRange range{0, A, 8 * MiB, 0, std::nullopt};
  SUBCASE("single sample at the start") {
    const std::vector<Sample> s = {{0, 0, 0, A}};
    const auto m = heatmap(s, range);
    CHECK(m.at(0, 0) == 1);
    CHECK(m.total() == 1);
    CHECK(m.block_count == 8 * MiB / (4 * 4096));
  }
  SUBCASE("pages 0 and 3 share a 4-page block") {
    const std::vector<Sample> s = {{0, 0, 0, A}, {0, 0, 0, A + 3 * 4096 + 100}};
    const auto m = heatmap(s, range);
    CHECK(m.at(0, 0) == 2);
    CHECK(m.cells.size() == 1);
  }
  SUBCASE("stride sweep draws a diagonal band") {
    WorkloadSpec spec;
    spec.region_start = A;
    spec.region_len = 1536 * kPageSize;
    spec.stride_bytes = 64;
    const auto w = gen_stride_sweep(spec);
    for (std::uint64_t reset : {64, 128, 256}) {
      const auto d = sample_workload(w, reset);
      const auto h = reconstruct(d.mappings);
      const auto c = classify(d, h);
      const auto m = heatmap(c.per_mapping[0], h.ranges[0]);
      CHECK(m.total() == c.assigned);
      CHECK(is_diagonal_band(m));
    }
  }
  SUBCASE("band check rejects gaps and backward steps") {
    Heatmap m;
    m.cells[{0, 0}] = 1;
    m.cells[{0, 1}] = 1;
    m.cells[{1, 2}] = 1;
    CHECK(is_diagonal_band(m));
    m.cells[{1, 4}] = 1;
    CHECK_FALSE(is_diagonal_band(m));
    m.cells.erase({1, 4});
    m.cells[{2, 0}] = 1;
    CHECK_FALSE(is_diagonal_band(m));
  }
}

TEST_CASE("page histogram, hot pages, coverage") {
  SUBCASE("3 samples on one page") {
    const std::vector<Sample> s = {{0, 0, 0, A}, {0, 0, 0, A + 8}, {0, 1, 9, A + 4000}};
    const auto h = page_histogram(s);
    CHECK(h.histogram == std::map<std::uint64_t, std::uint64_t>{{3, 1}});
    CHECK(coverage(s) == 1);
  }
  SUBCASE("one sample on each of 5 pages") {
    std::vector<Sample> s;
    for (int p = 0; p < 5; ++p) s.push_back({0, 0, 0, A + p * 4096});
    const auto h = page_histogram(s);
    CHECK(h.histogram == std::map<std::uint64_t, std::uint64_t>{{1, 5}});
    CHECK(h.total() == 5);
    CHECK(coverage(s) == 5);
  }
  SUBCASE("threshold 50") {
    PageHistogram h;
    h.page_counts = {{1, 60}, {2, 10}};
    CHECK(hot_pages(h) == std::vector<std::uint64_t>{1});
    h.page_counts = {{1, 50}, {2, 51}, {3, 90}};
    CHECK(hot_pages(h) == std::vector<std::uint64_t>{3, 2});
    CHECK(top_pages(h, 2) == std::vector<std::uint64_t>{3, 2});
    CHECK(hot_pages(PageHistogram{}).empty());
  }
  SUBCASE("hot set workload: the hot pages are the top counts") {
    WorkloadSpec spec;
    spec.pattern = Pattern::hot_set;
    spec.region_start = A;
    spec.region_len = 8 * MiB;
    spec.load_count = 50'000;
    const auto w = gen_hot_set(spec);
    const auto d = sample_workload(w, 1);
    const auto hist = reconstruct(d.mappings);
    const auto c = classify(d, hist);
    const auto ph = page_histogram(c.per_mapping[0]);
    CHECK(ph.page_counts == w.page_counts);
    auto top = top_pages(ph, 10);
    std::sort(top.begin(), top.end());
    CHECK(top == w.hot_set);
  }
}

TEST_CASE("interrupt intervals") {
  auto constant = [](std::uint64_t n) {
    Workload w;
    for (std::uint64_t i = 0; i < n; ++i) w.loads.push_back({0, A + (i % 1000) * 64, i});
    return w;
  };
  SUBCASE("constant rate gives reset x threshold") {
    const auto w = constant(2688 * 10 + 100);
    const auto s64 = interrupt_intervals(sample_workload(w, 64));
    REQUIRE(s64.count() == 9);
    for (auto d : s64.deltas.at(0)) CHECK(d == 2688);
    CHECK(s64.mean == doctest::Approx(2688));
    CHECK(s64.median == doctest::Approx(2688));

    const auto s128 = interrupt_intervals(sample_workload(w, 128));
    for (auto d : s128.deltas.at(0)) CHECK(d == 5376);
    CHECK(s128.mean == doctest::Approx(2 * s64.mean));
  }
  SUBCASE("fewer than two batches is empty, not an error") {
    const auto s = interrupt_intervals(sample_workload(constant(100), 64));
    CHECK(s.count() == 0);
    CHECK(s.histogram.empty());
  }
  SUBCASE("default bin width is max/50") {
    const auto s = interrupt_intervals(sample_workload(constant(2688 * 5), 64));
    CHECK(s.bin_width == doctest::Approx(2688.0 / 50));
    CHECK(s.histogram.size() == 50);
    CHECK(s.histogram.back() == 4);
  }
  SUBCASE("gaps from dropped batches do not form intervals") {
    auto d = sample_workload(constant(2688 * 6), 64);
    auto& batches = d.threads[0].batches;
    batches.erase(batches.begin() + 2);
    const auto s = interrupt_intervals(d);
    CHECK(s.count() == 3);
  }
  SUBCASE("two phases give two separated modes") {
    WorkloadSpec spec;
    spec.pattern = Pattern::two_phase;
    spec.region_start = A;
    spec.region_len = 8 * MiB;
    spec.load_count = 400'000;
    spec.phase_loads = 50'000;
    const auto s = interrupt_intervals(sample_workload(gen_two_phase(spec), 64));
    const auto modes = histogram_modes(s.histogram);
    REQUIRE(modes.size() >= 2);
    const auto gap = modes[0] > modes[1] ? modes[0] - modes[1] : modes[1] - modes[0];
    CHECK(gap >= 5);
  }
}

TEST_CASE("histogram modes") {
  const std::vector<std::uint64_t> h = {0, 3, 1, 0, 5, 5, 2, 0, 4};
  CHECK(histogram_modes(h) == std::vector<std::size_t>{4, 8, 1});
  CHECK(histogram_modes(std::vector<std::uint64_t>{}).empty());
  CHECK(histogram_modes(std::vector<std::uint64_t>{0, 0}).empty());
}

TEST_CASE("overhead estimate") {
  SamplerConfig c;
  c.reset = 64;
  c.buffer_bytes = 8192;
  c.handler_cycles = 20'000;
  CHECK(overhead_estimate(c, 0, 1.4e9) == 0.0);
  CHECK(overhead_estimate(c, 1e7, 1.4e9) == doctest::Approx(0.053146258503401364).epsilon(1e-12));
  c.reset = 256;
  CHECK(overhead_estimate(c, 1e7, 1.4e9) == doctest::Approx(0.013286564625850341).epsilon(1e-12));
  CHECK_THROWS_AS(overhead_estimate(c, -1, 1.4e9), std::invalid_argument);
  CHECK_THROWS_AS(overhead_estimate(c, 1, 0), std::invalid_argument);
}

TEST_CASE("property: overhead linearity") {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 100; ++i) {
    SamplerConfig c;
    c.reset = 1 + rng() % 512;
    c.buffer_bytes = 192 * (2 + rng() % 300);
    c.threshold_records = 1 + rng() % (c.buffer_bytes / 192 / 2);
    c.handler_cycles = 1 + rng() % 100000;
    const double rate = static_cast<double>(rng() % 100'000'000);
    const double base = overhead_estimate(c, rate, 1e9);
    CHECK(overhead_estimate(c, 2 * rate, 1e9) == doctest::Approx(2 * base));
    auto h = c;
    h.handler_cycles *= 3;
    CHECK(overhead_estimate(h, rate, 1e9) == doctest::Approx(3 * base));
    auto r = c;
    r.reset *= 2;
    CHECK(overhead_estimate(r, rate, 1e9) == doctest::Approx(base / 2));
    auto t = c;
    t.threshold_records *= 2;
    CHECK(overhead_estimate(t, rate, 1e9) == doctest::Approx(base / 2));
  }
}

TEST_CASE("oracle equivalence: reset 1, bypass, unbounded ring") {
  WorkloadSpec spec;
  spec.pattern = Pattern::uniform_random;
  spec.region_start = A;
  spec.region_len = 6 * MiB;
  spec.load_count = 20'000;
  spec.thread_count = 3;
  const auto w = gen_uniform_random(spec);
  CacheConfig bypass;
  bypass.bypass = true;
  const auto misses = classify_stream(w.loads, bypass).misses;
  SamplerConfig c;
  c.reset = 1;
  const auto d = make_dump(c, w.mappings, run_threads(c, misses));
  const auto h = reconstruct(d.mappings);
  const auto cl = classify(d, h);
  CHECK(cl.discarded == 0);
  CHECK(page_histogram(cl.per_mapping[0]).page_counts == w.page_counts);
  CHECK(coverage(cl.per_mapping[0]) == w.page_counts.size());
}
