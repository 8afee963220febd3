#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "pebssim/workloads.hpp"

using namespace pebssim;

namespace {

std::filesystem::path temp_dir() {
  auto dir = std::filesystem::temp_directory_path() / "pebssim_test_workloads";
  std::filesystem::create_directories(dir);
  return dir;
}

std::filesystem::path write_file(const std::string& name, const std::string& content) {
  const auto path = temp_dir() / name;
  std::ofstream(path, std::ios::binary) << content;
  return path;
}

WorkloadSpec sweep_spec(std::uint64_t pages, std::uint64_t stride, std::uint64_t iterations) {
  WorkloadSpec s;
  s.pattern = Pattern::stride_sweep;
  s.region_start = 0x10000000;
  s.region_len = pages * kPageSize;
  s.stride_bytes = stride;
  s.iterations = iterations;
  return s;
}

// Every load falls inside a region mapped before it and unmapped after it.
void check_loads_mapped(const Workload& w) {
  for (const auto& l : w.loads) {
    bool inside = false;
    for (const auto& m : w.mappings) {
      if (m.kind != MappingKind::mmap || l.addr < m.start || l.addr - m.start >= m.length || m.time > l.time) continue;
      bool unmapped = false;
      for (const auto& u : w.mappings) {
        if (u.kind == MappingKind::munmap && u.time <= l.time && l.addr >= u.start && l.addr - u.start < u.length) {
          unmapped = true;
        }
      }
      inside = inside || !unmapped;
    }
    REQUIRE(inside);
  }
}

}  // namespace

TEST_CASE("stride sweep, one pass over 16 pages") {
  const auto w = gen_stride_sweep(sweep_spec(16, 4096, 1));
  REQUIRE(w.loads.size() == 16);
  for (std::size_t i = 0; i < 16; ++i) {
    CHECK(w.loads[i].addr == 0x10000000 + i * 4096);
    CHECK(w.loads[i].time == i);
  }
  REQUIRE(w.mappings.size() == 2);
  CHECK(w.mappings[0] == MappingEvent{MappingKind::mmap, 0x10000000, 16 * 4096, 0});
  CHECK(w.mappings[1].kind == MappingKind::munmap);
  CHECK(w.mappings[1].time == 16);
}

TEST_CASE("stride sweep repeats the sequence with strictly increasing time") {
  const auto w = gen_stride_sweep(sweep_spec(16, 4096, 2));
  REQUIRE(w.loads.size() == 32);
  for (std::size_t i = 0; i < 16; ++i) CHECK(w.loads[i].addr == w.loads[i + 16].addr);
  for (std::size_t i = 1; i < 32; ++i) CHECK(w.loads[i].time > w.loads[i - 1].time);
  check_loads_mapped(w);
}

TEST_CASE("6 MiB region announces a 6 MiB mapping") {
  const auto w = gen_stride_sweep(sweep_spec(1536, 4096, 1));
  CHECK(w.mappings[0].length == 6 * (std::uint64_t{1} << 20));
  CHECK(w.mappings[0].length > 4 * (std::uint64_t{1} << 20));
}

TEST_CASE("rate rescales logical time") {
  auto s = sweep_spec(4, 64, 1);
  s.events_per_unit_time = 4.0;
  const auto w = gen_stride_sweep(s);
  CHECK(w.loads[3].time == 0);
  CHECK(w.loads[4].time == 1);
  s.events_per_unit_time = 0.5;
  CHECK(gen_stride_sweep(s).loads[3].time == 6);
}

TEST_CASE("threads sweep disjoint slices") {
  auto s = sweep_spec(10, 4096, 1);
  s.thread_count = 3;
  const auto w = gen_stride_sweep(s);
  std::map<ThreadId, std::uint64_t> per;
  for (const auto& l : w.loads) ++per[l.thread_id];
  CHECK(per[0] == 3);
  CHECK(per[1] == 3);
  CHECK(per[2] == 4);
  CHECK(w.page_counts.size() == 10);
}

TEST_CASE("hot set") {
  WorkloadSpec s;
  s.pattern = Pattern::hot_set;
  s.region_start = 0x20000000;
  s.region_len = 64 * kPageSize;

  SUBCASE("all loads on a single hot page at share 1") {
    s.hot_pages = 1;
    s.hot_share = 1.0;
    s.load_count = 500;
    const auto w = gen_hot_set(s);
    REQUIRE(w.hot_set.size() == 1);
    CHECK(w.page_counts.size() == 1);
    CHECK(w.page_counts.at(w.hot_set[0]) == 500);
  }
  SUBCASE("seeded and reproducible") {
    s.seed = 42;
    CHECK(gen_hot_set(s).loads == gen_hot_set(s).loads);
    auto t = s;
    t.seed = 43;
    CHECK(gen_hot_set(t).loads != gen_hot_set(s).loads);
  }
  SUBCASE("hot pages take about 90% of 10,000 loads") {
    s.region_len = 1024 * kPageSize;
    s.load_count = 10'000;
    const auto w = gen_hot_set(s);
    REQUIRE(w.hot_set.size() == 10);
    std::uint64_t on_hot = 0;
    for (const auto& l : w.loads) {
      if (std::find(w.hot_set.begin(), w.hot_set.end(), page_of(l.addr)) != w.hot_set.end()) ++on_hot;
    }
    // 9000 expected from the hot draw plus ~10 from the uniform remainder;
    // binomial sd is 30, allow 5 sd.
    CHECK(on_hot > 9010 - 150);
    CHECK(on_hot < 9010 + 150);
    std::uint64_t from_truth = 0;
    for (auto p : w.hot_set) from_truth += w.page_counts.at(p);
    CHECK(from_truth == on_hot);
    check_loads_mapped(w);
  }
  SUBCASE("invalid hot set") {
    s.hot_pages = 65;
    CHECK_THROWS_AS(gen_hot_set(s), ConfigError);
  }
}

TEST_CASE("uniform random") {
  WorkloadSpec s;
  s.pattern = Pattern::uniform_random;
  s.region_start = 0x30000000;
  SUBCASE("reproducible") {
    s.region_len = 100 * kPageSize;
    CHECK(gen_uniform_random(s).loads == gen_uniform_random(s).loads);
  }
  SUBCASE("one page") {
    s.region_len = kPageSize;
    s.load_count = 100;
    const auto w = gen_uniform_random(s);
    CHECK(w.page_counts.size() == 1);
  }
  SUBCASE("two pages split evenly") {
    s.region_len = 2 * kPageSize;
    s.load_count = 10'000;
    const auto w = gen_uniform_random(s);
    REQUIRE(w.page_counts.size() == 2);
    const auto first = w.page_counts.begin()->second;
    // sd of Binomial(10000, 0.5) is 50; allow 5 sd.
    CHECK(first > 5000 - 250);
    CHECK(first < 5000 + 250);
  }
}

TEST_CASE("two phase alternates load rates") {
  WorkloadSpec s;
  s.pattern = Pattern::two_phase;
  s.region_start = 0x10000000;
  s.region_len = 64 * kPageSize;
  s.load_count = 400;
  s.phase_loads = 100;
  s.phase_slowdown = 2.0;
  const auto w = gen_two_phase(s);
  REQUIRE(w.loads.size() == 400);
  CHECK(w.loads[99].time == 99);
  CHECK(w.loads[100].time == 100);
  CHECK(w.loads[199].time == 100 + 2 * 99);
  CHECK(w.loads[200].time == 300);
  for (std::size_t i = 1; i < w.loads.size(); ++i) CHECK(w.loads[i].time >= w.loads[i - 1].time);
}

TEST_CASE("WorkloadSpec validation") {
  WorkloadSpec s;
  s.region_start = 0x1001;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = {};
  s.stride_bytes = 0;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = {};
  s.region_len = 32;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = {};
  s.events_per_unit_time = 0;
  CHECK_THROWS_AS(s.validate(), ConfigError);
}

TEST_CASE("PortableRng is pinned to mt19937_64") {
  PortableRng rng(5489);
  // First output of the standard's default-seeded mt19937_64.
  CHECK(rng.next() == 14514284786278117030ull);
  PortableRng bounded(1);
  for (int i = 0; i < 1000; ++i) {
    CHECK(bounded.below(7) < 7);
    const double u = bounded.unit();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
}

TEST_CASE("ingest_csv") {
  SUBCASE("single row") {
    const auto p = write_file("one.csv", "thread_id,addr,time\n0,0x7f0000000000,100\n");
    const auto w = ingest_csv(p);
    REQUIRE(w.loads.size() == 1);
    CHECK(w.loads[0] == LoadEvent{0, 0x7f0000000000, 100});
  }
  SUBCASE("header only") {
    const auto p = write_file("empty.csv", "thread_id,addr,time\n");
    const auto w = ingest_csv(p);
    CHECK(w.loads.empty());
    CHECK(w.mappings.empty());
  }
  SUBCASE("malformed row reports its line") {
    const auto p = write_file("bad.csv", "thread_id,addr,time\n0,0x10,1\n0,zz,2\n");
    try {
      ingest_csv(p);
      FAIL("expected CsvError");
    } catch (const CsvError& e) {
      CHECK(e.line() == 3);
    }
  }
  SUBCASE("wrong field count") {
    const auto p = write_file("short.csv", "thread_id,addr,time\n0,0x10\n");
    CHECK_THROWS_AS(ingest_csv(p), CsvError);
  }
  SUBCASE("time going backwards on a thread") {
    const auto p = write_file("back.csv", "thread_id,addr,time\n0,0x10,5\n1,0x10,1\n0,0x20,4\n");
    try {
      ingest_csv(p);
      FAIL("expected CsvError");
    } catch (const CsvError& e) {
      CHECK(e.line() == 4);
    }
  }
  SUBCASE("bad header") {
    const auto p = write_file("hdr.csv", "tid,addr,time\n");
    CHECK_THROWS_AS(ingest_csv(p), CsvError);
  }
  SUBCASE("misaligned mapping") {
    const auto loads = write_file("l.csv", "thread_id,addr,time\n");
    const auto maps = write_file("m.csv", "kind,start,length,time\nmmap,0x1001,4096,0\n");
    CHECK_THROWS_AS(ingest_csv(loads, maps), CsvError);
    const auto zero = write_file("m0.csv", "kind,start,length,time\nmmap,0x1000,0,0\n");
    CHECK_THROWS_AS(ingest_csv(loads, zero), CsvError);
  }
  SUBCASE("round trip of a generated sweep") {
    auto s = sweep_spec(32, 256, 3);
    s.thread_count = 2;
    const auto w = gen_stride_sweep(s);
    const auto lp = temp_dir() / "rt_loads.csv";
    const auto mp = temp_dir() / "rt_maps.csv";
    write_loads_csv(lp, w.loads);
    write_mappings_csv(mp, w.mappings);
    const auto back = ingest_csv(lp, mp);
    CHECK(back.loads == w.loads);
    CHECK(back.mappings == w.mappings);
    CHECK(back.page_counts == w.page_counts);
  }
}
