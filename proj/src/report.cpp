#include "pebssim/report.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace pebssim {

namespace {

class File {
 public:
  explicit File(const std::filesystem::path& path) : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) {
      throw std::runtime_error("cannot write " + path.string());
    }
  }
  ~File() noexcept(false) {
    out_.close();
    if (!out_ && std::uncaught_exceptions() == 0) {
      throw std::runtime_error("write failed: " + path_.string());
    }
  }
  std::ostream& out() { return out_; }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

std::string hex(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "0x%" PRIx64, v);
  return buf;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

// White-yellow-red ramp over t in [0, 1].
std::string heat_color(double t) {
  t = std::clamp(t, 0.0, 1.0);
  int r, g, b;
  if (t < 0.5) {
    const double u = t / 0.5;
    r = 255;
    g = 255;
    b = static_cast<int>(std::lround(200 * (1 - u)));
  } else {
    const double u = (t - 0.5) / 0.5;
    r = static_cast<int>(std::lround(255 - 100 * u));
    g = static_cast<int>(std::lround(255 * (1 - u)));
    b = 0;
  }
  char buf[16];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
  return buf;
}

struct Bar {
  std::string label;
  std::uint64_t value;
};

void bar_chart_svg(const std::vector<Bar>& bars, const std::string& title, const std::string& x_label,
                   const std::string& y_label, const std::filesystem::path& path) {
  constexpr double kWidth = 800, kHeight = 400, kLeft = 70, kBottom = 50, kTop = 30, kRight = 20;
  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;
  std::uint64_t max_v = 1;
  for (const auto& b : bars) max_v = std::max(max_v, b.value);

  File f(path);
  auto& o = f.out();
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
    << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << kWidth / 2 << "\" y=\"18\" text-anchor=\"middle\" font-size=\"14\">" << title << "</text>\n";
  if (!bars.empty()) {
    const double step = plot_w / static_cast<double>(bars.size());
    const std::size_t label_every = std::max<std::size_t>(1, bars.size() / 10);
    for (std::size_t i = 0; i < bars.size(); ++i) {
      const double h = plot_h * static_cast<double>(bars[i].value) / static_cast<double>(max_v);
      const double x = kLeft + step * static_cast<double>(i);
      o << "<rect x=\"" << fmt(x) << "\" y=\"" << fmt(kTop + plot_h - h) << "\" width=\""
        << fmt(std::max(step * 0.9, 0.5)) << "\" height=\"" << fmt(h) << "\" fill=\"steelblue\"><title>"
        << bars[i].label << ": " << bars[i].value << "</title></rect>\n";
      if (i % label_every == 0) {
        o << "<text x=\"" << fmt(x + step / 2) << "\" y=\"" << fmt(kTop + plot_h + 14)
          << "\" text-anchor=\"middle\">" << bars[i].label << "</text>\n";
      }
    }
  }
  o << "<line x1=\"" << kLeft << "\" y1=\"" << kTop + plot_h << "\" x2=\"" << kLeft + plot_w << "\" y2=\""
    << kTop + plot_h << "\" stroke=\"black\"/>\n";
  o << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\"" << kTop + plot_h
    << "\" stroke=\"black\"/>\n";
  o << "<text x=\"" << kLeft - 6 << "\" y=\"" << kTop + 4 << "\" text-anchor=\"end\">" << max_v << "</text>\n";
  o << "<text x=\"" << kLeft - 6 << "\" y=\"" << kTop + plot_h << "\" text-anchor=\"end\">0</text>\n";
  o << "<text x=\"" << kLeft + plot_w / 2 << "\" y=\"" << kHeight - 10 << "\" text-anchor=\"middle\">" << x_label
    << "</text>\n";
  o << "<text transform=\"translate(16," << kTop + plot_h / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
    << y_label << "</text>\n";
  o << "</svg>\n";
}

}  // namespace

void write_heatmap_csv(const Heatmap& map, const std::filesystem::path& path) {
  File f(path);
  f.out() << "batch_seq,block,count\n";
  for (const auto& [key, count] : map.cells) {
    f.out() << key.first << ',' << key.second << ',' << count << '\n';
  }
}

void write_heatmap_svg(const Heatmap& map, const LiveRange& range, const std::filesystem::path& path) {
  constexpr double kWidth = 1000, kHeight = 600, kLeft = 110, kBottom = 45, kTop = 30, kRight = 20;
  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;
  const double cols = static_cast<double>(std::max<std::uint64_t>(map.batch_count, 1));
  const double rows = static_cast<double>(std::max<std::uint64_t>(map.block_count, 1));
  const double cw = plot_w / cols;
  const double rh = plot_h / rows;

  std::uint64_t max_count = 1;
  for (const auto& [_, c] : map.cells) max_count = std::max(max_count, c);
  const double log_max = std::log1p(static_cast<double>(max_count));

  File f(path);
  auto& o = f.out();
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
    << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << kWidth / 2 << "\" y=\"18\" text-anchor=\"middle\" font-size=\"14\">mapping "
    << map.mapping_id << " [" << hex(range.start) << ", " << hex(range.end()) << "), " << map.block_pages
    << "-page blocks</text>\n";
  o << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << plot_w << "\" height=\"" << plot_h
    << "\" fill=\"#f4f4f4\" stroke=\"black\"/>\n";
  o << "<g shape-rendering=\"crispEdges\">\n";
  for (const auto& [key, count] : map.cells) {
    const double x = kLeft + cw * static_cast<double>(key.first);
    const double y = kTop + plot_h - rh * static_cast<double>(key.second + 1);
    o << "<rect x=\"" << fmt(x) << "\" y=\"" << fmt(y) << "\" width=\"" << fmt(std::max(cw, 0.5))
      << "\" height=\"" << fmt(std::max(rh, 0.5)) << "\" fill=\""
      << heat_color(std::log1p(static_cast<double>(count)) / log_max) << "\"/>\n";
  }
  o << "</g>\n";
  o << "<text x=\"" << kLeft - 6 << "\" y=\"" << kTop + plot_h << "\" text-anchor=\"end\">" << hex(range.start)
    << "</text>\n";
  o << "<text x=\"" << kLeft - 6 << "\" y=\"" << kTop + 10 << "\" text-anchor=\"end\">" << hex(range.end())
    << "</text>\n";
  o << "<text x=\"" << kLeft << "\" y=\"" << kTop + plot_h + 14 << "\">0</text>\n";
  o << "<text x=\"" << kLeft + plot_w << "\" y=\"" << kTop + plot_h + 14 << "\" text-anchor=\"end\">"
    << map.batch_count << "</text>\n";
  o << "<text x=\"" << kLeft + plot_w / 2 << "\" y=\"" << kHeight - 10
    << "\" text-anchor=\"middle\">sample set id</text>\n";
  o << "<text transform=\"translate(16," << kTop + plot_h / 2
    << ") rotate(-90)\" text-anchor=\"middle\">virtual address</text>\n";
  o << "</svg>\n";
}

void write_page_histogram_csv(const PageHistogram& hist, const std::filesystem::path& path) {
  File f(path);
  f.out() << "misses,pages\n";
  for (const auto& [misses, pages] : hist.histogram) {
    f.out() << misses << ',' << pages << '\n';
  }
}

void write_page_histogram_svg(const PageHistogram& hist, const std::filesystem::path& path) {
  std::vector<Bar> bars;
  if (!hist.histogram.empty()) {
    const auto max_misses = hist.histogram.rbegin()->first;
    for (std::uint64_t n = 1; n <= max_misses; ++n) {
      const auto it = hist.histogram.find(n);
      bars.push_back({std::to_string(n), it == hist.histogram.end() ? 0 : it->second});
    }
  }
  bar_chart_svg(bars, "Access histogram per page", "sampled L2 misses", "pages", path);
}

void write_hot_pages_csv(const PageHistogram& hist, std::span<const std::uint64_t> pages,
                         const std::filesystem::path& path) {
  File f(path);
  f.out() << "rank,page_addr,count\n";
  for (std::size_t i = 0; i < pages.size(); ++i) {
    const auto it = hist.page_counts.find(pages[i]);
    f.out() << i << ',' << hex(pages[i] * kPageSize) << ',' << (it == hist.page_counts.end() ? 0 : it->second)
            << '\n';
  }
}

void write_intervals_csv(const IntervalStats& stats, const std::filesystem::path& path) {
  File f(path);
  f.out() << "thread_id,delta\n";
  for (const auto& [tid, deltas] : stats.deltas) {
    for (auto d : deltas) {
      f.out() << tid << ',' << d << '\n';
    }
  }
}

void write_interval_histogram_csv(const IntervalStats& stats, const std::filesystem::path& path) {
  File f(path);
  f.out() << "bin,lower,upper,count\n";
  for (std::size_t i = 0; i < stats.histogram.size(); ++i) {
    f.out() << i << ',' << fmt(stats.bin_width * static_cast<double>(i)) << ','
            << fmt(stats.bin_width * static_cast<double>(i + 1)) << ',' << stats.histogram[i] << '\n';
  }
}

void write_interval_histogram_svg(const IntervalStats& stats, const std::filesystem::path& path) {
  std::vector<Bar> bars;
  for (std::size_t i = 0; i < stats.histogram.size(); ++i) {
    bars.push_back({fmt(stats.bin_width * static_cast<double>(i)), stats.histogram[i]});
  }
  bar_chart_svg(bars, "Elapsed time between PEBS interrupts", "interval (logical cycles)", "interrupts", path);
}

}  // namespace pebssim
