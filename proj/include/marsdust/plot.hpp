// Quick-look grayscale PNG charts. Every chart-writing command also emits the
// numbers as CSV/JSON; PNGs here are unlabeled visual summaries, not the data
// of record.
#pragma once

#include "marsdust/image.hpp"

namespace marsdust {

struct Canvas {
  int h, w;
  std::vector<uint8_t> px;

  Canvas(int height, int width) : h(height), w(width) {
    require(h >= 8 && w >= 8, "canvas: too small");
    px.assign(static_cast<size_t>(h) * w, 255);
  }

  void set(int y, int x, uint8_t v) {
    if (y >= 0 && y < h && x >= 0 && x < w) px[static_cast<size_t>(y) * w + x] = v;
  }

  void fill_rect(int y0, int x0, int y1, int x1, uint8_t v) {
    for (int y = std::max(0, y0); y <= std::min(h - 1, y1); ++y)
      for (int x = std::max(0, x0); x <= std::min(w - 1, x1); ++x)
        px[static_cast<size_t>(y) * w + x] = v;
  }

  void line(int y0, int x0, int y1, int x1, uint8_t v) {
    int dy = std::abs(y1 - y0), dx = std::abs(x1 - x0);
    int sy = y0 < y1 ? 1 : -1, sx = x0 < x1 ? 1 : -1;
    int err = dx - dy;
    while (true) {
      set(y0, x0, v);
      if (y0 == y1 && x0 == x1) break;
      int e2 = 2 * err;
      if (e2 > -dy) {
        err -= dy;
        x0 += sx;
      }
      if (e2 < dx) {
        err += dx;
        y0 += sy;
      }
    }
  }

  void frame(uint8_t v = 0) {
    line(0, 0, 0, w - 1, v);
    line(h - 1, 0, h - 1, w - 1, v);
    line(0, 0, h - 1, 0, v);
    line(0, w - 1, h - 1, w - 1, v);
  }

  void save(const fs::path& path) const { detail::save_png_gray(path, px.data(), h, w); }
};

namespace detail {

inline std::pair<double, double> series_range(const std::vector<std::vector<double>>& series) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& s : series)
    for (double v : s) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  require(std::isfinite(lo) && std::isfinite(hi), "plot: series contain non-finite values");
  if (hi == lo) {
    hi += 0.5;
    lo -= 0.5;
  }
  return {lo, hi};
}

}  // namespace detail

// Polylines over a shared x index (loss curves). Series draw darkest first.
inline void plot_series_png(const fs::path& path,
                            const std::vector<std::vector<double>>& series, int height = 240,
                            int width = 360) {
  require(!series.empty(), "plot_series_png: no series");
  for (const auto& s : series) require(!s.empty(), "plot_series_png: empty series");
  auto [lo, hi] = detail::series_range(series);

  Canvas c(height, width);
  const int m = 6;  // margin
  c.frame(160);
  size_t longest = 0;
  for (const auto& s : series) longest = std::max(longest, s.size());
  for (size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    uint8_t shade = static_cast<uint8_t>(std::min<size_t>(200, si * 90));
    auto yp = [&](double v) {
      return static_cast<int>(std::lround((height - 1 - m) -
                                          (v - lo) / (hi - lo) * (height - 1 - 2 * m)));
    };
    auto xp = [&](size_t i) {
      return longest > 1 ? static_cast<int>(m + i * (width - 1.0 - 2 * m) / (longest - 1))
                         : width / 2;
    };
    if (s.size() == 1) {
      c.fill_rect(yp(s[0]) - 1, xp(0) - 1, yp(s[0]) + 1, xp(0) + 1, shade);
      continue;
    }
    for (size_t i = 1; i < s.size(); ++i)
      c.line(yp(s[i - 1]), xp(i - 1), yp(s[i]), xp(i), shade);
  }
  c.save(path);
}

// Vertical bars (histograms). One bar per bin, equal widths.
inline void plot_bars_png(const fs::path& path, const std::vector<double>& heights,
                          int height = 240, int width = 520) {
  require(!heights.empty(), "plot_bars_png: no bars");
  double hi = 0;
  for (double v : heights) {
    require(v >= 0 && std::isfinite(v), "plot_bars_png: bar heights must be finite and >= 0");
    hi = std::max(hi, v);
  }
  if (hi == 0) hi = 1;

  Canvas c(height, width);
  const int m = 6;
  c.frame(160);
  const double bw = (width - 2.0 * m) / heights.size();
  for (size_t i = 0; i < heights.size(); ++i) {
    int x0 = static_cast<int>(m + i * bw);
    int x1 = static_cast<int>(m + (i + 1) * bw) - (bw >= 3 ? 1 : 0);
    int top = static_cast<int>(std::lround((height - 1 - m) -
                                           heights[i] / hi * (height - 1 - 2 * m)));
    c.fill_rect(top, x0, height - 1 - m, std::max(x0, x1), 64);
  }
  c.save(path);
}

// Cell-shaded matrix (confusion matrices): darker = larger.
inline void plot_heatmap_png(const fs::path& path,
                             const std::vector<std::vector<double>>& cells,
                             int cell_px = 72) {
  require(!cells.empty() && !cells[0].empty(), "plot_heatmap_png: empty matrix");
  size_t rows = cells.size(), cols = cells[0].size();
  double hi = 0;
  for (const auto& row : cells) {
    require(row.size() == cols, "plot_heatmap_png: ragged matrix");
    for (double v : row) {
      require(v >= 0 && std::isfinite(v), "plot_heatmap_png: cells must be finite and >= 0");
      hi = std::max(hi, v);
    }
  }
  if (hi == 0) hi = 1;

  Canvas c(static_cast<int>(rows) * cell_px + 1, static_cast<int>(cols) * cell_px + 1);
  for (size_t r = 0; r < rows; ++r)
    for (size_t col = 0; col < cols; ++col) {
      uint8_t shade = static_cast<uint8_t>(std::lround(235 - cells[r][col] / hi * 215));
      c.fill_rect(static_cast<int>(r) * cell_px, static_cast<int>(col) * cell_px,
                  static_cast<int>(r + 1) * cell_px, static_cast<int>(col + 1) * cell_px, shade);
    }
  for (size_t r = 0; r <= rows; ++r)
    c.line(static_cast<int>(r) * cell_px, 0, static_cast<int>(r) * cell_px, c.w - 1, 90);
  for (size_t col = 0; col <= cols; ++col)
    c.line(0, static_cast<int>(col) * cell_px, c.h - 1, static_cast<int>(col) * cell_px, 90);
  c.save(path);
}

}  // namespace marsdust
