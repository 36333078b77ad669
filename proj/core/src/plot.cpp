#include "u2ad/plot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "u2ad/errors.hpp"

namespace u2ad {

Canvas::Canvas(int width, int height, Rgb fill)
    : width_(width), height_(height), pixels_(static_cast<std::size_t>(std::max(0, width * height)), fill) {
  if (width <= 0 || height <= 0) throw ArgumentError("Canvas: size must be positive");
}

void Canvas::set(int x, int y, Rgb c) {
  if (x < 0 || y < 0 || x >= width_ || y >= height_) return;
  pixels_[static_cast<std::size_t>(y) * width_ + x] = c;
}

void Canvas::line(int x0, int y0, int x1, int y1, Rgb c) {
  const int dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
  const int dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
  int err = dx + dy;
  for (;;) {
    set(x0, y0, c);
    if (x0 == x1 && y0 == y1) break;
    const int e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x0 += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y0 += sy;
    }
  }
}

void Canvas::rect(int x0, int y0, int x1, int y1, Rgb c) {
  line(x0, y0, x1, y0, c);
  line(x1, y0, x1, y1, c);
  line(x1, y1, x0, y1, c);
  line(x0, y1, x0, y0, c);
}

void Canvas::fill_rect(int x0, int y0, int x1, int y1, Rgb c) {
  for (int y = std::min(y0, y1); y <= std::max(y0, y1); ++y) {
    for (int x = std::min(x0, x1); x <= std::max(x0, x1); ++x) set(x, y, c);
  }
}

void Canvas::write_ppm(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "P6\n" << width_ << ' ' << height_ << "\n255\n";
  for (const Rgb& p : pixels_) {
    const char px[3] = {static_cast<char>(p.r), static_cast<char>(p.g), static_cast<char>(p.b)};
    out.write(px, 3);
  }
  if (!out) throw IoError("write failed: " + path.string());
}

Rgb palette(std::size_t i) {
  static const Rgb colors[] = {{31, 119, 180}, {214, 39, 40}, {44, 160, 44}, {255, 127, 14}, {148, 103, 189},
                               {140, 86, 75}};
  return colors[i % (sizeof colors / sizeof colors[0])];
}

namespace {

std::uint8_t byte(double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); }

struct Range {
  double lo = 0.0;
  double hi = 1.0;
};

Range range_of(const std::vector<std::vector<double>>& data) {
  Range r{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  for (const auto& s : data) {
    for (double v : s) {
      if (std::isnan(v)) continue;
      r.lo = std::min(r.lo, v);
      r.hi = std::max(r.hi, v);
    }
  }
  if (!(r.lo <= r.hi)) return {0.0, 1.0};
  if (r.hi - r.lo < 1e-12) {
    r.lo -= 0.5;
    r.hi += 0.5;
  }
  return r;
}

constexpr int kMargin = 12;

int to_y(double v, const Range& r, int height) {
  const double t = (v - r.lo) / (r.hi - r.lo);
  return height - 1 - kMargin - static_cast<int>(std::lround(t * (height - 1 - 2 * kMargin)));
}

void axes(Canvas& c) {
  const Rgb black{0, 0, 0};
  c.line(kMargin, kMargin, kMargin, c.height() - 1 - kMargin, black);
  c.line(kMargin, c.height() - 1 - kMargin, c.width() - 1 - kMargin, c.height() - 1 - kMargin, black);
}

}  // namespace

Canvas overlay_plot(const Image& image, const Image& ano_map, const std::vector<ConnectedComponent>& retained) {
  if (!image.same_shape(ano_map)) throw ArgumentError("overlay_plot: shape mismatch");
  Canvas c(image.width(), image.height());
  double peak = 0.0;
  for (double v : ano_map.values()) peak = std::max(peak, v);
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) {
      const double g = std::clamp(image(y, x), 0.0, 1.0);
      const double a = peak > 0.0 ? ano_map(y, x) / peak : 0.0;
      c.set(x, y, {byte(g * (1 - a) + a), byte(g * (1 - a)), byte(g * (1 - a))});
    }
  }
  for (const auto& cc : retained) c.rect(cc.bbox.col0, cc.bbox.row0, cc.bbox.col1, cc.bbox.row1, {0, 220, 0});
  return c;
}

Canvas curve_plot(const std::vector<double>& curve, const std::vector<int>& boundaries, int height) {
  Canvas c(static_cast<int>(std::max<std::size_t>(1, curve.size())), height);
  for (int b : boundaries) c.line(b, 0, b, height - 1, {170, 170, 170});
  if (curve.empty()) return c;
  const Range r = range_of({curve, {0.0}});
  for (std::size_t j = 1; j < curve.size(); ++j) {
    c.line(static_cast<int>(j - 1), to_y(curve[j - 1], r, height), static_cast<int>(j), to_y(curve[j], r, height),
           palette(1));
  }
  return c;
}

Canvas line_chart(const std::vector<std::vector<double>>& series, int width, int height) {
  Canvas c(width, height);
  axes(c);
  const Range r = range_of(series);
  std::size_t longest = 1;
  for (const auto& s : series) longest = std::max(longest, s.size());
  const double step = longest > 1 ? static_cast<double>(width - 1 - 2 * kMargin) / (longest - 1) : 0.0;
  for (std::size_t k = 0; k < series.size(); ++k) {
    int px = -1, py = -1;
    for (std::size_t j = 0; j < series[k].size(); ++j) {
      if (std::isnan(series[k][j])) continue;
      const int x = kMargin + static_cast<int>(std::lround(j * step));
      const int y = to_y(series[k][j], r, height);
      if (px >= 0) c.line(px, py, x, y, palette(k));
      else c.set(x, y, palette(k));
      px = x;
      py = y;
    }
  }
  return c;
}

Canvas box_plot(const std::vector<std::vector<double>>& groups, int width, int height) {
  Canvas c(width, height);
  axes(c);
  const Range r = range_of(groups);
  const int slot = groups.empty() ? 0 : (width - 2 * kMargin) / static_cast<int>(groups.size());
  for (std::size_t g = 0; g < groups.size(); ++g) {
    if (groups[g].empty()) continue;
    std::vector<double> v = groups[g];
    std::sort(v.begin(), v.end());
    auto q = [&](double p) {
      const double pos = p * (v.size() - 1);
      const auto i = static_cast<std::size_t>(pos);
      const double f = pos - i;
      return i + 1 < v.size() ? v[i] * (1 - f) + v[i + 1] * f : v[i];
    };
    const int cx = kMargin + slot * static_cast<int>(g) + slot / 2;
    const int half = std::max(2, slot / 4);
    const Rgb col = palette(g);
    c.line(cx, to_y(v.front(), r, height), cx, to_y(v.back(), r, height), col);
    c.fill_rect(cx - half, to_y(q(0.75), r, height), cx + half, to_y(q(0.25), r, height), {230, 230, 230});
    c.rect(cx - half, to_y(q(0.75), r, height), cx + half, to_y(q(0.25), r, height), col);
    c.line(cx - half, to_y(q(0.5), r, height), cx + half, to_y(q(0.5), r, height), {0, 0, 0});
  }
  return c;
}

}  // namespace u2ad
