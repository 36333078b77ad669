#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "u2ad/components.hpp"
#include "u2ad/raster.hpp"

namespace u2ad {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
};

/// RGB raster with a few drawing primitives; written as binary PPM (P6).
class Canvas {
 public:
  Canvas(int width, int height, Rgb fill = {255, 255, 255});

  int width() const { return width_; }
  int height() const { return height_; }
  Rgb at(int x, int y) const { return pixels_[static_cast<std::size_t>(y) * width_ + x]; }
  void set(int x, int y, Rgb c);
  void line(int x0, int y0, int x1, int y1, Rgb c);
  void rect(int x0, int y0, int x1, int y1, Rgb c);
  void fill_rect(int x0, int y0, int x1, int y1, Rgb c);
  void write_ppm(const std::filesystem::path& path) const;

 private:
  int width_;
  int height_;
  std::vector<Rgb> pixels_;
};

/// Grayscale image with the anomaly map blended in red and component bounding boxes in green.
Canvas overlay_plot(const Image& image, const Image& ano_map, const std::vector<ConnectedComponent>& retained);

/// Curve along the image rows (x axis = row index, one column per row) with segment
/// boundaries as vertical gray lines at the rows listed in `boundaries`.
Canvas curve_plot(const std::vector<double>& curve, const std::vector<int>& boundaries, int height = 160);

/// Polylines on shared axes; series may differ in length. NaN points are skipped.
Canvas line_chart(const std::vector<std::vector<double>>& series, int width = 480, int height = 240);

/// One box (quartiles, whiskers at min/max, median line) per group.
Canvas box_plot(const std::vector<std::vector<double>>& groups, int width = 480, int height = 240);

/// Fixed series palette.
Rgb palette(std::size_t i);

}  // namespace u2ad
