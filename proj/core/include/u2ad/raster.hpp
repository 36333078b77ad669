#pragma once

#include <cassert>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace u2ad {

/// Dense row-major 2D array. Used for images, label rasters, and maps.
template <class T>
class Raster {
 public:
  using value_type = T;

  Raster() = default;
  Raster(int height, int width, T fill = T{})
      : height_(height), width_(width), data_(static_cast<std::size_t>(height) * width, fill) {}

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(int row, int col) {
    assert(row >= 0 && row < height_ && col >= 0 && col < width_);
    return data_[static_cast<std::size_t>(row) * width_ + col];
  }
  const T& operator()(int row, int col) const {
    assert(row >= 0 && row < height_ && col >= 0 && col < width_);
    return data_[static_cast<std::size_t>(row) * width_ + col];
  }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  bool same_shape(int h, int w) const { return h == height_ && w == width_; }
  template <class U>
  bool same_shape(const Raster<U>& other) const {
    return other.height() == height_ && other.width() == width_;
  }

  friend bool operator==(const Raster& a, const Raster& b) {
    return a.height_ == b.height_ && a.width_ == b.width_ && a.data_ == b.data_;
  }

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<T> data_;
};

using Image = Raster<double>;
using Mask = Raster<std::uint8_t>;

}  // namespace u2ad
