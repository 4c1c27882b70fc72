#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "warpcore/geometry.hpp"

namespace warpcore {

/// Channel-planar image or feature map: value (c, y, x) lives at
/// data[(c * height + y) * width + x].
class Plane {
 public:
  Plane() = default;
  Plane(int channels, int height, int width, double fill = 0.0);
  Plane(int channels, int height, int width, std::vector<double> data);

  int channels() const { return channels_; }
  int height() const { return height_; }
  int width() const { return width_; }
  Dims dims() const { return {width_, height_}; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& at(int c, int y, int x) {
    return data_[(static_cast<std::size_t>(c) * height_ + y) * width_ + x];
  }
  double at(int c, int y, int x) const {
    return data_[(static_cast<std::size_t>(c) * height_ + y) * width_ + x];
  }
  std::span<double> channel(int c) {
    return {data_.data() + static_cast<std::size_t>(c) * height_ * width_,
            static_cast<std::size_t>(height_) * width_};
  }
  std::span<const double> channel(int c) const {
    return {data_.data() + static_cast<std::size_t>(c) * height_ * width_,
            static_cast<std::size_t>(height_) * width_};
  }
  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  friend bool operator==(const Plane&, const Plane&) = default;

 private:
  int channels_ = 0;
  int height_ = 0;
  int width_ = 0;
  std::vector<double> data_;
};

/// Binary validity mask, 1 = valid pixel.
class Mask {
 public:
  Mask() = default;
  Mask(int height, int width, std::uint8_t fill = 0);

  int height() const { return height_; }
  int width() const { return width_; }
  Dims dims() const { return {width_, height_}; }
  std::size_t size() const { return data_.size(); }

  std::uint8_t& at(int y, int x) { return data_[static_cast<std::size_t>(y) * width_ + x]; }
  std::uint8_t at(int y, int x) const { return data_[static_cast<std::size_t>(y) * width_ + x]; }
  std::uint8_t operator[](std::size_t i) const { return data_[i]; }
  std::uint8_t& operator[](std::size_t i) { return data_[i]; }
  std::vector<std::uint8_t>& data() { return data_; }
  const std::vector<std::uint8_t>& data() const { return data_; }

  std::size_t count() const;

  friend bool operator==(const Mask&, const Mask&) = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<std::uint8_t> data_;
};

/// Sub-rectangle [x, x + width) x [y, y + height).
struct Rect {
  int x = 0;
  int y = 0;
  int width = 0;
  int height = 0;

  friend constexpr bool operator==(Rect, Rect) = default;
};

Plane crop(const Plane& p, const Rect& r);
Mask crop(const Mask& m, const Rect& r);
/// Tight bounding box of the set pixels; empty Rect when none.
Rect bounding_box(const Mask& m);

}  // namespace warpcore
