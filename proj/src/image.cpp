#include "warpcore/image.hpp"

#include <algorithm>
#include <numeric>

#include "warpcore/error.hpp"

namespace warpcore {

Plane::Plane(int channels, int height, int width, double fill)
    : channels_(channels),
      height_(height),
      width_(width),
      data_(static_cast<std::size_t>(channels) * height * width, fill) {
  if (channels < 0 || height < 0 || width < 0) {
    throw Error(ErrorKind::kShapeMismatch, "negative plane dimension");
  }
}

Plane::Plane(int channels, int height, int width, std::vector<double> data)
    : channels_(channels), height_(height), width_(width), data_(std::move(data)) {
  if (channels < 0 || height < 0 || width < 0 ||
      data_.size() != static_cast<std::size_t>(channels) * height * width) {
    throw Error(ErrorKind::kShapeMismatch, "plane data size does not match its shape");
  }
}

Mask::Mask(int height, int width, std::uint8_t fill)
    : height_(height), width_(width), data_(static_cast<std::size_t>(height) * width, fill) {
  if (height < 0 || width < 0) throw Error(ErrorKind::kShapeMismatch, "negative mask dimension");
}

std::size_t Mask::count() const {
  return static_cast<std::size_t>(
      std::count_if(data_.begin(), data_.end(), [](std::uint8_t v) { return v != 0; }));
}

Plane crop(const Plane& p, const Rect& r) {
  if (r.x < 0 || r.y < 0 || r.x + r.width > p.width() || r.y + r.height > p.height()) {
    throw Error(ErrorKind::kShapeMismatch, "crop outside plane");
  }
  Plane out(p.channels(), r.height, r.width);
  for (int c = 0; c < p.channels(); ++c) {
    for (int y = 0; y < r.height; ++y) {
      for (int x = 0; x < r.width; ++x) out.at(c, y, x) = p.at(c, r.y + y, r.x + x);
    }
  }
  return out;
}

Mask crop(const Mask& m, const Rect& r) {
  if (r.x < 0 || r.y < 0 || r.x + r.width > m.width() || r.y + r.height > m.height()) {
    throw Error(ErrorKind::kShapeMismatch, "crop outside mask");
  }
  Mask out(r.height, r.width);
  for (int y = 0; y < r.height; ++y) {
    for (int x = 0; x < r.width; ++x) out.at(y, x) = m.at(r.y + y, r.x + x);
  }
  return out;
}

Rect bounding_box(const Mask& m) {
  int x0 = m.width(), y0 = m.height(), x1 = -1, y1 = -1;
  for (int y = 0; y < m.height(); ++y) {
    for (int x = 0; x < m.width(); ++x) {
      if (!m.at(y, x)) continue;
      x0 = std::min(x0, x);
      y0 = std::min(y0, y);
      x1 = std::max(x1, x);
      y1 = std::max(y1, y);
    }
  }
  if (x1 < 0) return {};
  return {x0, y0, x1 - x0 + 1, y1 - y0 + 1};
}

}  // namespace warpcore
