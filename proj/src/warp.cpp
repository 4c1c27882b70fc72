#include "warpcore/warp.hpp"

#include <algorithm>
#include <cmath>

#include "warpcore/error.hpp"
#include "warpcore/parallel.hpp"

namespace warpcore {
namespace {

bool inside(Vec2 p, Dims src) {
  return p.x >= 0.0 && p.x <= src.width - 1 && p.y >= 0.0 && p.y <= src.height - 1;
}

int clamp_index(int v, int size) { return std::clamp(v, 0, size - 1); }

Vec2 pixel_center(int x, int y) { return {static_cast<double>(x), static_cast<double>(y)}; }

void parallel_rows(int rows, const std::function<void(int)>& fn) {
  parallel_for(static_cast<std::size_t>(rows), [&](std::size_t begin, std::size_t end) {
    for (std::size_t y = begin; y < end; ++y) fn(static_cast<int>(y));
  });
}

}  // namespace

double cubic_weight(double t, double a) {
  t = std::abs(t);
  if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
  if (t < 2.0) return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
  return 0.0;
}

Mask compute_mask(const BackwardMap& map, Dims src, Dims dst) {
  Mask mask(dst.height, dst.width);
  parallel_rows(dst.height, [&](int y) {
    for (int x = 0; x < dst.width; ++x) {
      const auto p = map(pixel_center(x, y));
      mask.at(y, x) = (p && inside(*p, src)) ? 1 : 0;
    }
  });
  return mask;
}

WarpResult warp_bicubic(const Plane& img, const BackwardMap& map, Dims dst) {
  if (img.empty()) throw Error(ErrorKind::kShapeMismatch, "empty input image");
  const Dims src = img.dims();
  WarpResult out{Plane(img.channels(), dst.height, dst.width), Mask(dst.height, dst.width)};
  parallel_rows(dst.height, [&](int y) {
    for (int x = 0; x < dst.width; ++x) {
      const auto p = map(pixel_center(x, y));
      if (!p || !inside(*p, src)) continue;
      out.mask.at(y, x) = 1;
      const int x0 = static_cast<int>(std::floor(p->x)) - 1;
      const int y0 = static_cast<int>(std::floor(p->y)) - 1;
      double wx[4], wy[4];
      int cx[4], cy[4];
      for (int k = 0; k < 4; ++k) {
        wx[k] = cubic_weight(p->x - (x0 + k));
        wy[k] = cubic_weight(p->y - (y0 + k));
        cx[k] = clamp_index(x0 + k, src.width);
        cy[k] = clamp_index(y0 + k, src.height);
      }
      for (int c = 0; c < img.channels(); ++c) {
        double acc = 0.0;
        for (int j = 0; j < 4; ++j) {
          double row = 0.0;
          for (int i = 0; i < 4; ++i) row += wx[i] * img.at(c, cy[j], cx[i]);
          acc += wy[j] * row;
        }
        out.image.at(c, y, x) = acc;
      }
    }
  });
  return out;
}

WindowPlan plan_windows(const BackwardMap& map, Dims src, Dims dst, bool adaptive,
                        const Mask* valid) {
  if (valid && valid->dims() != dst) {
    throw Error(ErrorKind::kShapeMismatch, "validity mask does not match the output grid");
  }
  struct Entry {
    std::array<int, kWindowTaps> taps;
    std::array<Vec2, kWindowTaps> offsets;
    AdaptiveBasis basis;
  };
  // Rows are planned independently, then concatenated in row order so the
  // plan does not depend on the thread count.
  std::vector<std::vector<std::pair<int, Entry>>> rows(dst.height);
  parallel_rows(dst.height, [&](int y) {
    auto& row = rows[y];
    for (int x = 0; x < dst.width; ++x) {
      if (valid && !valid->at(y, x)) continue;
      const auto p = map(pixel_center(x, y));
      if (!p || (!valid && !inside(*p, src))) continue;
      Entry e;
      if (adaptive) {
        const auto j = try_jacobian(map, pixel_center(x, y));
        if (!j) continue;
        const auto basis = try_principal_axes(*j);
        if (!basis) continue;
        e.basis = *basis;
      }
      const int rx = round_half_away(p->x);
      const int ry = round_half_away(p->y);
      for (int dj = -1; dj <= 1; ++dj) {
        for (int di = -1; di <= 1; ++di) {
          const int t = (dj + 1) * 3 + (di + 1);
          e.taps[t] = clamp_index(ry + dj, src.height) * src.width + clamp_index(rx + di, src.width);
          e.offsets[t] = {rx + di - p->x, ry + dj - p->y};
        }
      }
      row.emplace_back(y * dst.width + x, e);
    }
  });

  WindowPlan plan;
  plan.src = src;
  plan.dst = dst;
  plan.mask = Mask(dst.height, dst.width);
  for (const auto& row : rows) {
    for (const auto& [pixel, e] : row) {
      plan.mask[pixel] = 1;
      plan.pixels.push_back(pixel);
      plan.taps.push_back(e.taps);
      plan.offsets.push_back(e.offsets);
      if (adaptive) plan.bases.push_back(e.basis);
    }
  }
  return plan;
}

std::array<Vec2, kWindowTaps> rescaled_offsets(const WindowPlan& plan, std::size_t p) {
  std::array<Vec2, kWindowTaps> out;
  for (int t = 0; t < kWindowTaps; ++t) out[t] = rescale_offset(plan.offsets[p][t], plan.bases[p]);
  return out;
}

std::array<double, kWindowTaps> adaptive_cubic_weights(
    const std::array<Vec2, kWindowTaps>& offsets) {
  std::array<double, kWindowTaps> w;
  double total = 0.0;
  for (int t = 0; t < kWindowTaps; ++t) {
    w[t] = cubic_weight(offsets[t].x) * cubic_weight(offsets[t].y);
    total += w[t];
  }
  if (total != 0.0) {
    for (double& v : w) v /= total;
  }
  return w;
}

Plane apply_window_kernels(const Plane& feat, const WindowPlan& plan, const KernelField& kernels) {
  if (feat.dims() != plan.src) throw Error(ErrorKind::kShapeMismatch, "feature/plan size mismatch");
  if (kernels.dst != plan.dst || (kernels.channels != 1 && kernels.channels != feat.channels()) ||
      kernels.weights.size() != static_cast<std::size_t>(plan.dst.width) * plan.dst.height *
                                    kernels.channels * kWindowTaps) {
    throw Error(ErrorKind::kShapeMismatch, "kernel field does not match the output grid");
  }
  Plane out(feat.channels(), plan.dst.height, plan.dst.width);
  const std::size_t n = plan.pixels.size();
  const std::size_t dst_area = static_cast<std::size_t>(plan.dst.width) * plan.dst.height;
  const std::size_t src_area = static_cast<std::size_t>(plan.src.width) * plan.src.height;
  parallel_for(n, [&](std::size_t begin, std::size_t end) {
    for (std::size_t p = begin; p < end; ++p) {
      const int pixel = plan.pixels[p];
      const auto& taps = plan.taps[p];
      for (int c = 0; c < feat.channels(); ++c) {
        const int kc = kernels.channels == 1 ? 0 : c;
        const double* k = kernels.weights.data() +
                          (static_cast<std::size_t>(pixel) * kernels.channels + kc) * kWindowTaps;
        const double* f = feat.data().data() + c * src_area;
        double acc = 0.0;
        for (int t = 0; t < kWindowTaps; ++t) acc += k[t] * f[taps[t]];
        out.data()[c * dst_area + pixel] = acc;
      }
    }
  });
  return out;
}

WarpResult warp_adaptive_fixed(const Plane& img, const BackwardMap& map, Dims dst) {
  if (img.empty()) throw Error(ErrorKind::kShapeMismatch, "empty input image");
  const WindowPlan plan = plan_windows(map, img.dims(), dst, /*adaptive=*/true);
  KernelField kernels(dst, 1);
  parallel_for(plan.pixels.size(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t p = begin; p < end; ++p) {
      const auto w = adaptive_cubic_weights(rescaled_offsets(plan, p));
      std::copy(w.begin(), w.end(),
                kernels.weights.begin() + static_cast<std::ptrdiff_t>(plan.pixels[p]) * kWindowTaps);
    }
  });
  return {apply_window_kernels(img, plan, kernels), plan.mask};
}

WarpResult warp_with_kernels(const Plane& feat, const BackwardMap& map, const KernelField& kernels,
                             Dims dst) {
  const WindowPlan plan = plan_windows(map, feat.dims(), dst, /*adaptive=*/false);
  return {apply_window_kernels(feat, plan, kernels), plan.mask};
}

}  // namespace warpcore
