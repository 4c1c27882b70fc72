#pragma once

#include <array>
#include <memory>
#include <vector>

#include "warpcore/adaptive_grid.hpp"
#include "warpcore/image.hpp"
#include "warpcore/xform.hpp"

namespace warpcore {

/// Keys cubic convolution kernel (a = -0.5 by default).
double cubic_weight(double t, double a = -0.5);

struct WarpResult {
  Plane image;
  Mask mask;
};

/// m(x', y') = 1 iff the backward-mapped point lies in [0, W-1] x [0, H-1].
Mask compute_mask(const BackwardMap& map, Dims src, Dims dst);

/// 4x4 cubic convolution resampling with clamp-to-edge taps. Void pixels are 0.
WarpResult warp_bicubic(const Plane& img, const BackwardMap& map, Dims dst);

/// Number of taps in the 3x3 window anchored at (round(x), round(y)).
inline constexpr int kWindowTaps = 9;

/// Window geometry for every valid output pixel. Taps are ordered row-major:
/// t = (j + 1) * 3 + (i + 1) for the source pixel (round(x) + i, round(y) + j).
struct WindowPlan {
  Dims src;
  Dims dst;
  Mask mask;                                        ///< pixels present in the plan
  std::vector<int> pixels;                          ///< dst flat index y * W' + x
  std::vector<std::array<int, kWindowTaps>> taps;   ///< clamped src flat index
  std::vector<std::array<Vec2, kWindowTaps>> offsets;  ///< tap - (x, y), unclamped
  std::vector<AdaptiveBasis> bases;                 ///< per pixel, adaptive plans only
};

/// Builds the 3x3 window plan for `map`. Pixels outside `valid` (or outside
/// compute_mask when `valid` is null) are void. With `adaptive`, pixels whose
/// Jacobian is undefined or singular are void too and `bases` is filled.
WindowPlan plan_windows(const BackwardMap& map, Dims src, Dims dst, bool adaptive,
                        const Mask* valid = nullptr);

/// Rescaled offsets of plan pixel p in window order.
std::array<Vec2, kWindowTaps> rescaled_offsets(const WindowPlan& plan, std::size_t p);

/// Separable cubic weights on the rescaled offsets, normalized to sum 1.
std::array<double, kWindowTaps> adaptive_cubic_weights(const std::array<Vec2, kWindowTaps>& offsets);

/// Fixed-kernel adaptive resampling: 3x3 window on the elliptical grid.
WarpResult warp_adaptive_fixed(const Plane& img, const BackwardMap& map, Dims dst);

/// Per-output-pixel resampling weights, layout H' x W' x channels x 3 x 3.
/// channels is 1 (shared across feature channels) or C (depthwise).
struct KernelField {
  Dims dst;
  int channels = 1;
  std::vector<double> weights;

  KernelField() = default;
  KernelField(Dims dst, int channels)
      : dst(dst),
        channels(channels),
        weights(static_cast<std::size_t>(dst.width) * dst.height * channels * kWindowTaps, 0.0) {}

  double* at(int y, int x, int c) {
    return weights.data() +
           ((static_cast<std::size_t>(y) * dst.width + x) * channels + c) * kWindowTaps;
  }
  const double* at(int y, int x, int c) const {
    return weights.data() +
           ((static_cast<std::size_t>(y) * dst.width + x) * channels + c) * kWindowTaps;
  }
};

/// W(x', y') = sum_t k(x', y', t) F(tap_t). Throws ShapeMismatch.
WarpResult warp_with_kernels(const Plane& feat, const BackwardMap& map, const KernelField& kernels,
                             Dims dst);

/// Same as above on an existing plan (the differentiable path shares it).
Plane apply_window_kernels(const Plane& feat, const WindowPlan& plan, const KernelField& kernels);

}  // namespace warpcore
