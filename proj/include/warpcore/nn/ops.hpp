#pragma once

#include <memory>
#include <vector>

#include "warpcore/image.hpp"
#include "warpcore/nn/graph.hpp"
#include "warpcore/warp.hpp"

namespace warpcore::nn {

// Image-like tensors are [C, H, W]. Every op throws ShapeMismatch on
// incompatible inputs.

/// Cross-correlation with zero padding (k - 1) / 2.
/// x [Ci,H,W], w [Co,Ci,kh,kw] (odd kh, kw), b [Co] -> [Co,H,W].
Var conv2d(Graph& g, Var x, Var w, Var b);

struct PConvResult {
  Var out;
  Mask mask;  ///< 1 where the window saw at least one valid pixel
};

/// Partial convolution: conv(x * m) * (taps inside the image / valid taps) + b
/// where the window holds a valid pixel, else 0. With an all-ones mask the
/// result is bit-identical to conv2d.
PConvResult pconv2d(Graph& g, Var x, const Mask& m, Var w, Var b);

/// x [n_in], w [n_out, n_in], b [n_out] -> [n_out].
Var fc(Graph& g, Var x, Var w, Var b);
/// Row-wise fc: x [N, n_in] -> [N, n_out].
Var linear(Graph& g, Var x, Var w, Var b);

Var relu(Graph& g, Var x);
Var leaky_relu(Graph& g, Var x, double slope);
Var add(Graph& g, Var a, Var b);
Var scale(Graph& g, Var x, double s);

/// [C*s*s, H, W] -> [C, s*H, s*W]; out(c, s*y + dy, s*x + dx) = in(c*s*s + dy*s + dx, y, x).
Var depth_to_space(Graph& g, Var x, int s);
Var space_to_depth(Graph& g, Var x, int s);

Var concat_channels(Graph& g, const std::vector<Var>& xs);
Var channel_slice(Graph& g, Var x, int first, int count);
/// Zeroes void pixels; the mask broadcasts over channels.
Var apply_mask(Graph& g, Var x, const Mask& m);
/// w [1,H,W] scales every channel of x [C,H,W].
Var broadcast_mul(Graph& g, Var w, Var x);

Var sum(Graph& g, Var x);
/// sum_i r_i x_i for a constant r of the same size.
Var dot(Graph& g, Var x, const Tensor& r);
Var square_sum(Graph& g, Var x);
Var mean(Graph& g, const std::vector<Var>& scalars);

/// |m * (pred - target)|_1 / (|m|_0 * C). Void pixels contribute nothing,
/// not even a signed zero. Throws EmptyMask.
Var masked_l1(Graph& g, Var pred, const Tensor& target, const Mask& m);

/// Differentiable 3x3 window resampling on a precomputed plan.
/// feat [C,Hs,Ws], kernels [P, C*9] (depthwise) or [P, 9] (shared), where P is
/// plan->pixels.size(); returns [C,H',W'] with void pixels 0.
Var window_gather(Graph& g, Var feat, Var kernels, std::shared_ptr<const WindowPlan> plan);

Tensor to_tensor(const Plane& p);
Plane to_plane(const Tensor& t);

}  // namespace warpcore::nn
