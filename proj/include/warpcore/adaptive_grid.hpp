#pragma once

#include <optional>

#include "warpcore/geometry.hpp"
#include "warpcore/xform.hpp"

namespace warpcore {

/// Ellipse {J c : |c| = 1} described by its principal axes. `a` is the axis
/// along (cos omega, sin omega), `b` the perpendicular one.
struct AdaptiveBasis {
  double a = 1.0;
  double b = 1.0;
  double omega = 0.0;
  Vec2 e_x{1.0, 0.0};
  Vec2 e_y{0.0, 1.0};
};

/// Closed-form principal axes of the local Jacobian.
/// Throws SingularJacobian when |det J| <= 1e-12.
AdaptiveBasis principal_axes(const Jacobian2& j);
std::optional<AdaptiveBasis> try_principal_axes(const Jacobian2& j);

/// Offset expressed in the ellipse basis: diag(1/A, 1/B) R(omega) o.
Vec2 adapt_offset(Vec2 o, const AdaptiveBasis& basis);

/// (|adapt_offset(o)| / |o|) o, and (0, 0) for the zero offset.
Vec2 rescale_offset(Vec2 o, const AdaptiveBasis& basis);

}  // namespace warpcore
