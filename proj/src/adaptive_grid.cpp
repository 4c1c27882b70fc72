#include "warpcore/adaptive_grid.hpp"

#include <cmath>

#include "warpcore/error.hpp"

namespace warpcore {
namespace {

AdaptiveBasis make_basis(double a, double b, double omega) {
  const double c = std::cos(omega);
  const double s = std::sin(omega);
  return {a, b, omega, {a * c, a * s}, {-b * s, b * c}};
}

}  // namespace

std::optional<AdaptiveBasis> try_principal_axes(const Jacobian2& j) {
  const double ux = j.u.x, uy = j.u.y, vx = j.v.x, vy = j.v.y;
  const double det = j.det();
  if (!(std::abs(det) > 1e-12)) return std::nullopt;

  const double d2 = det * det;
  const double fro2 = ux * ux + vx * vx + uy * uy + vy * vy;
  const double cross = 2.0 * ux * uy + 2.0 * vx * vy;
  const double spread = ux * ux + vx * vx - uy * uy - vy * vy;
  const double anisotropy = std::hypot(cross, spread);

  // Circle: omega is undefined, fix it to 0.
  if (anisotropy <= 1e-10 * fro2) {
    const double r = std::sqrt(std::abs(det));
    return make_basis(r, r, 0.0);
  }

  const double omega = 0.5 * std::atan2(cross, spread);
  const double cos2w = spread / anisotropy;
  const double cos_w = std::cos(omega);
  const double den_a = cos_w * cos_w * fro2 - ux * ux - vx * vx;
  const double den_b = cos_w * cos_w * fro2 - uy * uy - vy * vy;

  double a2 = 0.0;
  double b2 = 0.0;
  if (std::abs(cos2w) >= 0.5 && std::abs(den_a) > 1e-6 * fro2 && std::abs(den_b) > 1e-6 * fro2) {
    a2 = d2 * cos2w / den_a;
    b2 = d2 * cos2w / den_b;
  } else {
    // Same identities solved through the sum 1/A^2 + 1/B^2 = |J|^2 / D^2,
    // which stays exact where cos(2 omega) -> 0 or the ellipse is thin.
    a2 = 0.5 * (fro2 + anisotropy);
    b2 = d2 / a2;
  }
  return make_basis(std::sqrt(a2), std::sqrt(b2), omega);
}

AdaptiveBasis principal_axes(const Jacobian2& j) {
  if (auto basis = try_principal_axes(j)) return *basis;
  throw Error(ErrorKind::kSingularJacobian, "|det J| <= 1e-12");
}

Vec2 adapt_offset(Vec2 o, const AdaptiveBasis& basis) {
  const double c = std::cos(basis.omega);
  const double s = std::sin(basis.omega);
  return {(c * o.x + s * o.y) / basis.a, (-s * o.x + c * o.y) / basis.b};
}

Vec2 rescale_offset(Vec2 o, const AdaptiveBasis& basis) {
  const double len = norm(o);
  if (len == 0.0) return {0.0, 0.0};
  return (norm(adapt_offset(o, basis)) / len) * o;
}

}  // namespace warpcore
