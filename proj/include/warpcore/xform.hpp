#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <utility>
#include <variant>

#include "warpcore/geometry.hpp"

namespace warpcore {

/// Row-major 3x3 matrix.
using Mat3 = std::array<double, 9>;

Mat3 mat3_identity();
Mat3 mat3_mul(const Mat3& a, const Mat3& b);
double mat3_det(const Mat3& m);
/// Rescales so m[8] == 1 when |m[8]| > 1e-12, otherwise returns m unchanged.
Mat3 mat3_normalized(const Mat3& m);

/// Projective transform M with its cached inverse. Both matrices are kept
/// normalized so that entry (3,3) is 1 whenever it is not ~0.
class Homography {
 public:
  Homography();
  /// Throws Degenerate when |det m| <= 1e-12 after normalization.
  static Homography from_matrix(const Mat3& m);
  static Homography identity() { return Homography(); }
  static Homography translation(double tx, double ty);

  const Mat3& matrix() const { return m_; }
  const Mat3& inverse_matrix() const { return m_inv_; }
  Homography inverse() const;
  double det() const { return mat3_det(m_); }
  bool is_affine() const;

 private:
  Homography(const Mat3& m, const Mat3& m_inv) : m_(m), m_inv_(m_inv) {}

  Mat3 m_;
  Mat3 m_inv_;
};

/// Applies m to (x, y, 1) and divides by w'. Returns nullopt when |w'| < 1e-12.
std::optional<Vec2> try_apply(const Mat3& m, Vec2 p);

/// (x', y') = f_M(x, y). Throws DegeneratePoint when |w'| < 1e-12.
Vec2 apply_forward(const Homography& h, Vec2 p);
/// (x, y) = f_M^{-1}(x', y').
Vec2 apply_backward(const Homography& h, Vec2 p);

/// Axis scaling with the half-pixel alignment term 0.5 (s - 1).
/// Throws InvalidScale when either factor is <= 0.
Homography scale_matrix(double sx, double sy);

/// Matrix product a * b (apply b first). Throws Degenerate on singular result.
Homography compose(const Homography& a, const Homography& b);

struct Jacobian2 {
  Vec2 u;  ///< d(x, y) / dx'
  Vec2 v;  ///< d(x, y) / dy'

  double det() const { return u.x * v.y - v.x * u.y; }
};

/// Negative log magnification, -ln |det J|. Throws SingularJacobian.
double scale_feature(const Jacobian2& j);

enum class MapKind { kHomography, kSine, kBarrel, kComposite };

struct SineParams {
  double amplitude = 0.0;
  double wavelength = 1.0;
};

struct BarrelParams {
  double k1 = 0.0;
  double k2 = 0.0;
  Vec2 center;             ///< target-space distortion center
  double norm_radius = 1;  ///< radius at which rho == 1
};

/// Target-to-source mapping f^{-1}. Homographies are stored as a single
/// backward matrix; functional transforms apply their displacement in target
/// space and then a projective matrix on the source side (the scale matrix,
/// plus anything composed later with then()).
class BackwardMap {
 public:
  BackwardMap();  ///< identity
  static BackwardMap from_homography(const Homography& forward);
  static BackwardMap sine(const SineParams& params, double scale);
  static BackwardMap barrel(const BarrelParams& params, double scale);

  /// nullopt signals an out-of-domain target point.
  std::optional<Vec2> operator()(Vec2 target) const;
  /// Throws OutOfDomain.
  Vec2 at(Vec2 target) const;

  /// Map followed by h applied forward on the source side.
  BackwardMap then(const Homography& h) const;
  /// p' -> map(p' + origin): re-anchors the target grid at `origin`.
  BackwardMap shifted_target(Vec2 origin) const;

  MapKind kind() const { return kind_; }
  /// Forward homography M when kind() == kHomography.
  std::optional<Homography> forward_homography() const;
  const Mat3& source_matrix() const { return source_; }
  const std::variant<std::monostate, SineParams, BarrelParams>& functional() const {
    return functional_;
  }
  Vec2 target_shift() const { return shift_; }

 private:
  MapKind kind_ = MapKind::kHomography;
  std::variant<std::monostate, SineParams, BarrelParams> functional_;
  Vec2 shift_;
  Mat3 source_;
};

/// Central-difference linearization with step eps. Throws OutOfDomain when a
/// stencil point is undefined.
Jacobian2 jacobian(const BackwardMap& map, Vec2 p, double eps = 0.5);
std::optional<Jacobian2> try_jacobian(const BackwardMap& map, Vec2 p, double eps = 0.5);

struct OutputBounds {
  int width = 0;
  int height = 0;
  Vec2 offset;           ///< translation removed from h
  Homography transform;  ///< T(-offset) * h, box starting at -0.5
};

/// Tight output canvas for warping a src_w x src_h image forward by h.
/// Throws Degenerate when a corner maps through w' ~ 0 or the corners
/// straddle the line at infinity.
OutputBounds output_bounds(const Homography& h, int src_w, int src_h);

/// Parameters of the random training transform M^{-1} = H R S P.
struct TransformParams {
  double hx = 0.0, hy = 0.0;  ///< shear
  double theta = 0.0;         ///< rotation, radians
  double sx = 1.0, sy = 1.0;  ///< scale
  double tx = 0.0, ty = 0.0;  ///< translation, pixels
  double px = 0.0, py = 0.0;  ///< projective terms, 1/pixels
};

/// Builds H R S P; this is the inverse (HR -> LR) transform.
Homography inverse_from_params(const TransformParams& p);

/// Distribution bounds for sample_transform on a w x h patch.
struct SamplingRanges {
  double shear = 0.25;
  double theta_sigma;  ///< 15 degrees
  double scale_lo = 0.35, scale_hi = 0.5;
  double tx_lo, tx_hi, ty_lo, ty_hi;
  double px_abs, py_abs;
  double theta_abs_max;  ///< 90 degrees, draws beyond are redrawn
};
SamplingRanges sampling_ranges(int hr_w, int hr_h);
bool within_ranges(const TransformParams& p, int hr_w, int hr_h);

/// Draws a random transform. Returns the parameters and the forward M
/// (inverse of H R S P). Deterministic in rng_seed.
/// Throws ResampleRejected after 16 unusable draws.
std::pair<TransformParams, Homography> sample_transform(std::uint64_t rng_seed,
                                                        int hr_w, int hr_h);

enum class FunctionalKind { kSine, kBarrel };

struct FunctionalSpec {
  FunctionalKind kind = FunctionalKind::kSine;
  double scale = 1.0;
  double amplitude = 0.0;   ///< sine
  double wavelength = 1.0;  ///< sine
  double k1 = 0.0, k2 = 0.0;           ///< barrel
  std::optional<Vec2> center;          ///< barrel, default canvas center
  std::optional<double> norm_radius;   ///< barrel, default half diagonal
};

/// Builds a sine or barrel backward map for an image of size src, composed
/// with scale_matrix(scale, scale). Throws InvalidParams on non-finite input.
BackwardMap make_functional(const FunctionalSpec& spec, Dims src);

/// Output canvas for a functional transform: round(scale * src).
Dims functional_output_dims(const FunctionalSpec& spec, Dims src);

}  // namespace warpcore
