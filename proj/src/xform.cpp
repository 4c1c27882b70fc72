#include "warpcore/xform.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <string>

#include "warpcore/error.hpp"

namespace warpcore {
namespace {

constexpr double kTinyW = 1e-12;
constexpr double kTinyDet = 1e-12;
constexpr int kMaxCanvas = 1 << 15;

Mat3 adjugate(const Mat3& m) {
  return {m[4] * m[8] - m[5] * m[7], m[2] * m[7] - m[1] * m[8], m[1] * m[5] - m[2] * m[4],
          m[5] * m[6] - m[3] * m[8], m[0] * m[8] - m[2] * m[6], m[2] * m[3] - m[0] * m[5],
          m[3] * m[7] - m[4] * m[6], m[1] * m[6] - m[0] * m[7], m[0] * m[4] - m[1] * m[3]};
}

Mat3 invert(const Mat3& m) {
  const double d = mat3_det(m);
  Mat3 inv = adjugate(m);
  for (double& v : inv) v /= d;
  return mat3_normalized(inv);
}

// Portable uniform draw on [0, 1) from the top 53 bits.
double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(rng);
}

// Box-Muller, cosine branch only so each call consumes exactly two draws.
double normal(std::mt19937_64& rng, double sigma) {
  const double u1 = 1.0 - uniform01(rng);  // (0, 1]
  const double u2 = uniform01(rng);
  return sigma * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

bool finite(double v) { return std::isfinite(v); }

}  // namespace

Mat3 mat3_identity() { return {1, 0, 0, 0, 1, 0, 0, 0, 1}; }

Mat3 mat3_mul(const Mat3& a, const Mat3& b) {
  Mat3 r{};
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      double s = 0.0;
      for (int k = 0; k < 3; ++k) s += a[i * 3 + k] * b[k * 3 + j];
      r[i * 3 + j] = s;
    }
  }
  return r;
}

double mat3_det(const Mat3& m) {
  return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
         m[2] * (m[3] * m[7] - m[4] * m[6]);
}

Mat3 mat3_normalized(const Mat3& m) {
  if (std::abs(m[8]) <= 1e-12) return m;
  Mat3 r = m;
  const double s = m[8];
  for (double& v : r) v /= s;
  r[8] = 1.0;
  return r;
}

Homography::Homography() : m_(mat3_identity()), m_inv_(mat3_identity()) {}

Homography Homography::from_matrix(const Mat3& m) {
  for (double v : m) {
    if (!finite(v)) throw Error(ErrorKind::kDegenerate, "non-finite matrix entry");
  }
  const Mat3 n = mat3_normalized(m);
  if (std::abs(mat3_det(n)) <= kTinyDet) {
    throw Error(ErrorKind::kDegenerate, "matrix is not invertible");
  }
  return Homography(n, invert(n));
}

Homography Homography::translation(double tx, double ty) {
  return Homography({1, 0, tx, 0, 1, ty, 0, 0, 1}, {1, 0, -tx, 0, 1, -ty, 0, 0, 1});
}

Homography Homography::inverse() const { return Homography(m_inv_, m_); }

bool Homography::is_affine() const { return m_[6] == 0.0 && m_[7] == 0.0; }

std::optional<Vec2> try_apply(const Mat3& m, Vec2 p) {
  const double w = m[6] * p.x + m[7] * p.y + m[8];
  if (!(std::abs(w) >= kTinyW)) return std::nullopt;
  return Vec2{(m[0] * p.x + m[1] * p.y + m[2]) / w, (m[3] * p.x + m[4] * p.y + m[5]) / w};
}

Vec2 apply_forward(const Homography& h, Vec2 p) {
  if (auto q = try_apply(h.matrix(), p)) return *q;
  throw Error(ErrorKind::kDegeneratePoint, "point maps through w' ~ 0");
}

Vec2 apply_backward(const Homography& h, Vec2 p) {
  if (auto q = try_apply(h.inverse_matrix(), p)) return *q;
  throw Error(ErrorKind::kDegeneratePoint, "point maps through w ~ 0");
}

Homography scale_matrix(double sx, double sy) {
  if (!(sx > 0.0) || !(sy > 0.0)) {
    throw Error(ErrorKind::kInvalidScale, "scale factors must be positive");
  }
  return Homography::from_matrix({sx, 0, 0.5 * (sx - 1), 0, sy, 0.5 * (sy - 1), 0, 0, 1});
}

Homography compose(const Homography& a, const Homography& b) {
  return Homography::from_matrix(mat3_mul(a.matrix(), b.matrix()));
}

double scale_feature(const Jacobian2& j) {
  const double d = std::abs(j.det());
  if (!(d > kTinyDet)) throw Error(ErrorKind::kSingularJacobian, "|det J| <= 1e-12");
  return -std::log(d);
}

BackwardMap::BackwardMap() : source_(mat3_identity()) {}

BackwardMap BackwardMap::from_homography(const Homography& forward) {
  BackwardMap map;
  map.source_ = forward.inverse_matrix();
  return map;
}

BackwardMap BackwardMap::sine(const SineParams& params, double scale) {
  BackwardMap map;
  map.kind_ = MapKind::kSine;
  map.functional_ = params;
  map.source_ = scale_matrix(scale, scale).inverse_matrix();
  return map;
}

BackwardMap BackwardMap::barrel(const BarrelParams& params, double scale) {
  BackwardMap map;
  map.kind_ = MapKind::kBarrel;
  map.functional_ = params;
  map.source_ = scale_matrix(scale, scale).inverse_matrix();
  return map;
}

std::optional<Vec2> BackwardMap::operator()(Vec2 target) const {
  Vec2 p = target + shift_;
  if (const auto* s = std::get_if<SineParams>(&functional_)) {
    p.y += s->amplitude * std::sin(2.0 * std::numbers::pi * p.x / s->wavelength);
  } else if (const auto* b = std::get_if<BarrelParams>(&functional_)) {
    const Vec2 d = p - b->center;
    const double rho2 = dot(d, d) / (b->norm_radius * b->norm_radius);
    const double gain = 1.0 + b->k1 * rho2 + b->k2 * rho2 * rho2;
    p = b->center + gain * d;
  }
  auto q = try_apply(source_, p);
  if (q && (!finite(q->x) || !finite(q->y))) return std::nullopt;
  return q;
}

Vec2 BackwardMap::at(Vec2 target) const {
  if (auto p = (*this)(target)) return *p;
  throw Error(ErrorKind::kOutOfDomain, "backward map undefined at target point");
}

BackwardMap BackwardMap::then(const Homography& h) const {
  BackwardMap out = *this;
  out.source_ = mat3_normalized(mat3_mul(h.matrix(), source_));
  if (kind_ != MapKind::kHomography) out.kind_ = MapKind::kComposite;
  return out;
}

BackwardMap BackwardMap::shifted_target(Vec2 origin) const {
  BackwardMap out = *this;
  if (kind_ == MapKind::kHomography) {
    out.source_ = mat3_normalized(
        mat3_mul(source_, Homography::translation(origin.x, origin.y).matrix()));
  } else {
    out.shift_ = shift_ + origin;
  }
  return out;
}

std::optional<Homography> BackwardMap::forward_homography() const {
  if (kind_ != MapKind::kHomography) return std::nullopt;
  return Homography::from_matrix(source_).inverse();
}

std::optional<Jacobian2> try_jacobian(const BackwardMap& map, Vec2 p, double eps) {
  const auto xp = map({p.x + eps, p.y});
  const auto xm = map({p.x - eps, p.y});
  const auto yp = map({p.x, p.y + eps});
  const auto ym = map({p.x, p.y - eps});
  if (!xp || !xm || !yp || !ym) return std::nullopt;
  const double inv = 1.0 / (2.0 * eps);
  return Jacobian2{(*xp - *xm) * inv, (*yp - *ym) * inv};
}

Jacobian2 jacobian(const BackwardMap& map, Vec2 p, double eps) {
  if (auto j = try_jacobian(map, p, eps)) return *j;
  throw Error(ErrorKind::kOutOfDomain, "stencil point outside the map's domain");
}

OutputBounds output_bounds(const Homography& h, int src_w, int src_h) {
  if (src_w <= 0 || src_h <= 0) throw Error(ErrorKind::kDegenerate, "empty source");
  const Mat3& m = h.matrix();
  const Vec2 corners[4] = {{-0.5, -0.5},
                           {src_w - 0.5, -0.5},
                           {-0.5, src_h - 0.5},
                           {src_w - 0.5, src_h - 0.5}};
  double lo_x = std::numeric_limits<double>::infinity(), lo_y = lo_x;
  double hi_x = -lo_x, hi_y = -lo_x;
  int sign = 0;
  for (const Vec2& c : corners) {
    const double w = m[6] * c.x + m[7] * c.y + m[8];
    if (std::abs(w) < kTinyW) throw Error(ErrorKind::kDegenerate, "corner maps to infinity");
    const int s = w > 0 ? 1 : -1;
    if (sign != 0 && s != sign) {
      throw Error(ErrorKind::kDegenerate, "source frame straddles the line at infinity");
    }
    sign = s;
    const Vec2 q = apply_forward(h, c);
    lo_x = std::min(lo_x, q.x);
    lo_y = std::min(lo_y, q.y);
    hi_x = std::max(hi_x, q.x);
    hi_y = std::max(hi_y, q.y);
  }
  const double ext_x = hi_x - lo_x;
  const double ext_y = hi_y - lo_y;
  if (!(ext_x < kMaxCanvas) || !(ext_y < kMaxCanvas)) {
    throw Error(ErrorKind::kDegenerate, "output canvas too large");
  }
  OutputBounds out;
  out.width = std::max(1, static_cast<int>(std::ceil(ext_x - 1e-9)));
  out.height = std::max(1, static_cast<int>(std::ceil(ext_y - 1e-9)));
  out.offset = {lo_x + 0.5, lo_y + 0.5};
  out.transform = compose(Homography::translation(-out.offset.x, -out.offset.y), h);
  return out;
}

Homography inverse_from_params(const TransformParams& p) {
  const double c = std::cos(p.theta);
  const double s = std::sin(p.theta);
  const Mat3 shear{1, p.hx, 0, p.hy, 1, 0, 0, 0, 1};
  const Mat3 rot{c, s, 0, -s, c, 0, 0, 0, 1};
  const Mat3 scale{p.sx, 0, 0, 0, p.sy, 0, 0, 0, 1};
  const Mat3 proj{1, 0, p.tx, 0, 1, p.ty, p.px, p.py, 1};
  return Homography::from_matrix(mat3_mul(mat3_mul(shear, rot), mat3_mul(scale, proj)));
}

SamplingRanges sampling_ranges(int hr_w, int hr_h) {
  SamplingRanges r;
  r.theta_sigma = 15.0 * std::numbers::pi / 180.0;
  r.tx_lo = -0.75 * hr_w;
  r.tx_hi = 0.125 * hr_w;
  r.ty_lo = -0.75 * hr_h;
  r.ty_hi = 0.125 * hr_h;
  r.px_abs = 0.6 / hr_w;
  r.py_abs = 0.6 / hr_h;
  r.theta_abs_max = 0.5 * std::numbers::pi;
  return r;
}

bool within_ranges(const TransformParams& p, int hr_w, int hr_h) {
  const SamplingRanges r = sampling_ranges(hr_w, hr_h);
  auto in = [](double v, double lo, double hi) { return v >= lo && v <= hi; };
  return in(p.hx, -r.shear, r.shear) && in(p.hy, -r.shear, r.shear) &&
         in(p.theta, -r.theta_abs_max, r.theta_abs_max) &&
         in(p.sx, r.scale_lo, r.scale_hi) && in(p.sy, r.scale_lo, r.scale_hi) &&
         in(p.tx, r.tx_lo, r.tx_hi) && in(p.ty, r.ty_lo, r.ty_hi) &&
         in(p.px, -r.px_abs, r.px_abs) && in(p.py, -r.py_abs, r.py_abs);
}

std::pair<TransformParams, Homography> sample_transform(std::uint64_t rng_seed, int hr_w,
                                                        int hr_h) {
  if (hr_w <= 0 || hr_h <= 0) throw Error(ErrorKind::kInvalidParams, "empty patch size");
  constexpr int kMaxDraws = 16;
  // Smallest w' accepted at a patch corner; below it the patch approaches
  // the line at infinity and the LR canvas explodes.
  constexpr double kMinCornerW = 0.1;

  const SamplingRanges r = sampling_ranges(hr_w, hr_h);
  std::mt19937_64 rng(rng_seed);
  for (int attempt = 0; attempt < kMaxDraws; ++attempt) {
    TransformParams p;
    p.hx = uniform(rng, -r.shear, r.shear);
    p.hy = uniform(rng, -r.shear, r.shear);
    p.theta = normal(rng, r.theta_sigma);
    p.sx = uniform(rng, r.scale_lo, r.scale_hi);
    p.sy = uniform(rng, r.scale_lo, r.scale_hi);
    p.tx = uniform(rng, r.tx_lo, r.tx_hi);
    p.ty = uniform(rng, r.ty_lo, r.ty_hi);
    p.px = uniform(rng, -r.px_abs, r.px_abs);
    p.py = uniform(rng, -r.py_abs, r.py_abs);
    if (std::abs(p.theta) > r.theta_abs_max) continue;

    Homography m_inv;
    try {
      m_inv = inverse_from_params(p);
    } catch (const Error&) {
      continue;
    }
    if (std::abs(m_inv.det()) < 1e-9) continue;
    const Mat3& mi = m_inv.matrix();
    bool near_infinity = false;
    for (double cx : {-0.5, hr_w - 0.5}) {
      for (double cy : {-0.5, hr_h - 0.5}) {
        if (mi[6] * cx + mi[7] * cy + mi[8] < kMinCornerW) near_infinity = true;
      }
    }
    if (near_infinity) continue;
    return {p, m_inv.inverse()};
  }
  throw Error(ErrorKind::kResampleRejected,
              "no usable transform after " + std::to_string(kMaxDraws) + " draws");
}

BackwardMap make_functional(const FunctionalSpec& spec, Dims src) {
  const bool ok = finite(spec.scale) && finite(spec.amplitude) && finite(spec.wavelength) &&
                  finite(spec.k1) && finite(spec.k2) &&
                  (!spec.center || (finite(spec.center->x) && finite(spec.center->y))) &&
                  (!spec.norm_radius || finite(*spec.norm_radius));
  if (!ok) throw Error(ErrorKind::kInvalidParams, "non-finite functional parameter");
  if (!(spec.scale > 0.0)) throw Error(ErrorKind::kInvalidParams, "scale must be positive");

  if (spec.kind == FunctionalKind::kSine) {
    if (spec.wavelength == 0.0) throw Error(ErrorKind::kInvalidParams, "zero wavelength");
    return BackwardMap::sine({spec.amplitude, spec.wavelength}, spec.scale);
  }
  const Dims dst = functional_output_dims(spec, src);
  BarrelParams b;
  b.k1 = spec.k1;
  b.k2 = spec.k2;
  b.center = spec.center.value_or(Vec2{0.5 * (dst.width - 1), 0.5 * (dst.height - 1)});
  b.norm_radius = spec.norm_radius.value_or(0.5 * std::hypot(dst.width, dst.height));
  if (!(b.norm_radius > 0.0)) throw Error(ErrorKind::kInvalidParams, "radius must be positive");
  return BackwardMap::barrel(b, spec.scale);
}

Dims functional_output_dims(const FunctionalSpec& spec, Dims src) {
  return {std::max(1, static_cast<int>(std::lround(spec.scale * src.width))),
          std::max(1, static_cast<int>(std::lround(spec.scale * src.height)))};
}

}  // namespace warpcore
