#include "warpcore/metrics.hpp"

#include <cmath>
#include <limits>

#include "warpcore/error.hpp"

namespace warpcore {

namespace {

void check(const Plane& sr, const Plane& hr, const Mask& m) {
  if (sr.channels() != hr.channels() || sr.height() != hr.height() || sr.width() != hr.width() ||
      m.height() != sr.height() || m.width() != sr.width()) {
    throw Error(ErrorKind::kShapeMismatch, "metrics: image and mask sizes differ");
  }
  if (m.count() == 0) throw Error(ErrorKind::kEmptyMask, "metrics: mask has no valid pixel");
}

template <typename F>
double masked_sum(const Plane& sr, const Plane& hr, const Mask& m, F f) {
  const std::size_t area = m.size();
  double acc = 0.0;
  for (std::size_t k = 0; k < area; ++k) {
    if (!m[k]) continue;
    for (int c = 0; c < sr.channels(); ++c) acc += f(sr.channel(c)[k] - hr.channel(c)[k]);
  }
  return acc;
}

}  // namespace

double mpsnr(const Plane& sr, const Plane& hr, const Mask& m) {
  check(sr, hr, m);
  const double sse = masked_sum(sr, hr, m, [](double d) { return d * d; });
  if (sse == 0.0) return std::numeric_limits<double>::infinity();
  const double n = static_cast<double>(m.count()) * sr.channels();
  return 10.0 * std::log10(n / sse);
}

double masked_l1(const Plane& sr, const Plane& hr, const Mask& m) {
  check(sr, hr, m);
  const double sae = masked_sum(sr, hr, m, [](double d) { return std::abs(d); });
  return sae / (static_cast<double>(m.count()) * sr.channels());
}

EvalReport evaluate(const Plane& sr, const Plane& hr, const Mask& m) {
  return {mpsnr(sr, hr, m), m.count(), masked_l1(sr, hr, m)};
}

nlohmann::json db_to_json(double db) {
  if (std::isinf(db)) return db > 0 ? "inf" : "-inf";
  return db;
}

nlohmann::json report_to_json(const EvalReport& r) {
  return {{"mpsnr_db", db_to_json(r.mpsnr_db)}, {"valid_count", r.valid_count}, {"l1", r.l1}};
}

}  // namespace warpcore
