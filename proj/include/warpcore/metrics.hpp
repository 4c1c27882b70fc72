#pragma once

#include <cstddef>

#include <json.hpp>

#include "warpcore/image.hpp"

namespace warpcore {

struct EvalReport {
  double mpsnr_db = 0.0;  ///< +inf when the masked error is zero
  std::size_t valid_count = 0;
  double l1 = 0.0;
};

/// 10 log10(1 / MSE) over valid pixels, MSE normalized by pixels x channels.
/// Returns +inf when the error is zero. Throws EmptyMask, ShapeMismatch.
double mpsnr(const Plane& sr, const Plane& hr, const Mask& m);

/// Mean absolute error over valid pixels and all channels.
double masked_l1(const Plane& sr, const Plane& hr, const Mask& m);

EvalReport evaluate(const Plane& sr, const Plane& hr, const Mask& m);

/// {"mpsnr_db": x | "inf", "valid_count": n, "l1": x}
nlohmann::json report_to_json(const EvalReport& r);
/// A dB value as JSON, infinities spelled "inf" / "-inf".
nlohmann::json db_to_json(double db);

}  // namespace warpcore
