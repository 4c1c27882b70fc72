#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace warpcore {

inline constexpr double kGradCheckTolerance = 1e-5;

struct GradCheckCase {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
  std::string worst;  ///< "param[index]" of the largest error

  bool passed() const { return max_rel_error <= kGradCheckTolerance; }
};

/// Central-difference checks of every differentiable op and of the model
/// pipeline on small random inputs, in double precision.
std::vector<GradCheckCase> run_gradcheck_suite(std::uint64_t seed = 7);

}  // namespace warpcore
