#pragma once

#include <filesystem>
#include <functional>
#include <string>

#include "warpcore/nn/graph.hpp"
#include "warpcore/nn/param_store.hpp"

namespace warpcore::nn {

struct AdamState {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step = 0;
  ParamStore m;  ///< first moments, created on the first step
  ParamStore v;  ///< second moments
};

/// Bias-corrected Adam update of `store` in place. Throws InvalidParams if
/// the result is not finite.
void adam_step(ParamStore& store, const ParamStore& grads, AdamState& state);

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  std::size_t coordinates = 0;
};

/// Scalar objective built on a fresh graph from the current parameters.
using LossFn = std::function<Var(Graph&, const ParamStore&)>;

/// Compares backward() with central differences (f(t+h) - f(t-h)) / 2h on
/// every coordinate of `store`. The error of one coordinate is
/// |analytic - numeric| / max(|analytic|, |numeric|, floor); `floor` keeps
/// round-off on near-zero gradients from reading as relative error.
GradCheckResult grad_check(const LossFn& f, ParamStore& store, double h = 1e-4,
                           double floor = 1e-6);

/// Binary weights container:
///   magic "WCWT", version byte 1, u32 record count, then per record
///   u32 name length, name bytes, u32 rank, rank x u32 dims,
///   product(dims) x f64 values. All integers and floats little-endian.
void save_weights(const ParamStore& store, const std::filesystem::path& path);
/// Throws IoError or UnsupportedFormat.
ParamStore load_weights(const std::filesystem::path& path);

}  // namespace warpcore::nn
