#include "warpcore/nn/layers.hpp"

#include <cmath>

namespace warpcore::nn {
namespace {

Tensor kaiming_uniform(Shape shape, int fan_in, std::mt19937_64& rng, double gain) {
  Tensor t(std::move(shape));
  const double bound = gain * std::sqrt(6.0 / fan_in);
  for (double& v : t.values()) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    v = (2.0 * u - 1.0) * bound;
  }
  return t;
}

}  // namespace

void init_conv(ParamStore& store, const std::string& prefix, int c_out, int c_in, int k,
               std::mt19937_64& rng, double gain) {
  store.add(prefix + ".w", kaiming_uniform({c_out, c_in, k, k}, c_in * k * k, rng, gain));
  store.add(prefix + ".b", Tensor({c_out}));
}

void init_fc(ParamStore& store, const std::string& prefix, int n_out, int n_in,
             std::mt19937_64& rng, double gain) {
  store.add(prefix + ".w", kaiming_uniform({n_out, n_in}, n_in, rng, gain));
  store.add(prefix + ".b", Tensor({n_out}));
}

void init_residual_block(ParamStore& store, const std::string& prefix, int channels,
                         std::mt19937_64& rng) {
  init_conv(store, prefix + ".conv1", channels, channels, 3, rng);
  init_conv(store, prefix + ".conv2", channels, channels, 3, rng, 0.1);
}

Var conv_layer(Graph& g, const ParamStore& store, const std::string& prefix, Var x) {
  return conv2d(g, x, g.param(store, prefix + ".w"), g.param(store, prefix + ".b"));
}

Var pconv_layer(Graph& g, const ParamStore& store, const std::string& prefix, Var x,
                const Mask& m) {
  const PConvResult r =
      pconv2d(g, x, m, g.param(store, prefix + ".w"), g.param(store, prefix + ".b"));
  return apply_mask(g, r.out, m);
}

Var fc_layer(Graph& g, const ParamStore& store, const std::string& prefix, Var x) {
  return fc(g, x, g.param(store, prefix + ".w"), g.param(store, prefix + ".b"));
}

Var linear_layer(Graph& g, const ParamStore& store, const std::string& prefix, Var x) {
  return linear(g, x, g.param(store, prefix + ".w"), g.param(store, prefix + ".b"));
}

Var residual_block(Graph& g, const ParamStore& store, const std::string& prefix, Var x) {
  const Var h = relu(g, conv_layer(g, store, prefix + ".conv1", x));
  return add(g, x, conv_layer(g, store, prefix + ".conv2", h));
}

Var masked_residual_block(Graph& g, const ParamStore& store, const std::string& prefix, Var x,
                          const Mask& m) {
  const Var h = relu(g, pconv_layer(g, store, prefix + ".conv1", x, m));
  return add(g, x, pconv_layer(g, store, prefix + ".conv2", h, m));
}

}  // namespace warpcore::nn
