#pragma once

#include <random>
#include <string>

#include "warpcore/nn/graph.hpp"
#include "warpcore/nn/ops.hpp"

namespace warpcore::nn {

/// Kaiming-uniform (fan-in, ReLU gain) weights scaled by `gain`, zero bias.
/// Registers prefix + ".w" [c_out, c_in, k, k] and prefix + ".b" [c_out].
void init_conv(ParamStore& store, const std::string& prefix, int c_out, int c_in, int k,
               std::mt19937_64& rng, double gain = 1.0);
/// Registers prefix + ".w" [n_out, n_in] and prefix + ".b" [n_out].
void init_fc(ParamStore& store, const std::string& prefix, int n_out, int n_in,
             std::mt19937_64& rng, double gain = 1.0);
/// Two channel-preserving 3x3 convs: prefix.conv1, prefix.conv2 (the
/// second at gain 0.1 so a deep stack starts close to identity).
void init_residual_block(ParamStore& store, const std::string& prefix, int channels,
                         std::mt19937_64& rng);

Var conv_layer(Graph& g, const ParamStore& store, const std::string& prefix, Var x);
/// Partial conv followed by re-masking with the same mask.
Var pconv_layer(Graph& g, const ParamStore& store, const std::string& prefix, Var x,
                const Mask& m);
Var fc_layer(Graph& g, const ParamStore& store, const std::string& prefix, Var x);
Var linear_layer(Graph& g, const ParamStore& store, const std::string& prefix, Var x);

/// x + conv2(relu(conv1(x))).
Var residual_block(Graph& g, const ParamStore& store, const std::string& prefix, Var x);
/// Partial-conv variant; every intermediate stays zero at void pixels.
Var masked_residual_block(Graph& g, const ParamStore& store, const std::string& prefix, Var x,
                          const Mask& m);

}  // namespace warpcore::nn
