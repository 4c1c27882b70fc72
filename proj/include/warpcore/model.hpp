#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "warpcore/image.hpp"
#include "warpcore/nn/graph.hpp"
#include "warpcore/nn/optim.hpp"
#include "warpcore/warp.hpp"
#include "warpcore/xform.hpp"

namespace warpcore {

enum class BlendMode { kLearned, kAverage, kConcat, kNoContent, kNoScale };

std::string to_string(BlendMode mode);
/// Throws InvalidParams.
BlendMode blend_mode_from_string(const std::string& s);

/// Feature scales of the multiscale extractor.
inline constexpr std::array<int, 3> kScales = {1, 2, 4};

struct ModelConfig {
  int trunk_blocks = 4;
  int channels = 16;
  int estimator_hidden = 64;
  int recon_blocks = 5;
  bool depthwise = true;            ///< C x 3 x 3 kernels instead of one shared 3 x 3
  bool per_scale_estimators = true; ///< one kernel estimator per scale branch
  BlendMode blend_mode = BlendMode::kLearned;
  std::uint64_t seed = 1;           ///< parameter initialization

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

nlohmann::json config_to_json(const ModelConfig& cfg);
/// Missing keys keep their defaults. Throws InvalidParams.
ModelConfig config_from_json(const nlohmann::json& j);

/// Fresh parameters for cfg (Kaiming-uniform, last layer of each head x0.1).
nn::ParamStore init_params(const ModelConfig& cfg);
/// Zeroes the last layer of the kernel estimators, the blending weights and
/// the reconstruction output, so the model reduces to its bicubic residual.
void zero_heads(nn::ParamStore& params, const ModelConfig& cfg);
/// Throws InvalidParams when names or shapes differ from init_params(cfg).
void check_params(const nn::ParamStore& params, const ModelConfig& cfg);

struct MultiScaleFeatures {
  nn::Var x1;  ///< [C, H, W]
  nn::Var x2;  ///< [C, 2H, 2W]
  nn::Var x4;  ///< [C, 4H, 4W]

  nn::Var at(std::size_t scale_index) const {
    return scale_index == 0 ? x1 : (scale_index == 1 ? x2 : x4);
  }
};

/// Shared residual trunk with x1, x2 and x4 heads. img is [3, H, W].
MultiScaleFeatures extract_multiscale(nn::Graph& g, const nn::ParamStore& params,
                                      const ModelConfig& cfg, nn::Var img);

/// MLP on rows of 18 rescaled offsets: [P, 18] -> [P, C*9] or [P, 9].
nn::Var kernel_estimator(nn::Graph& g, const nn::ParamStore& params, const ModelConfig& cfg,
                         std::size_t scale_index, nn::Var offsets);

/// Rescaled window offsets of every plan pixel as a [P, 18] tensor.
nn::Tensor offsets_tensor(const WindowPlan& plan);

/// Per-sample warping geometry shared by all scale branches: the window plan
/// of each scale, the common validity mask, the scale feature and the
/// bicubic-warped input.
struct WarpGeometry {
  Dims dst;
  Mask mask;
  std::array<std::shared_ptr<const WindowPlan>, 3> plans;
  nn::Tensor scale_feature;  ///< [1, H', W'], 0 at void pixels
  nn::Tensor bicubic;        ///< [3, H', W'], 0 at void pixels
};

/// Composes map with the scale matrix of each feature scale and plans all
/// three adaptive windows on one shared mask.
WarpGeometry prepare_geometry(const Plane& img, const BackwardMap& map, Dims dst);

struct AwlOutput {
  nn::Var out;  ///< [C, H', W']
  Mask mask;
};

/// Adaptive warping layer on a prepared plan.
AwlOutput awl(nn::Graph& g, const nn::ParamStore& params, const ModelConfig& cfg,
              std::size_t scale_index, nn::Var feat, std::shared_ptr<const WindowPlan> plan);
/// Convenience form that plans the windows from `map` itself.
AwlOutput awl(nn::Graph& g, const nn::ParamStore& params, const ModelConfig& cfg,
              std::size_t scale_index, nn::Var feat, const BackwardMap& map, Dims dst);

/// Multiscale blending of the three warped features. scale_feature is
/// [1, H', W'].
nn::Var blend(nn::Graph& g, const nn::ParamStore& params, const ModelConfig& cfg,
              const std::array<nn::Var, 3>& warped, nn::Var scale_feature, const Mask& mask);

/// R(W_blend) * m + I_bic.
nn::Var reconstruct(nn::Graph& g, const nn::ParamStore& params, const ModelConfig& cfg,
                    nn::Var blended, nn::Var bicubic, const Mask& mask);

struct ForwardOutput {
  nn::Var image;  ///< [3, H', W']
  Mask mask;
};

/// Full pipeline on a graph.
ForwardOutput forward(nn::Graph& g, const nn::ParamStore& params, const ModelConfig& cfg,
                      nn::Var img, const WarpGeometry& geometry);

/// Inference convenience wrapper.
WarpResult forward(const nn::ParamStore& params, const ModelConfig& cfg, const Plane& img,
                   const BackwardMap& map, Dims dst);

struct TrainExample {
  Plane lr;            ///< network input
  BackwardMap map;     ///< target -> lr coordinates
  Plane hr;            ///< target on the output grid
  Mask mask;           ///< valid pixels of the output grid
};

/// Masked L1 of one example on a graph; the hook for train_step and tests.
nn::Var example_loss(nn::Graph& g, const nn::ParamStore& params, const ModelConfig& cfg,
                     const TrainExample& ex, const WarpGeometry& geometry);

struct StepResult {
  double loss = 0.0;
  nn::ParamStore grads;  ///< averaged over the batch
};

/// Average masked L1 over the batch and its gradient, without updating.
/// Examples are evaluated on independent graphs (in parallel when threads
/// allow) and reduced in batch order. Throws EmptyMask.
StepResult batch_gradients(const nn::ParamStore& params, const ModelConfig& cfg,
                           const std::vector<const TrainExample*>& batch);

/// batch_gradients followed by one Adam update. Returns the batch loss.
double train_step(nn::ParamStore& params, const ModelConfig& cfg,
                  const std::vector<const TrainExample*>& batch, nn::AdamState& adam);

}  // namespace warpcore
