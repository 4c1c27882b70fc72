#include "warpcore/model.hpp"

#include <cmath>
#include <random>

#include "warpcore/error.hpp"
#include "warpcore/nn/layers.hpp"
#include "warpcore/nn/ops.hpp"
#include "warpcore/parallel.hpp"

namespace warpcore {

using nn::Graph;
using nn::Shape;
using nn::ParamStore;
using nn::Tensor;
using nn::Var;

namespace {

constexpr double kHeadGain = 0.1;
constexpr double kLeakySlope = 0.2;

std::string estimator_prefix(const ModelConfig& cfg, std::size_t scale_index) {
  if (!cfg.per_scale_estimators) return "est";
  return "est" + std::to_string(kScales.at(scale_index));
}

int kernel_width(const ModelConfig& cfg) {
  return cfg.depthwise ? cfg.channels * kWindowTaps : kWindowTaps;
}

void validate(const ModelConfig& cfg) {
  if (cfg.trunk_blocks < 0 || cfg.recon_blocks < 0 || cfg.channels < 1 ||
      cfg.estimator_hidden < 1) {
    throw Error(ErrorKind::kInvalidParams, "model config: sizes must be positive");
  }
}

// Names of the last layer of every head.
std::vector<std::string> head_layers(const ModelConfig& cfg) {
  std::vector<std::string> out;
  const std::size_t estimators = cfg.per_scale_estimators ? kScales.size() : 1;
  for (std::size_t i = 0; i < estimators; ++i) out.push_back(estimator_prefix(cfg, i) + ".fc3");
  switch (cfg.blend_mode) {
    case BlendMode::kAverage:
      break;
    case BlendMode::kConcat:
      out.push_back("blend.concat");
      break;
    default:
      out.push_back("blend.mix2");
  }
  out.push_back("recon.tail");
  return out;
}

Var image_var(Graph& g, const Tensor& t) { return g.constant(t); }

}  // namespace

std::string to_string(BlendMode mode) {
  switch (mode) {
    case BlendMode::kLearned: return "learned";
    case BlendMode::kAverage: return "average";
    case BlendMode::kConcat: return "concat";
    case BlendMode::kNoContent: return "no_content";
    case BlendMode::kNoScale: return "no_scale";
  }
  return "learned";
}

BlendMode blend_mode_from_string(const std::string& s) {
  for (BlendMode m : {BlendMode::kLearned, BlendMode::kAverage, BlendMode::kConcat,
                      BlendMode::kNoContent, BlendMode::kNoScale}) {
    if (to_string(m) == s) return m;
  }
  throw Error(ErrorKind::kInvalidParams, "unknown blend mode '" + s + "'");
}

nlohmann::json config_to_json(const ModelConfig& cfg) {
  return {{"trunk_blocks", cfg.trunk_blocks},
          {"channels", cfg.channels},
          {"scales", {1, 2, 4}},
          {"kernel", 3},
          {"estimator_hidden", cfg.estimator_hidden},
          {"recon_blocks", cfg.recon_blocks},
          {"depthwise", cfg.depthwise},
          {"per_scale_estimators", cfg.per_scale_estimators},
          {"blend_mode", to_string(cfg.blend_mode)},
          {"seed", cfg.seed}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorKind::kInvalidParams, "model config must be an object");
  ModelConfig cfg;
  try {
    cfg.trunk_blocks = j.value("trunk_blocks", cfg.trunk_blocks);
    cfg.channels = j.value("channels", cfg.channels);
    cfg.estimator_hidden = j.value("estimator_hidden", cfg.estimator_hidden);
    cfg.recon_blocks = j.value("recon_blocks", cfg.recon_blocks);
    cfg.depthwise = j.value("depthwise", cfg.depthwise);
    cfg.per_scale_estimators = j.value("per_scale_estimators", cfg.per_scale_estimators);
    cfg.seed = j.value("seed", cfg.seed);
    if (j.contains("blend_mode")) {
      cfg.blend_mode = blend_mode_from_string(j.at("blend_mode").get<std::string>());
    }
    if (j.contains("scales") && j.at("scales") != nlohmann::json({1, 2, 4})) {
      throw Error(ErrorKind::kInvalidParams, "scales must be [1, 2, 4]");
    }
    if (j.contains("kernel") && j.at("kernel") != 3) {
      throw Error(ErrorKind::kInvalidParams, "kernel must be 3");
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kInvalidParams, std::string("model config: ") + e.what());
  }
  validate(cfg);
  return cfg;
}

ParamStore init_params(const ModelConfig& cfg) {
  validate(cfg);
  std::mt19937_64 rng(cfg.seed);
  ParamStore s;
  const int c = cfg.channels;

  nn::init_conv(s, "head", c, 3, 3, rng);
  for (int i = 0; i < cfg.trunk_blocks; ++i) {
    nn::init_residual_block(s, "trunk." + std::to_string(i), c, rng);
  }
  nn::init_conv(s, "trunk.tail", c, c, 3, rng);
  nn::init_conv(s, "up1", c, c, 3, rng);
  nn::init_conv(s, "up2", 4 * c, c, 3, rng);
  nn::init_conv(s, "up4a", 4 * c, c, 3, rng);
  nn::init_conv(s, "up4b", 4 * c, c, 3, rng);

  const std::size_t estimators = cfg.per_scale_estimators ? kScales.size() : 1;
  for (std::size_t i = 0; i < estimators; ++i) {
    const std::string p = estimator_prefix(cfg, i);
    nn::init_fc(s, p + ".fc1", cfg.estimator_hidden, 2 * kWindowTaps, rng);
    nn::init_fc(s, p + ".fc2", cfg.estimator_hidden, cfg.estimator_hidden, rng);
    nn::init_fc(s, p + ".fc3", kernel_width(cfg), cfg.estimator_hidden, rng, kHeadGain);
  }

  switch (cfg.blend_mode) {
    case BlendMode::kAverage:
      break;
    case BlendMode::kConcat:
      nn::init_conv(s, "blend.concat", c, 3 * c, 1, rng, kHeadGain);
      break;
    default: {
      const bool content = cfg.blend_mode != BlendMode::kNoContent;
      const bool scale = cfg.blend_mode != BlendMode::kNoScale;
      if (content) {
        for (int sc : kScales) nn::init_conv(s, "blend.content" + std::to_string(sc), c, c, 3, rng);
        nn::init_conv(s, "blend.global", c, 3 * c, 3, rng);
      }
      nn::init_conv(s, "blend.mix1", c, (content ? c : 0) + (scale ? 1 : 0), 1, rng);
      nn::init_conv(s, "blend.mix2", static_cast<int>(kScales.size()), c, 1, rng, kHeadGain);
    }
  }

  for (int i = 0; i < cfg.recon_blocks; ++i) {
    nn::init_residual_block(s, "recon." + std::to_string(i), c, rng);
  }
  // The residual output starts at exactly zero, so training starts from the
  // bicubic baseline.
  nn::init_conv(s, "recon.tail", 3, c, 3, rng, 0.0);
  return s;
}

void zero_heads(ParamStore& params, const ModelConfig& cfg) {
  for (const auto& layer : head_layers(cfg)) {
    for (const char* suffix : {".w", ".b"}) {
      auto& t = params.at(layer + suffix);
      std::fill(t.storage().begin(), t.storage().end(), 0.0);
    }
  }
}

void check_params(const ParamStore& params, const ModelConfig& cfg) {
  const ParamStore ref = init_params(cfg);
  if (ref.size() != params.size()) {
    throw Error(ErrorKind::kInvalidParams, "weights do not match the model config: expected " +
                                               std::to_string(ref.size()) + " tensors, got " +
                                               std::to_string(params.size()));
  }
  for (const auto& [name, t] : ref.entries()) {
    if (!params.contains(name)) throw Error(ErrorKind::kInvalidParams, "weights lack " + name);
    if (params.at(name).shape() != t.shape()) {
      throw Error(ErrorKind::kInvalidParams,
                  name + ": expected shape " + nn::shape_string(t.shape()) + ", got " +
                      nn::shape_string(params.at(name).shape()));
    }
  }
}

MultiScaleFeatures extract_multiscale(Graph& g, const ParamStore& params, const ModelConfig& cfg,
                                      Var img) {
  const Tensor& v = g.value(img);
  if (v.rank() != 3 || v.dim(0) != 3) {
    throw Error(ErrorKind::kShapeMismatch,
                "extract_multiscale: expected [3,H,W], got " + nn::shape_string(v.shape()));
  }
  const Var head = nn::conv_layer(g, params, "head", img);
  Var x = head;
  for (int i = 0; i < cfg.trunk_blocks; ++i) {
    x = nn::residual_block(g, params, "trunk." + std::to_string(i), x);
  }
  const Var f = nn::add(g, nn::conv_layer(g, params, "trunk.tail", x), head);

  MultiScaleFeatures out;
  out.x1 = nn::conv_layer(g, params, "up1", f);
  out.x2 = nn::depth_to_space(g, nn::conv_layer(g, params, "up2", f), 2);
  const Var half = nn::depth_to_space(g, nn::conv_layer(g, params, "up4a", f), 2);
  out.x4 = nn::depth_to_space(g, nn::conv_layer(g, params, "up4b", half), 2);
  return out;
}

Var kernel_estimator(Graph& g, const ParamStore& params, const ModelConfig& cfg,
                     std::size_t scale_index, Var offsets) {
  const Tensor& v = g.value(offsets);
  if (v.rank() != 2 || v.dim(1) != 2 * kWindowTaps) {
    throw Error(ErrorKind::kShapeMismatch,
                "kernel_estimator: expected [P,18], got " + nn::shape_string(v.shape()));
  }
  const std::string p = estimator_prefix(cfg, scale_index);
  Var h = nn::leaky_relu(g, nn::linear_layer(g, params, p + ".fc1", offsets), kLeakySlope);
  h = nn::leaky_relu(g, nn::linear_layer(g, params, p + ".fc2", h), kLeakySlope);
  return nn::linear_layer(g, params, p + ".fc3", h);
}

Tensor offsets_tensor(const WindowPlan& plan) {
  const int n = static_cast<int>(plan.pixels.size());
  Tensor t({n, 2 * kWindowTaps});
  for (int p = 0; p < n; ++p) {
    const auto o = rescaled_offsets(plan, static_cast<std::size_t>(p));
    double* row = t.data() + static_cast<std::size_t>(p) * 2 * kWindowTaps;
    for (int k = 0; k < kWindowTaps; ++k) {
      row[2 * k] = o[static_cast<std::size_t>(k)].x;
      row[2 * k + 1] = o[static_cast<std::size_t>(k)].y;
    }
  }
  return t;
}

WarpGeometry prepare_geometry(const Plane& img, const BackwardMap& map, Dims dst) {
  const Dims src = img.dims();
  std::array<BackwardMap, 3> maps;
  std::array<Dims, 3> srcs;
  for (std::size_t i = 0; i < kScales.size(); ++i) {
    const int s = kScales[i];
    maps[i] = s == 1 ? map : map.then(scale_matrix(s, s));
    srcs[i] = {src.width * s, src.height * s};
  }

  // The x1 plan defines the mask; a finer scale can only drop pixels (a
  // singular Jacobian), in which case every plan is rebuilt on the
  // intersection so all branches share one mask.
  WarpGeometry geo;
  geo.dst = dst;
  std::array<WindowPlan, 3> plans;
  plans[0] = plan_windows(maps[0], srcs[0], dst, true);
  geo.mask = plans[0].mask;
  for (int round = 0; round < 4; ++round) {
    bool stable = true;
    for (std::size_t i = round == 0 ? 1 : 0; i < kScales.size(); ++i) {
      plans[i] = plan_windows(maps[i], srcs[i], dst, true, &geo.mask);
      if (plans[i].mask != geo.mask) {
        for (std::size_t k = 0; k < geo.mask.size(); ++k) geo.mask[k] &= plans[i].mask[k];
        stable = false;
      }
    }
    if (stable) break;
  }
  for (std::size_t i = 0; i < kScales.size(); ++i) {
    geo.plans[i] = std::make_shared<const WindowPlan>(std::move(plans[i]));
  }

  geo.scale_feature = Tensor({1, dst.height, dst.width});
  for (int y = 0; y < dst.height; ++y) {
    for (int x = 0; x < dst.width; ++x) {
      if (!geo.mask.at(y, x)) continue;
      const auto j = try_jacobian(map, {static_cast<double>(x), static_cast<double>(y)});
      if (!j) throw Error(ErrorKind::kOutOfDomain, "scale feature at a planned pixel");
      geo.scale_feature[static_cast<std::size_t>(y) * dst.width + x] = scale_feature(*j);
    }
  }

  Plane bic = warp_bicubic(img, map, dst).image;
  const std::size_t area = static_cast<std::size_t>(dst.width) * dst.height;
  for (int c = 0; c < bic.channels(); ++c) {
    auto ch = bic.channel(c);
    for (std::size_t k = 0; k < area; ++k) {
      if (!geo.mask[k]) ch[k] = 0.0;
    }
  }
  geo.bicubic = nn::to_tensor(bic);
  return geo;
}

AwlOutput awl(Graph& g, const ParamStore& params, const ModelConfig& cfg, std::size_t scale_index,
              Var feat, std::shared_ptr<const WindowPlan> plan) {
  const Var offsets = g.constant(offsets_tensor(*plan));
  const Var kernels = kernel_estimator(g, params, cfg, scale_index, offsets);
  AwlOutput out;
  out.out = nn::window_gather(g, feat, kernels, plan);
  out.mask = plan->mask;
  return out;
}

AwlOutput awl(Graph& g, const ParamStore& params, const ModelConfig& cfg, std::size_t scale_index,
              Var feat, const BackwardMap& map, Dims dst) {
  const Tensor& v = g.value(feat);
  if (v.rank() != 3) throw Error(ErrorKind::kShapeMismatch, "awl: feature must be [C,H,W]");
  auto plan = std::make_shared<const WindowPlan>(
      plan_windows(map, {v.dim(2), v.dim(1)}, dst, true));
  return awl(g, params, cfg, scale_index, feat, std::move(plan));
}

Var blend(Graph& g, const ParamStore& params, const ModelConfig& cfg,
          const std::array<Var, 3>& warped, Var scale_feature, const Mask& mask) {
  const Shape& ref = g.value(warped[0]).shape();
  for (Var w : warped) {
    if (g.value(w).shape() != ref) throw Error(ErrorKind::kShapeMismatch, "blend: branch shapes differ");
  }
  const Shape& sf = g.value(scale_feature).shape();
  if (ref.size() != 3 || sf != Shape{1, ref[1], ref[2]} || mask.height() != ref[1] ||
      mask.width() != ref[2]) {
    throw Error(ErrorKind::kShapeMismatch, "blend: scale feature or mask does not match");
  }

  switch (cfg.blend_mode) {
    case BlendMode::kAverage:
      return nn::scale(g, nn::add(g, nn::add(g, warped[0], warped[1]), warped[2]), 1.0 / 3.0);
    case BlendMode::kConcat: {
      const Var cat = nn::concat_channels(g, {warped[0], warped[1], warped[2]});
      return nn::apply_mask(g, nn::conv_layer(g, params, "blend.concat", cat), mask);
    }
    default:
      break;
  }

  std::vector<Var> cues;
  if (cfg.blend_mode != BlendMode::kNoContent) {
    std::vector<Var> per_scale;
    for (std::size_t i = 0; i < kScales.size(); ++i) {
      const std::string name = "blend.content" + std::to_string(kScales[i]);
      per_scale.push_back(nn::relu(g, nn::pconv_layer(g, params, name, warped[i], mask)));
    }
    const Var cat = nn::concat_channels(g, per_scale);
    cues.push_back(nn::relu(g, nn::pconv_layer(g, params, "blend.global", cat, mask)));
  }
  if (cfg.blend_mode != BlendMode::kNoScale) cues.push_back(scale_feature);
  const Var in = cues.size() == 1 ? cues[0] : nn::concat_channels(g, cues);
  const Var h = nn::relu(g, nn::conv_layer(g, params, "blend.mix1", in));
  const Var w = nn::apply_mask(g, nn::conv_layer(g, params, "blend.mix2", h), mask);

  Var acc{};
  for (std::size_t i = 0; i < kScales.size(); ++i) {
    const Var term =
        nn::broadcast_mul(g, nn::channel_slice(g, w, static_cast<int>(i), 1), warped[i]);
    acc = i == 0 ? term : nn::add(g, acc, term);
  }
  return acc;
}

Var reconstruct(Graph& g, const ParamStore& params, const ModelConfig& cfg, Var blended,
                Var bicubic, const Mask& mask) {
  const Shape& b = g.value(bicubic).shape();
  const Shape& x0 = g.value(blended).shape();
  if (b.size() != 3 || b[0] != 3 || x0.size() != 3 || x0[1] != b[1] || x0[2] != b[2] ||
      mask.height() != b[1] || mask.width() != b[2]) {
    throw Error(ErrorKind::kShapeMismatch, "reconstruct: feature, residual and mask disagree");
  }
  Var x = blended;
  for (int i = 0; i < cfg.recon_blocks; ++i) {
    x = nn::masked_residual_block(g, params, "recon." + std::to_string(i), x, mask);
  }
  const Var r = nn::pconv_layer(g, params, "recon.tail", x, mask);
  return nn::add(g, r, bicubic);
}

ForwardOutput forward(Graph& g, const ParamStore& params, const ModelConfig& cfg, Var img,
                      const WarpGeometry& geo) {
  const MultiScaleFeatures feats = extract_multiscale(g, params, cfg, img);
  std::array<Var, 3> warped;
  for (std::size_t i = 0; i < kScales.size(); ++i) {
    warped[i] = awl(g, params, cfg, i, feats.at(i), geo.plans[i]).out;
  }
  const Var s = g.constant(geo.scale_feature);
  const Var blended = blend(g, params, cfg, warped, s, geo.mask);
  const Var bic = g.constant(geo.bicubic);
  return {reconstruct(g, params, cfg, blended, bic, geo.mask), geo.mask};
}

WarpResult forward(const ParamStore& params, const ModelConfig& cfg, const Plane& img,
                   const BackwardMap& map, Dims dst) {
  const WarpGeometry geo = prepare_geometry(img, map, dst);
  Graph g;
  const Var in = image_var(g, nn::to_tensor(img));
  const ForwardOutput out = forward(g, params, cfg, in, geo);
  return {nn::to_plane(g.value(out.image)), out.mask};
}

Var example_loss(Graph& g, const ParamStore& params, const ModelConfig& cfg,
                 const TrainExample& ex, const WarpGeometry& geo) {
  if (ex.hr.dims().width != geo.dst.width || ex.hr.dims().height != geo.dst.height ||
      ex.mask.dims().width != geo.dst.width || ex.mask.dims().height != geo.dst.height) {
    throw Error(ErrorKind::kShapeMismatch, "example_loss: target grid does not match geometry");
  }
  Mask m = geo.mask;
  for (std::size_t k = 0; k < m.size(); ++k) m[k] &= ex.mask[k];
  const Var in = image_var(g, nn::to_tensor(ex.lr));
  const ForwardOutput out = forward(g, params, cfg, in, geo);
  return nn::masked_l1(g, out.image, nn::to_tensor(ex.hr), m);
}

StepResult batch_gradients(const ParamStore& params, const ModelConfig& cfg,
                           const std::vector<const TrainExample*>& batch) {
  if (batch.empty()) throw Error(ErrorKind::kInvalidParams, "empty batch");
  std::vector<double> losses(batch.size());
  std::vector<ParamStore> grads(batch.size());
  parallel_for(batch.size(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const TrainExample& ex = *batch[i];
      const WarpGeometry geo = prepare_geometry(ex.lr, ex.map, ex.hr.dims());
      Graph g;
      const Var loss = example_loss(g, params, cfg, ex, geo);
      g.backward(loss);
      losses[i] = g.value(loss)[0];
      grads[i] = g.param_grads(params);
    }
  });
  StepResult r;
  r.grads = params.zeros_like();
  for (std::size_t i = 0; i < batch.size(); ++i) {
    r.loss += losses[i];
    r.grads.accumulate(grads[i]);
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  r.loss *= inv;
  r.grads.scale(inv);
  return r;
}

double train_step(ParamStore& params, const ModelConfig& cfg,
                  const std::vector<const TrainExample*>& batch, nn::AdamState& adam) {
  StepResult r = batch_gradients(params, cfg, batch);
  nn::adam_step(params, r.grads, adam);
  return r.loss;
}

}  // namespace warpcore
