#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "support/synthetic.hpp"
#include "warpcore/data.hpp"
#include "warpcore/error.hpp"
#include "warpcore/metrics.hpp"
#include "warpcore/model.hpp"
#include "warpcore/nn/ops.hpp"
#include "warpcore/parallel.hpp"
#include "warpcore/train.hpp"

using namespace warpcore;
using nn::Graph;
using nn::ParamStore;
using nn::Tensor;
using nn::Var;

namespace {

ModelConfig small_config() {
  ModelConfig cfg;
  cfg.trunk_blocks = 1;
  cfg.channels = 4;
  cfg.estimator_hidden = 8;
  cfg.recon_blocks = 1;
  return cfg;
}

void randomize(ParamStore& p, std::uint64_t seed, double scale = 0.2) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-scale, scale);
  for (auto& [name, t] : p.entries())
    for (double& v : t.storage()) v = u(rng);
}

void zero_all(ParamStore& p) {
  for (auto& [name, t] : p.entries()) std::fill(t.storage().begin(), t.storage().end(), 0.0);
}

BackwardMap projective_map(double scale, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return BackwardMap::from_homography(testutil::random_homography(rng, scale, 2e-3));
}

}  // namespace

TEST(Config, JsonRoundTripAndValidation) {
  ModelConfig cfg = small_config();
  cfg.blend_mode = BlendMode::kNoScale;
  cfg.depthwise = false;
  EXPECT_EQ(config_from_json(config_to_json(cfg)), cfg);
  EXPECT_THROW(config_from_json({{"blend_mode", "median"}}), Error);
  EXPECT_THROW(config_from_json({{"scales", {1, 2}}}), Error);
  EXPECT_THROW(config_from_json({{"channels", 0}}), Error);
}

TEST(Params, ShapesCheckedAgainstConfig) {
  const ModelConfig cfg = small_config();
  ParamStore p = init_params(cfg);
  EXPECT_NO_THROW(check_params(p, cfg));
  ModelConfig other = cfg;
  other.channels = 5;
  EXPECT_THROW(check_params(p, other), Error);
  other = cfg;
  other.blend_mode = BlendMode::kAverage;
  EXPECT_THROW(check_params(p, other), Error);
}

TEST(Params, AblationsGateParameters) {
  ModelConfig cfg = small_config();
  cfg.blend_mode = BlendMode::kAverage;
  EXPECT_FALSE(init_params(cfg).contains("blend.mix1.w"));
  cfg.blend_mode = BlendMode::kNoContent;
  EXPECT_FALSE(init_params(cfg).contains("blend.global.w"));
  cfg.per_scale_estimators = false;
  EXPECT_TRUE(init_params(cfg).contains("est.fc1.w"));
  EXPECT_FALSE(init_params(cfg).contains("est2.fc1.w"));
}

TEST(ExtractMultiscale, ShapesAndZeroWeights) {
  const ModelConfig cfg = small_config();
  ParamStore p = init_params(cfg);
  std::mt19937_64 rng(1);
  Graph g;
  const Var img = g.constant(nn::to_tensor(testutil::noise_image(3, 8, 8, rng)));
  const auto f = extract_multiscale(g, p, cfg, img);
  EXPECT_EQ(g.value(f.x1).shape(), (nn::Shape{4, 8, 8}));
  EXPECT_EQ(g.value(f.x2).shape(), (nn::Shape{4, 16, 16}));
  EXPECT_EQ(g.value(f.x4).shape(), (nn::Shape{4, 32, 32}));

  zero_all(p);
  Graph h;
  const auto z = extract_multiscale(h, p, cfg, h.constant(g.value(img)));
  for (Var v : {z.x1, z.x2, z.x4})
    for (double e : h.value(v).values()) EXPECT_EQ(e, 0.0);

  Graph bad;
  EXPECT_THROW(extract_multiscale(bad, p, cfg, bad.constant(Tensor({1, 8, 8}))), Error);
}

TEST(KernelEstimator, ZeroFinalLayerAndPurity) {
  const ModelConfig cfg = small_config();
  ParamStore p = init_params(cfg);
  randomize(p, 2);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1, 1);
  Tensor offs({5, 18});
  for (double& v : offs.storage()) v = u(rng);
  Graph g;
  const Var a = kernel_estimator(g, p, cfg, 1, g.constant(offs));
  const Var b = kernel_estimator(g, p, cfg, 1, g.constant(offs));
  EXPECT_EQ(g.value(a), g.value(b));
  EXPECT_EQ(g.value(a).shape(), (nn::Shape{5, 36}));

  zero_heads(p, cfg);
  Graph h;
  for (double v : h.value(kernel_estimator(h, p, cfg, 0, h.constant(offs))).values()) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(kernel_estimator(h, p, cfg, 0, h.constant(Tensor({5, 17}))), Error);

  ModelConfig shared = cfg;
  shared.depthwise = false;
  ParamStore q = init_params(shared);
  Graph s;
  EXPECT_EQ(s.value(kernel_estimator(s, q, shared, 0, s.constant(offs))).shape(), (nn::Shape{5, 9}));
}

TEST(Awl, OneHotCentreCopiesFeatures) {
  const ModelConfig cfg = small_config();
  ParamStore p = init_params(cfg);
  auto& w = p.at("est1.fc3.w");
  std::fill(w.storage().begin(), w.storage().end(), 0.0);
  auto& b = p.at("est1.fc3.b");
  std::fill(b.storage().begin(), b.storage().end(), 0.0);
  for (int c = 0; c < cfg.channels; ++c) b[c * 9 + 4] = 1.0;
  std::mt19937_64 rng(4);
  const Tensor feat = nn::to_tensor(testutil::noise_image(4, 6, 7, rng));
  Graph g;
  const auto out = awl(g, p, cfg, 0, g.constant(feat), BackwardMap(), {7, 6});
  EXPECT_EQ(g.value(out.out), feat);
  EXPECT_EQ(out.mask.count(), out.mask.size());
}

TEST(Awl, MaskMatchesComposedMap) {
  const ModelConfig cfg = small_config();
  ParamStore p = init_params(cfg);
  std::mt19937_64 rng(5);
  const Tensor feat = nn::to_tensor(testutil::noise_image(4, 20, 20, rng));
  const auto map = projective_map(1.6, 6).then(scale_matrix(2, 2));
  Graph g;
  const auto out = awl(g, p, cfg, 1, g.constant(feat), map, {18, 18});
  EXPECT_EQ(out.mask, compute_mask(map, {20, 20}, {18, 18}));
  for (std::size_t k = 0; k < out.mask.size(); ++k) {
    if (out.mask[k]) continue;
    for (int c = 0; c < 4; ++c) EXPECT_EQ(g.value(out.out)[c * out.mask.size() + k], 0.0);
  }
}

TEST(Blend, AverageOfIdenticalPlanes) {
  ModelConfig cfg = small_config();
  cfg.blend_mode = BlendMode::kAverage;
  ParamStore p = init_params(cfg);
  std::mt19937_64 rng(7);
  const Tensor w = nn::to_tensor(testutil::noise_image(4, 5, 5, rng));
  Graph g;
  const Var v = g.constant(w);
  const Var out = blend(g, p, cfg, {v, v, v}, g.constant(Tensor({1, 5, 5})), Mask(5, 5, 1));
  for (std::size_t i = 0; i < w.size(); ++i) EXPECT_NEAR(g.value(out)[i], w[i], 1e-15);
}

TEST(Blend, ZeroWeightsGiveZeroPlane) {
  for (BlendMode mode : {BlendMode::kLearned, BlendMode::kConcat, BlendMode::kNoContent, BlendMode::kNoScale}) {
    ModelConfig cfg = small_config();
    cfg.blend_mode = mode;
    ParamStore p = init_params(cfg);
    zero_all(p);
    std::mt19937_64 rng(8);
    Graph g;
    std::array<Var, 3> ws;
    for (auto& v : ws) v = g.constant(nn::to_tensor(testutil::noise_image(4, 5, 6, rng)));
    const Var out = blend(g, p, cfg, ws, g.constant(Tensor({1, 5, 6}, 0.3)), Mask(5, 6, 1));
    for (double e : g.value(out).values()) EXPECT_EQ(e, 0.0) << to_string(mode);
  }
}

TEST(Reconstruct, ZeroWeightsReturnResidualExactly) {
  const ModelConfig cfg = small_config();
  ParamStore p = init_params(cfg);
  zero_all(p);
  std::mt19937_64 rng(9);
  Tensor bic = nn::to_tensor(testutil::noise_image(3, 6, 6, rng));
  Mask m(6, 6, 1);
  m.at(0, 0) = 0;
  for (int c = 0; c < 3; ++c) bic[c * 36] = 0.0;
  Graph g;
  const Var out = reconstruct(g, p, cfg, g.constant(nn::to_tensor(testutil::noise_image(4, 6, 6, rng))),
                              g.constant(bic), m);
  EXPECT_EQ(g.value(out), bic);
}

TEST(Reconstruct, VoidPixelsEqualResidual) {
  const ModelConfig cfg = small_config();
  ParamStore p = init_params(cfg);
  randomize(p, 10);
  std::mt19937_64 rng(11);
  Mask m(6, 6, 1);
  for (int x = 0; x < 6; ++x) m.at(5, x) = 0;
  Tensor bic({3, 6, 6});
  Graph g;
  const Var out = reconstruct(g, p, cfg, g.constant(nn::to_tensor(testutil::noise_image(4, 6, 6, rng))),
                              g.constant(bic), m);
  for (int c = 0; c < 3; ++c)
    for (int x = 0; x < 6; ++x) EXPECT_EQ(g.value(out)[c * 36 + 30 + x], 0.0);
}

TEST(Forward, ScaleTwoShapesAndMask) {
  const ModelConfig cfg = small_config();
  const ParamStore p = init_params(cfg);
  std::mt19937_64 rng(12);
  const Plane img = testutil::noise_image(3, 16, 16, rng);
  const auto r = forward(p, cfg, img, BackwardMap::from_homography(scale_matrix(2, 2)), {32, 32});
  EXPECT_EQ(r.image.channels(), 3);
  EXPECT_EQ(r.image.width(), 32);
  for (int y = 1; y < 31; ++y)
    for (int x = 1; x < 31; ++x) EXPECT_TRUE(r.mask.at(y, x));
}

TEST(Forward, ZeroHeadsGiveBicubicBitwise) {
  const ModelConfig cfg = small_config();
  ParamStore p = init_params(cfg);
  randomize(p, 13);
  zero_heads(p, cfg);
  const Plane img = testutil::procedural_image(20, 20, 14);
  const auto map = projective_map(1.7, 15);
  const auto r = forward(p, cfg, img, map, {30, 30});
  const auto bic = warp_bicubic(img, map, {30, 30});
  EXPECT_EQ(r.mask, bic.mask);
  EXPECT_EQ(r.image, bic.image);
}

TEST(Forward, IdentityBeatsNoise) {
  const ModelConfig cfg = small_config();
  const ParamStore p = init_params(cfg);
  std::mt19937_64 rng(16);
  const Plane img = testutil::procedural_image(16, 16, 17);
  const auto r = forward(p, cfg, img, BackwardMap(), img.dims());
  const double ours = mpsnr(r.image, img, r.mask);
  EXPECT_TRUE(std::isfinite(ours) || ours > 0);
  EXPECT_GE(ours, mpsnr(testutil::noise_image(3, 16, 16, rng), img, r.mask));
}

TEST(Forward, DeterministicAcrossThreads) {
  const ModelConfig cfg = small_config();
  ParamStore p = init_params(cfg);
  randomize(p, 18);
  const Plane img = testutil::procedural_image(12, 12, 19);
  const auto map = projective_map(1.5, 20);
  const int saved = num_threads();
  set_num_threads(1);
  const auto a = forward(p, cfg, img, map, {16, 16});
  set_num_threads(5);
  const auto b = forward(p, cfg, img, map, {16, 16});
  set_num_threads(saved);
  EXPECT_EQ(a.image, b.image);
}

TEST(TrainStep, PerfectPredictionHasZeroLossAndGradient) {
  const ModelConfig cfg = small_config();
  ParamStore p = init_params(cfg);
  randomize(p, 21);
  zero_heads(p, cfg);
  const Plane img = testutil::procedural_image(10, 10, 22);
  const auto map = projective_map(1.4, 23);
  const auto bic = warp_bicubic(img, map, {12, 12});
  const TrainExample ex{img, map, bic.image, bic.mask};
  const StepResult r = batch_gradients(p, cfg, {&ex, &ex});
  EXPECT_EQ(r.loss, 0.0);
  for (const auto& [name, g] : r.grads.entries())
    for (double v : g.values()) EXPECT_EQ(v, 0.0) << name;
}

TEST(TrainStep, EveryParameterGetsAFiniteGradient) {
  for (BlendMode mode : {BlendMode::kLearned, BlendMode::kConcat, BlendMode::kNoContent}) {
    ModelConfig cfg = small_config();
    cfg.blend_mode = mode;
    ParamStore p = init_params(cfg);
    randomize(p, 24);
    const Plane img = testutil::procedural_image(10, 10, 25);
    std::mt19937_64 rng(26);
    const TrainExample ex{img, projective_map(1.5, 27), testutil::noise_image(3, 14, 14, rng), Mask(14, 14, 1)};
    const StepResult r = batch_gradients(p, cfg, {&ex});
    for (const auto& [name, g] : r.grads.entries()) {
      EXPECT_TRUE(g.all_finite()) << name;
      double mag = 0;
      for (double v : g.values()) mag += std::abs(v);
      EXPECT_GT(mag, 0.0) << name << " in " << to_string(mode);
    }
  }
}

TEST(TrainStep, EmptyMaskRejected) {
  const ModelConfig cfg = small_config();
  ParamStore p = init_params(cfg);
  const Plane img = testutil::procedural_image(8, 8, 28);
  const TrainExample ex{img, BackwardMap(), img, Mask(8, 8, 0)};
  nn::AdamState adam;
  try {
    train_step(p, cfg, {&ex}, adam);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kEmptyMask);
  }
}

TEST(TrainStep, VoidTargetPixelsDoNotMatter) {
  const ModelConfig cfg = small_config();
  ParamStore p = init_params(cfg);
  randomize(p, 29);
  const Plane img = testutil::procedural_image(10, 10, 30);
  const auto map = projective_map(1.3, 31);
  std::mt19937_64 rng(32);
  TrainExample a{img, map, testutil::noise_image(3, 16, 16, rng), compute_mask(map, {10, 10}, {16, 16})};
  ASSERT_LT(a.mask.count(), a.mask.size());
  TrainExample b = a;
  for (std::size_t k = 0; k < b.mask.size(); ++k)
    if (!b.mask[k])
      for (int c = 0; c < 3; ++c) b.hr.channel(c)[k] = 1e6 * (c + 1);
  const StepResult ra = batch_gradients(p, cfg, {&a});
  const StepResult rb = batch_gradients(p, cfg, {&b});
  EXPECT_EQ(ra.loss, rb.loss);
  for (const auto& [name, g] : ra.grads.entries()) EXPECT_EQ(g, rb.grads.at(name)) << name;
}

TEST(Training, FiveHundredStepsReduceLoss) {
  const auto dir = testutil::temp_dir("train500");
  testutil::write_procedural_set(dir / "hr", 2, 112, 33);
  build_split(dir / "hr", dir / "split", 12, 34);
  std::vector<TrainExample> ex;
  for (const auto& s : load_split(dir / "split")) ex.push_back(make_example(s));
  std::filesystem::remove_all(dir);

  ModelConfig cfg = small_config();
  ParamStore p = init_params(cfg);
  std::vector<const TrainExample*> all;
  for (const auto& e : ex) all.push_back(&e);
  const double before = batch_gradients(p, cfg, all).loss;
  TrainOptions opt;
  opt.steps = 500;
  opt.lr = 1e-3;
  train(p, cfg, ex, opt);
  EXPECT_LT(batch_gradients(p, cfg, all).loss, before);
}

TEST(ModelFiles, SaveLoadRoundTrip) {
  const ModelConfig cfg = small_config();
  ParamStore p = init_params(cfg);
  randomize(p, 35);
  const auto dir = testutil::temp_dir("model");
  save_model(dir, p, cfg);
  const auto [cfg2, p2] = load_model(dir);
  EXPECT_EQ(cfg2, cfg);
  for (const auto& [name, t] : p.entries()) EXPECT_EQ(p2.at(name), t);
  const auto [cfg3, p3] = load_model(dir / "weights.bin");
  EXPECT_EQ(cfg3, cfg);
  std::filesystem::remove_all(dir);
}
