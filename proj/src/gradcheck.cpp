#include "warpcore/gradcheck.hpp"

#include <random>

#include "warpcore/model.hpp"
#include "warpcore/nn/layers.hpp"
#include "warpcore/nn/ops.hpp"
#include "warpcore/nn/optim.hpp"

namespace warpcore {

using nn::Graph;
using nn::ParamStore;
using nn::Shape;
using nn::Tensor;
using nn::Var;

namespace {

class Suite {
 public:
  explicit Suite(std::uint64_t seed) : rng_(seed) {}

  Tensor random(Shape shape, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    Tensor t(std::move(shape));
    for (double& v : t.storage()) v = u(rng_);
    return t;
  }

  // Values bounded away from zero so kinks stay out of reach of the stencil.
  Tensor off_zero(Shape shape) {
    Tensor t = random(std::move(shape), 0.1, 1.0);
    std::bernoulli_distribution flip(0.5);
    for (double& v : t.storage()) {
      if (flip(rng_)) v = -v;
    }
    return t;
  }

  Mask random_mask(int h, int w, double p = 0.7) {
    std::bernoulli_distribution on(p);
    Mask m(h, w);
    for (std::size_t k = 0; k < m.size(); ++k) m[k] = on(rng_) ? 1 : 0;
    m[0] = 1;
    return m;
  }

  // Projects an output onto a fixed random direction.
  Var project(Graph& g, Var y) {
    const Shape& s = g.value(y).shape();
    auto it = projections_.find(s);
    if (it == projections_.end()) it = projections_.emplace(s, random(s)).first;
    return nn::dot(g, y, it->second);
  }

  void run(const std::string& name, ParamStore store, const nn::LossFn& f) {
    const nn::GradCheckResult r = nn::grad_check(f, store);
    results_.push_back({name, r.max_rel_error, r.coordinates,
                        r.worst_param + "[" + std::to_string(r.worst_index) + "]"});
  }

  std::vector<GradCheckCase> take() { return std::move(results_); }
  std::mt19937_64& rng() { return rng_; }

 private:
  std::mt19937_64 rng_;
  std::map<Shape, Tensor> projections_;
  std::vector<GradCheckCase> results_;
};

ModelConfig tiny_config(BlendMode mode) {
  ModelConfig cfg;
  cfg.trunk_blocks = 1;
  cfg.channels = 2;
  cfg.estimator_hidden = 4;
  cfg.recon_blocks = 1;
  cfg.blend_mode = mode;
  cfg.seed = 11;
  return cfg;
}

// Nonzero heads so every branch carries gradient.
ParamStore live_params(const ModelConfig& cfg, Suite& suite) {
  ParamStore p = init_params(cfg);
  for (auto& [name, t] : p.entries()) {
    const Tensor r = suite.random(t.shape(), -0.3, 0.3);
    t.storage() = r.storage();
  }
  return p;
}

BackwardMap mild_projective(double s) {
  Mat3 m = {s * 1.05, 0.08 * s, 0.3, -0.06 * s, s * 0.97, 0.2, 0.004, -0.003, 1.0};
  return BackwardMap::from_homography(Homography::from_matrix(m));
}

void op_cases(Suite& S) {
  {
    ParamStore p;
    p.add("x", S.random({2, 5, 6}));
    p.add("w", S.random({3, 2, 3, 3}));
    p.add("b", S.random({3}));
    S.run("conv2d", p, [&S](Graph& g, const ParamStore& s) {
      return S.project(g, nn::conv2d(g, g.param(s, "x"), g.param(s, "w"), g.param(s, "b")));
    });
    p.at("w") = S.random({3, 2, 1, 1});
    S.run("conv2d_1x1", p, [&S](Graph& g, const ParamStore& s) {
      return S.project(g, nn::conv2d(g, g.param(s, "x"), g.param(s, "w"), g.param(s, "b")));
    });
  }
  {
    ParamStore p;
    p.add("x", S.random({2, 5, 6}));
    p.add("w", S.random({3, 2, 3, 3}));
    p.add("b", S.random({3}));
    const Mask m = S.random_mask(5, 6, 0.5);
    S.run("pconv2d", p, [&S, m](Graph& g, const ParamStore& s) {
      return S.project(g, nn::pconv2d(g, g.param(s, "x"), m, g.param(s, "w"), g.param(s, "b")).out);
    });
  }
  {
    ParamStore p;
    p.add("x", S.random({5}));
    p.add("w", S.random({4, 5}));
    p.add("b", S.random({4}));
    S.run("fc", p, [&S](Graph& g, const ParamStore& s) {
      return S.project(g, nn::fc(g, g.param(s, "x"), g.param(s, "w"), g.param(s, "b")));
    });
    p.at("x") = S.random({7, 5});
    S.run("linear", p, [&S](Graph& g, const ParamStore& s) {
      return S.project(g, nn::linear(g, g.param(s, "x"), g.param(s, "w"), g.param(s, "b")));
    });
  }
  {
    ParamStore p;
    p.add("x", S.off_zero({2, 3, 4}));
    S.run("relu", p, [&S](Graph& g, const ParamStore& s) {
      return S.project(g, nn::relu(g, g.param(s, "x")));
    });
    S.run("leaky_relu", p, [&S](Graph& g, const ParamStore& s) {
      return S.project(g, nn::leaky_relu(g, g.param(s, "x"), 0.2));
    });
  }
  {
    ParamStore p;
    p.add("a", S.random({2, 3, 4}));
    p.add("b", S.random({2, 3, 4}));
    S.run("add", p, [&S](Graph& g, const ParamStore& s) {
      return S.project(g, nn::add(g, g.param(s, "a"), g.param(s, "b")));
    });
    S.run("scale", p, [&S](Graph& g, const ParamStore& s) {
      return S.project(g, nn::scale(g, g.param(s, "a"), -1.7));
    });
    S.run("concat_channels", p, [&S](Graph& g, const ParamStore& s) {
      return S.project(g, nn::concat_channels(g, {g.param(s, "a"), g.param(s, "b"), g.param(s, "a")}));
    });
    S.run("channel_slice", p, [&S](Graph& g, const ParamStore& s) {
      return S.project(g, nn::channel_slice(g, g.param(s, "a"), 1, 1));
    });
    const Mask m = S.random_mask(3, 4);
    S.run("apply_mask", p, [&S, m](Graph& g, const ParamStore& s) {
      return S.project(g, nn::apply_mask(g, g.param(s, "a"), m));
    });
    S.run("sum", p, [](Graph& g, const ParamStore& s) { return nn::sum(g, g.param(s, "a")); });
    S.run("square_sum", p, [](Graph& g, const ParamStore& s) {
      return nn::square_sum(g, g.param(s, "a"));
    });
    S.run("mean", p, [](Graph& g, const ParamStore& s) {
      return nn::mean(g, {nn::square_sum(g, g.param(s, "a")), nn::sum(g, g.param(s, "b"))});
    });
  }
  {
    ParamStore p;
    p.add("w", S.random({1, 3, 4}));
    p.add("x", S.random({2, 3, 4}));
    S.run("broadcast_mul", p, [&S](Graph& g, const ParamStore& s) {
      return S.project(g, nn::broadcast_mul(g, g.param(s, "w"), g.param(s, "x")));
    });
  }
  {
    ParamStore p;
    p.add("x", S.random({8, 2, 3}));
    S.run("depth_to_space", p, [&S](Graph& g, const ParamStore& s) {
      return S.project(g, nn::depth_to_space(g, g.param(s, "x"), 2));
    });
    p.at("x") = S.random({2, 4, 6});
    S.run("space_to_depth", p, [&S](Graph& g, const ParamStore& s) {
      return S.project(g, nn::space_to_depth(g, g.param(s, "x"), 2));
    });
  }
  {
    ParamStore p;
    const Tensor pred = S.random({3, 4, 5}, 0.0, 1.0);
    Tensor target = S.off_zero({3, 4, 5});
    for (std::size_t i = 0; i < target.size(); ++i) target[i] += pred[i];
    p.add("pred", pred);
    const Mask m = S.random_mask(4, 5);
    S.run("masked_l1", p, [target, m](Graph& g, const ParamStore& s) {
      return nn::masked_l1(g, g.param(s, "pred"), target, m);
    });
  }
  for (bool depthwise : {true, false}) {
    const Dims src{5, 5};
    const Dims dst{7, 6};
    auto plan = std::make_shared<const WindowPlan>(
        plan_windows(mild_projective(1.3), src, dst, true));
    const int n = static_cast<int>(plan->pixels.size());
    ParamStore p;
    p.add("feat", S.random({3, 5, 5}));
    p.add("kernels", S.random({n, depthwise ? 3 * kWindowTaps : kWindowTaps}));
    S.run(depthwise ? "window_gather_depthwise" : "window_gather_shared", p,
          [&S, plan](Graph& g, const ParamStore& s) {
            return S.project(g, nn::window_gather(g, g.param(s, "feat"), g.param(s, "kernels"), plan));
          });
  }
}

void model_cases(Suite& S) {
  const ModelConfig cfg = tiny_config(BlendMode::kLearned);
  {
    ParamStore p = live_params(cfg, S);
    p.add("img", S.random({3, 4, 4}, 0.0, 1.0));
    S.run("extract_multiscale", p, [&S, cfg](Graph& g, const ParamStore& s) {
      const MultiScaleFeatures f = extract_multiscale(g, s, cfg, g.param(s, "img"));
      return nn::add(g, nn::add(g, S.project(g, f.x1), S.project(g, f.x2)), S.project(g, f.x4));
    });
  }
  for (bool per_scale : {true, false}) {
    ModelConfig c = cfg;
    c.per_scale_estimators = per_scale;
    c.depthwise = per_scale;
    ParamStore p = live_params(c, S);
    p.add("offsets", S.random({6, 2 * kWindowTaps}, -1.5, 1.5));
    S.run(per_scale ? "kernel_estimator_depthwise" : "kernel_estimator_shared", p,
          [&S, c](Graph& g, const ParamStore& s) {
            return S.project(g, kernel_estimator(g, s, c, 2, g.param(s, "offsets")));
          });
  }
  {
    const Dims src{6, 6};
    const Dims dst{7, 7};
    auto plan = std::make_shared<const WindowPlan>(
        plan_windows(mild_projective(1.15), src, dst, true));
    ParamStore p = live_params(cfg, S);
    p.add("feat", S.random({cfg.channels, 6, 6}));
    S.run("awl", p, [&S, cfg, plan](Graph& g, const ParamStore& s) {
      return S.project(g, awl(g, s, cfg, 1, g.param(s, "feat"), plan).out);
    });
  }
  for (BlendMode mode : {BlendMode::kLearned, BlendMode::kAverage, BlendMode::kConcat,
                         BlendMode::kNoContent, BlendMode::kNoScale}) {
    const ModelConfig c = tiny_config(mode);
    const Mask m = S.random_mask(5, 6);
    ParamStore p = live_params(c, S);
    for (const char* name : {"w1", "w2", "w4"}) {
      Tensor t = S.random({c.channels, 5, 6});
      for (int ch = 0; ch < c.channels; ++ch) {
        for (std::size_t k = 0; k < m.size(); ++k) {
          if (!m[k]) t[ch * m.size() + k] = 0.0;
        }
      }
      p.add(name, t);
    }
    const Tensor sf = S.random({1, 5, 6}, -1.0, 2.0);
    S.run("blend_" + to_string(mode), p, [&S, c, m, sf](Graph& g, const ParamStore& s) {
      const std::array<Var, 3> w = {g.param(s, "w1"), g.param(s, "w2"), g.param(s, "w4")};
      return S.project(g, blend(g, s, c, w, g.constant(sf), m));
    });
  }
  {
    const Mask m = S.random_mask(5, 6);
    ParamStore p = live_params(cfg, S);
    p.add("blended", S.random({cfg.channels, 5, 6}));
    const Tensor bic = S.random({3, 5, 6}, 0.0, 1.0);
    S.run("reconstruct", p, [&S, cfg, m, bic](Graph& g, const ParamStore& s) {
      return S.project(g, reconstruct(g, s, cfg, g.param(s, "blended"), g.constant(bic), m));
    });
  }
  {
    const Plane img = nn::to_plane(S.random({3, 4, 4}, 0.0, 1.0));
    const Dims dst{7, 6};
    const auto geo = std::make_shared<const WarpGeometry>(
        prepare_geometry(img, mild_projective(1.6), dst));
    ParamStore p = live_params(cfg, S);
    p.add("img", nn::to_tensor(img));
    S.run("forward", p, [&S, cfg, geo](Graph& g, const ParamStore& s) {
      return S.project(g, forward(g, s, cfg, g.param(s, "img"), *geo).image);
    });

    TrainExample ex{img, mild_projective(1.6),
                    nn::to_plane(S.random({3, dst.height, dst.width}, 2.0, 3.0)), geo->mask};
    ParamStore q = live_params(cfg, S);
    S.run("example_loss", q, [cfg, geo, ex](Graph& g, const ParamStore& s) {
      return example_loss(g, s, cfg, ex, *geo);
    });
  }
}

}  // namespace

std::vector<GradCheckCase> run_gradcheck_suite(std::uint64_t seed) {
  Suite suite(seed);
  op_cases(suite);
  model_cases(suite);
  return suite.take();
}

}  // namespace warpcore
