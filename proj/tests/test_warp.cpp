#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "support/synthetic.hpp"
#include "warpcore/error.hpp"
#include "warpcore/parallel.hpp"
#include "warpcore/warp.hpp"

using namespace warpcore;

namespace {

double keys(double t) {
  t = std::abs(t);
  const double a = -0.5;
  if (t <= 1) return (a + 2) * t * t * t - (a + 3) * t * t + 1;
  if (t < 2) return a * t * t * t - 5 * a * t * t + 8 * a * t - 4 * a;
  return 0.0;
}

// Independent separable resize by an integer factor: rows first, then
// columns, with clamped taps.
Plane reference_resize(const Plane& img, int s) {
  const int w = img.width(), h = img.height();
  auto src_coord = [s](int o) { return (o + 0.5) / s - 0.5; };
  Plane rows(img.channels(), h, w * s);
  for (int c = 0; c < img.channels(); ++c) {
    for (int y = 0; y < h; ++y) {
      for (int xo = 0; xo < w * s; ++xo) {
        const double x = src_coord(xo);
        const int x0 = static_cast<int>(std::floor(x));
        double acc = 0;
        for (int k = x0 - 1; k <= x0 + 2; ++k) {
          acc += keys(x - k) * img.at(c, y, std::clamp(k, 0, w - 1));
        }
        rows.at(c, y, xo) = acc;
      }
    }
  }
  Plane out(img.channels(), h * s, w * s);
  for (int c = 0; c < img.channels(); ++c) {
    for (int yo = 0; yo < h * s; ++yo) {
      const double y = src_coord(yo);
      const int y0 = static_cast<int>(std::floor(y));
      for (int xo = 0; xo < w * s; ++xo) {
        double acc = 0;
        for (int k = y0 - 1; k <= y0 + 2; ++k) {
          acc += keys(y - k) * rows.at(c, std::clamp(k, 0, h - 1), xo);
        }
        out.at(c, yo, xo) = acc;
      }
    }
  }
  return out;
}

}  // namespace

TEST(CubicWeight, KnownValues) {
  EXPECT_EQ(cubic_weight(0), 1.0);
  EXPECT_EQ(cubic_weight(1), 0.0);
  EXPECT_EQ(cubic_weight(-2), 0.0);
  EXPECT_EQ(cubic_weight(2.5), 0.0);
  EXPECT_DOUBLE_EQ(cubic_weight(0.5), 0.5625);
  EXPECT_DOUBLE_EQ(cubic_weight(1.5), -0.0625);
}

TEST(CubicWeight, PartitionOfUnity) {
  for (double f = 0; f < 1; f += 0.0625) {
    double s = 0;
    for (int k = -1; k <= 2; ++k) s += cubic_weight(f - k);
    EXPECT_NEAR(s, 1.0, 1e-15);
  }
}

TEST(ComputeMask, MatchesPerPixelCheck) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 10; ++trial) {
    const auto h = testutil::random_homography(rng, 1.4, 3e-3);
    const auto map = BackwardMap::from_homography(h);
    const Dims src{20, 17}, dst{30, 26};
    const Mask m = compute_mask(map, src, dst);
    for (int y = 0; y < dst.height; ++y) {
      for (int x = 0; x < dst.width; ++x) {
        const auto p = apply_backward(h, {static_cast<double>(x), static_cast<double>(y)});
        const bool in = p.x >= 0 && p.x <= src.width - 1 && p.y >= 0 && p.y <= src.height - 1;
        EXPECT_EQ(m.at(y, x), in ? 1 : 0) << x << "," << y;
      }
    }
  }
}

TEST(WarpBicubic, IdentityIsExact) {
  std::mt19937_64 rng(1);
  const Plane img = testutil::noise_image(3, 13, 17, rng);
  const auto r = warp_bicubic(img, BackwardMap(), img.dims());
  EXPECT_EQ(r.image, img);
  EXPECT_EQ(r.mask.count(), r.mask.size());
}

TEST(WarpBicubic, ScaleTwoMatchesReferenceResize) {
  std::mt19937_64 rng(44);
  const Plane img = testutil::noise_image(2, 16, 16, rng);
  const auto r = warp_bicubic(img, BackwardMap::from_homography(scale_matrix(2, 2)), {32, 32});
  const Plane ref = reference_resize(img, 2);
  for (int c = 0; c < 2; ++c) {
    for (int y = 1; y < 31; ++y) {
      for (int x = 1; x < 31; ++x) {
        ASSERT_TRUE(r.mask.at(y, x));
        EXPECT_NEAR(r.image.at(c, y, x), ref.at(c, y, x), 1e-12);
      }
    }
  }
  // Half a pixel beyond the outermost centers is void.
  EXPECT_EQ(r.mask.at(0, 0), 0);
  EXPECT_EQ(r.image.at(0, 0, 0), 0.0);
}

TEST(WarpBicubic, ConstantStaysConstant) {
  Plane img(1, 10, 12, 0.37);
  std::mt19937_64 rng(6);
  const auto h = testutil::random_homography(rng, 1.2, 1e-3);
  const auto r = warp_bicubic(img, BackwardMap::from_homography(h), {16, 16});
  for (std::size_t k = 0; k < r.mask.size(); ++k) {
    if (r.mask[k]) EXPECT_NEAR(r.image.data()[k], 0.37, 1e-14);
    else EXPECT_EQ(r.image.data()[k], 0.0);
  }
}

TEST(WarpBicubic, ThreadCountInvariant) {
  std::mt19937_64 rng(2);
  const Plane img = testutil::noise_image(3, 40, 40, rng);
  const auto map = BackwardMap::from_homography(testutil::random_homography(rng, 1.7, 2e-3));
  const int saved = num_threads();
  set_num_threads(1);
  const auto a = warp_bicubic(img, map, {70, 70});
  const auto fa = warp_adaptive_fixed(img, map, {70, 70});
  set_num_threads(8);
  const auto b = warp_bicubic(img, map, {70, 70});
  const auto fb = warp_adaptive_fixed(img, map, {70, 70});
  set_num_threads(saved);
  EXPECT_EQ(a.image, b.image);
  EXPECT_EQ(a.mask, b.mask);
  EXPECT_EQ(fa.image, fb.image);
}

TEST(WarpAdaptiveFixed, IdentityIsExact) {
  std::mt19937_64 rng(3);
  const Plane img = testutil::noise_image(3, 9, 11, rng);
  const auto r = warp_adaptive_fixed(img, BackwardMap(), img.dims());
  for (std::size_t k = 0; k < img.size(); ++k) {
    EXPECT_NEAR(r.image.data()[k], img.data()[k], 1e-12);
  }
}

TEST(WarpAdaptiveFixed, WeightsSumToOne) {
  std::mt19937_64 rng(10);
  const auto map = BackwardMap::from_homography(testutil::random_homography(rng, 0.6, 2e-3));
  const auto plan = plan_windows(map, {30, 30}, {20, 20}, true);
  ASSERT_GT(plan.pixels.size(), 0u);
  for (std::size_t p = 0; p < plan.pixels.size(); ++p) {
    const auto w = adaptive_cubic_weights(rescaled_offsets(plan, p));
    double s = 0;
    for (double v : w) s += v;
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(WindowPlan, TapOrderAndOffsets) {
  const auto map = BackwardMap::from_homography(Homography::translation(-0.25, 0.4));
  const auto plan = plan_windows(map, {8, 8}, {8, 8}, false);
  // Target (3, 3) reads source (3.25, 2.6): anchor (3, 3).
  std::size_t p = 0;
  while (plan.pixels[p] != 3 * 8 + 3) ++p;
  EXPECT_EQ(plan.taps[p][0], 2 * 8 + 2);
  EXPECT_EQ(plan.taps[p][1], 2 * 8 + 3);
  EXPECT_EQ(plan.taps[p][3], 3 * 8 + 2);
  EXPECT_EQ(plan.taps[p][8], 4 * 8 + 4);
  EXPECT_NEAR(plan.offsets[p][4].x, -0.25, 1e-12);
  EXPECT_NEAR(plan.offsets[p][4].y, 0.4, 1e-12);
  EXPECT_NEAR(plan.offsets[p][0].x, -1.25, 1e-12);
}

TEST(WarpWithKernels, OneHotCenterCopies) {
  std::mt19937_64 rng(5);
  const Plane feat = testutil::noise_image(4, 7, 9, rng);
  KernelField k(feat.dims(), 4);
  for (int y = 0; y < 7; ++y) {
    for (int x = 0; x < 9; ++x) {
      for (int c = 0; c < 4; ++c) k.at(y, x, c)[4] = 1.0;
    }
  }
  const auto r = warp_with_kernels(feat, BackwardMap(), k, feat.dims());
  EXPECT_EQ(r.image, feat);
}

TEST(WarpWithKernels, SharedKernelAndShapeErrors) {
  std::mt19937_64 rng(7);
  const Plane feat = testutil::noise_image(2, 6, 6, rng);
  KernelField k({6, 6}, 1);
  for (double& v : k.weights) v = 1.0 / 9.0;
  const auto r = warp_with_kernels(feat, BackwardMap(), k, {6, 6});
  double box = 0;
  for (int y = 1; y <= 3; ++y)
    for (int x = 1; x <= 3; ++x) box += feat.at(1, y, x);
  EXPECT_NEAR(r.image.at(1, 2, 2), box / 9.0, 1e-15);
  KernelField bad({5, 6}, 1);
  EXPECT_THROW(warp_with_kernels(feat, BackwardMap(), bad, {6, 6}), Error);
}

TEST(Parallel, EveryIndexOnceAndNestedInline) {
  const int saved = num_threads();
  set_num_threads(4);
  std::vector<int> hits(1000, 0);
  parallel_for(hits.size(), [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      parallel_for(1, [&](std::size_t, std::size_t) { ++hits[i]; });
    }
  });
  set_num_threads(saved);
  for (int h : hits) EXPECT_EQ(h, 1);
}

TEST(Parallel, ExceptionsPropagate) {
  const int saved = num_threads();
  set_num_threads(3);
  EXPECT_THROW(parallel_for(10, [](std::size_t b, std::size_t) {
                 if (b > 0) throw std::runtime_error("boom");
               }),
               std::runtime_error);
  set_num_threads(saved);
}
