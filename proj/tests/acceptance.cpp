// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
// exits nonzero if any fails. WARPCORE_ACCEPTANCE_STEPS overrides the
// training length for quick local runs (the criterion then reports FAIL
// unless the full 2000 steps were run).

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <map>
#include <random>
#include <sstream>

#include <Eigen/Dense>

#include "support/synthetic.hpp"
#include "warpcore/adaptive_grid.hpp"
#include "warpcore/data.hpp"
#include "warpcore/fileutil.hpp"
#include "warpcore/image_io.hpp"
#include "warpcore/metrics.hpp"
#include "warpcore/model.hpp"
#include "warpcore/parallel.hpp"
#include "warpcore/train.hpp"
#include "warpcore/transform_io.hpp"
#include "warpcore/warp.hpp"

using namespace warpcore;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

int run_cli(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + " " + WARPCORE_CLI + std::string(" ") + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::map<std::string, std::string> read_tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = read_file(e.path());
  return out;
}

double keys(double t) {
  t = std::abs(t);
  if (t <= 1) return 1.5 * t * t * t - 2.5 * t * t + 1;
  if (t < 2) return -0.5 * t * t * t + 2.5 * t * t - 4 * t + 2;
  return 0.0;
}

// Separable resize by 2, rows then columns, clamped taps.
Plane reference_resize2(const Plane& img) {
  const int w = img.width(), h = img.height();
  auto src = [](int o) { return (o + 0.5) / 2 - 0.5; };
  auto interp = [](double x, int n, const std::function<double(int)>& at) {
    const int x0 = static_cast<int>(std::floor(x));
    double acc = 0;
    for (int k = x0 - 1; k <= x0 + 2; ++k) acc += keys(x - k) * at(std::clamp(k, 0, n - 1));
    return acc;
  };
  Plane rows(img.channels(), h, 2 * w), out(img.channels(), 2 * h, 2 * w);
  for (int c = 0; c < img.channels(); ++c) {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < 2 * w; ++x)
        rows.at(c, y, x) = interp(src(x), w, [&](int k) { return img.at(c, y, k); });
    for (int y = 0; y < 2 * h; ++y)
      for (int x = 0; x < 2 * w; ++x)
        out.at(c, y, x) = interp(src(y), h, [&](int k) { return rows.at(c, k, x); });
  }
  return out;
}

Outcome ellipse_oracle() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-3, 3);
  int bad = 0;
  for (int i = 0; i < 10000; ++i) {
    Jacobian2 j{{u(rng), u(rng)}, {u(rng), u(rng)}};
    if (std::abs(j.det()) < 1e-3) {
      --i;
      continue;
    }
    const auto b = principal_axes(j);
    Eigen::Matrix2d m;
    m << j.u.x, j.v.x, j.u.y, j.v.y;
    Eigen::JacobiSVD<Eigen::Matrix2d> svd(m, Eigen::ComputeFullU);
    const double s0 = svd.singularValues()(0), s1 = svd.singularValues()(1);
    const double hi = std::max(b.a, b.b), lo = std::min(b.a, b.b);
    const int ix = std::abs(b.a - s0) <= std::abs(b.a - s1) ? 0 : 1;
    auto sin_angle = [](Vec2 a, Eigen::Vector2d v) {
      return std::abs(a.x * v.y() - a.y * v.x()) / (norm(a) * v.norm());
    };
    const bool ok = std::abs(hi - s0) <= 1e-9 * s0 && std::abs(lo - s1) <= 1e-9 * s1 &&
                    std::abs(b.a * b.b - std::abs(j.det())) <= 1e-9 * std::abs(j.det()) &&
                    (s0 - s1 < 1e-6 * s0 || (sin_angle(b.e_x, svd.matrixU().col(ix)) < 1e-7 &&
                                             sin_angle(b.e_y, svd.matrixU().col(1 - ix)) < 1e-7));
    if (!ok) ++bad;
  }
  const double secs = seconds_since(t0);
  return {bad == 0 && secs < 5.0, fmt("%.0f mismatches in 10000, %.3f s", bad, secs)};
}

Outcome affine_jacobian() {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-1, 1), pos(0, 100);
  double worst = 0;
  for (int i = 0; i < 1000; ++i) {
    const Mat3 m{1.5 + u(rng), 0.5 * u(rng), 20 * u(rng), 0.5 * u(rng), 1.5 + u(rng), 20 * u(rng), 0, 0, 1};
    const Homography h = Homography::from_matrix(m);
    const Mat3& inv = h.inverse_matrix();
    const auto j = jacobian(BackwardMap::from_homography(h), {pos(rng), pos(rng)});
    worst = std::max({worst, std::abs(j.u.x - inv[0]), std::abs(j.u.y - inv[3]),
                      std::abs(j.v.x - inv[1]), std::abs(j.v.y - inv[4])});
  }
  return {worst <= 1e-12, fmt("max abs error %.3g", worst)};
}

Outcome identity_exactness() {
  std::mt19937_64 rng(3);
  bool ok = true;
  double psnr = 0;
  for (int i = 0; i < 10; ++i) {
    const Plane img = i % 2 ? testutil::noise_image(3, 17 + i, 23 - i, rng) : testutil::procedural_image(31, 19, i);
    const auto a = warp_bicubic(img, BackwardMap(), img.dims());
    const auto b = warp_adaptive_fixed(img, BackwardMap(), img.dims());
    ok = ok && a.image == img && b.image == img && a.mask.count() == a.mask.size();
    psnr = mpsnr(b.image, img, b.mask);
    ok = ok && std::isinf(psnr) && psnr > 0;
  }
  return {ok, std::string("bitwise identical, mPSNR ") + (std::isinf(psnr) ? "inf" : "finite")};
}

Outcome scale_consistency() {
  std::mt19937_64 rng(4);
  double worst = 0;
  for (int i = 0; i < 20; ++i) {
    const Plane img = testutil::noise_image(3, 32, 32, rng);
    const auto r = warp_bicubic(img, BackwardMap::from_homography(scale_matrix(2, 2)), {64, 64});
    const Plane ref = reference_resize2(img);
    for (int c = 0; c < 3; ++c)
      for (int y = 1; y < 63; ++y)
        for (int x = 1; x < 63; ++x) {
          if (!r.mask.at(y, x)) return {false, "interior pixel marked void"};
          worst = std::max(worst, std::abs(r.image.at(c, y, x) - ref.at(c, y, x)));
        }
  }
  return {worst <= 1e-6, fmt("max abs diff %.3g over 20 images", worst)};
}

Outcome gradient_suite() {
  const auto t0 = Clock::now();
  const int code = run_cli("gradcheck");
  const double secs = seconds_since(t0);
  return {code == 0 && secs < 120, fmt("exit %.0f, %.1f s", code, secs)};
}

Outcome void_isolation(const std::vector<TrainExample>& examples) {
  ModelConfig cfg;
  nn::ParamStore p = init_params(cfg);
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(-0.05, 0.05);
  for (auto& [name, t] : p.entries())
    for (double& v : t.storage()) v += u(rng);
  int tried = 0;
  for (const auto& ex : examples) {
    if (ex.mask.count() == ex.mask.size()) continue;
    TrainExample perturbed = ex;
    for (std::size_t k = 0; k < ex.mask.size(); ++k)
      if (!ex.mask[k])
        for (int c = 0; c < 3; ++c) perturbed.hr.channel(c)[k] = 1e3 * u(rng);
    const auto a = batch_gradients(p, cfg, {&ex});
    const auto b = batch_gradients(p, cfg, {&perturbed});
    if (a.loss != b.loss) return {false, "loss changed"};
    for (const auto& [name, g] : a.grads.entries())
      if (!(g == b.grads.at(name))) return {false, "gradient of " + name + " changed"};
    if (++tried == 4) break;
  }
  return {tried > 0, fmt("%.0f examples, loss and gradients bitwise equal", tried)};
}

Outcome zero_init_identity(const std::vector<LoadedSample>& val, const std::vector<TrainExample>& val_ex) {
  ModelConfig cfg;
  nn::ParamStore p = init_params(cfg);
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-0.1, 0.1);
  for (auto& [name, t] : p.entries())
    for (double& v : t.storage()) v = u(rng);
  zero_heads(p, cfg);
  bool exact = true;
  for (std::size_t i = 0; i < 5 && i < val.size(); ++i) {
    const auto map = BackwardMap::from_homography(val[i].m);
    const auto f = forward(p, cfg, val[i].lr, map, val[i].hr.dims());
    const auto b = warp_bicubic(val[i].lr, map, val[i].hr.dims());
    exact = exact && f.image == b.image && f.mask == b.mask;
  }
  const auto fresh = validate(init_params(cfg), cfg, val_ex);
  const bool same = fresh.mean_mpsnr == fresh.mean_bicubic;
  return {exact && same, fmt("initial validation %.6f dB vs bicubic %.6f dB", fresh.mean_mpsnr, fresh.mean_bicubic) +
                             (exact ? ", forward bitwise equal" : ", forward differs")};
}

Outcome mpsnr_units() {
  Plane a(1, 6, 5, 0.25), b(1, 6, 5, 0.75);
  const double v = mpsnr(a, b, Mask(6, 5, 1));
  const bool uniform = std::abs(v - 10 * std::log10(4.0)) < 1e-12 && std::abs(v - 6.0206) < 5e-5;
  Plane c = a;
  Mask m(6, 5, 1);
  m.at(2, 3) = 0;
  m.at(0, 0) = 0;
  c.at(0, 2, 3) = 0.9;
  c.at(0, 0, 0) = 0.1;
  const double masked = mpsnr(c, a, m);
  return {uniform && std::isinf(masked) && masked > 0, fmt("uniform 0.5 error gives %.6f dB", v) +
                                                          (std::isinf(masked) ? ", void-only errors give inf" : "")};
}

Outcome dataset_determinism(const fs::path& work) {
  const std::string hr = (work / "hr").string();
  auto args = [&](const char* out) {
    return "synth --hr-dir " + hr + " --out-dir " + (work / out).string() + " --count 24 --seed 1234";
  };
  if (run_cli("--threads 1 " + args("d1")) != 0 || run_cli("--threads 8 " + args("d2")) != 0 ||
      run_cli(args("d3"), "WARPCORE_THREADS=3") != 0)
    return {false, "synth failed"};
  const auto t1 = read_tree(work / "d1");
  const bool same = t1 == read_tree(work / "d2") && t1 == read_tree(work / "d3");
  int out_of_range = 0;
  const auto samples = load_split(work / "d1");
  for (const auto& s : samples)
    if (!within_ranges(s.entry.params, s.hr.width(), s.hr.height())) ++out_of_range;
  return {same && out_of_range == 0 && samples.size() == 24,
          fmt("%.0f files, ", t1.size()) + (same ? "trees identical" : "trees differ") +
              fmt(", %.0f samples out of range", out_of_range)};
}

struct Trained {
  ModelConfig cfg;
  nn::ParamStore params;
  ValidationScore score;
  double seconds = 0;
};

Trained train_variant(BlendMode mode, const std::vector<TrainExample>& train_ex,
                      const std::vector<TrainExample>& val_ex, int steps) {
  Trained t;
  t.cfg.blend_mode = mode;
  t.params = init_params(t.cfg);
  TrainOptions opt;
  opt.steps = steps;
  opt.batch = 4;
  opt.lr = 1e-4;
  opt.seed = 0;
  opt.log_every = 250;
  const auto t0 = Clock::now();
  train(t.params, t.cfg, train_ex, opt, [&](const LogEntry& e) {
    std::fprintf(stderr, "  [%s] step %d loss %.5f (%.0f s)\n", to_string(mode).c_str(), e.step, e.loss,
                 seconds_since(t0));
  });
  t.seconds = seconds_since(t0);
  t.score = validate(t.params, t.cfg, val_ex);
  return t;
}

bool all_finite(const Plane& p) {
  for (double v : p.data())
    if (!std::isfinite(v)) return false;
  return true;
}

Outcome functional_smoke(const nn::ParamStore* params, const ModelConfig& cfg) {
  const Plane img = testutil::procedural_image(48, 40, 11);
  FunctionalSpec sine;
  sine.kind = FunctionalKind::kSine;
  sine.scale = 1.5;
  sine.amplitude = 3;
  sine.wavelength = 24;
  FunctionalSpec barrel;
  barrel.kind = FunctionalKind::kBarrel;
  barrel.scale = 1.5;
  barrel.k1 = 0.15;
  barrel.k2 = 0.05;
  std::string detail;
  bool ok = true;
  for (const auto& spec : {sine, barrel}) {
    const auto map = make_functional(spec, img.dims());
    const Dims dst = functional_output_dims(spec, img.dims());
    const auto r = warp_bicubic(img, map, dst);
    int disagree = 0;
    for (int y = 0; y < dst.height; ++y)
      for (int x = 0; x < dst.width; ++x) {
        const auto s = map({static_cast<double>(x), static_cast<double>(y)});
        const bool valid = s && s->x >= 0 && s->x <= img.width() - 1 && s->y >= 0 && s->y <= img.height() - 1;
        if (valid != static_cast<bool>(r.mask.at(y, x))) ++disagree;
      }
    ok = ok && all_finite(r.image) && disagree == 0 && r.mask.count() > 0;
    if (params) {
      const auto sr = forward(*params, cfg, img, map, dst);
      ok = ok && all_finite(sr.image) && sr.mask == r.mask;
    }
    detail += fmt("%.0f/%.0f valid, %.0f mask disagreements; ", r.mask.count(), r.mask.size(), disagree);
  }
  if (!params) {
    ok = false;
    detail += "no trained model";
  } else {
    detail += "trained model ran";
  }
  return {ok, detail};
}

Outcome thread_invariance(const fs::path& work, const nn::ParamStore& params, const ModelConfig& cfg) {
  save_image(testutil::procedural_image(40, 36, 12), work / "warp_in.png", 16);
  std::mt19937_64 rng(12);
  save_transform(testutil::random_homography(rng, 1.8, 2e-3), work / "warp_h.json");
  save_model(work / "warp_model", params, cfg);
  int identical = 0;
  for (const std::string method : {"bicubic", "adaptive", "srwarp"}) {
    auto args = [&](const char* out) {
      return "warp --input " + (work / "warp_in.png").string() + " --transform " + (work / "warp_h.json").string() +
             " --method " + method + " --weights " + (work / "warp_model").string() + " --output " +
             (work / out).string();
    };
    if (run_cli("--threads 1 " + args("t1.png")) != 0 || run_cli("--threads 8 " + args("t8.png")) != 0)
      return {false, method + " warp failed"};
    if (read_file(work / "t1.png") == read_file(work / "t8.png")) ++identical;
  }
  return {identical == 3, fmt("%.0f of 3 methods bit-identical", identical)};
}

}  // namespace

int main() {
  int failures = 0;
  auto report = [&](int n, const char* name, const Outcome& o) {
    std::printf("criterion %2d %-28s %s  (%s)\n", n, name, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
    if (!o.pass) ++failures;
  };
  auto guarded = [&](int n, const char* name, const std::function<Outcome()>& fn) {
    try {
      report(n, name, fn());
    } catch (const std::exception& e) {
      report(n, name, {false, std::string("exception: ") + e.what()});
    }
  };

  const fs::path work = testutil::temp_dir("acceptance");
  int steps = 2000;
  if (const char* s = std::getenv("WARPCORE_ACCEPTANCE_STEPS")) steps = std::atoi(s);

  guarded(1, "ellipse oracle", ellipse_oracle);
  guarded(2, "affine jacobian", affine_jacobian);
  guarded(3, "identity warp", identity_exactness);
  guarded(4, "scale consistency", scale_consistency);
  guarded(5, "gradient suite", gradient_suite);

  std::vector<LoadedSample> train_s, val_s;
  std::vector<TrainExample> train_ex, val_ex;
  try {
    testutil::write_procedural_set(work / "hr", 12, 192, 2024);
    build_split(work / "hr", work / "train", 200, 1);
    build_split(work / "hr", work / "val", 40, 2);
    train_s = load_split(work / "train");
    val_s = load_split(work / "val");
    for (const auto& s : train_s) train_ex.push_back(make_example(s));
    for (const auto& s : val_s) val_ex.push_back(make_example(s));
  } catch (const std::exception& e) {
    std::fprintf(stderr, "data synthesis failed: %s\n", e.what());
  }

  guarded(6, "void isolation", [&] { return void_isolation(train_ex); });
  guarded(7, "zero-init identity", [&] { return zero_init_identity(val_s, val_ex); });

  std::optional<Trained> full;
  guarded(8, "toy training gain", [&]() -> Outcome {
    full = train_variant(BlendMode::kLearned, train_ex, val_ex, steps);
    const Trained avg = train_variant(BlendMode::kAverage, train_ex, val_ex, steps);
    const double gain = full->score.mean_mpsnr - full->score.mean_bicubic;
    const double vs_avg = full->score.mean_mpsnr - avg.score.mean_mpsnr;
    return {steps == 2000 && gain >= 0.2 && vs_avg >= 0.0,
            fmt("full %.3f dB, bicubic %.3f dB, average %.3f dB, ", full->score.mean_mpsnr, full->score.mean_bicubic,
                avg.score.mean_mpsnr) +
                fmt("gain %+.3f dB, vs average %+.3f dB, %.0f s training", gain, vs_avg, full->seconds + avg.seconds)};
  });

  guarded(9, "mPSNR unit values", mpsnr_units);
  guarded(10, "dataset determinism", [&] { return dataset_determinism(work); });
  guarded(11, "functional transforms", [&] {
    return functional_smoke(full ? &full->params : nullptr, full ? full->cfg : ModelConfig{});
  });
  guarded(12, "thread invariance", [&] {
    const ModelConfig cfg = full ? full->cfg : ModelConfig{};
    return thread_invariance(work, full ? full->params : init_params(cfg), cfg);
  });

  fs::remove_all(work);
  std::printf("%s: %d of 12 criteria failed\n", failures ? "FAIL" : "PASS", failures);
  return failures ? 1 : 0;
}
