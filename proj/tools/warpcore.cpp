// warpcore command-line tool. Exit codes:
//   0 success, 1 failed check or runtime error, 2 bad arguments,
//   3 I/O or file format error, 4 degenerate transform.
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <set>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "warpcore/data.hpp"
#include "warpcore/error.hpp"
#include "warpcore/fileutil.hpp"
#include "warpcore/gradcheck.hpp"
#include "warpcore/image_io.hpp"
#include "warpcore/metrics.hpp"
#include "warpcore/model.hpp"
#include "warpcore/parallel.hpp"
#include "warpcore/train.hpp"
#include "warpcore/transform_io.hpp"
#include "warpcore/warp.hpp"

namespace fs = std::filesystem;
using namespace warpcore;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailed = 1;
constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;
constexpr int kExitDegenerate = 4;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::kIoError:
    case ErrorKind::kUnsupportedFormat:
      return kExitIo;
    case ErrorKind::kDegenerate:
    case ErrorKind::kDegeneratePoint:
    case ErrorKind::kSingularJacobian:
      return kExitDegenerate;
    case ErrorKind::kInvalidParams:
    case ErrorKind::kInvalidScale:
      return kExitUsage;
    default:
      return kExitFailed;
  }
}

Plane as_rgb(const Plane& p) {
  if (p.channels() == 3) return p;
  Plane out(3, p.height(), p.width());
  for (int c = 0; c < 3; ++c) {
    std::copy(p.channel(0).begin(), p.channel(0).end(), out.channel(c).begin());
  }
  return out;
}

struct WarpArgs {
  std::string input, transform, output, method = "bicubic", weights, mask_out;
};

int cmd_warp(const WarpArgs& a) {
  if (a.method == "srwarp" && a.weights.empty()) throw UsageError("--method srwarp requires --weights");
  int depth = 8;
  Plane img = load_image(a.input, &depth);
  const TransformSpec spec = load_transform(a.transform);

  BackwardMap map;
  Dims dst;
  if (const auto* h = std::get_if<Homography>(&spec)) {
    const OutputBounds b = output_bounds(*h, img.width(), img.height());
    map = BackwardMap::from_homography(b.transform);
    dst = {b.width, b.height};
  } else {
    const auto& f = std::get<FunctionalSpec>(spec);
    map = make_functional(f, img.dims());
    dst = functional_output_dims(f, img.dims());
  }

  WarpResult out;
  if (a.method == "bicubic") {
    out = warp_bicubic(img, map, dst);
  } else if (a.method == "adaptive") {
    out = warp_adaptive_fixed(img, map, dst);
  } else {
    const auto [cfg, params] = load_model(a.weights);
    out = forward(params, cfg, as_rgb(img), map, dst);
  }
  save_image(out.image, a.output, depth);
  if (!a.mask_out.empty()) save_mask(out.mask, a.mask_out);
  return kExitOk;
}

struct SynthArgs {
  std::string hr_dir, out_dir;
  int count = 0;
  std::uint64_t seed = 0;
};

int cmd_synth(const SynthArgs& a) {
  std::cout << build_split(a.hr_dir, a.out_dir, a.count, a.seed).string() << "\n";
  return kExitOk;
}

struct TrainArgs {
  std::string data, out, config;
  int steps = 2000;
  std::optional<std::uint64_t> seed;
};

int cmd_train(const TrainArgs& a) {
  nlohmann::json j = nlohmann::json::object();
  if (!a.config.empty()) {
    j = nlohmann::json::parse(read_file(a.config), nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw UsageError(a.config + " is not a JSON object");
  }
  static const std::set<std::string> known = {
      "trunk_blocks", "channels", "scales", "kernel", "estimator_hidden", "recon_blocks", "depthwise",
      "per_scale_estimators", "blend_mode", "seed", "batch", "lr", "log_every"};
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw UsageError("unknown config key '" + key + "'");
  }
  ModelConfig cfg = config_from_json(j);
  TrainOptions opt;
  opt.steps = a.steps;
  opt.batch = j.value("batch", opt.batch);
  opt.lr = j.value("lr", opt.lr);
  opt.log_every = j.value("log_every", opt.log_every);
  if (a.seed) {
    cfg.seed = *a.seed;
    opt.seed = *a.seed;
  } else {
    opt.seed = cfg.seed;
  }

  std::vector<TrainExample> examples;
  for (const auto& s : load_split(a.data)) examples.push_back(make_example(s));

  nn::ParamStore params = init_params(cfg);
  fs::create_directories(a.out);
  const fs::path log_path = fs::path(a.out) / "train_log.json";
  std::vector<LogEntry> log;
  train(params, cfg, examples, opt, [&](const LogEntry& e) {
    log.push_back(e);
    std::cout << "step " << e.step << " loss " << e.loss << std::endl;
    write_file_atomic(log_path, log_to_json(log).dump() + "\n");
  });
  save_model(a.out, params, cfg);
  std::cout << (fs::path(a.out) / "weights.bin").string() << "\n";
  return kExitOk;
}

struct EvalArgs {
  std::string pred, ref, sr_dir, hr_dir, mask;
};

nlohmann::json eval_one(const fs::path& pred, const fs::path& ref, const fs::path& mask) {
  Plane sr = load_image(pred);
  Plane hr = load_image(ref);
  if (sr.channels() != hr.channels()) {
    sr = as_rgb(sr);
    hr = as_rgb(hr);
  }
  const Mask m = mask.empty() ? Mask(hr.height(), hr.width(), 1) : load_mask(mask);
  nlohmann::json j = report_to_json(evaluate(sr, hr, m));
  j["name"] = pred.filename().string();
  return j;
}

int cmd_eval(const EvalArgs& a) {
  const bool single = !a.pred.empty() || !a.ref.empty();
  const bool dirs = !a.sr_dir.empty() || !a.hr_dir.empty();
  if (single == dirs) throw UsageError("give either --pred/--ref or --sr-dir/--hr-dir");
  if (single && (a.pred.empty() || a.ref.empty())) throw UsageError("--pred needs --ref");
  if (dirs && (a.sr_dir.empty() || a.hr_dir.empty())) throw UsageError("--sr-dir needs --hr-dir");

  nlohmann::json images = nlohmann::json::array();
  double sum = 0.0;
  if (single) {
    images.push_back(eval_one(a.pred, a.ref, a.mask));
  } else {
    for (const auto& p : list_images(a.sr_dir)) {
      const fs::path name = p.filename();
      images.push_back(eval_one(p, fs::path(a.hr_dir) / name,
                                a.mask.empty() ? fs::path() : fs::path(a.mask) / name));
    }
    if (images.empty()) throw Error(ErrorKind::kIoError, "no PNG images in " + a.sr_dir);
  }
  for (const auto& im : images) {
    const auto& v = im.at("mpsnr_db");
    sum += v.is_string() ? (v == "inf" ? INFINITY : -INFINITY) : v.get<double>();
  }
  const nlohmann::json out = {{"images", images},
                              {"mean_mpsnr_db", db_to_json(sum / static_cast<double>(images.size()))}};
  std::cout << out.dump(2) << "\n";
  return kExitOk;
}

int cmd_gradcheck() {
  bool ok = true;
  for (const auto& c : run_gradcheck_suite()) {
    std::printf("%-28s rel_err %.3e  coords %6zu  %s%s\n", c.name.c_str(), c.max_rel_error,
                c.coordinates, c.passed() ? "PASS" : "FAIL",
                c.passed() ? "" : ("  worst " + c.worst).c_str());
    ok = ok && c.passed();
  }
  std::printf("gradcheck %s (tolerance %.0e)\n", ok ? "PASS" : "FAIL", kGradCheckTolerance);
  return ok ? kExitOk : kExitFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"warpcore: super-resolution under arbitrary warps"};
  app.require_subcommand(1);
  app.fallthrough();
  int threads = 0;
  app.add_option("--threads", threads, "Worker threads (default: WARPCORE_THREADS or all cores)")
      ->check(CLI::PositiveNumber);

  WarpArgs wa;
  auto* warp = app.add_subcommand("warp", "Warp an image with a transform file");
  warp->add_option("--input", wa.input, "Input PNG")->required();
  warp->add_option("--transform", wa.transform, "Transform JSON")->required();
  warp->add_option("--output", wa.output, "Output PNG")->required();
  warp->add_option("--method", wa.method, "Resampling method")
      ->check(CLI::IsMember({"bicubic", "adaptive", "srwarp"}));
  warp->add_option("--weights", wa.weights, "Model directory or weights file (srwarp)");
  warp->add_option("--mask-out", wa.mask_out, "Write the validity mask PNG");

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "Synthesize a warped training split");
  synth->add_option("--hr-dir", sa.hr_dir, "Directory of HR PNGs")->required();
  synth->add_option("--out-dir", sa.out_dir, "Output directory")->required();
  synth->add_option("--count", sa.count, "Number of samples")->required()->check(CLI::NonNegativeNumber);
  synth->add_option("--seed", sa.seed, "Random seed");

  TrainArgs ta;
  std::uint64_t train_seed = 0;
  auto* train_cmd = app.add_subcommand("train", "Train the model on a synthesized split");
  train_cmd->add_option("--data", ta.data, "Split directory")->required();
  train_cmd->add_option("--steps", ta.steps, "Optimizer steps")->check(CLI::NonNegativeNumber);
  train_cmd->add_option("--out", ta.out, "Output directory")->required();
  train_cmd->add_option("--config", ta.config, "Model/training config JSON");
  auto* seed_opt = train_cmd->add_option("--seed", train_seed, "Initialization and batch seed");

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "Masked PSNR of predictions against references");
  eval->add_option("--pred", ea.pred, "Predicted PNG");
  eval->add_option("--ref", ea.ref, "Reference PNG");
  eval->add_option("--sr-dir", ea.sr_dir, "Directory of predicted PNGs");
  eval->add_option("--hr-dir", ea.hr_dir, "Directory of reference PNGs");
  eval->add_option("--mask", ea.mask, "Mask PNG (or directory of masks)");

  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  if (threads > 0) set_num_threads(threads);
  try {
    if (*warp) return cmd_warp(wa);
    if (*synth) return cmd_synth(sa);
    if (*train_cmd) {
      if (*seed_opt) ta.seed = train_seed;
      return cmd_train(ta);
    }
    if (*eval) return cmd_eval(ea);
    if (*gradcheck) return cmd_gradcheck();
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n" << app.help() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
