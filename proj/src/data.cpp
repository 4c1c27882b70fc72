#include "warpcore/data.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "warpcore/error.hpp"
#include "warpcore/fileutil.hpp"
#include "warpcore/image_io.hpp"
#include "warpcore/parallel.hpp"
#include "warpcore/transform_io.hpp"
#include "warpcore/warp.hpp"

namespace warpcore {

namespace fs = std::filesystem;

namespace {

constexpr int kTransformAttempts = 32;

// dp(y, x): side of the largest all-ones square whose bottom-right is (y, x).
std::vector<int> square_table(const Mask& m) {
  const int w = m.width();
  std::vector<int> dp(m.size(), 0);
  for (int y = 0; y < m.height(); ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      if (!m[i]) continue;
      if (y == 0 || x == 0) {
        dp[i] = 1;
      } else {
        dp[i] = 1 + std::min({dp[i - 1], dp[i - w], dp[i - w - 1]});
      }
    }
  }
  return dp;
}

std::string sample_name(int index, const char* ext) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%05d.%s", index, ext);
  return buf;
}

Plane as_rgb(Plane p) {
  if (p.channels() == 3) return p;
  Plane out(3, p.height(), p.width());
  for (int c = 0; c < 3; ++c) std::copy(p.channel(0).begin(), p.channel(0).end(), out.channel(c).begin());
  return out;
}

nlohmann::json vec_json(Vec2 v) { return {v.x, v.y}; }

Vec2 vec_from_json(const nlohmann::json& j) {
  return {j.at(0).get<double>(), j.at(1).get<double>()};
}

struct Synthesized {
  SplitEntry entry;
  TrainSample sample;
};

}  // namespace

double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Rect largest_valid_square(const Mask& m) {
  const std::vector<int> dp = square_table(m);
  int best = 0;
  for (int v : dp) best = std::max(best, v);
  if (best == 0) throw Error(ErrorKind::kEmptyMask, "largest_valid_square: mask is empty");
  // The first bottom-right corner in row-major order does not always give
  // the smallest top-left, so compare top-left corners explicitly.
  Rect r{m.width(), m.height(), best, best};
  for (int y = 0; y < m.height(); ++y) {
    for (int x = 0; x < m.width(); ++x) {
      if (dp[static_cast<std::size_t>(y) * m.width() + x] < best) continue;
      const int ty = y - best + 1;
      const int tx = x - best + 1;
      if (ty < r.y || (ty == r.y && tx < r.x)) {
        r.x = tx;
        r.y = ty;
      }
    }
  }
  return r;
}

TrainSample synthesize_pair(const Plane& hr, const Homography& m_inv, std::mt19937_64& rng,
                            const SynthOptions& opt) {
  if (opt.min_crop < 1 || opt.max_crop < opt.min_crop) {
    throw Error(ErrorKind::kInvalidParams, "synthesize_pair: bad crop limits");
  }
  const OutputBounds bounds = output_bounds(m_inv, hr.width(), hr.height());
  const Dims lr_dims{bounds.width, bounds.height};
  WarpResult lr = warp_bicubic(hr, BackwardMap::from_homography(bounds.transform), lr_dims);

  const std::vector<int> dp = square_table(lr.mask);
  const int largest = dp.empty() ? 0 : *std::max_element(dp.begin(), dp.end());
  const int side = std::min(opt.max_crop, largest);
  if (side < opt.min_crop) {
    throw Error(ErrorKind::kNoValidSquare, "valid region admits no " +
                                               std::to_string(opt.min_crop) + "px square");
  }
  // Top-left corners of every valid side x side square, row-major.
  std::vector<std::pair<int, int>> corners;
  for (int y = side - 1; y < lr_dims.height; ++y) {
    for (int x = side - 1; x < lr_dims.width; ++x) {
      if (dp[static_cast<std::size_t>(y) * lr_dims.width + x] >= side) {
        corners.emplace_back(x - side + 1, y - side + 1);
      }
    }
  }
  const auto pick = std::min(corners.size() - 1,
                             static_cast<std::size_t>(uniform01(rng) * static_cast<double>(corners.size())));
  const auto [cx, cy] = corners[pick];

  TrainSample s;
  s.hr = hr;
  s.crop_offset = {static_cast<double>(cx), static_cast<double>(cy)};
  s.m = compose(bounds.transform.inverse(), Homography::translation(cx, cy));
  s.lr_crop = crop(lr.image, {cx, cy, side, side});
  s.lr = std::move(lr.image);
  s.lr_mask = std::move(lr.mask);
  s.mask = compute_mask(BackwardMap::from_homography(s.m), {side, side}, hr.dims());
  return s;
}

nlohmann::json entry_to_json(const SplitEntry& e) {
  return {{"index", e.index},
          {"hr", e.hr},
          {"lr", e.lr},
          {"mask", e.mask},
          {"transform", e.transform},
          {"source", e.source},
          {"patch_offset", vec_json(e.patch_offset)},
          {"crop_offset", vec_json(e.crop_offset)},
          {"crop_size", e.crop_size},
          {"seed", e.seed},
          {"params", params_to_json(e.params)}};
}

SplitEntry entry_from_json(const nlohmann::json& j) {
  try {
    SplitEntry e;
    e.index = j.at("index").get<int>();
    e.hr = j.at("hr").get<std::string>();
    e.lr = j.at("lr").get<std::string>();
    e.mask = j.at("mask").get<std::string>();
    e.transform = j.at("transform").get<std::string>();
    e.source = j.at("source").get<std::string>();
    e.patch_offset = vec_from_json(j.at("patch_offset"));
    e.crop_offset = vec_from_json(j.at("crop_offset"));
    e.crop_size = j.at("crop_size").get<int>();
    e.seed = j.at("seed").get<std::uint64_t>();
    e.params = params_from_json(j.at("params"));
    return e;
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorKind::kUnsupportedFormat, std::string("manifest entry: ") + ex.what());
  }
}

std::vector<fs::path> list_images(const fs::path& dir) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw Error(ErrorKind::kIoError, dir.string() + " is not a directory");
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir, ec)) {
    if (!e.is_regular_file()) continue;
    std::string ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png") out.push_back(e.path());
  }
  if (ec) throw Error(ErrorKind::kIoError, "cannot list " + dir.string() + ": " + ec.message());
  std::sort(out.begin(), out.end(),
            [](const fs::path& a, const fs::path& b) { return a.filename().string() < b.filename().string(); });
  return out;
}

fs::path build_split(const fs::path& hr_dir, const fs::path& out_dir, int count,
                     std::uint64_t seed, const SynthOptions& opt) {
  if (count < 0) throw Error(ErrorKind::kInvalidParams, "build_split: negative count");
  const fs::path manifest = out_dir / "manifest.jsonl";
  std::vector<fs::path> sources;
  if (count > 0) {
    sources = list_images(hr_dir);
    if (sources.empty()) throw Error(ErrorKind::kIoError, "no PNG images in " + hr_dir.string());
  }

  std::vector<std::string> lines(static_cast<std::size_t>(count));
  parallel_for(static_cast<std::size_t>(count), [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const int index = static_cast<int>(i);
      SplitEntry e;
      e.index = index;
      e.seed = derive_seed(seed, i);
      std::mt19937_64 rng(e.seed);

      const auto src_idx = std::min(sources.size() - 1,
                                    static_cast<std::size_t>(uniform01(rng) * static_cast<double>(sources.size())));
      const Plane full = as_rgb(load_image(sources[src_idx]));
      if (full.width() < opt.hr_patch || full.height() < opt.hr_patch) {
        throw Error(ErrorKind::kInvalidParams,
                    sources[src_idx].string() + " is smaller than the HR patch");
      }
      const int px = static_cast<int>(uniform01(rng) * (full.width() - opt.hr_patch + 1));
      const int py = static_cast<int>(uniform01(rng) * (full.height() - opt.hr_patch + 1));
      const Plane hr = crop(full, {px, py, opt.hr_patch, opt.hr_patch});
      e.source = sources[src_idx].filename().string();
      e.patch_offset = {static_cast<double>(px), static_cast<double>(py)};

      std::optional<TrainSample> sample;
      for (int attempt = 0; attempt < kTransformAttempts && !sample; ++attempt) {
        try {
          auto [params, forward] =
              sample_transform(derive_seed(e.seed, static_cast<std::uint64_t>(attempt)),
                               opt.hr_patch, opt.hr_patch);
          sample = synthesize_pair(hr, inverse_from_params(params), rng, opt);
          e.params = params;
        } catch (const Error& err) {
          if (err.kind() != ErrorKind::kNoValidSquare && err.kind() != ErrorKind::kDegenerate &&
              err.kind() != ErrorKind::kResampleRejected) {
            throw;
          }
        }
      }
      if (!sample) {
        throw Error(ErrorKind::kNoValidSquare,
                    "sample " + std::to_string(index) + ": no usable transform");
      }
      e.crop_offset = sample->crop_offset;
      e.crop_size = sample->lr_crop.width();
      e.hr = "hr/" + sample_name(index, "png");
      e.lr = "lr/" + sample_name(index, "png");
      e.mask = "mask/" + sample_name(index, "png");
      e.transform = "tf/" + sample_name(index, "json");

      save_image(sample->hr, out_dir / e.hr, 16);
      save_image(sample->lr_crop, out_dir / e.lr, 16);
      save_mask(sample->mask, out_dir / e.mask);
      save_transform(sample->m, out_dir / e.transform);
      lines[i] = entry_to_json(e).dump();
    }
  });

  std::string text;
  for (const auto& l : lines) text += l + "\n";
  write_file_atomic(manifest, text);
  return manifest;
}

std::vector<LoadedSample> load_split(const fs::path& dir) {
  const std::string text = read_file(dir / "manifest.jsonl");
  std::vector<SplitEntry> entries;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) throw Error(ErrorKind::kUnsupportedFormat, "manifest line is not JSON");
    entries.push_back(entry_from_json(j));
  }
  std::vector<LoadedSample> out(entries.size());
  parallel_for(entries.size(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      LoadedSample& s = out[i];
      s.entry = entries[i];
      s.hr = as_rgb(load_image(dir / s.entry.hr));
      s.lr = as_rgb(load_image(dir / s.entry.lr));
      s.mask = load_mask(dir / s.entry.mask);
      const TransformSpec spec = load_transform(dir / s.entry.transform);
      if (!std::holds_alternative<Homography>(spec)) {
        throw Error(ErrorKind::kUnsupportedFormat, s.entry.transform + " is not a homography");
      }
      s.m = std::get<Homography>(spec);
      if (s.mask.dims().width != s.hr.width() || s.mask.dims().height != s.hr.height()) {
        throw Error(ErrorKind::kShapeMismatch, s.entry.mask + " does not match its HR patch");
      }
    }
  });
  return out;
}

TrainExample make_example(const LoadedSample& s, bool crop_to_mask) {
  TrainExample ex{s.lr, BackwardMap::from_homography(s.m), s.hr, s.mask};
  if (!crop_to_mask) return ex;
  const Rect box = bounding_box(s.mask);
  if (box.width == 0) throw Error(ErrorKind::kEmptyMask, "sample " + s.entry.hr + " has an empty mask");
  ex.map = ex.map.shifted_target({static_cast<double>(box.x), static_cast<double>(box.y)});
  ex.hr = crop(s.hr, box);
  ex.mask = crop(s.mask, box);
  return ex;
}

}  // namespace warpcore
