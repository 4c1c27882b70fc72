#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "warpcore/image.hpp"
#include "warpcore/model.hpp"
#include "warpcore/xform.hpp"

namespace warpcore {

struct SynthOptions {
  int hr_patch = 96;
  int max_crop = 24;
  int min_crop = 8;
};

/// One supervised pair. `m` maps lr_crop coordinates forward onto the hr
/// grid (crop offset and canvas offset already folded in).
struct TrainSample {
  Plane hr;
  Homography m;
  Plane lr;          ///< full warped canvas
  Plane lr_crop;
  Vec2 crop_offset;  ///< top-left of lr_crop inside lr
  Mask lr_mask;      ///< valid pixels of lr
  Mask mask;         ///< valid hr pixels when warping lr_crop by m
};

/// Uniform double in [0, 1) from the top 53 bits.
double uniform01(std::mt19937_64& rng);
/// splitmix64 finalizer of (seed, index); decorrelates per-sample streams.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

/// Largest all-ones axis-aligned square; ties go to the smallest
/// (row, col) of the top-left corner. Throws EmptyMask.
Rect largest_valid_square(const Mask& m);

/// Warps hr by m_inv (HR -> LR, bicubic, tight canvas) and cuts a random
/// square crop of side min(max_crop, largest valid square) from the valid
/// region. Throws NoValidSquare when that side is below min_crop.
TrainSample synthesize_pair(const Plane& hr, const Homography& m_inv, std::mt19937_64& rng,
                            const SynthOptions& opt = {});

struct SplitEntry {
  int index = 0;
  std::string hr;         ///< paths relative to the split directory
  std::string lr;
  std::string mask;
  std::string transform;
  std::string source;     ///< hr_dir file name the patch was cut from
  Vec2 patch_offset;
  Vec2 crop_offset;
  int crop_size = 0;
  std::uint64_t seed = 0;
  TransformParams params;
};

nlohmann::json entry_to_json(const SplitEntry& e);
SplitEntry entry_from_json(const nlohmann::json& j);

/// PNG files of hr_dir in byte-wise name order.
std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir);

/// Synthesizes `count` samples from the images of hr_dir into out_dir:
///   hr/NNNNN.png    16-bit HR patch
///   lr/NNNNN.png    16-bit LR crop
///   mask/NNNNN.png  8-bit HR-grid validity mask
///   tf/NNNNN.json   {"matrix": forward lr_crop -> hr}
///   manifest.jsonl  one entry_to_json object per line
/// Fully determined by (hr_dir contents, count, seed). Returns the manifest
/// path. Throws IoError, InvalidParams.
std::filesystem::path build_split(const std::filesystem::path& hr_dir,
                                  const std::filesystem::path& out_dir, int count,
                                  std::uint64_t seed, const SynthOptions& opt = {});

struct LoadedSample {
  SplitEntry entry;
  Plane hr;
  Plane lr;
  Homography m;
  Mask mask;
};

/// Reads a split written by build_split. Throws IoError, UnsupportedFormat.
std::vector<LoadedSample> load_split(const std::filesystem::path& dir);

/// Training view of a sample. With crop_to_mask the output grid shrinks to
/// the mask's bounding box (map and target re-anchored consistently).
/// Throws EmptyMask.
TrainExample make_example(const LoadedSample& s, bool crop_to_mask = true);

}  // namespace warpcore
