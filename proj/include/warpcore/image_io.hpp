#pragma once

#include <filesystem>

#include "warpcore/image.hpp"

namespace warpcore {

/// Reads an 8- or 16-bit PNG into [0, 1]. Gray images give one channel,
/// color images three; alpha is dropped and palettes are expanded.
/// Throws IoError when the file cannot be opened, UnsupportedFormat when it
/// is not a readable PNG.
/// bit_depth, when given, receives 8 or 16.
Plane load_image(const std::filesystem::path& path, int* bit_depth = nullptr);

/// Writes a 1- or 3-channel plane as PNG with round-half-away quantization
/// of the clamped values. bit_depth is 8 or 16. Atomic (temp + rename).
void save_image(const Plane& img, const std::filesystem::path& path, int bit_depth = 16);

/// 8-bit gray PNG, 0 or 255.
void save_mask(const Mask& m, const std::filesystem::path& path);
/// Pixels >= 0.5 are valid.
Mask load_mask(const std::filesystem::path& path);

}  // namespace warpcore
