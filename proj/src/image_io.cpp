#include "warpcore/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstring>
#include <string>
#include <vector>

#include "warpcore/error.hpp"
#include "warpcore/fileutil.hpp"
#include "warpcore/geometry.hpp"

namespace warpcore {

namespace {

struct ReadCursor {
  const std::string* data;
  std::size_t pos;
};

void read_from_memory(png_structp png, png_bytep out, png_size_t n) {
  auto* cur = static_cast<ReadCursor*>(png_get_io_ptr(png));
  if (cur->data->size() - cur->pos < n) png_error(png, "unexpected end of data");
  std::memcpy(out, cur->data->data() + cur->pos, n);
  cur->pos += n;
}

void write_to_memory(png_structp png, png_bytep in, png_size_t n) {
  auto* out = static_cast<std::vector<unsigned char>*>(png_get_io_ptr(png));
  out->insert(out->end(), in, in + n);
}

void flush_noop(png_structp) {}

void silent_warning(png_structp, png_const_charp) {}

[[noreturn]] void silent_error(png_structp png, png_const_charp) { png_longjmp(png, 1); }

// Decoded rows, 8 or 16 bits per sample, big-endian for 16.
struct Raw {
  png_uint_32 width = 0;
  png_uint_32 height = 0;
  int channels = 0;
  int depth = 0;
  std::vector<unsigned char> bytes;
};

// Returns false on any libpng error; all locals touched after setjmp live
// in `raw`, which the caller owns.
bool decode(const std::string& data, Raw& raw) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, silent_error, silent_warning);
  if (!png) return false;
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    return false;
  }
  ReadCursor cursor{&data, 0};
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    return false;
  }
  png_set_read_fn(png, &cursor, read_from_memory);
  png_set_user_limits(png, 1u << 15, 1u << 15);
  png_read_info(png, info);

  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);

  raw.width = png_get_image_width(png, info);
  raw.height = png_get_image_height(png, info);
  raw.channels = png_get_channels(png, info);
  raw.depth = png_get_bit_depth(png, info);
  const std::size_t stride = png_get_rowbytes(png, info);
  raw.bytes.resize(stride * raw.height);
  rows.resize(raw.height);
  for (png_uint_32 y = 0; y < raw.height; ++y) rows[y] = raw.bytes.data() + y * stride;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return (raw.channels == 1 || raw.channels == 3) && (raw.depth == 8 || raw.depth == 16);
}

bool encode(const std::vector<unsigned char>& pixels, png_uint_32 width, png_uint_32 height,
            int channels, int depth, std::vector<unsigned char>& out) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, silent_error, silent_warning);
  if (!png) return false;
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    return false;
  }
  std::vector<png_bytep> rows(height);
  const std::size_t stride = static_cast<std::size_t>(width) * channels * (depth / 8);
  for (png_uint_32 y = 0; y < height; ++y) {
    rows[y] = const_cast<png_bytep>(pixels.data() + y * stride);
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    return false;
  }
  png_set_write_fn(png, &out, write_to_memory, flush_noop);
  png_set_IHDR(png, info, width, height, depth,
               channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return true;
}

Raw read_raw(const std::filesystem::path& path) {
  const std::string data = read_file(path);
  Raw raw;
  if (data.size() < 8 || png_sig_cmp(reinterpret_cast<png_const_bytep>(data.data()), 0, 8) != 0 ||
      !decode(data, raw)) {
    throw Error(ErrorKind::kUnsupportedFormat, path.string() + " is not a readable PNG");
  }
  return raw;
}

}  // namespace

Plane load_image(const std::filesystem::path& path, int* bit_depth) {
  const Raw raw = read_raw(path);
  if (bit_depth) *bit_depth = raw.depth;
  const int w = static_cast<int>(raw.width);
  const int h = static_cast<int>(raw.height);
  Plane out(raw.channels, h, w);
  const double scale = raw.depth == 16 ? 65535.0 : 255.0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < raw.channels; ++c) {
        const std::size_t i = (static_cast<std::size_t>(y) * w + x) * raw.channels + c;
        const unsigned v = raw.depth == 16 ? (raw.bytes[2 * i] << 8) | raw.bytes[2 * i + 1]
                                           : raw.bytes[i];
        out.at(c, y, x) = v / scale;
      }
    }
  }
  return out;
}

void save_image(const Plane& img, const std::filesystem::path& path, int bit_depth) {
  if (img.channels() != 1 && img.channels() != 3) {
    throw Error(ErrorKind::kShapeMismatch, "save_image: need 1 or 3 channels");
  }
  if (bit_depth != 8 && bit_depth != 16) {
    throw Error(ErrorKind::kInvalidParams, "save_image: bit depth must be 8 or 16");
  }
  if (img.width() < 1 || img.height() < 1) {
    throw Error(ErrorKind::kShapeMismatch, "save_image: empty image");
  }
  const double maxv = bit_depth == 16 ? 65535.0 : 255.0;
  const int bytes = bit_depth / 8;
  std::vector<unsigned char> pixels(img.size() * bytes);
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      for (int c = 0; c < img.channels(); ++c) {
        double v = img.at(c, y, x);
        v = std::isnan(v) ? 0.0 : std::clamp(v, 0.0, 1.0);
        const auto q = static_cast<unsigned>(round_half_away(v * maxv));
        const std::size_t i = (static_cast<std::size_t>(y) * img.width() + x) * img.channels() + c;
        if (bytes == 2) {
          pixels[2 * i] = static_cast<unsigned char>(q >> 8);
          pixels[2 * i + 1] = static_cast<unsigned char>(q & 0xff);
        } else {
          pixels[i] = static_cast<unsigned char>(q);
        }
      }
    }
  }
  std::vector<unsigned char> png;
  if (!encode(pixels, static_cast<png_uint_32>(img.width()), static_cast<png_uint_32>(img.height()),
              img.channels(), bit_depth, png)) {
    throw Error(ErrorKind::kIoError, "PNG encoding failed for " + path.string());
  }
  write_file_atomic(path, std::span<const unsigned char>(png));
}

void save_mask(const Mask& m, const std::filesystem::path& path) {
  Plane p(1, m.height(), m.width());
  for (std::size_t k = 0; k < m.size(); ++k) p.data()[k] = m[k] ? 1.0 : 0.0;
  save_image(p, path, 8);
}

Mask load_mask(const std::filesystem::path& path) {
  const Plane p = load_image(path);
  Mask m(p.height(), p.width());
  const auto ch = p.channel(0);
  for (std::size_t k = 0; k < m.size(); ++k) m[k] = ch[k] >= 0.5 ? 1 : 0;
  return m;
}

}  // namespace warpcore
