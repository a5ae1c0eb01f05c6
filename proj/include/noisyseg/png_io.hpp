#pragma once

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "noisyseg/core.hpp"

namespace noisyseg {

namespace detail {

struct PngReadData {
  png_structp png = nullptr;
  png_infop info = nullptr;
  std::FILE* fp = nullptr;

  ~PngReadData() {
    if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    if (fp) std::fclose(fp);
  }
};

struct PngWriteData {
  png_structp png = nullptr;
  png_infop info = nullptr;
  std::FILE* fp = nullptr;

  ~PngWriteData() {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    if (fp) std::fclose(fp);
  }
};

// Decodes a PNG with the given libpng transforms and hands back rows.
// All C++ objects live outside the setjmp region so a decode error unwinds
// cleanly into a ValidationError.
struct DecodedPng {
  int height = 0, width = 0, channels = 0, bit_depth = 0, color_type = 0;
  std::vector<std::uint8_t> bytes;  // row-major, packed
};

inline DecodedPng decode_png(const std::string& path, int transforms) {
  PngReadData ctx;
  DecodedPng out;
  ctx.fp = std::fopen(path.c_str(), "rb");
  if (!ctx.fp) throw ValidationError("cannot open PNG for reading: " + path);
  ctx.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (ctx.png) ctx.info = png_create_info_struct(ctx.png);
  if (!ctx.png || !ctx.info) throw ValidationError("libpng allocation failed");

  if (setjmp(png_jmpbuf(ctx.png))) throw ValidationError("failed to decode PNG: " + path);

  png_init_io(ctx.png, ctx.fp);
  png_read_png(ctx.png, ctx.info, transforms, nullptr);

  out.height = static_cast<int>(png_get_image_height(ctx.png, ctx.info));
  out.width = static_cast<int>(png_get_image_width(ctx.png, ctx.info));
  out.channels = png_get_channels(ctx.png, ctx.info);
  out.bit_depth = png_get_bit_depth(ctx.png, ctx.info);
  out.color_type = png_get_color_type(ctx.png, ctx.info);

  const std::size_t rowbytes = png_get_rowbytes(ctx.png, ctx.info);
  png_bytepp rows = png_get_rows(ctx.png, ctx.info);
  out.bytes.resize(rowbytes * out.height);
  for (int y = 0; y < out.height; ++y)
    std::copy(rows[y], rows[y] + rowbytes, out.bytes.begin() + static_cast<std::size_t>(y) * rowbytes);
  return out;
}

inline void encode_png(const std::string& path, int height, int width, int bit_depth,
                       int color_type, const std::vector<const std::uint8_t*>& rows) {
  PngWriteData ctx;
  ctx.fp = std::fopen(path.c_str(), "wb");
  if (!ctx.fp) throw ValidationError("cannot open PNG for writing: " + path);
  ctx.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (ctx.png) ctx.info = png_create_info_struct(ctx.png);
  if (!ctx.png || !ctx.info) throw ValidationError("libpng allocation failed");

  if (setjmp(png_jmpbuf(ctx.png))) throw ValidationError("failed to encode PNG: " + path);

  png_init_io(ctx.png, ctx.fp);
  png_set_IHDR(ctx.png, ctx.info, width, height, bit_depth, color_type, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(ctx.png, ctx.info);
  for (int y = 0; y < height; ++y)
    png_write_row(ctx.png, const_cast<png_bytep>(rows[y]));
  png_write_end(ctx.png, ctx.info);
}

}  // namespace detail

// Reads any PNG as an RGB image with intensities scaled to [0,1].
// Palette/gray/alpha variants are normalized to 8-bit RGB by libpng.
inline ImageTensor read_image_png(const std::string& path) {
  const auto decoded = detail::decode_png(
      path, PNG_TRANSFORM_STRIP_16 | PNG_TRANSFORM_STRIP_ALPHA | PNG_TRANSFORM_PACKING |
                PNG_TRANSFORM_EXPAND | PNG_TRANSFORM_GRAY_TO_RGB);
  detail::require(decoded.channels == 3, "read_image_png: expected RGB after expansion: " + path);

  const std::size_t plane = static_cast<std::size_t>(decoded.height) * decoded.width;
  std::vector<double> data(3 * plane);
  for (std::size_t p = 0; p < plane; ++p)
    for (int c = 0; c < 3; ++c) data[c * plane + p] = decoded.bytes[p * 3 + c] / 255.0;
  return ImageTensor(3, decoded.height, decoded.width, std::move(data));
}

// Reads a single-channel 8-bit PNG of class ids.
inline LabelMap read_label_png(const std::string& path, int num_classes) {
  const auto decoded = detail::decode_png(path, PNG_TRANSFORM_PACKING);
  detail::require(decoded.color_type == PNG_COLOR_TYPE_GRAY && decoded.channels == 1,
                  "read_label_png: label file must be single-channel grayscale: " + path);
  detail::require(decoded.bit_depth == 8,
                  "read_label_png: label file must be 8-bit: " + path);

  std::vector<int> data(decoded.bytes.begin(), decoded.bytes.end());
  return LabelMap(decoded.height, decoded.width, num_classes, std::move(data));
}

// Writes an ImageTensor as 8-bit PNG; C=3 becomes RGB, C=1 grayscale.
inline void write_image_png(const std::string& path, const ImageTensor& img) {
  const int height = img.height();
  const int width = img.width();
  const int channels = img.channels();
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(height) * width * channels);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      for (int c = 0; c < channels; ++c)
        bytes[(static_cast<std::size_t>(y) * width + x) * channels + c] =
            static_cast<std::uint8_t>(std::lround(img.at(c, y, x) * 255.0));

  std::vector<const std::uint8_t*> rows(height);
  for (int y = 0; y < height; ++y)
    rows[y] = bytes.data() + static_cast<std::size_t>(y) * width * channels;
  detail::encode_png(path, height, width, 8,
                     channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, rows);
}

// Writes raw 8-bit RGB rows (used by the plot renderer).
inline void write_rgb8_png(const std::string& path, int height, int width,
                           const std::vector<std::uint8_t>& rgb) {
  detail::require(rgb.size() == static_cast<std::size_t>(height) * width * 3,
                  "write_rgb8_png: buffer size does not match H*W*3");
  std::vector<const std::uint8_t*> rows(height);
  for (int y = 0; y < height; ++y)
    rows[y] = rgb.data() + static_cast<std::size_t>(y) * width * 3;
  detail::encode_png(path, height, width, 8, PNG_COLOR_TYPE_RGB, rows);
}

// Writes a label map as single-channel 8-bit PNG, pixel value = class id.
inline void write_label_png(const std::string& path, const LabelMap& labels) {
  const int height = labels.height();
  const int width = labels.width();
  detail::require(labels.num_classes() <= 256, "write_label_png: class ids exceed 8-bit range");
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(height) * width);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      bytes[static_cast<std::size_t>(y) * width + x] = static_cast<std::uint8_t>(labels.at(y, x));

  std::vector<const std::uint8_t*> rows(height);
  for (int y = 0; y < height; ++y) rows[y] = bytes.data() + static_cast<std::size_t>(y) * width;
  detail::encode_png(path, height, width, 8, PNG_COLOR_TYPE_GRAY, rows);
}

// 16-bit grayscale, big-endian per the PNG spec.
inline void write_gray16_png(const std::string& path, int height, int width,
                             const std::vector<std::uint16_t>& values) {
  detail::require(values.size() == static_cast<std::size_t>(height) * width,
                  "write_gray16_png: buffer size does not match H*W");
  std::vector<std::uint8_t> bytes(values.size() * 2);
  for (std::size_t i = 0; i < values.size(); ++i) {
    bytes[2 * i] = static_cast<std::uint8_t>(values[i] >> 8);
    bytes[2 * i + 1] = static_cast<std::uint8_t>(values[i] & 0xff);
  }
  std::vector<const std::uint8_t*> rows(height);
  for (int y = 0; y < height; ++y)
    rows[y] = bytes.data() + static_cast<std::size_t>(y) * width * 2;
  detail::encode_png(path, height, width, 16, PNG_COLOR_TYPE_GRAY, rows);
}

inline std::vector<std::uint16_t> read_gray16_png(const std::string& path, int* height_out,
                                                  int* width_out) {
  const auto decoded = detail::decode_png(path, PNG_TRANSFORM_IDENTITY);
  detail::require(decoded.color_type == PNG_COLOR_TYPE_GRAY && decoded.bit_depth == 16,
                  "read_gray16_png: expected 16-bit grayscale: " + path);
  std::vector<std::uint16_t> values(static_cast<std::size_t>(decoded.height) * decoded.width);
  for (std::size_t i = 0; i < values.size(); ++i)
    values[i] = static_cast<std::uint16_t>((decoded.bytes[2 * i] << 8) | decoded.bytes[2 * i + 1]);
  if (height_out) *height_out = decoded.height;
  if (width_out) *width_out = decoded.width;
  return values;
}

}  // namespace noisyseg
