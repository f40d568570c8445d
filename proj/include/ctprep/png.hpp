#pragma once

// 8-bit PNG output via libpng, used for review previews and QC montages.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <vector>

#include <png.h>

#include "ctprep/error.hpp"
#include "ctprep/io.hpp"

namespace ctprep {

/// Interleaved 8-bit image, `channels` = 1 (gray) or 3 (RGB).
struct Image8 {
  std::size_t width = 0;
  std::size_t height = 0;
  int channels = 1;
  std::vector<std::uint8_t> pixels;

  Image8() = default;
  Image8(std::size_t w, std::size_t h, int ch, std::uint8_t fill = 0)
      : width(w), height(h), channels(ch), pixels(w * h * std::size_t(ch), fill) {}

  std::uint8_t* at(std::size_t row, std::size_t col) { return &pixels[(row * width + col) * std::size_t(channels)]; }
  const std::uint8_t* at(std::size_t row, std::size_t col) const {
    return &pixels[(row * width + col) * std::size_t(channels)];
  }
};

namespace detail {

inline void png_append(png_structp png, png_bytep data, png_size_t length) {
  auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + length);
}

inline void png_flush_noop(png_structp) {}

}  // namespace detail

inline std::vector<std::uint8_t> encode_png(const Image8& img) {
  if (img.width == 0 || img.height == 0 || (img.channels != 1 && img.channels != 3) ||
      img.pixels.size() != img.width * img.height * std::size_t(img.channels)) {
    throw Error(ErrorCode::IoFailure, "invalid image for PNG encoding");
  }
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw Error(ErrorCode::IoFailure, "png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  std::vector<std::uint8_t> out;
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, info ? &info : nullptr);
    throw Error(ErrorCode::IoFailure, "libpng encoding failed");
  }
  png_set_write_fn(png, &out, detail::png_append, detail::png_flush_noop);
  png_set_IHDR(png, info, png_uint_32(img.width), png_uint_32(img.height), 8,
               img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const std::size_t stride = img.width * std::size_t(img.channels);
  for (std::size_t r = 0; r < img.height; ++r) {
    png_write_row(png, const_cast<png_bytep>(img.pixels.data() + r * stride));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

inline void write_png(const Image8& img, const std::filesystem::path& path) {
  io::write_file_atomic(path, encode_png(img));
}

}  // namespace ctprep
