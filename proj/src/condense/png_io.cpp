// SPDX-License-Identifier: Apache-2.0
#include "gestigo/condense/png_io.hpp"

#include <png.h>

#include <csetjmp>
#include <cstring>
#include <fstream>
#include <iterator>

#include <fmt/format.h>

#include "gestigo/error.hpp"

namespace gestigo::condense {

namespace {

struct Reader {
  std::span<const std::uint8_t> data;
  std::size_t pos = 0;
};

void read_cb(png_structp png, png_bytep out, png_size_t len) {
  auto* r = static_cast<Reader*>(png_get_io_ptr(png));
  if (r->pos + len > r->data.size()) png_error(png, "truncated PNG");
  std::memcpy(out, r->data.data() + r->pos, len);
  r->pos += len;
}

void write_cb(png_structp png, png_bytep data, png_size_t len) {
  auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + len);
}

void flush_cb(png_structp) {}

}  // namespace

std::vector<std::uint8_t> encode_png(const RasterImage& image) {
  if (image.empty()) throw ArgumentError("encode_png: empty image");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw ReadError("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  std::vector<std::uint8_t> out;
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw ReadError("PNG encoding failed");
  }
  png_set_write_fn(png, &out, write_cb, flush_cb);
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width()),
               static_cast<png_uint_32>(image.height()), 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const auto px = image.pixels();
  for (int y = 0; y < image.height(); ++y)
    png_write_row(png, const_cast<png_bytep>(px.data() + static_cast<std::size_t>(y) * image.width() * 3));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

RasterImage decode_png(std::span<const std::uint8_t> bytes, const std::string& name) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0)
    throw ParseError(name, 0, "not a PNG file");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw ReadError("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  Reader reader{bytes, 0};
  RasterImage image;
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ParseError(name, 0, "corrupt PNG");
  }
  png_set_read_fn(png, &reader, read_cb);
  png_read_info(png, info);
  const auto width = static_cast<int>(png_get_image_width(png, info));
  const auto height = static_cast<int>(png_get_image_height(png, info));
  const int color = png_get_color_type(png, info);
  if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8)
    png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_strip_alpha(png);
  png_read_update_info(png, info);
  if (png_get_rowbytes(png, info) != static_cast<png_size_t>(width) * 3)
    png_error(png, "unexpected row layout");
  image = RasterImage(width, height);
  auto px = image.pixels();
  for (int y = 0; y < height; ++y)
    png_read_row(png, px.data() + static_cast<std::size_t>(y) * width * 3, nullptr);
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return image;
}

void write_png(const RasterImage& image, const std::filesystem::path& path) {
  const auto bytes = encode_png(image);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ReadError(fmt::format("cannot write {}", path.string()));
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ReadError(fmt::format("write failure on {}", path.string()));
}

RasterImage read_png(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError(fmt::format("cannot open {}", path.string()));
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                        std::istreambuf_iterator<char>());
  return decode_png(bytes, path.string());
}

}  // namespace gestigo::condense
