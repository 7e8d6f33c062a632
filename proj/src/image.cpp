#include "meshlift/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <vector>

namespace meshlift {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

ImageD read_png(const std::string& path) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) throw InputError("cannot open PNG '" + path + "'");
  png_byte header[8];
  if (std::fread(header, 1, 8, file.get()) != 8 || png_sig_cmp(header, 0, 8) != 0) {
    throw InputError("'" + path + "' is not a PNG file");
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw InputError("libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw InputError("corrupt PNG '" + path + "'");
  }
  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const int color_type = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (depth == 16) png_set_swap(png);  // host little-endian 16-bit samples
  png_read_update_info(png, info);

  const int width = static_cast<int>(png_get_image_width(png, info));
  const int height = static_cast<int>(png_get_image_height(png, info));
  const int in_channels = png_get_channels(png, info);
  const int out_depth = png_get_bit_depth(png, info);
  const std::size_t row_bytes = png_get_rowbytes(png, info);
  std::vector<png_byte> buffer(row_bytes * static_cast<std::size_t>(height));
  std::vector<png_bytep> rows(static_cast<std::size_t>(height));
  for (int y = 0; y < height; ++y) rows[y] = buffer.data() + row_bytes * static_cast<std::size_t>(y);
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  const int out_channels = in_channels >= 3 ? 3 : 1;
  const double scale = out_depth == 16 ? 65535.0 : 255.0;
  ImageD image(width, height, out_channels);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      for (int k = 0; k < out_channels; ++k) {
        const std::size_t sample = static_cast<std::size_t>(x) * in_channels + k;
        double value = 0;
        if (out_depth == 16) {
          const auto* p = reinterpret_cast<const std::uint16_t*>(rows[y]);
          value = p[sample];
        } else {
          value = rows[y][sample];
        }
        image(x, y, k) = value / scale;
      }
    }
  }
  return image;
}

void write_png(const std::string& path, const ImageD& image, int bit_depth) {
  if (image.channels != 1 && image.channels != 3) {
    throw ContractError("write_png supports 1 or 3 channels");
  }
  if (bit_depth != 8 && bit_depth != 16) throw ContractError("write_png bit depth must be 8 or 16");
  FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) throw InputError("cannot write PNG '" + path + "'");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw InputError("libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw InputError("failed writing PNG '" + path + "'");
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height),
               bit_depth, image.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  if (bit_depth == 16) png_set_swap(png);

  const double scale = bit_depth == 16 ? 65535.0 : 255.0;
  const std::size_t samples = static_cast<std::size_t>(image.width) * image.channels;
  std::vector<std::uint8_t> row8(samples);
  std::vector<std::uint16_t> row16(samples);
  for (int y = 0; y < image.height; ++y) {
    for (std::size_t i = 0; i < samples; ++i) {
      const double v = std::clamp(image.data[static_cast<Eigen::Index>(y) * samples + i], 0.0, 1.0);
      const double level = std::round(v * scale);
      if (bit_depth == 16) {
        row16[i] = static_cast<std::uint16_t>(level);
      } else {
        row8[i] = static_cast<std::uint8_t>(level);
      }
    }
    png_write_row(png, bit_depth == 16 ? reinterpret_cast<png_bytep>(row16.data()) : row8.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

ImageD quantize(const ImageD& image, int levels) {
  ImageD out = image;
  const double s = static_cast<double>(levels);
  out.data = (image.data.max(0.0).min(1.0) * s).round() / s;
  return out;
}

ImageD encode_normals(const ImageD& normals) {
  ImageD out = normals;
  out.data = (normals.data + 1.0) * 0.5;
  return out;
}

ImageD decode_normals(const ImageD& encoded) {
  ImageD out = encoded;
  out.data = encoded.data * 2.0 - 1.0;
  return out;
}

}  // namespace meshlift
