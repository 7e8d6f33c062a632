#pragma once

#include <Eigen/Core>

#include <string>

#include "meshlift/errors.hpp"

namespace meshlift {

/// Interleaved raster: channel k of pixel (x, y) lives at (y * width + x) * channels + k.
template <typename Scalar>
struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;
  Eigen::Array<Scalar, Eigen::Dynamic, 1> data;

  Image() = default;
  Image(int w, int h, int c, Scalar fill = Scalar(0))
      : width(w), height(h), channels(c), data(Eigen::Array<Scalar, Eigen::Dynamic, 1>::Constant(
                                              static_cast<Eigen::Index>(w) * h * c, fill)) {}

  bool empty() const { return data.size() == 0; }
  Eigen::Index pixel_count() const { return static_cast<Eigen::Index>(width) * height; }
  Eigen::Index index(int x, int y, int k = 0) const {
    return (static_cast<Eigen::Index>(y) * width + x) * channels + k;
  }
  Scalar& operator()(int x, int y, int k = 0) { return data[index(x, y, k)]; }
  Scalar operator()(int x, int y, int k = 0) const { return data[index(x, y, k)]; }
  Scalar& at(Eigen::Index pixel, int k = 0) { return data[pixel * channels + k]; }
  Scalar at(Eigen::Index pixel, int k = 0) const { return data[pixel * channels + k]; }

  Eigen::Matrix<Scalar, 3, 1> rgb(Eigen::Index pixel) const {
    return {data[pixel * channels], data[pixel * channels + 1], data[pixel * channels + 2]};
  }
  void set_rgb(Eigen::Index pixel, const Eigen::Matrix<Scalar, 3, 1>& v) {
    data[pixel * channels] = v.x();
    data[pixel * channels + 1] = v.y();
    data[pixel * channels + 2] = v.z();
  }
  bool same_shape(const Image& o) const {
    return width == o.width && height == o.height && channels == o.channels;
  }
};

using ImageD = Image<double>;

/// Read an 8- or 16-bit PNG into [0, 1]. Gray/RGB keep their channel count;
/// alpha channels are dropped (gray+alpha -> 1, RGBA -> 3).
ImageD read_png(const std::string& path);

/// Write an image with 1 or 3 channels, values clamped to [0, 1] and rounded
/// to the nearest 8-bit (or 16-bit) level.
void write_png(const std::string& path, const ImageD& image, int bit_depth = 8);

/// Round every value to the nearest of `levels` evenly spaced steps in [0, 1];
/// this is exactly what a PNG write/read cycle does.
ImageD quantize(const ImageD& image, int levels = 255);

/// World normal <-> (n + 1) / 2 colour encoding.
ImageD encode_normals(const ImageD& normals);
ImageD decode_normals(const ImageD& encoded);

}  // namespace meshlift
