#pragma once

// Orthographic cameras and the fixed view rigs.
//
// Convention: world up is +Z. The azimuth-0 camera sits on +Y and looks
// toward -Y; azimuth turns counter-clockwise about +Z and elevation lifts the
// camera toward +Z. Image x follows the camera's right vector, image y grows
// downward, pixel (0, 0) is the top-left pixel and pixel centres sit at
// half-integers. Depth is measured along the view direction from the plane
// through the origin, so it grows away from the camera.

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cmath>
#include <numbers>
#include <utility>
#include <vector>

#include "meshlift/errors.hpp"

namespace meshlift {

/// sin/cos of an angle in degrees, reduced to a quarter turn first so that
/// angles half a turn apart give exactly negated results.
template <typename Scalar>
std::pair<Scalar, Scalar> sincos_degrees(Scalar degrees) {
  Scalar a = std::fmod(degrees, Scalar(360));
  if (a < 0) a += Scalar(360);
  const int quarter = static_cast<int>(std::floor(a / Scalar(90))) % 4;
  const Scalar rest = (a - Scalar(90) * Scalar(quarter)) * std::numbers::pi_v<Scalar> / Scalar(180);
  const Scalar s = rest == Scalar(0) ? Scalar(0) : std::sin(rest);
  const Scalar c = rest == Scalar(0) ? Scalar(1) : std::cos(rest);
  switch (quarter) {
    case 1: return {c, -s};
    case 2: return {-s, -c};
    case 3: return {-c, s};
    default: return {s, c};
  }
}

template <typename Scalar>
struct OrthoCamera {
  Scalar azimuth = 0;       // degrees
  Scalar elevation = 0;     // degrees
  Scalar half_extent = 1;   // world units, half the visible width
  int resolution = 512;     // square image
  Scalar near_plane = -1000;
  Scalar far_plane = 1000;

  using V3 = Eigen::Matrix<Scalar, 3, 1>;

  void check() const {
    if (!(half_extent > Scalar(0))) throw ContractError("camera half_extent must be positive");
    if (resolution < 16) throw ContractError("camera resolution must be at least 16");
    if (!(near_plane < far_plane)) throw ContractError("camera near must be less than far");
  }

  /// Unit vector from the origin toward the camera.
  V3 position_direction() const {
    const auto [sa, ca] = sincos_degrees(azimuth);
    const auto [se, ce] = sincos_degrees(elevation);
    return V3(-sa * ce, ca * ce, se);
  }
  V3 view_direction() const { return -position_direction(); }
  V3 right() const {
    const auto [sa, ca] = sincos_degrees(azimuth);
    return V3(-ca, -sa, Scalar(0));
  }
  V3 up() const { return right().cross(view_direction()); }

  Scalar pixels_per_unit() const { return Scalar(resolution) / (Scalar(2) * half_extent); }

  /// Same camera at another resolution.
  OrthoCamera with_resolution(int res) const {
    OrthoCamera c = *this;
    c.resolution = res;
    return c;
  }
};

template <typename Scalar>
struct PixelDepth {
  Scalar x;
  Scalar y;
  Scalar depth;
};

/// Orthographic projection to continuous pixel coordinates.
template <typename Scalar>
PixelDepth<Scalar> world_to_pixel(const OrthoCamera<Scalar>& cam, const Eigen::Matrix<Scalar, 3, 1>& p) {
  const Scalar half_res = Scalar(cam.resolution) / Scalar(2);
  return {(p.dot(cam.right()) / cam.half_extent + Scalar(1)) * half_res,
          (Scalar(1) - p.dot(cam.up()) / cam.half_extent) * half_res, p.dot(cam.view_direction())};
}

/// Precomputed projection rows for hot loops; `project` agrees with
/// world_to_pixel up to rounding.
template <typename Scalar>
struct Projector {
  Eigen::Matrix<Scalar, 3, 1> dx, dy, dz;
  Scalar half_res;

  explicit Projector(const OrthoCamera<Scalar>& cam) : half_res(Scalar(cam.resolution) / Scalar(2)) {
    const Scalar s = half_res / cam.half_extent;
    dx = cam.right() * s;
    dy = -cam.up() * s;
    dz = cam.view_direction();
  }
  Eigen::Matrix<Scalar, 3, 1> project(const Eigen::Matrix<Scalar, 3, 1>& p) const {
    return {p.dot(dx) + half_res, p.dot(dy) + half_res, p.dot(dz)};
  }
};

template <typename Scalar>
struct CameraRig {
  std::vector<OrthoCamera<Scalar>> cameras;

  void check() const {
    if (cameras.empty()) throw ContractError("camera rig is empty");
    for (const auto& c : cameras) {
      c.check();
      if (c.resolution != cameras.front().resolution || c.half_extent != cameras.front().half_extent) {
        throw ContractError("rig cameras must share resolution and half_extent");
      }
    }
  }
  std::size_t size() const { return cameras.size(); }
  const OrthoCamera<Scalar>& operator[](std::size_t i) const { return cameras[i]; }
};

template <typename Scalar>
CameraRig<Scalar> rig_from_azimuths(const std::vector<Scalar>& azimuths, int resolution, Scalar half_extent) {
  CameraRig<Scalar> rig;
  for (Scalar az : azimuths) {
    OrthoCamera<Scalar> c;
    c.azimuth = az;
    c.elevation = 0;
    c.resolution = resolution;
    c.half_extent = half_extent;
    rig.cameras.push_back(c);
  }
  rig.check();
  return rig;
}

/// The six conditioning views; the first (azimuth 0) is the front/edit view.
template <typename Scalar>
CameraRig<Scalar> standard_rig_six(int resolution = 512, Scalar half_extent = 1) {
  return rig_from_azimuths<Scalar>({0, 45, 90, 180, 270, 315}, resolution, half_extent);
}

/// Eight views at 45 degree azimuth steps, elevation 0.
template <typename Scalar>
CameraRig<Scalar> training_rig_eight(int resolution = 512, Scalar half_extent = 1) {
  return rig_from_azimuths<Scalar>({0, 45, 90, 135, 180, 225, 270, 315}, resolution, half_extent);
}

}  // namespace meshlift
