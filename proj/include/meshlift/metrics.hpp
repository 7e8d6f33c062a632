#pragma once

// Geometry and image metrics.

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "meshlift/image.hpp"
#include "meshlift/mesh.hpp"

namespace meshlift {

/// Area-uniform surface samples drawn with mt19937_64(seed); the same seed
/// always yields the same points for the same mesh.
RowPoints<double> sample_surface(const Mesh& mesh, std::size_t count, std::uint64_t seed);

/// Closest-point queries against a triangle soup (AABB tree).
class SurfaceDistance {
 public:
  explicit SurfaceDistance(const Mesh& mesh);
  ~SurfaceDistance();
  SurfaceDistance(SurfaceDistance&&) noexcept;
  SurfaceDistance& operator=(SurfaceDistance&&) noexcept;

  double distance(const Eigen::Vector3d& p) const;

 private:
  struct Tree;
  std::unique_ptr<Tree> tree_;
};

struct ChamferResult {
  double value = 0;     // in the normalised frame when `normalized`, else world units
  double raw = 0;       // world units
  double scale = 1;     // world length that maps to 1 in the normalised frame
  bool normalized = true;
};

/// Symmetric mean surface distance: 0.5 * (mean over samples of a of the
/// distance to surface b + the same from b to a). Both meshes are sampled
/// with the same seed. With `normalize`, distances are divided by the longest
/// side of the joint bounding box (a unit bounding cube).
ChamferResult chamfer(const Mesh& a, const Mesh& b, std::size_t samples = 100000, std::uint64_t seed = 0,
                      bool normalize = true);

/// Occupancy via ray-crossing parity along z on a grid^3 lattice over the
/// joint bounding box; returns |A and B| / |A or B|.
double volume_iou(const Mesh& a, const Mesh& b, int grid = 128);

/// Occupancy grid of one mesh (x fastest), exposed for tests.
std::vector<char> voxelize(const Mesh& mesh, const Eigen::AlignedBox3d& box, int grid);

inline constexpr double kPsnrCap = 99.0;

/// PSNR in dB over all channels for signals in [0, 1], capped at 99. With a
/// mask (one channel, > 0.5 selects) only selected pixels count.
double psnr(const ImageD& img, const ImageD& ref, const ImageD* mask = nullptr);

/// Mean SSIM over valid 11x11 Gaussian windows (sigma 1.5), averaged over channels.
double ssim(const ImageD& img, const ImageD& ref);

}  // namespace meshlift
