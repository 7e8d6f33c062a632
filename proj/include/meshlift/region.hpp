#pragma once

// Localising edits from multiview mask differences: coarse visual hulls,
// seed spheres for new parts and freeze sets for the prior mesh.

#include <Eigen/Geometry>

#include <vector>

#include "meshlift/render.hpp"

namespace meshlift {

using Box3 = Eigen::AlignedBox3d;

enum class RegionMode { added, removed, modified };

const char* to_string(RegionMode mode);
RegionMode region_mode_from_string(const std::string& s);

struct EditRegion {
  Rig rig;
  std::vector<ImageD> masks;  // binary, one channel, one per rig camera
  Box3 box = Box3(Eigen::Vector3d::Zero(), Eigen::Vector3d::Zero());
  RegionMode mode = RegionMode::modified;

  /// No surviving hull cell; the box is then the zero box.
  bool empty() const;
  std::size_t changed_pixels() const;
  void check() const;
};

inline constexpr int kDefaultHullGrid = 64;
inline constexpr double kDefaultMaskThreshold = 0.5;

/// Binary raster: 1 where alpha > threshold.
ImageD threshold_mask(const ImageD& alpha, double threshold = kDefaultMaskThreshold);

/// Orthographic visual hull on a grid x grid x grid lattice of cell centres
/// over [-h, h]^3. A cell survives when it projects inside the frame and
/// onto a set mask pixel in every view. Returns the tight box of the
/// surviving cells (each cell counted with its full extent), or the zero box.
Box3 carve_hull(const std::vector<ImageD>& masks, const Rig& rig, int grid = kDefaultHullGrid);

/// Hull with a witness requirement: a cell must lie inside `keep` in every
/// view and inside `witness` in at least one. Used to localise changes that
/// are hidden by the prior in some views.
Box3 carve_hull_witnessed(const std::vector<ImageD>& keep, const std::vector<ImageD>& witness, const Rig& rig,
                          int grid = kDefaultHullGrid);

EditRegion mask_diff(const MultiviewSet& prior_views, const MultiviewSet& new_views,
                     double threshold = kDefaultMaskThreshold, int grid = kDefaultHullGrid);

/// Icosphere at the box centre with radius half the largest box extent.
Mesh seed_sphere(const EditRegion& region, int level = 3);

/// Marks every vertex outside the region box grown by `dilation` as frozen
/// (and every vertex inside as free). An empty region freezes everything.
Mesh freeze_outside(const Mesh& prior, const EditRegion& region, double dilation);

}  // namespace meshlift
