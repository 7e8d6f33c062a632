#include "meshlift/region.hpp"

#include <algorithm>
#include <cmath>

namespace meshlift {

const char* to_string(RegionMode mode) {
  switch (mode) {
    case RegionMode::added: return "added";
    case RegionMode::removed: return "removed";
    default: return "modified";
  }
}

RegionMode region_mode_from_string(const std::string& s) {
  if (s == "added") return RegionMode::added;
  if (s == "removed") return RegionMode::removed;
  if (s == "modified") return RegionMode::modified;
  throw InputError("unknown region mode '" + s + "'");
}

bool EditRegion::empty() const { return !(box.volume() > 0); }

std::size_t EditRegion::changed_pixels() const {
  std::size_t n = 0;
  for (const auto& m : masks) n += static_cast<std::size_t>((m.data > 0.5).count());
  return n;
}

void EditRegion::check() const {
  if (masks.size() != rig.size()) throw ContractError("region needs one mask per rig camera");
  for (std::size_t i = 0; i < masks.size(); ++i) {
    const int r = rig[i].resolution;
    if (masks[i].width != r || masks[i].height != r || masks[i].channels != 1) {
      throw ContractError("region mask " + std::to_string(i) + " does not match its camera");
    }
  }
  if (!box.isEmpty() && (box.min().array() > box.max().array()).any()) throw ContractError("inverted region box");
}

ImageD threshold_mask(const ImageD& alpha, double threshold) {
  ImageD out(alpha.width, alpha.height, 1);
  for (Eigen::Index p = 0; p < alpha.pixel_count(); ++p) out.at(p) = alpha.at(p) > threshold ? 1.0 : 0.0;
  return out;
}

namespace {

void check_masks(const std::vector<ImageD>& masks, const Rig& rig) {
  rig.check();
  if (masks.size() != rig.size()) throw ContractError("need one mask per camera");
  for (std::size_t i = 0; i < masks.size(); ++i) {
    if (masks[i].width != rig[i].resolution || masks[i].height != rig[i].resolution) {
      throw ContractError("mask " + std::to_string(i) + " does not match its camera resolution");
    }
  }
}

/// Mask value at the pixel containing the projection of p; -1 when outside the frame.
int lookup(const ImageD& mask, const Projector<double>& proj, const Eigen::Vector3d& p) {
  const Eigen::Vector3d s = proj.project(p);
  const int x = static_cast<int>(std::floor(s.x()));
  const int y = static_cast<int>(std::floor(s.y()));
  if (x < 0 || y < 0 || x >= mask.width || y >= mask.height) return -1;
  return mask(x, y) > 0.5 ? 1 : 0;
}

template <typename Survives>
Box3 carve(const Rig& rig, int grid, Survives&& survives) {
  if (grid < 1) throw ContractError("hull grid must be positive");
  const double h = rig[0].half_extent;
  const double cell = 2 * h / grid;
  Box3 box;
  for (int k = 0; k < grid; ++k) {
    for (int j = 0; j < grid; ++j) {
      for (int i = 0; i < grid; ++i) {
        const Eigen::Vector3d c(-h + (i + 0.5) * cell, -h + (j + 0.5) * cell, -h + (k + 0.5) * cell);
        if (!survives(c)) continue;
        box.extend(Eigen::Vector3d(c.array() - 0.5 * cell));
        box.extend(Eigen::Vector3d(c.array() + 0.5 * cell));
      }
    }
  }
  if (box.isEmpty()) return Box3(Eigen::Vector3d::Zero(), Eigen::Vector3d::Zero());
  return box;
}

}  // namespace

Box3 carve_hull(const std::vector<ImageD>& masks, const Rig& rig, int grid) {
  check_masks(masks, rig);
  if (masks.size() < 2) throw ContractError("carve_hull needs at least two views");
  std::vector<Projector<double>> proj;
  for (const auto& c : rig.cameras) proj.emplace_back(c);
  return carve(rig, grid, [&](const Eigen::Vector3d& c) {
    for (std::size_t v = 0; v < masks.size(); ++v) {
      if (lookup(masks[v], proj[v], c) != 1) return false;
    }
    return true;
  });
}

Box3 carve_hull_witnessed(const std::vector<ImageD>& keep, const std::vector<ImageD>& witness, const Rig& rig,
                          int grid) {
  check_masks(keep, rig);
  check_masks(witness, rig);
  if (keep.size() < 2) throw ContractError("carve_hull needs at least two views");
  std::vector<Projector<double>> proj;
  for (const auto& c : rig.cameras) proj.emplace_back(c);
  return carve(rig, grid, [&](const Eigen::Vector3d& c) {
    bool seen = false;
    for (std::size_t v = 0; v < keep.size(); ++v) {
      if (lookup(keep[v], proj[v], c) != 1) return false;
      seen = seen || lookup(witness[v], proj[v], c) == 1;
    }
    return seen;
  });
}

EditRegion mask_diff(const MultiviewSet& prior_views, const MultiviewSet& new_views, double threshold, int grid) {
  prior_views.check();
  new_views.check();
  if (prior_views.size() != new_views.size()) throw ContractError("mask_diff: view counts differ");
  for (std::size_t i = 0; i < prior_views.size(); ++i) {
    const auto& a = prior_views.views[i].camera;
    const auto& b = new_views.views[i].camera;
    if (a.azimuth != b.azimuth || a.elevation != b.elevation || a.half_extent != b.half_extent ||
        a.resolution != b.resolution) {
      throw ContractError("mask_diff: camera " + std::to_string(i) + " differs between view sets");
    }
  }

  EditRegion region;
  region.rig = new_views.rig();
  std::vector<ImageD> keep;
  std::size_t added = 0, removed = 0;
  for (std::size_t i = 0; i < new_views.size(); ++i) {
    const ImageD before = threshold_mask(prior_views.views[i].alpha, threshold);
    const ImageD after = threshold_mask(new_views.views[i].alpha, threshold);
    ImageD diff(before.width, before.height, 1);
    ImageD either(before.width, before.height, 1);
    for (Eigen::Index p = 0; p < before.pixel_count(); ++p) {
      const bool b = before.at(p) > 0.5, a = after.at(p) > 0.5;
      diff.at(p) = a != b ? 1.0 : 0.0;
      either.at(p) = a || b ? 1.0 : 0.0;
      added += a && !b ? 1 : 0;
      removed += b && !a ? 1 : 0;
    }
    region.masks.push_back(std::move(diff));
    keep.push_back(std::move(either));
  }
  const double total = static_cast<double>(added + removed);
  if (total > 0 && added > 0.9 * total) {
    region.mode = RegionMode::added;
  } else if (total > 0 && removed > 0.9 * total) {
    region.mode = RegionMode::removed;
  } else {
    region.mode = RegionMode::modified;
  }
  if (total > 0 && region.masks.size() >= 2) {
    region.box = carve_hull_witnessed(keep, region.masks, region.rig, grid);
  }
  return region;
}

Mesh seed_sphere(const EditRegion& region, int level) {
  if (region.empty()) throw ContractError("seed_sphere: region is empty");
  const double radius = 0.5 * region.box.sizes().maxCoeff();
  return icosphere<double>(region.box.center(), radius, level);
}

Mesh freeze_outside(const Mesh& prior, const EditRegion& region, double dilation) {
  if (!(dilation >= 0)) throw ContractError("dilation must be non-negative");
  Mesh out = prior;
  out.frozen.resize(prior.vertex_count());
  const bool empty = region.empty();
  const Eigen::Vector3d lo = region.box.min().array() - dilation;
  const Eigen::Vector3d hi = region.box.max().array() + dilation;
  for (Eigen::Index v = 0; v < prior.vertex_count(); ++v) {
    const Eigen::Vector3d p = prior.vertex(v);
    const bool inside = !empty && (p.array() >= lo.array()).all() && (p.array() <= hi.array()).all();
    out.frozen(v) = !inside;
  }
  return out;
}

}  // namespace meshlift
