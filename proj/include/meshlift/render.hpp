#pragma once

// Forward rasterizer and the differentiable reconstruction loss.
//
// Rendering is single-sided: only faces whose outward normal points toward
// the camera are drawn. Pixels are point-sampled at their centres with a
// depth test (ties go to the lower face index). Along visible contour edges
// (edges with exactly one camera-facing face) every raster is blended over a
// band one pixel wide: a pixel at signed distance d from the contour takes
// coverage 0.5 + d for the near surface and the remainder from whatever lies
// behind it (another surface or the background). The blend makes alpha,
// normals and colours continuous in the vertex positions, which is what the
// silhouette gradient differentiates.

#include <optional>
#include <vector>

#include "meshlift/camera.hpp"
#include "meshlift/image.hpp"
#include "meshlift/mesh.hpp"

namespace meshlift {

using Camera = OrthoCamera<double>;
using Rig = CameraRig<double>;

/// One view: colour composited over white, world-space normals (zero on
/// background, full precision), coverage alpha and optional hard depth
/// (+inf on background).
struct ViewRecord {
  Camera camera;
  ImageD color;
  ImageD normal;
  ImageD alpha;
  ImageD depth;

  bool has_depth() const { return !depth.empty(); }
  void check() const;
};

struct MultiviewSet {
  std::vector<ViewRecord> views;

  std::size_t size() const { return views.size(); }
  bool empty() const { return views.empty(); }
  Rig rig() const;
  /// At least one view; every raster matches its camera; cameras share
  /// resolution and extent.
  void check() const;
};

/// `crease` averages, per face corner, only the incident faces whose normals
/// lie within `crease_degrees` of the face's own; on meshes without sharp
/// edges it equals `vertex` bit for bit.
enum class NormalSource { face, vertex, crease };

struct RenderOptions {
  NormalSource normals = NormalSource::vertex;
  double crease_degrees = 60.0;
  /// Sampled through the mesh UVs when both are present.
  const ImageD* texture = nullptr;
  bool with_depth = true;
};

struct RenderOutput {
  ViewRecord view;
  std::vector<int> face_id;  // hard visible face per pixel, -1 on background
};

RenderOutput rasterize_full(const Mesh& mesh, const Camera& camera, const RenderOptions& options = {});

inline ViewRecord rasterize(const Mesh& mesh, const Camera& camera, const RenderOptions& options = {}) {
  return rasterize_full(mesh, camera, options).view;
}

MultiviewSet render_conditions(const Mesh& mesh, const Rig& rig, const RenderOptions& options = {},
                               int threads = 1);

struct LossWeights {
  double w_normal = 1.0;
  double w_alpha = 1.0;
  double lambda_smooth = 0.02;

  void check() const;
};

struct LossResult {
  double loss = 0;
  double normal_term = 0;  // weighted
  double alpha_term = 0;   // weighted
  double smooth_term = 0;  // weighted
  RowPoints<double> grad;  // d loss / d positions; zero rows for frozen vertices
};

/// Loss = w_n * mean |premultiplied normal difference|^2
///      + w_a * mean (alpha difference)^2
///      + lambda * sum_v |uniform Laplacian(v)|^2,
/// means taken over all pixels of all views. Each target view is rendered
/// with its own camera. With `want_gradient` false only the value is computed.
LossResult loss_and_gradients(const Mesh& mesh, const MultiviewSet& targets, const LossWeights& weights,
                              int threads = 1, bool want_gradient = true);

/// Sum of squared uniform-Laplacian norms and its gradient.
double laplacian_energy(const Mesh& mesh, const AdjacencyInfo& adj, RowPoints<double>* grad);

/// Box-filter every raster of `views` down to `resolution` (which must
/// divide the current resolution). Normals are averaged premultiplied.
MultiviewSet downsample(const MultiviewSet& views, int resolution);

}  // namespace meshlift
