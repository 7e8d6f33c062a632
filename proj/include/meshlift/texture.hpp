#pragma once

// Baking multiview colour images onto a mesh, either as vertex colours or
// into a box-projected UV atlas.

#include "meshlift/render.hpp"

namespace meshlift {

enum class BakeMode { vertex_colors, atlas };

struct BakeConfig {
  BakeMode mode = BakeMode::vertex_colors;
  int atlas_resolution = 1024;
  int seam_padding = 4;
  double min_view_cosine = 0.1;
  int threads = 1;

  void check() const;
};

/// Visibility-tested, cosine-weighted blend of the views' colours at each
/// vertex. Only pixels with alpha > 0.5 are read, and their colour is
/// un-composited from the white background. Vertices seen by no view take
/// the colour of the nearest coloured vertex (graph distance).
Mesh bake_vertex_colors(const Mesh& mesh, const MultiviewSet& views, const BakeConfig& config = {});

struct AtlasResult {
  Mesh mesh;                 // with uvs / face_uvs
  ImageD texture;            // RGB, atlas_resolution squared
  int charts = 0;
  std::vector<char> written;  // per texel: 1 baked, 2 padding, 0 empty
};

/// Faces are grouped by dominant normal axis and split into connected
/// charts, box-projected, shelf-packed and baked per texel. Throws
/// ContractError when the charts do not fit at a reasonable scale.
AtlasResult bake_atlas(const Mesh& mesh, const MultiviewSet& views, const BakeConfig& config = {});

}  // namespace meshlift
