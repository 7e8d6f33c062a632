#pragma once

// One pass of isotropic remeshing toward a target edge length: split long
// edges, collapse short ones, flip toward valence 6, then clean up any
// sub-epsilon faces. Frozen vertices are never moved or removed.

#include <vector>

#include "meshlift/mesh.hpp"
#include "meshlift/topology.hpp"

namespace meshlift {

struct RemeshFactors {
  double split = 4.0 / 3.0;
  double collapse = 4.0 / 5.0;
  double area_epsilon = kDefaultAreaEpsilon;

  void check() const;
};

struct RemeshStats {
  int splits = 0;
  int collapses = 0;
  int flips = 0;
};

using Payload = TopologyEditor<double>::Payload;

struct RemeshResult {
  Mesh mesh;
  RemeshStats stats;
  std::vector<VertexOrigin> origins;
  Payload payload;  // carried rows, empty when no payload was given
};

/// `payload` (one row per vertex) is transported through the edits: split
/// midpoints average their endpoints, collapse survivors keep their row.
RemeshResult remesh_pass(const Mesh& mesh, double target_edge_length, const RemeshFactors& factors = {},
                         const Payload* payload = nullptr);

}  // namespace meshlift
