#pragma once

// Indexed triangle mesh value type and the read-only queries built on it:
// adjacency, per-face/per-vertex normals, the uniform Laplacian, icosphere
// construction and structural validation.

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "meshlift/errors.hpp"

namespace meshlift {

template <typename Scalar>
using Vec3 = Eigen::Matrix<Scalar, 3, 1>;
template <typename Scalar>
using Vec2 = Eigen::Matrix<Scalar, 2, 1>;
template <typename Scalar>
using RowPoints = Eigen::Matrix<Scalar, Eigen::Dynamic, 3, Eigen::RowMajor>;
using FaceMatrix = Eigen::Matrix<int, Eigen::Dynamic, 3, Eigen::RowMajor>;

/// Triangle surface. Faces are counter-clockwise when seen from outside.
///
/// `colors`, `frozen` and the UV block are optional: each is either empty or
/// sized to match the element it annotates (vertices, vertices, faces).
template <typename Scalar>
struct TriangleMesh {
  using scalar_type = Scalar;

  RowPoints<Scalar> positions;
  FaceMatrix faces;
  RowPoints<Scalar> colors;
  Eigen::Array<bool, Eigen::Dynamic, 1> frozen;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 2, Eigen::RowMajor> uvs;
  FaceMatrix face_uvs;

  Eigen::Index vertex_count() const { return positions.rows(); }
  Eigen::Index face_count() const { return faces.rows(); }
  bool empty() const { return faces.rows() == 0; }
  bool has_colors() const { return colors.rows() == positions.rows() && colors.rows() > 0; }
  bool has_uvs() const { return face_uvs.rows() == faces.rows() && faces.rows() > 0 && uvs.rows() > 0; }
  bool is_frozen(Eigen::Index v) const { return frozen.size() == positions.rows() && frozen(v); }

  Vec3<Scalar> vertex(Eigen::Index v) const { return positions.row(v).transpose(); }

  template <typename Other>
  TriangleMesh<Other> cast() const {
    TriangleMesh<Other> out;
    out.positions = positions.template cast<Other>();
    out.faces = faces;
    out.colors = colors.template cast<Other>();
    out.frozen = frozen;
    out.uvs = uvs.template cast<Other>();
    out.face_uvs = face_uvs;
    return out;
  }
};

using Mesh = TriangleMesh<double>;

/// Undirected edge key with `v0 < v1`.
struct Edge {
  int v0 = 0;
  int v1 = 0;

  Edge() = default;
  Edge(int a, int b) : v0(std::min(a, b)), v1(std::max(a, b)) {}
  friend bool operator==(const Edge&, const Edge&) = default;
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

inline std::uint64_t edge_key(int a, int b) {
  const auto lo = static_cast<std::uint32_t>(std::min(a, b));
  const auto hi = static_cast<std::uint32_t>(std::max(a, b));
  return (static_cast<std::uint64_t>(lo) << 32) | hi;
}

struct AdjacencyInfo {
  std::vector<std::vector<int>> vertex_faces;
  std::vector<std::vector<int>> vertex_ring;  // sorted, unique
  std::vector<Edge> edges;                    // sorted
  std::vector<std::vector<int>> edge_faces;   // parallel to `edges`
  std::unordered_map<std::uint64_t, int> edge_index;

  int find_edge(int a, int b) const {
    auto it = edge_index.find(edge_key(a, b));
    return it == edge_index.end() ? -1 : it->second;
  }
};

template <typename Scalar>
void check_indices(const TriangleMesh<Scalar>& mesh) {
  const auto n = mesh.vertex_count();
  for (Eigen::Index f = 0; f < mesh.face_count(); ++f) {
    for (int k = 0; k < 3; ++k) {
      const int v = mesh.faces(f, k);
      if (v < 0 || v >= n) {
        throw StructuralError("face " + std::to_string(f) + " references vertex " +
                              std::to_string(v) + " but the mesh has " + std::to_string(n) +
                              " vertices");
      }
    }
  }
}

template <typename Scalar>
AdjacencyInfo build_adjacency(const TriangleMesh<Scalar>& mesh) {
  check_indices(mesh);
  AdjacencyInfo adj;
  const auto nv = static_cast<std::size_t>(mesh.vertex_count());
  adj.vertex_faces.resize(nv);
  adj.vertex_ring.resize(nv);

  std::vector<std::pair<Edge, int>> incidences;
  incidences.reserve(static_cast<std::size_t>(mesh.face_count()) * 3);
  for (int f = 0; f < mesh.face_count(); ++f) {
    for (int k = 0; k < 3; ++k) {
      const int a = mesh.faces(f, k);
      const int b = mesh.faces(f, (k + 1) % 3);
      adj.vertex_faces[a].push_back(f);
      if (a == b) continue;
      incidences.emplace_back(Edge(a, b), f);
      adj.vertex_ring[a].push_back(b);
      adj.vertex_ring[b].push_back(a);
    }
  }
  for (auto& ring : adj.vertex_ring) {
    std::sort(ring.begin(), ring.end());
    ring.erase(std::unique(ring.begin(), ring.end()), ring.end());
  }
  for (auto& faces : adj.vertex_faces) {
    faces.erase(std::unique(faces.begin(), faces.end()), faces.end());
  }
  std::sort(incidences.begin(), incidences.end());
  for (const auto& [edge, face] : incidences) {
    if (adj.edges.empty() || adj.edges.back() != edge) {
      adj.edge_index.emplace(edge_key(edge.v0, edge.v1), static_cast<int>(adj.edges.size()));
      adj.edges.push_back(edge);
      adj.edge_faces.emplace_back();
    }
    adj.edge_faces.back().push_back(face);
  }
  return adj;
}

/// Unnormalized face normal; its length is twice the face area.
template <typename Scalar>
Vec3<Scalar> face_normal_raw(const TriangleMesh<Scalar>& mesh, Eigen::Index f) {
  const Vec3<Scalar> p0 = mesh.vertex(mesh.faces(f, 0));
  const Vec3<Scalar> p1 = mesh.vertex(mesh.faces(f, 1));
  const Vec3<Scalar> p2 = mesh.vertex(mesh.faces(f, 2));
  return (p1 - p0).cross(p2 - p0);
}

template <typename Scalar>
Scalar face_area(const TriangleMesh<Scalar>& mesh, Eigen::Index f) {
  return Scalar(0.5) * face_normal_raw(mesh, f).norm();
}

/// Area-weighted vertex normals (unit length; zero for isolated vertices).
template <typename Scalar>
RowPoints<Scalar> vertex_normals(const TriangleMesh<Scalar>& mesh) {
  RowPoints<Scalar> sums = RowPoints<Scalar>::Zero(mesh.vertex_count(), 3);
  for (Eigen::Index f = 0; f < mesh.face_count(); ++f) {
    const Vec3<Scalar> n = face_normal_raw(mesh, f);
    for (int k = 0; k < 3; ++k) sums.row(mesh.faces(f, k)) += n.transpose();
  }
  for (Eigen::Index v = 0; v < sums.rows(); ++v) {
    const Scalar len = sums.row(v).norm();
    if (len > Scalar(0)) sums.row(v) /= len;
  }
  return sums;
}

/// Umbrella Laplacian: mean of the one-ring minus the vertex itself.
template <typename Scalar>
RowPoints<Scalar> uniform_laplacian(const TriangleMesh<Scalar>& mesh, const AdjacencyInfo& adj) {
  RowPoints<Scalar> out = RowPoints<Scalar>::Zero(mesh.vertex_count(), 3);
  for (Eigen::Index v = 0; v < mesh.vertex_count(); ++v) {
    const auto& ring = adj.vertex_ring[static_cast<std::size_t>(v)];
    if (ring.empty()) continue;
    Vec3<Scalar> mean = Vec3<Scalar>::Zero();
    for (int u : ring) mean += mesh.vertex(u);
    mean /= static_cast<Scalar>(ring.size());
    out.row(v) = (mean - mesh.vertex(v)).transpose();
  }
  return out;
}

/// Subdivided icosahedron projected onto a sphere. `level` 0 is the icosahedron.
template <typename Scalar>
TriangleMesh<Scalar> icosphere(const Vec3<Scalar>& center, Scalar radius, int level) {
  if (!(radius > Scalar(0)) || level < 0 || level > 7) {
    throw ContractError("icosphere needs radius > 0 and 0 <= level <= 7");
  }
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Eigen::Vector3d> verts = {
      {-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
      {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
  std::vector<std::array<int, 3>> faces = {
      {0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
      {11, 10, 2}, {10, 7, 6}, {7, 1, 8},  {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
      {3, 8, 9},  {4, 9, 5},  {2, 4, 11},  {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
  for (auto& v : verts) v.normalize();

  for (int l = 0; l < level; ++l) {
    std::map<std::uint64_t, int> midpoints;
    auto midpoint = [&](int a, int b) {
      const auto key = edge_key(a, b);
      if (auto it = midpoints.find(key); it != midpoints.end()) return it->second;
      verts.push_back((verts[a] + verts[b]).normalized());
      const int id = static_cast<int>(verts.size()) - 1;
      midpoints.emplace(key, id);
      return id;
    };
    std::vector<std::array<int, 3>> next;
    next.reserve(faces.size() * 4);
    for (const auto& f : faces) {
      const int ab = midpoint(f[0], f[1]);
      const int bc = midpoint(f[1], f[2]);
      const int ca = midpoint(f[2], f[0]);
      next.push_back({f[0], ab, ca});
      next.push_back({f[1], bc, ab});
      next.push_back({f[2], ca, bc});
      next.push_back({ab, bc, ca});
    }
    faces = std::move(next);
  }

  TriangleMesh<Scalar> mesh;
  mesh.positions.resize(static_cast<Eigen::Index>(verts.size()), 3);
  for (std::size_t i = 0; i < verts.size(); ++i) {
    mesh.positions.row(static_cast<Eigen::Index>(i)) =
        (center + radius * verts[i].template cast<Scalar>()).transpose();
  }
  mesh.faces.resize(static_cast<Eigen::Index>(faces.size()), 3);
  for (std::size_t i = 0; i < faces.size(); ++i) {
    mesh.faces.row(static_cast<Eigen::Index>(i)) << faces[i][0], faces[i][1], faces[i][2];
  }
  return mesh;
}

/// Concatenate two meshes into one with two (or more) shells. Optional
/// attributes survive when either side carries them; missing colors are
/// filled white and missing frozen flags are false.
template <typename Scalar>
TriangleMesh<Scalar> append(const TriangleMesh<Scalar>& a, const TriangleMesh<Scalar>& b) {
  TriangleMesh<Scalar> out;
  const auto na = a.vertex_count();
  const auto nb = b.vertex_count();
  out.positions.resize(na + nb, 3);
  out.positions << a.positions, b.positions;
  out.faces.resize(a.face_count() + b.face_count(), 3);
  out.faces << a.faces, (b.faces.array() + static_cast<int>(na)).matrix();
  if (a.has_colors() || b.has_colors()) {
    out.colors = RowPoints<Scalar>::Ones(na + nb, 3);
    if (a.has_colors()) out.colors.topRows(na) = a.colors;
    if (b.has_colors()) out.colors.bottomRows(nb) = b.colors;
  }
  if (a.frozen.size() == na || b.frozen.size() == nb) {
    out.frozen = Eigen::Array<bool, Eigen::Dynamic, 1>::Constant(na + nb, false);
    if (a.frozen.size() == na) out.frozen.head(na) = a.frozen;
    if (b.frozen.size() == nb) out.frozen.tail(nb) = b.frozen;
  }
  return out;
}

struct ValidationReport {
  std::vector<int> out_of_range_faces;
  std::vector<int> repeated_index_faces;
  std::vector<int> degenerate_faces;
  std::vector<int> non_finite_vertices;
  std::size_t non_manifold_edges = 0;
  std::size_t boundary_edges = 0;
  std::vector<int> component_euler;  // Euler characteristic per connected component

  bool indices_ok() const { return out_of_range_faces.empty() && repeated_index_faces.empty(); }
  bool edge_manifold() const { return non_manifold_edges == 0; }
  bool watertight() const { return edge_manifold() && boundary_edges == 0; }
  /// Everything an engine-produced remeshing pass must guarantee.
  bool ok() const {
    return indices_ok() && edge_manifold() && degenerate_faces.empty() &&
           non_finite_vertices.empty();
  }
  std::string summary() const {
    return "out_of_range=" + std::to_string(out_of_range_faces.size()) +
           " repeated=" + std::to_string(repeated_index_faces.size()) +
           " degenerate=" + std::to_string(degenerate_faces.size()) +
           " non_finite=" + std::to_string(non_finite_vertices.size()) +
           " non_manifold_edges=" + std::to_string(non_manifold_edges) +
           " boundary_edges=" + std::to_string(boundary_edges) +
           " components=" + std::to_string(component_euler.size());
  }
};

inline constexpr double kDefaultAreaEpsilon = 1e-12;

template <typename Scalar>
ValidationReport validate(const TriangleMesh<Scalar>& mesh, double area_epsilon = kDefaultAreaEpsilon) {
  ValidationReport report;
  const auto nv = mesh.vertex_count();
  for (Eigen::Index v = 0; v < nv; ++v) {
    if (!mesh.positions.row(v).allFinite()) report.non_finite_vertices.push_back(static_cast<int>(v));
  }

  std::vector<int> usable;
  for (int f = 0; f < mesh.face_count(); ++f) {
    const int a = mesh.faces(f, 0), b = mesh.faces(f, 1), c = mesh.faces(f, 2);
    if (a < 0 || b < 0 || c < 0 || a >= nv || b >= nv || c >= nv) {
      report.out_of_range_faces.push_back(f);
      continue;
    }
    if (a == b || b == c || a == c) {
      report.repeated_index_faces.push_back(f);
      continue;
    }
    if (!(static_cast<double>(face_area(mesh, f)) >= area_epsilon)) report.degenerate_faces.push_back(f);
    usable.push_back(f);
  }

  std::map<Edge, int> edge_count;
  std::vector<int> parent(static_cast<std::size_t>(nv));
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (int f : usable) {
    for (int k = 0; k < 3; ++k) {
      const int a = mesh.faces(f, k), b = mesh.faces(f, (k + 1) % 3);
      ++edge_count[Edge(a, b)];
      parent[find(a)] = find(b);
    }
  }
  for (const auto& [edge, count] : edge_count) {
    if (count > 2) ++report.non_manifold_edges;
    if (count == 1) ++report.boundary_edges;
  }

  // Euler characteristic per component: V - E + F over the referenced vertices.
  std::map<int, std::array<long, 3>> tallies;
  std::vector<char> seen(static_cast<std::size_t>(nv), 0);
  for (int f : usable) {
    const int root = find(mesh.faces(f, 0));
    ++tallies[root][2];
    for (int k = 0; k < 3; ++k) {
      const int v = mesh.faces(f, k);
      if (!seen[v]) {
        seen[v] = 1;
        ++tallies[root][0];
      }
    }
  }
  for (const auto& [edge, count] : edge_count) ++tallies[find(edge.v0)][1];
  for (const auto& [root, t] : tallies) {
    report.component_euler.push_back(static_cast<int>(t[0] - t[1] + t[2]));
  }
  return report;
}

/// Connected components over faces; returns a component id per vertex
/// (-1 for vertices referenced by no face) and the component count.
template <typename Scalar>
std::pair<std::vector<int>, int> connected_components(const TriangleMesh<Scalar>& mesh) {
  const auto nv = static_cast<std::size_t>(mesh.vertex_count());
  std::vector<int> parent(nv);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  std::vector<char> used(nv, 0);
  for (Eigen::Index f = 0; f < mesh.face_count(); ++f) {
    for (int k = 0; k < 3; ++k) {
      used[mesh.faces(f, k)] = 1;
      parent[find(mesh.faces(f, k))] = find(mesh.faces(f, (k + 1) % 3));
    }
  }
  std::vector<int> label(nv, -1);
  std::unordered_map<int, int> ids;
  for (std::size_t v = 0; v < nv; ++v) {
    if (!used[v]) continue;
    const int root = find(static_cast<int>(v));
    auto [it, inserted] = ids.emplace(root, static_cast<int>(ids.size()));
    label[v] = it->second;
  }
  return {label, static_cast<int>(ids.size())};
}

template <typename Scalar>
Eigen::AlignedBox<Scalar, 3> bounding_box(const TriangleMesh<Scalar>& mesh) {
  Eigen::AlignedBox<Scalar, 3> box;
  for (Eigen::Index v = 0; v < mesh.vertex_count(); ++v) box.extend(mesh.vertex(v));
  return box;
}

template <typename Scalar>
Scalar mean_edge_length(const TriangleMesh<Scalar>& mesh, const AdjacencyInfo& adj) {
  if (adj.edges.empty()) return Scalar(0);
  Scalar total = 0;
  for (const auto& e : adj.edges) total += (mesh.vertex(e.v0) - mesh.vertex(e.v1)).norm();
  return total / static_cast<Scalar>(adj.edges.size());
}

/// Closed, outward-oriented axis-aligned box split into 12 triangles.
template <typename Scalar>
TriangleMesh<Scalar> box_mesh(const Vec3<Scalar>& lo, const Vec3<Scalar>& hi) {
  TriangleMesh<Scalar> mesh;
  mesh.positions.resize(8, 3);
  for (int i = 0; i < 8; ++i) {
    mesh.positions.row(i) << ((i & 1) ? hi.x() : lo.x()), ((i & 2) ? hi.y() : lo.y()),
        ((i & 4) ? hi.z() : lo.z());
  }
  mesh.faces.resize(12, 3);
  mesh.faces << 0, 2, 3, 0, 3, 1,  // -z
      4, 5, 7, 4, 7, 6,             // +z
      0, 1, 5, 0, 5, 4,             // -y
      2, 6, 7, 2, 7, 3,             // +y
      0, 4, 6, 0, 6, 2,             // -x
      1, 3, 7, 1, 7, 5;             // +x
  return mesh;
}

}  // namespace meshlift
