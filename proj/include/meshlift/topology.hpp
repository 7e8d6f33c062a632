#pragma once

// Local topology edits (split, collapse, flip) on an exclusively owned
// working copy of a TriangleMesh. Rejections are reported through return
// values; a rejected edit leaves the editor untouched.

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include "meshlift/mesh.hpp"

namespace meshlift {

/// Where a compacted vertex came from, in input indices: a survivor has
/// `a == b`, the midpoint of two input vertices has both endpoints, and a
/// vertex derived from newer vertices has -1 in both.
struct VertexOrigin {
  int a = -1;
  int b = -1;
};

template <typename Scalar>
class TopologyEditor {
 public:
  using V3 = Vec3<Scalar>;

  using Payload = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  /// `payload` (optional, one row per vertex) rides along with the vertices:
  /// split midpoints get the average of the endpoint rows, collapse
  /// survivors keep their own row.
  explicit TopologyEditor(const TriangleMesh<Scalar>& mesh, double area_epsilon = kDefaultAreaEpsilon,
                          const Payload* payload = nullptr)
      : area_epsilon_(area_epsilon) {
    check_indices(mesh);
    const auto nv = static_cast<std::size_t>(mesh.vertex_count());
    pos_.resize(nv);
    origin_.resize(nv);
    vertex_alive_.assign(nv, 1);
    frozen_.assign(nv, 0);
    vf_.resize(nv);
    has_colors_ = mesh.has_colors();
    if (has_colors_) colors_.resize(nv);
    if (payload) {
      if (payload->rows() != mesh.vertex_count()) throw ContractError("payload rows != vertex count");
      payload_.resize(nv);
      for (std::size_t v = 0; v < nv; ++v) payload_[v] = payload->row(static_cast<Eigen::Index>(v));
    }
    for (std::size_t v = 0; v < nv; ++v) {
      pos_[v] = mesh.vertex(static_cast<Eigen::Index>(v));
      origin_[v] = {static_cast<int>(v), static_cast<int>(v)};
      frozen_[v] = mesh.is_frozen(static_cast<Eigen::Index>(v)) ? 1 : 0;
      if (has_colors_) colors_[v] = mesh.colors.row(static_cast<Eigen::Index>(v)).transpose();
    }
    for (int f = 0; f < mesh.face_count(); ++f) {
      faces_.push_back({mesh.faces(f, 0), mesh.faces(f, 1), mesh.faces(f, 2)});
      face_alive_.push_back(1);
      for (int k = 0; k < 3; ++k) vf_[mesh.faces(f, k)].push_back(f);
    }
  }

  std::size_t vertex_slots() const { return pos_.size(); }
  std::size_t face_slots() const { return faces_.size(); }
  bool vertex_alive(int v) const { return vertex_alive_[v] != 0; }
  bool face_alive(int f) const { return face_alive_[f] != 0; }
  bool frozen(int v) const { return frozen_[v] != 0; }
  const V3& position(int v) const { return pos_[v]; }
  const std::array<int, 3>& face(int f) const { return faces_[f]; }
  const std::vector<int>& incident_faces(int v) const { return vf_[v]; }

  Scalar length(int a, int b) const { return (pos_[a] - pos_[b]).norm(); }

  V3 normal_raw(int f) const {
    const auto& t = faces_[f];
    return (pos_[t[1]] - pos_[t[0]]).cross(pos_[t[2]] - pos_[t[0]]);
  }
  Scalar area(int f) const { return Scalar(0.5) * normal_raw(f).norm(); }

  /// Alive faces containing both `a` and `b`.
  std::vector<int> edge_faces(int a, int b) const {
    std::vector<int> out;
    for (int f : vf_[a]) {
      const auto& t = faces_[f];
      if (t[0] == b || t[1] == b || t[2] == b) out.push_back(f);
    }
    return out;
  }
  bool has_edge(int a, int b) const { return !edge_faces(a, b).empty(); }

  std::vector<int> neighbors(int v) const {
    std::vector<int> out;
    for (int f : vf_[v]) {
      for (int w : faces_[f]) {
        if (w != v) out.push_back(w);
      }
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }
  int valence(int v) const { return static_cast<int>(neighbors(v).size()); }

  bool is_boundary_vertex(int v) const {
    for (int w : neighbors(v)) {
      if (edge_faces(v, w).size() == 1) return true;
    }
    return false;
  }

  /// Unique undirected edges over alive faces, sorted.
  std::vector<Edge> edges() const {
    std::vector<Edge> out;
    for (std::size_t f = 0; f < faces_.size(); ++f) {
      if (!face_alive_[f]) continue;
      const auto& t = faces_[f];
      for (int k = 0; k < 3; ++k) out.emplace_back(t[k], t[(k + 1) % 3]);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

  /// Insert the midpoint of edge (a, b) and retriangulate its faces.
  /// Returns the new vertex, or nullopt when the edge is missing,
  /// non-manifold, or has both endpoints frozen.
  std::optional<int> split(int a, int b) {
    const auto incident = edge_faces(a, b);
    if (incident.empty() || incident.size() > 2) return std::nullopt;
    if (frozen_[a] && frozen_[b]) return std::nullopt;

    const int m = static_cast<int>(pos_.size());
    pos_.push_back(Scalar(0.5) * (pos_[a] + pos_[b]));
    if (has_colors_) colors_.push_back(Scalar(0.5) * (colors_[a] + colors_[b]));
    const bool from_inputs = origin_[a].a == origin_[a].b && origin_[b].a == origin_[b].b &&
                             origin_[a].a >= 0 && origin_[b].a >= 0;
    origin_.push_back(from_inputs ? VertexOrigin{origin_[a].a, origin_[b].a} : VertexOrigin{});
    if (!payload_.empty()) payload_.push_back(Scalar(0.5) * (payload_[a] + payload_[b]));
    vertex_alive_.push_back(1);
    frozen_.push_back(0);
    vf_.emplace_back();

    for (int f : incident) {
      auto t = faces_[f];
      // rotate so that the edge occupies slots 0 -> 1 in face order
      while (!((t[0] == a && t[1] == b) || (t[0] == b && t[1] == a))) {
        t = {t[1], t[2], t[0]};
      }
      const int x = t[0], y = t[1], w = t[2];
      faces_[f] = {x, m, w};
      const int g = static_cast<int>(faces_.size());
      faces_.push_back({m, y, w});
      face_alive_.push_back(1);
      erase_value(vf_[y], f);
      vf_[y].push_back(g);
      vf_[w].push_back(g);
      vf_[m].push_back(f);
      vf_[m].push_back(g);
    }
    return m;
  }

  /// Merge edge (a, b). The survivor is the frozen endpoint if any, else `a`;
  /// it moves to the midpoint unless frozen. Rejected when the link condition
  /// fails, both endpoints are frozen, a surrounding face would flip or
  /// degenerate, or a resulting edge would exceed `max_edge_length`.
  bool collapse(int a, int b, Scalar max_edge_length = std::numeric_limits<Scalar>::infinity()) {
    const auto incident = edge_faces(a, b);
    if (incident.empty() || incident.size() > 2) return false;
    if (frozen_[a] && frozen_[b]) return false;
    int keep = a, drop = b;
    if (frozen_[b]) std::swap(keep, drop);
    const V3 target = frozen_[keep] ? pos_[keep] : V3(Scalar(0.5) * (pos_[a] + pos_[b]));

    // link condition: common neighbours are exactly the opposite vertices
    std::vector<int> opposite;
    for (int f : incident) {
      for (int w : faces_[f]) {
        if (w != a && w != b) opposite.push_back(w);
      }
    }
    std::sort(opposite.begin(), opposite.end());
    const auto na = neighbors(a);
    const auto nb = neighbors(b);
    std::vector<int> common;
    std::set_intersection(na.begin(), na.end(), nb.begin(), nb.end(), std::back_inserter(common));
    if (common != opposite) return false;
    // no edge of the common link (rules out tetrahedra and pinched fans)
    for (std::size_t i = 0; i < common.size(); ++i) {
      for (std::size_t j = i + 1; j < common.size(); ++j) {
        if (has_face(a, common[i], common[j]) && has_face(b, common[i], common[j])) return false;
      }
    }
    if (incident.size() == 2 && is_boundary_vertex(a) && is_boundary_vertex(b)) return false;
    const bool closed_edge = incident.size() == 2;
    const int merged_valence = static_cast<int>(na.size() + nb.size()) - 2 - static_cast<int>(common.size());
    if (merged_valence < 3) return false;
    if (closed_edge) {
      for (int w : common) {
        if (valence(w) <= 3) return false;
      }
    }

    // geometric checks on faces that survive and change
    for (int v : {a, b}) {
      for (int f : vf_[v]) {
        if (std::find(incident.begin(), incident.end(), f) != incident.end()) continue;
        auto t = faces_[f];
        const V3 before = normal_raw(f);
        for (int& w : t) {
          if (w == a || w == b) w = -1;
        }
        std::array<V3, 3> p;
        for (int k = 0; k < 3; ++k) p[k] = t[k] < 0 ? target : pos_[t[k]];
        const V3 after = (p[1] - p[0]).cross(p[2] - p[0]);
        if (!(Scalar(0.5) * after.norm() >= Scalar(area_epsilon_))) return false;
        if (after.dot(before) <= Scalar(0.2) * after.norm() * before.norm()) return false;
        for (int k = 0; k < 3; ++k) {
          if ((p[k] - p[(k + 1) % 3]).norm() > max_edge_length) return false;
        }
      }
    }

    for (int f : incident) {
      face_alive_[f] = 0;
      for (int w : faces_[f]) erase_value(vf_[w], f);
    }
    for (int f : vf_[drop]) {
      for (int& w : faces_[f]) {
        if (w == drop) w = keep;
      }
      vf_[keep].push_back(f);
    }
    vf_[drop].clear();
    vertex_alive_[drop] = 0;
    pos_[keep] = target;
    if (has_colors_ && !frozen_[keep]) colors_[keep] = Scalar(0.5) * (colors_[a] + colors_[b]);
    return true;
  }

  /// Replace the diagonal of the two faces sharing (a, b) with the other one.
  /// Rejected on boundary or non-manifold edges, when the new edge already
  /// exists, when any of the four vertices is frozen, or when the result
  /// would fold or degenerate.
  bool flip(int a, int b) {
    const auto incident = edge_faces(a, b);
    if (incident.size() != 2) return false;
    auto t1 = rotated_to(faces_[incident[0]], a);
    auto t2 = rotated_to(faces_[incident[1]], b);
    // want t1 = (a, b, c) and t2 = (b, a, d)
    if (t1[1] != b) {
      std::swap(t1, t2);
      t1 = rotated_to(t1, a);
      t2 = rotated_to(t2, b);
    }
    if (t1[1] != b || t2[1] != a) return false;  // inconsistent orientation
    const int c = t1[2], d = t2[2];
    if (c == d || has_edge(c, d)) return false;
    if (frozen_[a] || frozen_[b] || frozen_[c] || frozen_[d]) return false;
    // An interior vertex needs three neighbours left, a boundary one two.
    if (valence(a) <= (is_boundary_vertex(a) ? 2 : 3) || valence(b) <= (is_boundary_vertex(b) ? 2 : 3)) return false;

    const std::array<int, 3> n1 = {a, d, c};
    const std::array<int, 3> n2 = {d, b, c};
    const V3 old1 = normal_raw(incident[0]);
    const V3 old2 = normal_raw(incident[1]);
    const V3 new1 = raw(n1), new2 = raw(n2);
    if (!(Scalar(0.5) * new1.norm() >= Scalar(area_epsilon_)) ||
        !(Scalar(0.5) * new2.norm() >= Scalar(area_epsilon_))) {
      return false;
    }
    const V3 old_sum = old1 + old2;
    if (new1.dot(new2) <= Scalar(0)) return false;
    if (new1.dot(old_sum) <= Scalar(0) || new2.dot(old_sum) <= Scalar(0)) return false;

    const int f1 = incident[0], f2 = incident[1];
    for (int f : {f1, f2}) {
      for (int w : faces_[f]) erase_value(vf_[w], f);
    }
    faces_[f1] = n1;
    faces_[f2] = n2;
    for (int f : {f1, f2}) {
      for (int w : faces_[f]) vf_[w].push_back(f);
    }
    return true;
  }

  /// Dense mesh from alive elements. Alive vertices keep their relative order;
  /// `origins` (optional) receives the provenance of each output vertex in
  /// terms of the editor's input indices.
  TriangleMesh<Scalar> compact(std::vector<VertexOrigin>* origins = nullptr,
                               Payload* payload = nullptr) const {
    std::vector<int> remap(pos_.size(), -1);
    int count = 0;
    for (std::size_t v = 0; v < pos_.size(); ++v) {
      if (vertex_alive_[v]) remap[v] = count++;
    }
    TriangleMesh<Scalar> out;
    out.positions.resize(count, 3);
    if (has_colors_) out.colors.resize(count, 3);
    bool any_frozen = false;
    for (char f : frozen_) any_frozen = any_frozen || f;
    if (any_frozen) out.frozen.resize(count);
    if (origins) origins->assign(static_cast<std::size_t>(count), {});
    if (payload) payload->resize(count, payload_.empty() ? 0 : payload_.front().size());
    for (std::size_t v = 0; v < pos_.size(); ++v) {
      if (remap[v] < 0) continue;
      out.positions.row(remap[v]) = pos_[v].transpose();
      if (has_colors_) out.colors.row(remap[v]) = colors_[v].transpose();
      if (any_frozen) out.frozen(remap[v]) = frozen_[v] != 0;
      if (origins) (*origins)[remap[v]] = origin_[v];
      if (payload && !payload_.empty()) payload->row(remap[v]) = payload_[v];
    }
    int alive_faces = 0;
    for (char a : face_alive_) alive_faces += a ? 1 : 0;
    out.faces.resize(alive_faces, 3);
    int row = 0;
    for (std::size_t f = 0; f < faces_.size(); ++f) {
      if (!face_alive_[f]) continue;
      const auto& t = faces_[f];
      out.faces.row(row++) << remap[t[0]], remap[t[1]], remap[t[2]];
    }
    return out;
  }

 private:
  static void erase_value(std::vector<int>& v, int x) {
    v.erase(std::remove(v.begin(), v.end(), x), v.end());
  }
  static std::array<int, 3> rotated_to(std::array<int, 3> t, int first) {
    for (int i = 0; i < 3 && t[0] != first; ++i) t = {t[1], t[2], t[0]};
    return t;
  }
  bool has_face(int x, int y, int z) const {
    for (int f : vf_[x]) {
      const auto& t = faces_[f];
      const bool hy = t[0] == y || t[1] == y || t[2] == y;
      const bool hz = t[0] == z || t[1] == z || t[2] == z;
      if (hy && hz) return true;
    }
    return false;
  }
  V3 raw(const std::array<int, 3>& t) const {
    return (pos_[t[1]] - pos_[t[0]]).cross(pos_[t[2]] - pos_[t[0]]);
  }

  double area_epsilon_;
  bool has_colors_ = false;
  std::vector<V3> pos_;
  std::vector<V3> colors_;
  std::vector<VertexOrigin> origin_;
  std::vector<Eigen::Matrix<Scalar, 1, Eigen::Dynamic>> payload_;
  std::vector<char> vertex_alive_;
  std::vector<char> frozen_;
  std::vector<std::array<int, 3>> faces_;
  std::vector<char> face_alive_;
  std::vector<std::vector<int>> vf_;
};

/// Split `edge`; throws ContractError when the edge does not exist.
template <typename Scalar>
TriangleMesh<Scalar> edge_split(const TriangleMesh<Scalar>& mesh, Edge edge) {
  TopologyEditor<Scalar> editor(mesh);
  if (!editor.has_edge(edge.v0, edge.v1)) throw ContractError("edge_split: edge not in mesh");
  if (!editor.split(edge.v0, edge.v1)) throw ContractError("edge_split: edge cannot be split");
  return editor.compact();
}

/// Collapse `edge`; nullopt means the collapse was rejected.
template <typename Scalar>
std::optional<TriangleMesh<Scalar>> edge_collapse(const TriangleMesh<Scalar>& mesh, Edge edge) {
  TopologyEditor<Scalar> editor(mesh);
  if (!editor.has_edge(edge.v0, edge.v1)) throw ContractError("edge_collapse: edge not in mesh");
  if (!editor.collapse(edge.v0, edge.v1)) return std::nullopt;
  return editor.compact();
}

/// Flip `edge`; nullopt means the flip was rejected.
template <typename Scalar>
std::optional<TriangleMesh<Scalar>> edge_flip(const TriangleMesh<Scalar>& mesh, Edge edge) {
  TopologyEditor<Scalar> editor(mesh);
  if (!editor.has_edge(edge.v0, edge.v1)) throw ContractError("edge_flip: edge not in mesh");
  if (!editor.flip(edge.v0, edge.v1)) return std::nullopt;
  return editor.compact();
}

}  // namespace meshlift
