#include "meshlift/remesh.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

namespace meshlift {

void RemeshFactors::check() const {
  if (!(split > 1.0 && collapse > 0.0 && collapse < 1.0)) {
    throw ContractError("remesh factors must satisfy split > 1 > collapse > 0");
  }
  if (!(area_epsilon >= 0)) throw ContractError("area epsilon must be non-negative");
}

namespace {

using Editor = TopologyEditor<double>;

constexpr int kMaxSplitRounds = 8;
constexpr int kFlipRounds = 2;
constexpr int kCleanupRounds = 4;

std::vector<std::pair<double, Edge>> edges_by_length(const Editor& ed) {
  std::vector<std::pair<double, Edge>> out;
  for (const Edge& e : ed.edges()) out.emplace_back(ed.length(e.v0, e.v1), e);
  return out;
}

int split_long_edges(Editor& ed, double threshold) {
  int splits = 0;
  for (int round = 0; round < kMaxSplitRounds; ++round) {
    auto edges = edges_by_length(ed);
    std::erase_if(edges, [&](const auto& x) { return !(x.first > threshold); });
    if (edges.empty()) break;
    std::sort(edges.begin(), edges.end(), [](const auto& l, const auto& r) {
      return l.first != r.first ? l.first > r.first : l.second < r.second;
    });
    int done = 0;
    for (const auto& [len, e] : edges) {
      if (ed.split(e.v0, e.v1)) ++done;
    }
    splits += done;
    if (done == 0) break;
  }
  return splits;
}

int collapse_short_edges(Editor& ed, double threshold, double max_length) {
  auto edges = edges_by_length(ed);
  std::erase_if(edges, [&](const auto& x) { return !(x.first < threshold); });
  std::sort(edges.begin(), edges.end());
  int collapses = 0;
  for (const auto& [len, e] : edges) {
    if (!ed.vertex_alive(e.v0) || !ed.vertex_alive(e.v1) || !ed.has_edge(e.v0, e.v1)) continue;
    if (!(ed.length(e.v0, e.v1) < threshold)) continue;
    if (ed.collapse(e.v0, e.v1, max_length)) ++collapses;
  }
  return collapses;
}

int valence_target(const Editor& ed, int v) { return ed.is_boundary_vertex(v) ? 4 : 6; }

int improve_valence(Editor& ed) {
  int flips = 0;
  for (int round = 0; round < kFlipRounds; ++round) {
    int done = 0;
    for (const Edge& e : ed.edges()) {
      const auto faces = ed.edge_faces(e.v0, e.v1);
      if (faces.size() != 2) continue;
      int c = -1, d = -1;
      for (int w : ed.face(faces[0])) {
        if (w != e.v0 && w != e.v1) c = w;
      }
      for (int w : ed.face(faces[1])) {
        if (w != e.v0 && w != e.v1) d = w;
      }
      const int va = ed.valence(e.v0), vb = ed.valence(e.v1), vc = ed.valence(c), vd = ed.valence(d);
      const int ta = valence_target(ed, e.v0), tb = valence_target(ed, e.v1);
      const int tc = valence_target(ed, c), td = valence_target(ed, d);
      auto sq = [](int x) { return x * x; };
      const int before = sq(va - ta) + sq(vb - tb) + sq(vc - tc) + sq(vd - td);
      const int after = sq(va - 1 - ta) + sq(vb - 1 - tb) + sq(vc + 1 - tc) + sq(vd + 1 - td);
      if (after < before && ed.flip(e.v0, e.v1)) ++done;
    }
    flips += done;
    if (done == 0) break;
  }
  return flips;
}

/// Remove faces below the area epsilon by collapsing their shortest edge or,
/// failing that, flipping their longest one.
void remove_degenerate(Editor& ed, double epsilon, RemeshStats& stats) {
  for (int round = 0; round < kCleanupRounds; ++round) {
    bool changed = false;
    bool any = false;
    for (std::size_t f = 0; f < ed.face_slots(); ++f) {
      const int fi = static_cast<int>(f);
      if (!ed.face_alive(fi) || ed.area(fi) >= epsilon) continue;
      any = true;
      const auto t = ed.face(fi);
      std::array<std::pair<double, Edge>, 3> sides;
      for (int k = 0; k < 3; ++k) {
        const int a = t[k], b = t[(k + 1) % 3];
        sides[k] = {ed.length(a, b), Edge(a, b)};
      }
      std::sort(sides.begin(), sides.end());
      if (ed.collapse(sides[0].second.v0, sides[0].second.v1)) {
        ++stats.collapses;
        changed = true;
      } else if (ed.flip(sides[2].second.v0, sides[2].second.v1)) {
        ++stats.flips;
        changed = true;
      }
    }
    if (!any || !changed) break;
  }
}

}  // namespace

RemeshResult remesh_pass(const Mesh& mesh, double target_edge_length, const RemeshFactors& factors,
                         const Payload* payload) {
  factors.check();
  if (!(target_edge_length > 0)) throw ContractError("target edge length must be positive");
  Editor ed(mesh, factors.area_epsilon, payload);
  RemeshResult result;
  const double hi = factors.split * target_edge_length;
  const double lo = factors.collapse * target_edge_length;
  result.stats.splits = split_long_edges(ed, hi);
  result.stats.collapses = collapse_short_edges(ed, lo, hi);
  result.stats.flips = improve_valence(ed);
  remove_degenerate(ed, factors.area_epsilon, result.stats);
  result.mesh = ed.compact(&result.origins, payload ? &result.payload : nullptr);
  // keep the frozen flags array present when the input had one
  if (mesh.frozen.size() == mesh.vertex_count() && result.mesh.frozen.size() == 0) {
    result.mesh.frozen = Eigen::Array<bool, Eigen::Dynamic, 1>::Constant(result.mesh.vertex_count(), false);
  }
  return result;
}

}  // namespace meshlift
