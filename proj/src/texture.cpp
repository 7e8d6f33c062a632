#include "meshlift/texture.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>
#include <optional>
#include <unordered_map>

#include "meshlift/parallel.hpp"

namespace meshlift {

using Eigen::Vector2d;
using Eigen::Vector3d;

void BakeConfig::check() const {
  if (mode == BakeMode::atlas) {
    if (atlas_resolution < 256 || (atlas_resolution & (atlas_resolution - 1)) != 0) {
      throw ContractError("atlas_resolution must be a power of two >= 256");
    }
  }
  if (seam_padding < 0) throw ContractError("seam_padding must be non-negative");
  if (!(min_view_cosine >= 0 && min_view_cosine < 1)) throw ContractError("min_view_cosine must lie in [0, 1)");
}

namespace {

/// One source view plus the mesh's own render from the same camera, used
/// for the visibility test.
struct ViewSampler {
  const ViewRecord* view;
  const Mesh* mesh;
  Projector<double> proj;
  Vector3d toward;
  RenderOutput own;
  double tolerance;

  ViewSampler(const Mesh& m, const ViewRecord& v, double tol)
      : view(&v), mesh(&m), proj(v.camera), toward(-v.camera.view_direction()), tolerance(tol) {
    RenderOptions opt;
    opt.with_depth = true;
    own = rasterize_full(m, v.camera, opt);
  }

  /// True when `p` is not hidden behind another part of the mesh. `face`
  /// (optional) is a face that contains p.
  bool visible(const Vector3d& s, int face) const {
    const int res = view->camera.resolution;
    const int x = static_cast<int>(std::floor(s.x())), y = static_cast<int>(std::floor(s.y()));
    if (x < 0 || y < 0 || x >= res || y >= res) return false;
    const int f = own.face_id[static_cast<std::size_t>(y) * res + x];
    if (f < 0 || f == face) return true;
    // depth of the visible face's plane exactly at the projected point
    Vector3d q[3];
    for (int k = 0; k < 3; ++k) q[k] = proj.project(mesh->vertex(mesh->faces(f, k)));
    const Vector2d p = s.head<2>();
    const double det = (q[1].x() - q[0].x()) * (q[2].y() - q[0].y()) - (q[2].x() - q[0].x()) * (q[1].y() - q[0].y());
    if (det == 0) return true;
    const double u = ((p.x() - q[0].x()) * (q[2].y() - q[0].y()) - (q[2].x() - q[0].x()) * (p.y() - q[0].y())) / det;
    const double w = ((q[1].x() - q[0].x()) * (p.y() - q[0].y()) - (p.x() - q[0].x()) * (q[1].y() - q[0].y())) / det;
    const double depth = q[0].z() + u * (q[1].z() - q[0].z()) + w * (q[2].z() - q[0].z());
    return s.z() <= depth + tolerance;
  }

  /// Bilinear colour over foreground pixels only, un-composited from white.
  bool sample(const Vector3d& s, Vector3d& color) const {
    const ImageD& alpha = view->alpha;
    const double fx = s.x() - 0.5, fy = s.y() - 0.5;
    const int x0 = static_cast<int>(std::floor(fx)), y0 = static_cast<int>(std::floor(fy));
    const double tx = fx - x0, ty = fy - y0;
    Vector3d sum = Vector3d::Zero();
    double wsum = 0;
    for (int dy = 0; dy < 2; ++dy) {
      for (int dx = 0; dx < 2; ++dx) {
        const int x = x0 + dx, y = y0 + dy;
        if (x < 0 || y < 0 || x >= alpha.width || y >= alpha.height) continue;
        const double w = (dx ? tx : 1 - tx) * (dy ? ty : 1 - ty);
        const double a = alpha(x, y);
        if (!(a > 0.5) || w <= 0) continue;
        const Eigen::Index pix = static_cast<Eigen::Index>(y) * alpha.width + x;
        const Vector3d c = ((view->color.rgb(pix).array() - (1 - a)) / a).max(0.0).min(1.0).matrix();
        sum += w * c;
        wsum += w;
      }
    }
    if (!(wsum > 1e-12)) return false;
    color = sum / wsum;
    return true;
  }
};

std::vector<ViewSampler> make_samplers(const Mesh& mesh, const MultiviewSet& views, int threads) {
  const Eigen::AlignedBox3d box = bounding_box(mesh);
  const double tol = 1e-3 * box.diagonal().norm();
  std::vector<std::optional<ViewSampler>> tmp(views.size());
  parallel_for(views.size(), threads, [&](std::size_t i) { tmp[i].emplace(mesh, views.views[i], tol); });
  std::vector<ViewSampler> out;
  for (auto& t : tmp) out.push_back(std::move(*t));
  return out;
}

/// Cosine-weighted blend over views; false when no view sees the point.
bool blend_views(const std::vector<ViewSampler>& samplers, const Vector3d& p, const Vector3d& normal, int face,
                 double min_cos, Vector3d& color) {
  Vector3d sum = Vector3d::Zero();
  double wsum = 0;
  for (const auto& s : samplers) {
    const double c = normal.dot(s.toward);
    if (!(c > min_cos)) continue;
    const Vector3d proj = s.proj.project(p);
    if (!s.visible(proj, face)) continue;
    Vector3d col;
    if (!s.sample(proj, col)) continue;
    sum += c * col;
    wsum += c;
  }
  if (!(wsum > 0)) return false;
  color = sum / wsum;
  return true;
}

}  // namespace

Mesh bake_vertex_colors(const Mesh& mesh, const MultiviewSet& views, const BakeConfig& config) {
  config.check();
  views.check();
  Mesh out = mesh;
  const auto nv = mesh.vertex_count();
  out.colors = RowPoints<double>::Ones(nv, 3);
  if (nv == 0) return out;
  const std::vector<ViewSampler> samplers = make_samplers(mesh, views, config.threads);
  const RowPoints<double> normals = vertex_normals(mesh);
  std::vector<char> colored(static_cast<std::size_t>(nv), 0);
  parallel_for(static_cast<std::size_t>(nv), config.threads, [&](std::size_t vi) {
    const auto v = static_cast<Eigen::Index>(vi);
    Vector3d c;
    if (blend_views(samplers, mesh.vertex(v), normals.row(v).transpose(), -1, config.min_view_cosine, c)) {
      out.colors.row(v) = c.transpose();
      colored[vi] = 1;
    }
  });

  // unseen vertices inherit from the nearest coloured vertex along edges
  const AdjacencyInfo adj = build_adjacency(mesh);
  std::deque<int> queue;
  for (Eigen::Index v = 0; v < nv; ++v) {
    if (colored[static_cast<std::size_t>(v)]) queue.push_back(static_cast<int>(v));
  }
  while (!queue.empty()) {
    const int v = queue.front();
    queue.pop_front();
    for (int w : adj.vertex_ring[v]) {
      if (colored[w]) continue;
      colored[w] = 1;
      out.colors.row(w) = out.colors.row(v);
      queue.push_back(w);
    }
  }
  return out;
}

namespace {

struct Chart {
  std::vector<int> faces;
  int axis = 0;        // dominant normal axis
  bool negative = false;
  Vector2d lo, hi;     // projected extent, world units
  Vector2d offset;     // packed position, texels
};

Vector2d project_axis(const Vector3d& p, int axis, bool negative) {
  const double u = p[(axis + 1) % 3], v = p[(axis + 2) % 3];
  return {negative ? -u : u, v};
}

/// Shelf packing at `scale` texels per world unit; false on overflow.
bool pack(std::vector<Chart>& charts, double scale, int res, int pad) {
  std::vector<int> order(charts.size());
  std::iota(order.begin(), order.end(), 0);
  auto height = [&](int c) { return std::ceil((charts[c].hi.y() - charts[c].lo.y()) * scale) + 2 * pad + 1; };
  auto width = [&](int c) { return std::ceil((charts[c].hi.x() - charts[c].lo.x()) * scale) + 2 * pad + 1; };
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return height(a) > height(b); });
  double x = 0, y = 0, shelf = 0;
  for (int c : order) {
    const double w = width(c), h = height(c);
    if (w > res) return false;
    if (x + w > res) {
      y += shelf;
      x = 0;
      shelf = 0;
    }
    if (y + h > res) return false;
    charts[c].offset = Vector2d(x + pad, y + pad);
    x += w;
    shelf = std::max(shelf, h);
  }
  return true;
}

}  // namespace

AtlasResult bake_atlas(const Mesh& mesh, const MultiviewSet& views, const BakeConfig& config) {
  BakeConfig cfg = config;
  cfg.mode = BakeMode::atlas;
  cfg.check();
  views.check();
  if (mesh.empty()) throw ContractError("cannot bake an atlas for an empty mesh");
  const int res = cfg.atlas_resolution, pad = cfg.seam_padding;
  const auto nf = static_cast<std::size_t>(mesh.face_count());

  // charts: faces grouped by dominant normal axis, split into connected pieces
  std::vector<int> cls(nf);
  std::vector<Vector3d> unit(nf);
  for (std::size_t f = 0; f < nf; ++f) {
    const Vector3d n = face_normal_raw(mesh, static_cast<Eigen::Index>(f));
    unit[f] = n.norm() > 0 ? Vector3d(n.normalized()) : Vector3d::UnitZ();
    int axis = 0;
    unit[f].cwiseAbs().maxCoeff(&axis);
    cls[f] = 2 * axis + (unit[f][axis] < 0 ? 1 : 0);
  }
  std::vector<int> parent(nf);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  const AdjacencyInfo adj = build_adjacency(mesh);
  for (const auto& ef : adj.edge_faces) {
    if (ef.size() == 2 && cls[ef[0]] == cls[ef[1]]) parent[find(ef[0])] = find(ef[1]);
  }
  std::vector<Chart> charts;
  std::vector<int> chart_of(nf, -1);
  std::vector<int> root_chart(nf, -1);
  for (std::size_t f = 0; f < nf; ++f) {
    const int r = find(static_cast<int>(f));
    if (root_chart[r] < 0) {
      root_chart[r] = static_cast<int>(charts.size());
      Chart c;
      c.axis = cls[f] / 2;
      c.negative = (cls[f] % 2) == 1;
      c.lo = Vector2d::Constant(std::numeric_limits<double>::infinity());
      c.hi = -c.lo;
      charts.push_back(c);
    }
    Chart& c = charts[root_chart[r]];
    chart_of[f] = root_chart[r];
    c.faces.push_back(static_cast<int>(f));
    for (int k = 0; k < 3; ++k) {
      const Vector2d q = project_axis(mesh.vertex(mesh.faces(f, k)), c.axis, c.negative);
      c.lo = c.lo.cwiseMin(q);
      c.hi = c.hi.cwiseMax(q);
    }
  }

  double area = 0;
  for (const auto& c : charts) area += std::max(1e-12, (c.hi - c.lo).prod());
  const double initial = std::sqrt(0.6 * res * res / area);
  double scale = initial;
  while (!pack(charts, scale, res, pad)) {
    scale *= 0.95;
    if (scale < 0.25 * initial) {
      throw ContractError("atlas overflow: " + std::to_string(charts.size()) +
                          " charts do not fit; increase atlas_resolution");
    }
  }

  AtlasResult result;
  result.charts = static_cast<int>(charts.size());
  result.mesh = mesh;
  Mesh& out = result.mesh;
  out.face_uvs.resize(mesh.face_count(), 3);
  std::vector<Vector2d> uvs;
  std::vector<Vector2d> texel_pos;  // per uv, texel coordinates
  for (std::size_t ci = 0; ci < charts.size(); ++ci) {
    const Chart& c = charts[ci];
    std::unordered_map<int, int> uv_of_vertex;
    for (int f : c.faces) {
      for (int k = 0; k < 3; ++k) {
        const int v = mesh.faces(f, k);
        auto [it, inserted] = uv_of_vertex.emplace(v, static_cast<int>(uvs.size()));
        if (inserted) {
          const Vector2d q = project_axis(mesh.vertex(v), c.axis, c.negative);
          const Vector2d t = c.offset + (q - c.lo) * scale;
          texel_pos.push_back(t);
          uvs.emplace_back(t.x() / res, 1.0 - t.y() / res);
        }
        out.face_uvs(f, k) = it->second;
      }
    }
  }
  out.uvs.resize(static_cast<Eigen::Index>(uvs.size()), 2);
  for (std::size_t i = 0; i < uvs.size(); ++i) out.uvs.row(static_cast<Eigen::Index>(i)) = uvs[i].transpose();

  // per-texel bake; texels nobody sees fall back to the baked vertex colours
  const Mesh colored = bake_vertex_colors(mesh, views, cfg);
  const std::vector<ViewSampler> samplers = make_samplers(mesh, views, cfg.threads);
  result.texture = ImageD(res, res, 3, 1.0);
  result.written.assign(static_cast<std::size_t>(res) * res, 0);
  // texels are claimed by the lowest face index covering their centre
  std::vector<int> owner(static_cast<std::size_t>(res) * res, -1);
  std::vector<std::array<double, 3>> weights(static_cast<std::size_t>(res) * res);
  for (std::size_t f = 0; f < nf; ++f) {
    Vector2d t[3];
    for (int k = 0; k < 3; ++k) t[k] = texel_pos[out.face_uvs(f, k)];
    const double det = (t[1].x() - t[0].x()) * (t[2].y() - t[0].y()) - (t[2].x() - t[0].x()) * (t[1].y() - t[0].y());
    if (std::abs(det) < 1e-14) continue;
    const Vector2d lo = t[0].cwiseMin(t[1]).cwiseMin(t[2]), hi = t[0].cwiseMax(t[1]).cwiseMax(t[2]);
    const int x0 = std::max(0, static_cast<int>(std::floor(lo.x()))), x1 = std::min(res - 1, static_cast<int>(hi.x()));
    const int y0 = std::max(0, static_cast<int>(std::floor(lo.y()))), y1 = std::min(res - 1, static_cast<int>(hi.y()));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const std::size_t texel = static_cast<std::size_t>(y) * res + x;
        if (owner[texel] >= 0) continue;
        const Vector2d p(x + 0.5, y + 0.5);
        const double u = ((p.x() - t[0].x()) * (t[2].y() - t[0].y()) - (t[2].x() - t[0].x()) * (p.y() - t[0].y())) / det;
        const double v = ((t[1].x() - t[0].x()) * (p.y() - t[0].y()) - (p.x() - t[0].x()) * (t[1].y() - t[0].y())) / det;
        const double eps = 1e-9;
        if (u < -eps || v < -eps || u + v > 1 + eps) continue;
        owner[texel] = static_cast<int>(f);
        weights[texel] = {1 - u - v, u, v};
      }
    }
  }
  parallel_for(static_cast<std::size_t>(res), cfg.threads, [&](std::size_t row) {
    for (int x = 0; x < res; ++x) {
      const std::size_t texel = row * res + x;
      const int f = owner[texel];
      if (f < 0) continue;
      const auto& w = weights[texel];
      Vector3d p = Vector3d::Zero(), fallback = Vector3d::Zero();
      for (int k = 0; k < 3; ++k) {
        p += w[k] * mesh.vertex(mesh.faces(f, k));
        fallback += w[k] * colored.colors.row(mesh.faces(f, k)).transpose();
      }
      Vector3d c;
      if (!blend_views(samplers, p, unit[f], f, cfg.min_view_cosine, c)) c = fallback;
      result.texture.set_rgb(static_cast<Eigen::Index>(texel), c);
      result.written[texel] = 1;
    }
  });

  // seam padding: grow written texels outward one ring per iteration
  for (int it = 0; it < pad; ++it) {
    const std::vector<char> before = result.written;
    for (int y = 0; y < res; ++y) {
      for (int x = 0; x < res; ++x) {
        const std::size_t texel = static_cast<std::size_t>(y) * res + x;
        if (before[texel]) continue;
        Vector3d sum = Vector3d::Zero();
        int n = 0;
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const int nx = x + dx, ny = y + dy;
            if (nx < 0 || ny < 0 || nx >= res || ny >= res) continue;
            const std::size_t nt = static_cast<std::size_t>(ny) * res + nx;
            if (!before[nt]) continue;
            sum += result.texture.rgb(static_cast<Eigen::Index>(nt));
            ++n;
          }
        }
        if (n == 0) continue;
        result.texture.set_rgb(static_cast<Eigen::Index>(texel), sum / n);
        result.written[texel] = 2;
      }
    }
  }
  return result;
}

}  // namespace meshlift
