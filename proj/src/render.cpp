#include "meshlift/render.hpp"

#include <unsupported/Eigen/AutoDiff>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>

#include "meshlift/parallel.hpp"

namespace meshlift {

using Eigen::Vector2d;
using Eigen::Vector3d;

void ViewRecord::check() const {
  camera.check();
  const int r = camera.resolution;
  auto shape_ok = [r](const ImageD& img, int c) { return img.width == r && img.height == r && img.channels == c; };
  if (!shape_ok(color, 3) || !shape_ok(normal, 3) || !shape_ok(alpha, 1)) {
    throw ContractError("view rasters do not match the camera resolution " + std::to_string(r));
  }
  if (has_depth() && !shape_ok(depth, 1)) throw ContractError("depth raster does not match the camera");
  if ((alpha.data < 0.0).any() || (alpha.data > 1.0).any()) throw ContractError("alpha outside [0, 1]");
}

Rig MultiviewSet::rig() const {
  Rig rig;
  for (const auto& v : views) rig.cameras.push_back(v.camera);
  return rig;
}

void MultiviewSet::check() const {
  if (views.empty()) throw ContractError("multiview set is empty");
  for (const auto& v : views) v.check();
  rig().check();
}

void LossWeights::check() const {
  if (w_normal < 0 || w_alpha < 0 || lambda_smooth < 0) throw ContractError("loss weights must be non-negative");
  if (w_normal == 0 && w_alpha == 0 && lambda_smooth == 0) throw ContractError("at least one loss weight must be positive");
}

namespace {

constexpr int kTile = 8;
constexpr double kInf = std::numeric_limits<double>::infinity();

inline double cross2(const Vector2d& a, const Vector2d& b) { return a.x() * b.y() - a.y() * b.x(); }

/// View-independent shading data.
struct Shading {
  const Mesh* mesh = nullptr;
  std::vector<Vector3d> normal_sum;
  std::vector<Vector3d> vertex_normal;
  std::vector<Vector3d> face_normal;
  std::vector<Edge> edges;
  std::vector<std::array<int, 2>> edge_faces;  // manifold edges only, -1 when absent
};

Shading prepare_shading(const Mesh& mesh) {
  check_indices(mesh);
  Shading s;
  s.mesh = &mesh;
  const auto nv = static_cast<std::size_t>(mesh.vertex_count());
  const auto nf = static_cast<std::size_t>(mesh.face_count());
  s.normal_sum.assign(nv, Vector3d::Zero());
  s.face_normal.resize(nf);
  for (std::size_t f = 0; f < nf; ++f) {
    const Vector3d n = face_normal_raw(mesh, static_cast<Eigen::Index>(f));
    const double len = n.norm();
    s.face_normal[f] = len > 0 ? Vector3d(n / len) : Vector3d::Zero();
    for (int k = 0; k < 3; ++k) s.normal_sum[mesh.faces(f, k)] += n;
  }
  s.vertex_normal.resize(nv);
  for (std::size_t v = 0; v < nv; ++v) {
    const double len = s.normal_sum[v].norm();
    s.vertex_normal[v] = len > 0 ? Vector3d(s.normal_sum[v] / len) : Vector3d::Zero();
  }
  const AdjacencyInfo adj = build_adjacency(mesh);
  for (std::size_t e = 0; e < adj.edges.size(); ++e) {
    const auto& faces = adj.edge_faces[e];
    if (faces.size() > 2) continue;
    s.edges.push_back(adj.edges[e]);
    s.edge_faces.push_back({faces[0], faces.size() > 1 ? faces[1] : -1});
  }
  return s;
}

struct Contour {
  int a;
  int b;
  int face;  // the camera-facing face
};

/// Per-view projected geometry, depth buffer, face bins and contour band.
struct ViewGeometry {
  const Mesh* mesh = nullptr;
  Projector<double> proj;
  int res = 0;
  double near_plane = -kInf, far_plane = kInf;
  std::vector<Vector2d> xy;
  std::vector<double> z;
  std::vector<char> front;
  int tiles = 0;
  std::vector<std::vector<int>> tile_faces;
  std::vector<int> hit_face;
  std::vector<double> hit_depth;
  std::vector<Contour> contours;
  std::vector<int> band_contour;
  std::vector<double> band_distance;

  explicit ViewGeometry(const Camera& cam) : proj(cam) {}

  Vector2d corner(int f, int k) const { return xy[mesh->faces(f, k)]; }

  /// Barycentric weights of p in front face f; true when p is inside (closed).
  bool barycentric(int f, const Vector2d& p, double w[3]) const {
    const Vector2d u0 = corner(f, 0) - p, u1 = corner(f, 1) - p, u2 = corner(f, 2) - p;
    const double e0 = -cross2(u1, u2);
    const double e1 = -cross2(u2, u0);
    const double e2 = -cross2(u0, u1);
    const double area = e0 + e1 + e2;
    if (!(area > 0)) return false;
    w[0] = e0 / area;
    w[1] = e1 / area;
    w[2] = e2 / area;
    return e0 >= 0 && e1 >= 0 && e2 >= 0;
  }
  double depth_at(int f, const double w[3]) const {
    return w[0] * z[mesh->faces(f, 0)] + w[1] * z[mesh->faces(f, 1)] + w[2] * z[mesh->faces(f, 2)];
  }
  bool depth_ok(double d) const { return d >= near_plane && d <= far_plane; }
  const std::vector<int>& faces_near(const Vector2d& q) const {
    const int tx = std::clamp(static_cast<int>(std::floor(q.x() / kTile)), 0, tiles - 1);
    const int ty = std::clamp(static_cast<int>(std::floor(q.y() / kTile)), 0, tiles - 1);
    return tile_faces[static_cast<std::size_t>(ty) * tiles + tx];
  }
  /// Faces sharing a vertex with the contour's own face count as the same
  /// sheet. Using only the edge's endpoints breaks down at sliver faces whose
  /// third vertex sits on the contour line.
  bool touches(int f, const Contour& c) const {
    for (int k = 0; k < 3; ++k) {
      const int v = mesh->faces(f, k);
      for (int j = 0; j < 3; ++j) {
        if (v == mesh->faces(c.face, j)) return true;
      }
    }
    return false;
  }
};

struct Hit {
  int face = -1;
  double depth = kInf;
  double w[3] = {0, 0, 0};

  bool found() const { return face >= 0; }
  bool closer_than(const Hit& o) const {
    if (!o.found()) return found();
    if (!found()) return false;
    return depth < o.depth || (depth == o.depth && face < o.face);
  }
};

ViewGeometry build_view(const Shading& shading, const Camera& cam) {
  const Mesh& mesh = *shading.mesh;
  ViewGeometry g(cam);
  g.mesh = &mesh;
  g.res = cam.resolution;
  g.near_plane = cam.near_plane;
  g.far_plane = cam.far_plane;
  const auto nv = static_cast<std::size_t>(mesh.vertex_count());
  const auto nf = static_cast<std::size_t>(mesh.face_count());
  g.xy.resize(nv);
  g.z.resize(nv);
  for (std::size_t v = 0; v < nv; ++v) {
    const Vector3d s = g.proj.project(mesh.vertex(static_cast<Eigen::Index>(v)));
    g.xy[v] = s.head<2>();
    g.z[v] = s.z();
  }
  g.front.assign(nf, 0);
  for (std::size_t f = 0; f < nf; ++f) {
    const int fi = static_cast<int>(f);
    const double area = -cross2(g.corner(fi, 1) - g.corner(fi, 0), g.corner(fi, 2) - g.corner(fi, 0));
    g.front[f] = area > 0 ? 1 : 0;
  }

  const int res = g.res;
  g.tiles = (res + kTile - 1) / kTile;
  g.tile_faces.assign(static_cast<std::size_t>(g.tiles) * g.tiles, {});
  g.hit_face.assign(static_cast<std::size_t>(res) * res, -1);
  g.hit_depth.assign(static_cast<std::size_t>(res) * res, kInf);

  for (std::size_t f = 0; f < nf; ++f) {
    if (!g.front[f]) continue;
    const int fi = static_cast<int>(f);
    Vector2d lo = g.corner(fi, 0), hi = lo;
    for (int k = 1; k < 3; ++k) {
      lo = lo.cwiseMin(g.corner(fi, k));
      hi = hi.cwiseMax(g.corner(fi, k));
    }
    if (!lo.allFinite() || !hi.allFinite()) continue;
    const int t0x = std::clamp(static_cast<int>(std::floor((lo.x() - 1) / kTile)), 0, g.tiles - 1);
    const int t1x = std::clamp(static_cast<int>(std::floor((hi.x() + 1) / kTile)), 0, g.tiles - 1);
    const int t0y = std::clamp(static_cast<int>(std::floor((lo.y() - 1) / kTile)), 0, g.tiles - 1);
    const int t1y = std::clamp(static_cast<int>(std::floor((hi.y() + 1) / kTile)), 0, g.tiles - 1);
    for (int ty = t0y; ty <= t1y; ++ty) {
      for (int tx = t0x; tx <= t1x; ++tx) g.tile_faces[static_cast<std::size_t>(ty) * g.tiles + tx].push_back(fi);
    }

    const int x0 = std::max(0, static_cast<int>(std::ceil(lo.x() - 0.5)));
    const int x1 = std::min(res - 1, static_cast<int>(std::floor(hi.x() - 0.5)));
    const int y0 = std::max(0, static_cast<int>(std::ceil(lo.y() - 0.5)));
    const int y1 = std::min(res - 1, static_cast<int>(std::floor(hi.y() - 0.5)));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        double w[3];
        if (!g.barycentric(fi, Vector2d(x + 0.5, y + 0.5), w)) continue;
        const double d = g.depth_at(fi, w);
        if (!g.depth_ok(d)) continue;
        const std::size_t p = static_cast<std::size_t>(y) * res + x;
        if (d < g.hit_depth[p]) {
          g.hit_depth[p] = d;
          g.hit_face[p] = fi;
        }
      }
    }
  }

  for (std::size_t e = 0; e < shading.edges.size(); ++e) {
    const auto& ef = shading.edge_faces[e];
    int front_count = 0, face = -1;
    for (int f : ef) {
      if (f >= 0 && g.front[f]) {
        ++front_count;
        face = f;
      }
    }
    if (front_count == 1) g.contours.push_back({shading.edges[e].v0, shading.edges[e].v1, face});
  }

  g.band_contour.assign(static_cast<std::size_t>(res) * res, -1);
  g.band_distance.assign(static_cast<std::size_t>(res) * res, kInf);
  for (std::size_t ci = 0; ci < g.contours.size(); ++ci) {
    const Contour& c = g.contours[ci];
    const Vector2d A = g.xy[c.a], B = g.xy[c.b];
    if (!A.allFinite() || !B.allFinite()) continue;
    const Vector2d lo = A.cwiseMin(B), hi = A.cwiseMax(B);
    const int x0 = std::max(0, static_cast<int>(std::ceil(lo.x() - 1.0)));
    const int x1 = std::min(res - 1, static_cast<int>(std::floor(hi.x())));
    const int y0 = std::max(0, static_cast<int>(std::ceil(lo.y() - 1.0)));
    const int y1 = std::min(res - 1, static_cast<int>(std::floor(hi.y())));
    const Vector2d D = B - A;
    const double len2 = D.squaredNorm();
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const Vector2d p(x + 0.5, y + 0.5);
        const double t = len2 > 0 ? std::clamp((p - A).dot(D) / len2, 0.0, 1.0) : 0.0;
        const Vector2d q = A + t * D;
        const double d = (p - q).norm();
        const std::size_t pix = static_cast<std::size_t>(y) * res + x;
        if (!(d < 0.5) || !(d < g.band_distance[pix])) continue;
        // the contour must be the front-most surface at its foot point
        const double edge_depth = (1 - t) * g.z[c.a] + t * g.z[c.b];
        bool occluded = false;
        for (int f : g.faces_near(q)) {
          if (g.touches(f, c)) continue;
          double w[3];
          if (!g.barycentric(f, q, w)) continue;
          const double fd = g.depth_at(f, w);
          if (g.depth_ok(fd) && fd < edge_depth) {
            occluded = true;
            break;
          }
        }
        if (occluded) continue;
        g.band_distance[pix] = d;
        g.band_contour[pix] = static_cast<int>(ci);
      }
    }
  }
  return g;
}

/// How one pixel's value is assembled.
struct PixelSample {
  // hard path (no contour nearby): `near` is the visible surface, if any
  // band path: value = c * near_value + (1 - c) * behind_value, where
  // near_value comes from `near` (inside) or from the contour edge at t (outside)
  bool band = false;
  Hit near;
  Hit behind;
  int contour = -1;
  bool inside = false;
  double coverage = 1;
  double edge_t = 0;
  double distance = 0;
};

PixelSample sample_pixel(const ViewGeometry& g, int x, int y) {
  PixelSample s;
  const std::size_t pix = static_cast<std::size_t>(y) * g.res + x;
  const int ci = g.band_contour[pix];
  if (ci < 0) {
    const int f = g.hit_face[pix];
    if (f >= 0) {
      s.near.face = f;
      s.near.depth = g.hit_depth[pix];
      g.barycentric(f, Vector2d(x + 0.5, y + 0.5), s.near.w);
    }
    return s;
  }
  const Contour& c = g.contours[static_cast<std::size_t>(ci)];
  const Vector2d p(x + 0.5, y + 0.5);
  Hit in, out;
  for (int f : g.faces_near(p)) {
    Hit h;
    if (!g.barycentric(f, p, h.w)) continue;
    h.depth = g.depth_at(f, h.w);
    if (!g.depth_ok(h.depth)) continue;
    h.face = f;
    Hit& slot = g.touches(f, c) ? in : out;
    if (h.closer_than(slot)) slot = h;
  }
  s.band = true;
  s.contour = ci;
  s.inside = in.found() && in.closer_than(out);
  s.distance = g.band_distance[pix];
  s.coverage = s.inside ? 0.5 + s.distance : 0.5 - s.distance;
  if (s.inside) s.near = in;
  s.behind = out;
  const Vector2d A = g.xy[c.a], D = g.xy[c.b] - A;
  const double len2 = D.squaredNorm();
  s.edge_t = len2 > 0 ? std::clamp((p - A).dot(D) / len2, 0.0, 1.0) : 0.0;
  return s;
}

struct NormalEval {
  Vector3d m = Vector3d::Zero();  // unnormalised
  Vector3d n = Vector3d::Zero();
  double len = 0;
};

NormalEval surface_normal(const Shading& sh, const Mesh& mesh, const Hit& h) {
  NormalEval e;
  for (int k = 0; k < 3; ++k) e.m += h.w[k] * sh.vertex_normal[mesh.faces(h.face, k)];
  e.len = e.m.norm();
  if (e.len > 0) e.n = e.m / e.len;
  return e;
}

int third_vertex(const Mesh& mesh, const Contour& c) {
  for (int k = 0; k < 3; ++k) {
    const int v = mesh.faces(c.face, k);
    if (v != c.a && v != c.b) return v;
  }
  return c.a;
}

/// Thinness (height over length) below which a contour face counts as a sliver.
constexpr double kSliver = 0.05;

/// Unnormalised normal extrapolated from a contour edge AB to the pixel
/// centre p: the end normals interpolated at the foot point. When the
/// contour face ABC is a sliver the value fades toward the edges through C,
/// which become the contour once that face turns away, so the band does not
/// jump when it does.
template <typename T>
Eigen::Matrix<T, 3, 1> contour_normal(const Eigen::Matrix<T, 2, 1>& A, const Eigen::Matrix<T, 2, 1>& B,
                                      const Eigen::Matrix<T, 2, 1>& C, const Eigen::Matrix<T, 3, 1>& na,
                                      const Eigen::Matrix<T, 3, 1>& nb, const Eigen::Matrix<T, 3, 1>& nc,
                                      const Vector2d& p) {
  using V2 = Eigen::Matrix<T, 2, 1>;
  using V3 = Eigen::Matrix<T, 3, 1>;
  auto unit_clamp = [](T v) { return v < T(0) ? T(0) : (v > T(1) ? T(1) : v); };
  const V2 D = B - A;
  const T len2 = D.squaredNorm();
  if (!(len2 > T(0))) return na;
  const V2 u(T(p.x()) - A.x(), T(p.y()) - A.y());
  const T t = unit_clamp(u.dot(D) / len2);
  const V3 straight = (T(1) - t) * na + t * nb;
  const V2 e = C - A;
  T cr = D.x() * e.y() - D.y() * e.x();
  if (cr < T(0)) cr = -cr;
  const T x = cr / len2 / T(kSliver);
  if (!(x < T(1))) return straight;
  const T tc = e.dot(D) / len2;
  V3 path;
  if (tc <= T(0) || tc >= T(1)) {
    // C lies past an end, so after the flip the outer edge from C to the far
    // end covers AB.
    const bool past_a = tc <= T(0);
    const V2& Q = past_a ? B : A;
    const V2 F = Q - C;
    const T f2 = F.squaredNorm();
    const T r = unit_clamp((T(p.x()) - C.x()) * F.x() / f2 + (T(p.y()) - C.y()) * F.y() / f2);
    path = (T(1) - r) * nc + r * (past_a ? nb : na);
  } else if (t <= tc) {
    path = (T(1) - t / tc) * na + (t / tc) * nc;
  } else {
    const T r = (t - tc) / (T(1) - tc);
    path = (T(1) - r) * nc + r * nb;
  }
  // Zero on the contour line itself, where the inside surface takes over,
  // and full strength past the sliver's own screen height.
  T d = D.x() * u.y() - D.y() * u.x();
  if (d < T(0)) d = -d;
  const T y = d < cr ? d / cr : T(1);
  const T b = (T(1) - x * x * (T(3) - T(2) * x)) * y * y * (T(3) - T(2) * y);
  return (T(1) - b) * straight + b * path;
}

NormalEval edge_normal(const Shading& sh, const ViewGeometry& g, const Contour& c, const Vector2d& p) {
  const int v = third_vertex(*sh.mesh, c);
  NormalEval e;
  e.m = contour_normal<double>(g.xy[c.a], g.xy[c.b], g.xy[v], sh.vertex_normal[c.a], sh.vertex_normal[c.b],
                               sh.vertex_normal[v], p);
  e.len = e.m.norm();
  if (e.len > 0) e.n = e.m / e.len;
  return e;
}

/// Barycentric weights of the edge point at parameter t within the contour face.
void edge_weights(const Mesh& mesh, const Contour& c, double t, double w[3]) {
  for (int k = 0; k < 3; ++k) {
    const int v = mesh.faces(c.face, k);
    w[k] = v == c.a ? 1 - t : (v == c.b ? t : 0.0);
  }
}

Vector3d sample_texture(const ImageD& tex, double u, double v) {
  const double x = std::clamp(u, 0.0, 1.0) * tex.width - 0.5;
  const double y = (1.0 - std::clamp(v, 0.0, 1.0)) * tex.height - 0.5;
  const int x0 = static_cast<int>(std::floor(x)), y0 = static_cast<int>(std::floor(y));
  const double fx = x - x0, fy = y - y0;
  Vector3d out = Vector3d::Zero();
  for (int dy = 0; dy < 2; ++dy) {
    for (int dx = 0; dx < 2; ++dx) {
      const int xi = std::clamp(x0 + dx, 0, tex.width - 1);
      const int yi = std::clamp(y0 + dy, 0, tex.height - 1);
      const double wgt = (dx ? fx : 1 - fx) * (dy ? fy : 1 - fy);
      for (int k = 0; k < 3; ++k) out[k] += wgt * tex(xi, yi, tex.channels == 3 ? k : 0);
    }
  }
  return out;
}

Vector3d face_color(const Mesh& mesh, const RenderOptions& opt, int f, const double w[3]) {
  if (opt.texture && mesh.has_uvs()) {
    Vector2d uv = Vector2d::Zero();
    for (int k = 0; k < 3; ++k) uv += w[k] * mesh.uvs.row(mesh.face_uvs(f, k)).transpose();
    return sample_texture(*opt.texture, uv.x(), uv.y());
  }
  if (mesh.has_colors()) {
    Vector3d c = Vector3d::Zero();
    for (int k = 0; k < 3; ++k) c += w[k] * mesh.colors.row(mesh.faces(f, k)).transpose();
    return c;
  }
  return Vector3d::Ones();
}

/// Per face corner: normalised sum of the raw normals of the faces around
/// that vertex whose unit normals are within `degrees` of this face's.
std::vector<std::array<Vector3d, 3>> crease_normals(const Mesh& mesh, double degrees) {
  const auto nf = static_cast<std::size_t>(mesh.face_count());
  std::vector<Vector3d> raw(nf), unit(nf);
  std::vector<std::vector<int>> vertex_faces(static_cast<std::size_t>(mesh.vertex_count()));
  for (std::size_t f = 0; f < nf; ++f) {
    raw[f] = face_normal_raw(mesh, static_cast<Eigen::Index>(f));
    const double len = raw[f].norm();
    unit[f] = len > 0 ? Vector3d(raw[f] / len) : Vector3d::Zero();
    for (int k = 0; k < 3; ++k) vertex_faces[mesh.faces(f, k)].push_back(static_cast<int>(f));
  }
  const double cos_limit = std::cos(degrees * std::numbers::pi / 180.0);
  std::vector<std::array<Vector3d, 3>> out(nf);
  for (std::size_t f = 0; f < nf; ++f) {
    for (int k = 0; k < 3; ++k) {
      Vector3d sum = Vector3d::Zero();
      for (int g : vertex_faces[mesh.faces(f, k)]) {
        if (unit[g].dot(unit[f]) >= cos_limit) sum += raw[g];
      }
      const double len = sum.norm();
      out[f][k] = len > 0 ? Vector3d(sum / len) : Vector3d::Zero();
    }
  }
  return out;
}

}  // namespace

RenderOutput rasterize_full(const Mesh& mesh, const Camera& camera, const RenderOptions& options) {
  camera.check();
  const Shading sh = prepare_shading(mesh);
  const ViewGeometry g = build_view(sh, camera);
  const int res = camera.resolution;

  RenderOutput out;
  ViewRecord& view = out.view;
  view.camera = camera;
  view.color = ImageD(res, res, 3, 1.0);
  view.normal = ImageD(res, res, 3, 0.0);
  view.alpha = ImageD(res, res, 1, 0.0);
  if (options.with_depth) view.depth = ImageD(res, res, 1, kInf);
  out.face_id = g.hit_face;

  const std::vector<std::array<Vector3d, 3>> corners =
      options.normals == NormalSource::crease ? crease_normals(mesh, options.crease_degrees)
                                              : std::vector<std::array<Vector3d, 3>>{};
  auto blend = [&](int f, const double w[3]) -> Vector3d {
    const Vector3d m = w[0] * corners[f][0] + w[1] * corners[f][1] + w[2] * corners[f][2];
    const double len = m.norm();
    return len > 0 ? Vector3d(m / len) : Vector3d::Zero();
  };
  // Same extrapolation as edge_normal, fed with the contour face's corner normals.
  auto contour_corner_normal = [&](const Contour& c, const Vector2d& p) -> Vector3d {
    const int v = third_vertex(mesh, c);
    const auto& cn = corners[static_cast<std::size_t>(c.face)];
    Vector3d n[3];
    for (int k = 0; k < 3; ++k) {
      const int id = mesh.faces(c.face, k);
      n[id == c.a ? 0 : (id == c.b ? 1 : 2)] = cn[k];
    }
    const Vector3d m = contour_normal<double>(g.xy[c.a], g.xy[c.b], g.xy[v], n[0], n[1], n[2], p);
    const double len = m.norm();
    return len > 0 ? Vector3d(m / len) : Vector3d::Zero();
  };
  auto normal_of = [&](const Hit& h) -> Vector3d {
    if (options.normals == NormalSource::face) return sh.face_normal[h.face];
    if (options.normals == NormalSource::crease) return blend(h.face, h.w);
    return surface_normal(sh, mesh, h).n;
  };

  for (int y = 0; y < res; ++y) {
    for (int x = 0; x < res; ++x) {
      const Eigen::Index pix = static_cast<Eigen::Index>(y) * res + x;
      if (options.with_depth) view.depth.at(pix) = g.hit_depth[static_cast<std::size_t>(pix)];
      const PixelSample s = sample_pixel(g, x, y);
      Vector3d normal = Vector3d::Zero(), color = Vector3d::Ones();
      double alpha = 0;
      if (!s.band) {
        if (s.near.found()) {
          normal = normal_of(s.near);
          color = face_color(mesh, options, s.near.face, s.near.w);
          alpha = 1;
        }
      } else {
        const Contour& c = g.contours[static_cast<std::size_t>(s.contour)];
        Vector3d near_n, near_c;
        if (s.inside) {
          near_n = normal_of(s.near);
          near_c = face_color(mesh, options, s.near.face, s.near.w);
        } else {
          double w[3];
          edge_weights(mesh, c, s.edge_t, w);
          if (options.normals == NormalSource::face) {
            near_n = sh.face_normal[c.face];
          } else if (options.normals == NormalSource::crease) {
            near_n = contour_corner_normal(c, Vector2d(x + 0.5, y + 0.5));
          } else {
            near_n = edge_normal(sh, g, c, Vector2d(x + 0.5, y + 0.5)).n;
          }
          near_c = face_color(mesh, options, c.face, w);
        }
        Vector3d far_n = Vector3d::Zero(), far_c = Vector3d::Ones();
        double far_a = 0;
        if (s.behind.found()) {
          far_n = normal_of(s.behind);
          far_c = face_color(mesh, options, s.behind.face, s.behind.w);
          far_a = 1;
        }
        const double cov = s.coverage;
        alpha = cov + (1 - cov) * far_a;
        normal = cov * near_n + (1 - cov) * far_n;
        if (alpha > 0) normal /= alpha;
        color = cov * near_c + (1 - cov) * far_c;
      }
      view.alpha.at(pix) = alpha;
      view.normal.set_rgb(pix, normal);
      view.color.set_rgb(pix, color);
    }
  }
  return out;
}

MultiviewSet render_conditions(const Mesh& mesh, const Rig& rig, const RenderOptions& options, int threads) {
  rig.check();
  MultiviewSet set;
  set.views.resize(rig.size());
  parallel_for(rig.size(), threads, [&](std::size_t i) { set.views[i] = rasterize(mesh, rig[i], options); });
  return set;
}

double laplacian_energy(const Mesh& mesh, const AdjacencyInfo& adj, RowPoints<double>* grad) {
  const RowPoints<double> lap = uniform_laplacian(mesh, adj);
  double energy = 0;
  for (Eigen::Index v = 0; v < lap.rows(); ++v) energy += lap.row(v).squaredNorm();
  if (grad) {
    grad->setZero(mesh.vertex_count(), 3);
    for (Eigen::Index v = 0; v < lap.rows(); ++v) {
      const auto& ring = adj.vertex_ring[static_cast<std::size_t>(v)];
      if (ring.empty()) continue;
      const Eigen::RowVector3d share = 2.0 * lap.row(v) / static_cast<double>(ring.size());
      for (int u : ring) grad->row(u) += share;
      grad->row(v) -= 2.0 * lap.row(v);
    }
  }
  return energy;
}

namespace {

struct ViewGradient {
  double normal_sum = 0;
  double alpha_sum = 0;
  RowPoints<double> grad_pos;     // world-space, through projected positions
  RowPoints<double> grad_normal;  // d loss / d unit vertex normals
};

/// Accumulates d loss / d (screen position) per vertex.
struct ScreenAccumulator {
  std::vector<Vector2d> g;
  std::vector<Vector3d> gn;

  void surface_normal_backward(const Shading& sh, const ViewGeometry& view, const Hit& h,
                               const Vector3d& grad_n) {
    const Mesh& mesh = *sh.mesh;
    const NormalEval e = surface_normal(sh, mesh, h);
    if (!(e.len > 0)) return;
    const Vector3d gm = (grad_n - e.n * e.n.dot(grad_n)) / e.len;
    double gw[3];
    for (int k = 0; k < 3; ++k) {
      const int v = mesh.faces(h.face, k);
      gn[v] += h.w[k] * gm;
      gw[k] = sh.vertex_normal[v].dot(gm);
    }
    barycentric_backward(view, h, gw);
  }

  void contour_normal_backward(const Shading& sh, const ViewGeometry& view, const Contour& c, const Vector2d& p,
                               const Vector3d& gm) {
    using AD = Eigen::AutoDiffScalar<Eigen::Matrix<double, 15, 1>>;
    const int v = third_vertex(*sh.mesh, c);
    const int ids[3] = {c.a, c.b, v};
    Eigen::Matrix<AD, 2, 1> P[3];
    Eigen::Matrix<AD, 3, 1> N[3];
    for (int i = 0; i < 3; ++i) {
      for (int k = 0; k < 2; ++k) P[i][k] = AD(view.xy[ids[i]][k], 15, 2 * i + k);
      for (int k = 0; k < 3; ++k) N[i][k] = AD(sh.vertex_normal[ids[i]][k], 15, 6 + 3 * i + k);
    }
    const Eigen::Matrix<AD, 3, 1> m = contour_normal<AD>(P[0], P[1], P[2], N[0], N[1], N[2], p);
    Eigen::Matrix<double, 15, 1> d = Eigen::Matrix<double, 15, 1>::Zero();
    for (int k = 0; k < 3; ++k) {
      if (m[k].derivatives().size() == 15) d += gm[k] * m[k].derivatives();
    }
    for (int i = 0; i < 3; ++i) {
      g[ids[i]] += d.segment<2>(2 * i);
      gn[ids[i]] += d.segment<3>(6 + 3 * i);
    }
  }

  void barycentric_backward(const ViewGeometry& view, const Hit& h, const double gw[3]) {
    const Mesh& mesh = *view.mesh;
    Vector2d corner[3];
    for (int k = 0; k < 3; ++k) corner[k] = view.xy[mesh.faces(h.face, k)];
    // w_i = e_i / A with e_i the signed area of (p, P_j, P_k) and A = sum e_i;
    // the sample point itself is fixed, so only the corners carry gradient.
    double area = 0;
    double e[3];
    Vector2d p = Vector2d::Zero();
    for (int k = 0; k < 3; ++k) p += h.w[k] * corner[k];
    Vector2d u[3];
    for (int k = 0; k < 3; ++k) u[k] = corner[k] - p;
    for (int i = 0; i < 3; ++i) {
      e[i] = -cross2(u[(i + 1) % 3], u[(i + 2) % 3]);
      area += e[i];
    }
    if (!(area > 0)) return;
    double mix = 0;
    for (int k = 0; k < 3; ++k) mix += gw[k] * h.w[k];
    for (int i = 0; i < 3; ++i) {
      const double ge = (gw[i] - mix) / area;
      const int j = (i + 1) % 3, k = (i + 2) % 3;
      g[mesh.faces(h.face, j)] += ge * Vector2d(-u[k].y(), u[k].x());
      g[mesh.faces(h.face, k)] += ge * Vector2d(u[j].y(), -u[j].x());
    }
  }
};

ViewGradient view_loss(const Shading& sh, const ViewRecord& target, const LossWeights& weights,
                       double scale, bool want_gradient) {
  const Mesh& mesh = *sh.mesh;
  const ViewGeometry g = build_view(sh, target.camera);
  const int res = g.res;
  const auto nv = static_cast<std::size_t>(mesh.vertex_count());

  ViewGradient out;
  ScreenAccumulator acc;
  if (want_gradient) {
    acc.g.assign(nv, Vector2d::Zero());
    acc.gn.assign(nv, Vector3d::Zero());
  }

  for (int y = 0; y < res; ++y) {
    for (int x = 0; x < res; ++x) {
      const Eigen::Index pix = static_cast<Eigen::Index>(y) * res + x;
      const double alpha_t = target.alpha.at(pix);
      const Vector3d normal_t = alpha_t * target.normal.rgb(pix);
      const std::size_t upix = static_cast<std::size_t>(pix);
      if (g.band_contour[upix] < 0 && g.hit_face[upix] < 0 && alpha_t == 0) continue;

      const PixelSample s = sample_pixel(g, x, y);
      if (!s.band) {
        Vector3d n = Vector3d::Zero();
        double a = 0;
        NormalEval ne;
        if (s.near.found()) {
          ne = surface_normal(sh, mesh, s.near);
          n = ne.n;
          a = 1;
        }
        const Vector3d rn = n - normal_t;
        const double ra = a - alpha_t;
        out.normal_sum += rn.squaredNorm();
        out.alpha_sum += ra * ra;
        if (want_gradient && s.near.found()) {
          acc.surface_normal_backward(sh, g, s.near, 2 * weights.w_normal * scale * rn);
        }
        continue;
      }

      const Contour& c = g.contours[static_cast<std::size_t>(s.contour)];
      const Vector2d p(x + 0.5, y + 0.5);
      NormalEval near_e = s.inside ? surface_normal(sh, mesh, s.near) : edge_normal(sh, g, c, p);
      NormalEval far_e;
      double far_a = 0;
      if (s.behind.found()) {
        far_e = surface_normal(sh, mesh, s.behind);
        far_a = 1;
      }
      const double cov = s.coverage;
      const Vector3d n = cov * near_e.n + (1 - cov) * far_e.n;
      const double a = cov + (1 - cov) * far_a;
      const Vector3d rn = n - normal_t;
      const double ra = a - alpha_t;
      out.normal_sum += rn.squaredNorm();
      out.alpha_sum += ra * ra;
      if (!want_gradient) continue;

      const Vector3d gN = 2 * weights.w_normal * scale * rn;
      const double gA = 2 * weights.w_alpha * scale * ra;

      // coverage -> distance to the contour -> projected endpoints
      const double g_cov = gN.dot(near_e.n - far_e.n) + gA * (1 - far_a);
      const double g_dist = (s.inside ? 1.0 : -1.0) * g_cov;
      const Vector2d A = g.xy[c.a], B = g.xy[c.b], D = B - A;
      const double len2 = D.squaredNorm();
      const double t_raw = len2 > 0 ? (p - A).dot(D) / len2 : 0.0;
      if (len2 > 0 && t_raw > 0 && t_raw < 1) {
        const double len = std::sqrt(len2);
        const Vector2d u = p - A;
        const double cr = D.x() * u.y() - D.y() * u.x();
        const double sgn = cr > 0 ? 1.0 : (cr < 0 ? -1.0 : 0.0);
        const double dist = std::abs(cr) / len;
        const Vector2d dcr_dB(u.y(), -u.x());
        const Vector2d dcr_dA(B.y() - p.y(), p.x() - B.x());
        const Vector2d dlen_dB = D / len;
        acc.g[c.b] += g_dist * (sgn * dcr_dB / len - dist * dlen_dB / len);
        acc.g[c.a] += g_dist * (sgn * dcr_dA / len + dist * dlen_dB / len);
      } else if (s.distance > 0) {
        const int end = (len2 > 0 && t_raw >= 1) ? c.b : c.a;
        acc.g[end] += g_dist * (g.xy[end] - p) / s.distance;
      }

      // near surface
      const Vector3d g_near = cov * gN;
      if (s.inside) {
        acc.surface_normal_backward(sh, g, s.near, g_near);
      } else if (near_e.len > 0) {
        const Vector3d gm = (g_near - near_e.n * near_e.n.dot(g_near)) / near_e.len;
        acc.contour_normal_backward(sh, g, c, p, gm);
      }
      if (s.behind.found()) acc.surface_normal_backward(sh, g, s.behind, (1 - cov) * gN);
    }
  }

  out.normal_sum *= weights.w_normal * scale;
  out.alpha_sum *= weights.w_alpha * scale;
  if (want_gradient) {
    out.grad_pos.setZero(static_cast<Eigen::Index>(nv), 3);
    out.grad_normal.setZero(static_cast<Eigen::Index>(nv), 3);
    for (std::size_t v = 0; v < nv; ++v) {
      const Vector3d w = acc.g[v].x() * g.proj.dx + acc.g[v].y() * g.proj.dy;
      out.grad_pos.row(static_cast<Eigen::Index>(v)) = w.transpose();
      out.grad_normal.row(static_cast<Eigen::Index>(v)) = acc.gn[v].transpose();
    }
  }
  return out;
}

}  // namespace

LossResult loss_and_gradients(const Mesh& mesh, const MultiviewSet& targets, const LossWeights& weights,
                              int threads, bool want_gradient) {
  weights.check();
  targets.check();
  const Shading sh = prepare_shading(mesh);
  const auto nv = mesh.vertex_count();
  const auto pixels = static_cast<double>(targets.views.front().camera.resolution) *
                      targets.views.front().camera.resolution;
  const double scale = 1.0 / (pixels * static_cast<double>(targets.size()));

  std::vector<ViewGradient> per_view(targets.size());
  parallel_for(targets.size(), threads, [&](std::size_t i) {
    per_view[i] = view_loss(sh, targets.views[i], weights, scale, want_gradient);
  });

  LossResult result;
  RowPoints<double> grad_pos = RowPoints<double>::Zero(nv, 3);
  RowPoints<double> grad_normal = RowPoints<double>::Zero(nv, 3);
  for (const auto& v : per_view) {
    result.normal_term += v.normal_sum;
    result.alpha_term += v.alpha_sum;
    if (want_gradient) {
      grad_pos += v.grad_pos;
      grad_normal += v.grad_normal;
    }
  }

  const AdjacencyInfo adj = build_adjacency(mesh);
  RowPoints<double> lap_grad;
  result.smooth_term = weights.lambda_smooth * laplacian_energy(mesh, adj, want_gradient ? &lap_grad : nullptr);
  result.loss = result.normal_term + result.alpha_term + result.smooth_term;
  if (!want_gradient) return result;

  // unit vertex normals -> raw area-weighted sums -> face cross products
  std::vector<Vector3d> g_sum(static_cast<std::size_t>(nv), Vector3d::Zero());
  for (Eigen::Index v = 0; v < nv; ++v) {
    const auto vi = static_cast<std::size_t>(v);
    const double len = sh.normal_sum[vi].norm();
    if (!(len > 0)) continue;
    const Vector3d gnv = grad_normal.row(v).transpose();
    const Vector3d& n = sh.vertex_normal[vi];
    g_sum[vi] = (gnv - n * n.dot(gnv)) / len;
  }
  for (Eigen::Index f = 0; f < mesh.face_count(); ++f) {
    const int i0 = mesh.faces(f, 0), i1 = mesh.faces(f, 1), i2 = mesh.faces(f, 2);
    const Vector3d gf = g_sum[i0] + g_sum[i1] + g_sum[i2];
    if (gf.isZero(0)) continue;
    const Vector3d e1 = mesh.vertex(i1) - mesh.vertex(i0);
    const Vector3d e2 = mesh.vertex(i2) - mesh.vertex(i0);
    const Vector3d d1 = e2.cross(gf);
    const Vector3d d2 = gf.cross(e1);
    grad_pos.row(i1) += d1.transpose();
    grad_pos.row(i2) += d2.transpose();
    grad_pos.row(i0) -= (d1 + d2).transpose();
  }

  result.grad = grad_pos + weights.lambda_smooth * lap_grad;
  for (Eigen::Index v = 0; v < nv; ++v) {
    if (mesh.is_frozen(v)) result.grad.row(v).setZero();
  }
  return result;
}

MultiviewSet downsample(const MultiviewSet& views, int resolution) {
  MultiviewSet out;
  for (const auto& v : views.views) {
    const int res = v.camera.resolution;
    if (resolution == res) {
      out.views.push_back(v);
      continue;
    }
    if (resolution <= 0 || res % resolution != 0) {
      throw ContractError("cannot downsample " + std::to_string(res) + " to " + std::to_string(resolution));
    }
    const int f = res / resolution;
    const double inv = 1.0 / (f * f);
    ViewRecord r;
    r.camera = v.camera.with_resolution(resolution);
    r.color = ImageD(resolution, resolution, 3);
    r.normal = ImageD(resolution, resolution, 3);
    r.alpha = ImageD(resolution, resolution, 1);
    for (int y = 0; y < resolution; ++y) {
      for (int x = 0; x < resolution; ++x) {
        double a = 0;
        Vector3d n = Vector3d::Zero(), c = Vector3d::Zero();
        for (int dy = 0; dy < f; ++dy) {
          for (int dx = 0; dx < f; ++dx) {
            const Eigen::Index src = static_cast<Eigen::Index>(y * f + dy) * res + (x * f + dx);
            const double sa = v.alpha.at(src);
            a += sa;
            n += sa * v.normal.rgb(src);
            c += v.color.rgb(src);
          }
        }
        const Eigen::Index dst = static_cast<Eigen::Index>(y) * resolution + x;
        r.alpha.at(dst) = a * inv;
        r.normal.set_rgb(dst, a > 0 ? Vector3d(n / a) : Vector3d::Zero());
        r.color.set_rgb(dst, c * inv);
      }
    }
    out.views.push_back(std::move(r));
  }
  return out;
}

}  // namespace meshlift
