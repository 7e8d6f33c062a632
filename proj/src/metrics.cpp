#include "meshlift/metrics.hpp"

#include <algorithm>
#include <array>
#include <limits>
#include <cmath>
#include <memory>
#include <numeric>
#include <random>

namespace meshlift {

using Eigen::Vector3d;

namespace {

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Closest point on triangle (a, b, c) to p.
Vector3d closest_on_triangle(const Vector3d& p, const Vector3d& a, const Vector3d& b, const Vector3d& c) {
  const Vector3d ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0 && d2 <= 0) return a;
  const Vector3d bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0 && d4 <= d3) return b;
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0 && d1 >= 0 && d3 <= 0) return a + (d1 / (d1 - d3)) * ab;
  const Vector3d cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0 && d5 <= d6) return c;
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0 && d2 >= 0 && d6 <= 0) return a + (d2 / (d2 - d6)) * ac;
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0) return b + ((d4 - d3) / ((d4 - d3) + (d5 - d6))) * (c - b);
  const double denom = 1.0 / (va + vb + vc);
  return a + ab * (vb * denom) + ac * (vc * denom);
}

}  // namespace

RowPoints<double> sample_surface(const Mesh& mesh, std::size_t count, std::uint64_t seed) {
  if (mesh.empty()) throw ContractError("cannot sample an empty mesh");
  check_indices(mesh);
  std::vector<double> cumulative(static_cast<std::size_t>(mesh.face_count()));
  double total = 0;
  for (Eigen::Index f = 0; f < mesh.face_count(); ++f) {
    total += face_area(mesh, f);
    cumulative[static_cast<std::size_t>(f)] = total;
  }
  if (!(total > 0)) throw ContractError("cannot sample a mesh with zero area");
  std::mt19937_64 rng(seed);
  RowPoints<double> out(static_cast<Eigen::Index>(count), 3);
  for (std::size_t i = 0; i < count; ++i) {
    const double u = uniform01(rng) * total;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    if (it == cumulative.end()) --it;
    const auto f = static_cast<Eigen::Index>(it - cumulative.begin());
    const double r1 = std::sqrt(uniform01(rng));
    const double r2 = uniform01(rng);
    const Vector3d a = mesh.vertex(mesh.faces(f, 0)), b = mesh.vertex(mesh.faces(f, 1)),
                   c = mesh.vertex(mesh.faces(f, 2));
    out.row(static_cast<Eigen::Index>(i)) = ((1 - r1) * a + r1 * (1 - r2) * b + r1 * r2 * c).transpose();
  }
  return out;
}

struct SurfaceDistance::Tree {
  struct Node {
    Eigen::AlignedBox3d box;
    int left = -1, right = -1;
    int begin = 0, end = 0;  // leaf range into `order`
  };
  std::vector<std::array<Vector3d, 3>> tris;
  std::vector<int> order;
  std::vector<Node> nodes;

  int build(int begin, int end) {
    Node node;
    for (int i = begin; i < end; ++i) {
      for (const auto& v : tris[order[i]]) node.box.extend(v);
    }
    node.begin = begin;
    node.end = end;
    const int id = static_cast<int>(nodes.size());
    nodes.push_back(node);
    if (end - begin <= 8) return id;
    Eigen::AlignedBox3d centroids;
    for (int i = begin; i < end; ++i) {
      const auto& t = tris[order[i]];
      centroids.extend(Vector3d((t[0] + t[1] + t[2]) / 3.0));
    }
    int axis = 0;
    centroids.sizes().maxCoeff(&axis);
    const int mid = (begin + end) / 2;
    std::nth_element(order.begin() + begin, order.begin() + mid, order.begin() + end, [&](int x, int y) {
      const double cx = tris[x][0][axis] + tris[x][1][axis] + tris[x][2][axis];
      const double cy = tris[y][0][axis] + tris[y][1][axis] + tris[y][2][axis];
      return cx != cy ? cx < cy : x < y;
    });
    const int l = build(begin, mid);
    const int r = build(mid, end);
    nodes[id].left = l;
    nodes[id].right = r;
    return id;
  }

  double query(const Vector3d& p) const {
    double best = std::numeric_limits<double>::infinity();
    std::vector<int> stack = {0};
    while (!stack.empty()) {
      const Node& n = nodes[stack.back()];
      stack.pop_back();
      if (n.box.squaredExteriorDistance(p) >= best) continue;
      if (n.left < 0) {
        for (int i = n.begin; i < n.end; ++i) {
          const auto& t = tris[order[i]];
          best = std::min(best, (closest_on_triangle(p, t[0], t[1], t[2]) - p).squaredNorm());
        }
        continue;
      }
      const double dl = nodes[n.left].box.squaredExteriorDistance(p);
      const double dr = nodes[n.right].box.squaredExteriorDistance(p);
      if (dl < dr) {
        stack.push_back(n.right);
        stack.push_back(n.left);
      } else {
        stack.push_back(n.left);
        stack.push_back(n.right);
      }
    }
    return std::sqrt(best);
  }
};

SurfaceDistance::SurfaceDistance(const Mesh& mesh) : tree_(std::make_unique<Tree>()) {
  if (mesh.empty()) throw ContractError("distance to an empty mesh");
  check_indices(mesh);
  for (Eigen::Index f = 0; f < mesh.face_count(); ++f) {
    tree_->tris.push_back({mesh.vertex(mesh.faces(f, 0)), mesh.vertex(mesh.faces(f, 1)),
                           mesh.vertex(mesh.faces(f, 2))});
  }
  tree_->order.resize(tree_->tris.size());
  std::iota(tree_->order.begin(), tree_->order.end(), 0);
  tree_->build(0, static_cast<int>(tree_->tris.size()));
}

SurfaceDistance::~SurfaceDistance() = default;
SurfaceDistance::SurfaceDistance(SurfaceDistance&&) noexcept = default;
SurfaceDistance& SurfaceDistance::operator=(SurfaceDistance&&) noexcept = default;

double SurfaceDistance::distance(const Vector3d& p) const { return tree_->query(p); }

ChamferResult chamfer(const Mesh& a, const Mesh& b, std::size_t samples, std::uint64_t seed, bool normalize) {
  if (a.empty() || b.empty()) throw ContractError("chamfer of an empty mesh");
  if (samples == 0) throw ContractError("chamfer needs at least one sample");
  ChamferResult result;
  result.normalized = normalize;
  Mesh na = a, nb = b;
  if (normalize) {
    Eigen::AlignedBox3d box = bounding_box(a);
    box.extend(bounding_box(b));
    const double side = box.sizes().maxCoeff();
    if (side > 0) result.scale = side;
    const Eigen::RowVector3d centre = box.center().transpose();
    na.positions = (a.positions.rowwise() - centre) / result.scale;
    nb.positions = (b.positions.rowwise() - centre) / result.scale;
  }
  auto one_way = [&](const Mesh& from, const Mesh& to) {
    const RowPoints<double> pts = sample_surface(from, samples, seed);
    const SurfaceDistance dist(to);
    double sum = 0;
    for (Eigen::Index i = 0; i < pts.rows(); ++i) sum += dist.distance(pts.row(i).transpose());
    return sum / static_cast<double>(samples);
  };
  result.value = 0.5 * (one_way(na, nb) + one_way(nb, na));
  result.raw = result.value * result.scale;
  return result;
}

std::vector<char> voxelize(const Mesh& mesh, const Eigen::AlignedBox3d& box, int grid) {
  const auto g = static_cast<std::size_t>(grid);
  std::vector<char> occ(g * g * g, 0);
  if (mesh.empty()) return occ;
  const Vector3d lo = box.min();
  const Vector3d cell = box.sizes() / grid;
  // column centres are nudged off the lattice so rays avoid shared edges
  const double jx = 1.234567e-7 * cell.x(), jy = 2.345671e-7 * cell.y();
  std::vector<std::vector<double>> hits(g * g);
  for (Eigen::Index f = 0; f < mesh.face_count(); ++f) {
    const Vector3d a = mesh.vertex(mesh.faces(f, 0)), b = mesh.vertex(mesh.faces(f, 1)),
                   c = mesh.vertex(mesh.faces(f, 2));
    const double xmin = std::min({a.x(), b.x(), c.x()}), xmax = std::max({a.x(), b.x(), c.x()});
    const double ymin = std::min({a.y(), b.y(), c.y()}), ymax = std::max({a.y(), b.y(), c.y()});
    const int i0 = std::max(0, static_cast<int>(std::floor((xmin - lo.x()) / cell.x() - 0.5)));
    const int i1 = std::min(grid - 1, static_cast<int>(std::ceil((xmax - lo.x()) / cell.x() - 0.5)));
    const int j0 = std::max(0, static_cast<int>(std::floor((ymin - lo.y()) / cell.y() - 0.5)));
    const int j1 = std::min(grid - 1, static_cast<int>(std::ceil((ymax - lo.y()) / cell.y() - 0.5)));
    const double det = (b.x() - a.x()) * (c.y() - a.y()) - (c.x() - a.x()) * (b.y() - a.y());
    if (det == 0) continue;
    for (int j = j0; j <= j1; ++j) {
      for (int i = i0; i <= i1; ++i) {
        const double px = lo.x() + (i + 0.5) * cell.x() + jx;
        const double py = lo.y() + (j + 0.5) * cell.y() + jy;
        const double u = ((px - a.x()) * (c.y() - a.y()) - (c.x() - a.x()) * (py - a.y())) / det;
        const double v = ((b.x() - a.x()) * (py - a.y()) - (px - a.x()) * (b.y() - a.y())) / det;
        if (u < 0 || v < 0 || u + v > 1) continue;
        hits[static_cast<std::size_t>(j) * g + i].push_back(a.z() + u * (b.z() - a.z()) + v * (c.z() - a.z()));
      }
    }
  }
  for (std::size_t col = 0; col < hits.size(); ++col) {
    auto& zs = hits[col];
    if (zs.size() < 2) continue;
    std::sort(zs.begin(), zs.end());
    std::size_t next = 0;
    for (std::size_t k = 0; k < g; ++k) {
      const double z = lo.z() + (static_cast<double>(k) + 0.5) * cell.z();
      while (next < zs.size() && zs[next] <= z) ++next;
      if (next % 2 == 1) occ[k * g * g + col] = 1;
    }
  }
  return occ;
}

double volume_iou(const Mesh& a, const Mesh& b, int grid) {
  if (a.empty() && b.empty()) throw ContractError("volume_iou of two empty meshes");
  if (grid < 1) throw ContractError("volume_iou grid must be positive");
  Eigen::AlignedBox3d box;
  if (!a.empty()) box.extend(bounding_box(a));
  if (!b.empty()) box.extend(bounding_box(b));
  // pad degenerate axes so every cell has positive size
  const Vector3d pad = (box.sizes().array() <= 0).select(Vector3d::Constant(1e-6), Vector3d::Zero());
  box.min() -= pad;
  box.max() += pad;
  const auto oa = voxelize(a, box, grid);
  const auto ob = voxelize(b, box, grid);
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < oa.size(); ++i) {
    inter += (oa[i] && ob[i]) ? 1 : 0;
    uni += (oa[i] || ob[i]) ? 1 : 0;
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

double psnr(const ImageD& img, const ImageD& ref, const ImageD* mask) {
  if (!img.same_shape(ref)) throw ContractError("psnr: image shapes differ");
  if (mask && (mask->width != img.width || mask->height != img.height)) throw ContractError("psnr: mask shape differs");
  double sum = 0;
  std::size_t n = 0;
  for (Eigen::Index p = 0; p < img.pixel_count(); ++p) {
    if (mask && !(mask->at(p) > 0.5)) continue;
    for (int k = 0; k < img.channels; ++k) {
      const double d = img.at(p, k) - ref.at(p, k);
      sum += d * d;
      ++n;
    }
  }
  if (n == 0) throw ContractError("psnr: mask selects no pixels");
  const double mse = sum / static_cast<double>(n);
  if (mse <= 0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

double ssim(const ImageD& img, const ImageD& ref) {
  if (!img.same_shape(ref)) throw ContractError("ssim: image shapes differ");
  constexpr int kWin = 11;
  constexpr double kSigma = 1.5;
  if (img.width < kWin || img.height < kWin) throw ContractError("ssim needs images of at least 11x11");
  std::array<double, kWin> w1{};
  double norm = 0;
  for (int i = 0; i < kWin; ++i) {
    const double d = i - kWin / 2;
    w1[i] = std::exp(-d * d / (2 * kSigma * kSigma));
    norm += w1[i];
  }
  for (double& w : w1) w /= norm;
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  const int ow = img.width - kWin + 1, oh = img.height - kWin + 1;

  double total = 0;
  for (int k = 0; k < img.channels; ++k) {
    // separable filtering of x, y, x^2, y^2, xy: rows first, then columns
    const int h = img.height;
    std::array<std::vector<double>, 5> rows;
    for (auto& r : rows) r.assign(static_cast<std::size_t>(ow) * h, 0.0);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < ow; ++x) {
        double s[5] = {0, 0, 0, 0, 0};
        for (int i = 0; i < kWin; ++i) {
          const double a = img(x + i, y, k), b = ref(x + i, y, k);
          s[0] += w1[i] * a;
          s[1] += w1[i] * b;
          s[2] += w1[i] * a * a;
          s[3] += w1[i] * b * b;
          s[4] += w1[i] * a * b;
        }
        for (int q = 0; q < 5; ++q) rows[q][static_cast<std::size_t>(y) * ow + x] = s[q];
      }
    }
    double channel = 0;
    for (int y = 0; y < oh; ++y) {
      for (int x = 0; x < ow; ++x) {
        double s[5] = {0, 0, 0, 0, 0};
        for (int i = 0; i < kWin; ++i) {
          for (int q = 0; q < 5; ++q) s[q] += w1[i] * rows[q][static_cast<std::size_t>(y + i) * ow + x];
        }
        const double mx = s[0], my = s[1];
        const double vx = s[2] - mx * mx, vy = s[3] - my * my, cxy = s[4] - mx * my;
        channel += ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
      }
    }
    total += channel / (static_cast<double>(ow) * oh);
  }
  return total / img.channels;
}

}  // namespace meshlift
