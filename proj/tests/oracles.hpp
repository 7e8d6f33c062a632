#pragma once

// Slow reference implementations used only to check the library.

#include <algorithm>
#include <limits>
#include <random>
#include <vector>

#include "meshlift/mesh.hpp"

namespace meshlift::testing {

inline double segment_distance(const Eigen::Vector3d& p, const Eigen::Vector3d& a, const Eigen::Vector3d& b) {
  const Eigen::Vector3d d = b - a;
  const double len2 = d.squaredNorm();
  const double t = len2 > 0 ? std::clamp((p - a).dot(d) / len2, 0.0, 1.0) : 0.0;
  return (a + t * d - p).norm();
}

/// Plane projection when it lands inside, otherwise the nearest edge.
inline double triangle_distance(const Eigen::Vector3d& p, const Eigen::Vector3d& a, const Eigen::Vector3d& b,
                                const Eigen::Vector3d& c) {
  const Eigen::Vector3d n = (b - a).cross(c - a);
  const double n2 = n.squaredNorm();
  if (n2 > 0) {
    const Eigen::Vector3d q = p - n * ((p - a).dot(n) / n2);
    const double wa = (b - q).cross(c - q).dot(n);
    const double wb = (c - q).cross(a - q).dot(n);
    const double wc = (a - q).cross(b - q).dot(n);
    if (wa >= 0 && wb >= 0 && wc >= 0) return (q - p).norm();
  }
  return std::min({segment_distance(p, a, b), segment_distance(p, b, c), segment_distance(p, c, a)});
}

inline double brute_force_distance(const Mesh& m, const Eigen::Vector3d& p) {
  double best = std::numeric_limits<double>::infinity();
  for (Eigen::Index f = 0; f < m.face_count(); ++f) {
    best = std::min(best, triangle_distance(p, m.vertex(m.faces(f, 0)), m.vertex(m.faces(f, 1)),
                                            m.vertex(m.faces(f, 2))));
  }
  return best;
}

/// Area-weighted face pick plus the square-root barycentric trick.
inline std::vector<Eigen::Vector3d> reference_samples(const Mesh& m, std::size_t n, unsigned seed) {
  std::vector<double> areas(m.face_count());
  for (Eigen::Index f = 0; f < m.face_count(); ++f) {
    areas[f] = (m.vertex(m.faces(f, 1)) - m.vertex(m.faces(f, 0)))
                   .cross(m.vertex(m.faces(f, 2)) - m.vertex(m.faces(f, 0)))
                   .norm();
  }
  std::mt19937 rng(seed);
  std::discrete_distribution<int> pick(areas.begin(), areas.end());
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<Eigen::Vector3d> out(n);
  for (auto& p : out) {
    const int f = pick(rng);
    const double r1 = std::sqrt(u(rng)), r2 = u(rng);
    p = (1 - r1) * m.vertex(m.faces(f, 0)) + r1 * (1 - r2) * m.vertex(m.faces(f, 1)) +
        r1 * r2 * m.vertex(m.faces(f, 2));
  }
  return out;
}

/// Unnormalised symmetric mean surface distance.
inline double brute_force_chamfer(const Mesh& a, const Mesh& b, std::size_t n, unsigned seed) {
  double ab = 0, ba = 0;
  for (const auto& p : reference_samples(a, n, seed)) ab += brute_force_distance(b, p);
  for (const auto& p : reference_samples(b, n, seed + 1)) ba += brute_force_distance(a, p);
  return 0.5 * (ab + ba) / double(n);
}

}  // namespace meshlift::testing
