#include "posedyn/hull.hpp"

#include <algorithm>
#include <limits>
#include <map>

#include "posedyn/errors.hpp"

namespace posedyn {

double ConvexHull::volume() const {
  double v = 0.0;
  for (const auto& f : faces) {
    v += vertices[f[0]].dot(vertices[f[1]].cross(vertices[f[2]]));
  }
  return v / 6.0;
}

double ConvexHull::volume_from_centroid() const {
  Eigen::Vector3d g = Eigen::Vector3d::Zero();
  for (const auto& v : vertices) g += v;
  g /= static_cast<double>(vertices.size());
  double v = 0.0;
  for (const auto& f : faces) {
    v += std::abs((vertices[f[0]] - g).dot((vertices[f[1]] - g).cross(vertices[f[2]] - g)));
  }
  return v / 6.0;
}

namespace {

struct Face {
  std::array<int, 3> v;
  Eigen::Vector3d normal;  // outward, unit
  double offset;           // plane: normal . x = offset
  bool alive = true;
};

Face make_face(int a, int b, int c, const std::vector<Eigen::Vector3d>& pts,
               const Eigen::Vector3d& interior) {
  Face f;
  f.v = {a, b, c};
  Eigen::Vector3d n = (pts[b] - pts[a]).cross(pts[c] - pts[a]);
  const double len = n.norm();
  if (len > 0.0) n /= len;
  if (n.dot(interior - pts[a]) > 0.0) {  // flip so the interior is below
    std::swap(f.v[1], f.v[2]);
    n = -n;
  }
  f.normal = n;
  f.offset = n.dot(pts[f.v[0]]);
  return f;
}

}  // namespace

std::optional<ConvexHull> build_convex_hull(const std::vector<Eigen::Vector3d>& points) {
  const int n = static_cast<int>(points.size());
  if (n < 4) return std::nullopt;

  Eigen::Vector3d lo = points[0], hi = points[0];
  for (const auto& p : points) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const double scale = std::max((hi - lo).norm(), 1e-12);
  const double eps = 1e-10 * scale;

  // Initial simplex: two extreme points, the farthest from their line, then
  // the farthest from that plane.
  int i0 = 0, i1 = 0;
  double best = -1.0;
  for (int i = 1; i < n; ++i) {
    const double d = (points[i] - points[0]).squaredNorm();
    if (d > best) {
      best = d;
      i1 = i;
    }
  }
  if (best <= eps * eps) return std::nullopt;
  i0 = 0;
  int i2 = -1;
  best = eps;
  const Eigen::Vector3d dir = (points[i1] - points[i0]).normalized();
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector3d r = points[i] - points[i0];
    const double d = (r - dir * dir.dot(r)).norm();
    if (d > best) {
      best = d;
      i2 = i;
    }
  }
  if (i2 < 0) return std::nullopt;  // collinear
  int i3 = -1;
  best = eps;
  const Eigen::Vector3d pn = (points[i1] - points[i0]).cross(points[i2] - points[i0]).normalized();
  for (int i = 0; i < n; ++i) {
    const double d = std::abs(pn.dot(points[i] - points[i0]));
    if (d > best) {
      best = d;
      i3 = i;
    }
  }
  if (i3 < 0) return std::nullopt;  // coplanar

  const Eigen::Vector3d interior =
      (points[i0] + points[i1] + points[i2] + points[i3]) / 4.0;
  std::vector<Face> faces;
  faces.push_back(make_face(i0, i1, i2, points, interior));
  faces.push_back(make_face(i0, i1, i3, points, interior));
  faces.push_back(make_face(i0, i2, i3, points, interior));
  faces.push_back(make_face(i1, i2, i3, points, interior));

  for (int i = 0; i < n; ++i) {
    if (i == i0 || i == i1 || i == i2 || i == i3) continue;
    // Faces the point can see.
    std::vector<int> visible;
    for (int f = 0; f < static_cast<int>(faces.size()); ++f) {
      if (!faces[f].alive) continue;
      if (faces[f].normal.dot(points[i]) - faces[f].offset > eps) visible.push_back(f);
    }
    if (visible.empty()) continue;  // interior point

    // Horizon: directed edges of visible faces whose twin face is hidden.
    std::map<std::pair<int, int>, int> edge_count;
    for (int f : visible) {
      const auto& v = faces[f].v;
      for (int e = 0; e < 3; ++e) {
        const int a = v[e], b = v[(e + 1) % 3];
        edge_count[{std::min(a, b), std::max(a, b)}] += 1;
      }
      faces[f].alive = false;
    }
    for (int f : visible) {
      const std::array<int, 3> v = faces[f].v;  // copy: push_back reallocates
      for (int e = 0; e < 3; ++e) {
        const int a = v[e], b = v[(e + 1) % 3];
        if (edge_count[{std::min(a, b), std::max(a, b)}] == 1) {
          faces.push_back(make_face(a, b, i, points, interior));
        }
      }
    }
  }

  // Compact: collect referenced vertices and remap.
  std::vector<int> remap(n, -1);
  ConvexHull hull;
  for (const auto& f : faces) {
    if (!f.alive) continue;
    std::array<int, 3> tri;
    for (int e = 0; e < 3; ++e) {
      int& m = remap[f.v[e]];
      if (m < 0) {
        m = static_cast<int>(hull.vertices.size());
        hull.vertices.push_back(points[f.v[e]]);
      }
      tri[e] = m;
    }
    hull.faces.push_back(tri);
  }
  if (hull.volume() <= 1e-9) return std::nullopt;
  return hull;
}

MassProperties compute_mass_properties(const ConvexHull& hull, double density) {
  if (!(density > 0.0)) throw InvalidInputError("mass properties: density must be positive");
  const double vol = hull.volume();
  if (vol <= 1e-9) throw InvalidInputError("mass properties: degenerate hull");

  double v6 = 0.0;                                   // 6 * volume
  Eigen::Vector3d first = Eigen::Vector3d::Zero();   // 24 * integral of x
  Eigen::Matrix3d second = Eigen::Matrix3d::Zero();  // 120 * integral of x x^T
  for (const auto& f : hull.faces) {
    const Eigen::Vector3d& a = hull.vertices[f[0]];
    const Eigen::Vector3d& b = hull.vertices[f[1]];
    const Eigen::Vector3d& c = hull.vertices[f[2]];
    const double det = a.dot(b.cross(c));
    const Eigen::Vector3d w = a + b + c;
    v6 += det;
    first += det * w;
    second += det * (a * a.transpose() + b * b.transpose() + c * c.transpose() +
                     w * w.transpose());
  }
  const double volume = v6 / 6.0;
  MassProperties out;
  out.mass = density * volume;
  out.com = (first / 24.0) / volume;
  const Eigen::Matrix3d moments = density * (second / 120.0);  // integral of rho x x^T
  const Eigen::Matrix3d inertia_origin =
      moments.trace() * Eigen::Matrix3d::Identity() - moments;
  // Shift to the COM (parallel axis).
  out.inertia = inertia_origin -
                out.mass * (out.com.squaredNorm() * Eigen::Matrix3d::Identity() -
                            out.com * out.com.transpose());
  return out;
}

}  // namespace posedyn
