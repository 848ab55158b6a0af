#pragma once

#include <array>
#include <optional>
#include <vector>

#include "posedyn/math.hpp"

namespace posedyn {

/// Watertight triangulated convex hull with outward-facing triangles.
struct ConvexHull {
  std::vector<Eigen::Vector3d> vertices;
  std::vector<std::array<int, 3>> faces;

  /// Signed-tetrahedra accumulation from the origin (divergence theorem).
  double volume() const;
  /// Independent route: unsigned tetrahedra fanned from the vertex centroid.
  double volume_from_centroid() const;
};

/// 3D convex hull of a point cloud, or nullopt when the points have no volume
/// (fewer than 4 points, or all coplanar/collinear).
std::optional<ConvexHull> build_convex_hull(const std::vector<Eigen::Vector3d>& points);

struct MassProperties {
  double mass = 0.0;
  Eigen::Vector3d com = Eigen::Vector3d::Zero();
  Eigen::Matrix3d inertia = Eigen::Matrix3d::Zero();  // about the COM
};

/// Exact polyhedral integrals at constant density. Throws InvalidInputError
/// on a degenerate hull (volume <= 1e-9 m^3).
MassProperties compute_mass_properties(const ConvexHull& hull, double density);

}  // namespace posedyn
