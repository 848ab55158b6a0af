#pragma once

#include <optional>
#include <vector>

#include "posedyn/hull.hpp"
#include "posedyn/skeleton.hpp"

namespace posedyn {

/// Skinned mesh in the skeleton's rest pose (zero angles, root at origin).
struct SkinnedMesh {
  Eigen::MatrixX3d vertices;  // V x 3, meters
  Eigen::MatrixXd weights;    // V x B, rows non-negative, summing to 1

  void validate(const Skeleton& skeleton) const;
};

/// Per-bone simulation geometry and mass, in the bone's local frame at rest.
struct BoneGeometry {
  std::optional<ConvexHull> hull;  // absent only for massless-merged bones
  double mass = 0.0;
  Eigen::Vector3d com = Eigen::Vector3d::Zero();
  Eigen::Matrix3d inertia = Eigen::Matrix3d::Zero();  // about COM, bone frame
  bool massless_merged = false;
};

struct GainConfig {
  double kp_per_subtree_kg = 80.0;  // stiffness per kg of subtree mass
  double kd_ratio = 0.05;           // damping as a fraction of stiffness
  double torque_limit = 200.0;      // N*m per dof
  std::optional<Eigen::VectorXd> kp_override;
  std::optional<Eigen::VectorXd> kd_override;
  std::optional<Eigen::VectorXd> torque_limit_override;
};

/// Simulatable character: skeleton plus per-bone geometry, mass, inertia and
/// PD actuation parameters. Immutable after build_character.
struct CharacterModel {
  Skeleton skeleton;
  std::vector<BoneGeometry> bones;   // aligned with skeleton.joints
  Eigen::VectorXd kp_base, kd_base;  // per non-root dof
  Eigen::VectorXd torque_limit;     // per non-root dof
  double density = 1000.0;

  double total_mass() const;
  bool has_massless_bone() const;
};

/// Assign every vertex to the bone with the largest skinning weight; ties
/// break toward the lowest bone index.
std::vector<int> associate_vertices(const Eigen::MatrixXd& weights);

/// Convex hull of each bone's assigned vertices, expressed in the bone's
/// local frame at rest. nullopt marks bones with no 3D hull.
std::vector<std::optional<ConvexHull>> build_bone_geometry(const SkinnedMesh& mesh,
                                                           const std::vector<int>& association,
                                                           const Skeleton& skeleton);

/// Assemble association, hulls, mass properties and PD gains into a
/// validated model. Bones without a 3D hull merge their vertices into the
/// parent's hull and are flagged massless_merged.
CharacterModel build_character(const SkinnedMesh& mesh, const Skeleton& skeleton, double density,
                               const GainConfig& gains);

}  // namespace posedyn
