#include "posedyn/character.hpp"

#include <numeric>

namespace posedyn {

void SkinnedMesh::validate(const Skeleton& skeleton) const {
  if (vertices.rows() == 0) throw InvalidInputError("mesh: no vertices");
  if (weights.rows() != vertices.rows()) {
    throw InvalidInputError("mesh: weight row count does not match vertex count");
  }
  if (weights.cols() != skeleton.joint_count()) {
    throw InvalidInputError("mesh: weight column count does not match bone count");
  }
  for (int i = 0; i < weights.rows(); ++i) {
    if ((weights.row(i).array() < 0.0).any()) {
      throw InvalidInputError("mesh: negative skinning weight at vertex " + std::to_string(i));
    }
    if (std::abs(weights.row(i).sum() - 1.0) > 1e-6) {
      throw InvalidInputError("mesh: skinning weights of vertex " + std::to_string(i) +
                              " do not sum to 1");
    }
  }
}

double CharacterModel::total_mass() const {
  double m = 0.0;
  for (const auto& b : bones) m += b.mass;
  return m;
}

bool CharacterModel::has_massless_bone() const {
  for (const auto& b : bones) {
    if (b.massless_merged) return true;
  }
  return false;
}

std::vector<int> associate_vertices(const Eigen::MatrixXd& weights) {
  if (weights.rows() == 0 || weights.cols() == 0) {
    throw InvalidInputError("associate_vertices: empty weight matrix");
  }
  std::vector<int> assoc(weights.rows());
  for (int i = 0; i < weights.rows(); ++i) {
    int best = 0;
    for (int j = 1; j < weights.cols(); ++j) {
      if (weights(i, j) > weights(i, best)) best = j;  // strict: ties keep the lowest index
    }
    assoc[i] = best;
  }
  return assoc;
}

namespace {

/// Joint anchor positions in the rest pose (zero angles, root at origin).
std::vector<Eigen::Vector3d> rest_anchors(const Skeleton& skeleton) {
  std::vector<Eigen::Vector3d> anchors(skeleton.joint_count());
  anchors[0] = Eigen::Vector3d::Zero();
  for (int j = 1; j < skeleton.joint_count(); ++j) {
    anchors[j] = anchors[skeleton.joints[j].parent] + skeleton.joints[j].offset;
  }
  return anchors;
}

}  // namespace

std::vector<std::optional<ConvexHull>> build_bone_geometry(const SkinnedMesh& mesh,
                                                           const std::vector<int>& association,
                                                           const Skeleton& skeleton) {
  if (association.size() != static_cast<size_t>(mesh.vertices.rows())) {
    throw InvalidInputError("build_bone_geometry: association length mismatch");
  }
  const auto anchors = rest_anchors(skeleton);
  std::vector<std::vector<Eigen::Vector3d>> local(skeleton.joint_count());
  for (size_t i = 0; i < association.size(); ++i) {
    const int b = association[i];
    if (b < 0 || b >= skeleton.joint_count()) {
      throw InvalidInputError("build_bone_geometry: association out of range");
    }
    local[b].push_back(mesh.vertices.row(i).transpose() - anchors[b]);
  }
  std::vector<std::optional<ConvexHull>> hulls(skeleton.joint_count());
  for (int b = 0; b < skeleton.joint_count(); ++b) {
    hulls[b] = build_convex_hull(local[b]);
  }
  return hulls;
}

CharacterModel build_character(const SkinnedMesh& mesh, const Skeleton& skeleton, double density,
                               const GainConfig& gains) {
  skeleton.validate();
  mesh.validate(skeleton);
  if (!(density > 0.0)) throw InvalidInputError("build_character: density must be positive");

  const auto assoc = associate_vertices(mesh.weights);
  const auto anchors = rest_anchors(skeleton);
  const int nb = skeleton.joint_count();

  std::vector<std::vector<Eigen::Vector3d>> local(nb);
  for (size_t i = 0; i < assoc.size(); ++i) {
    local[assoc[i]].push_back(mesh.vertices.row(i).transpose() - anchors[assoc[i]]);
  }

  CharacterModel model;
  model.skeleton = skeleton;
  model.density = density;
  model.bones.resize(nb);

  // Leaf-to-root: bones without a 3D hull hand their points to the parent.
  for (int b = nb - 1; b >= 0; --b) {
    auto hull = build_convex_hull(local[b]);
    if (!hull) {
      if (b == 0) {
        throw InvalidInputError("build_character: root bone has no 3D hull after merging");
      }
      const int p = skeleton.joints[b].parent;
      const Eigen::Vector3d shift = anchors[b] - anchors[p];
      for (const auto& v : local[b]) local[p].push_back(v + shift);
      model.bones[b].massless_merged = true;
      continue;
    }
    model.bones[b].hull = std::move(hull);
    const MassProperties mp = compute_mass_properties(*model.bones[b].hull, density);
    model.bones[b].mass = mp.mass;
    model.bones[b].com = mp.com;
    model.bones[b].inertia = mp.inertia;
  }

  for (int b = 0; b < nb; ++b) {
    if (!model.bones[b].massless_merged && !(model.bones[b].mass > 0.0)) {
      throw InvalidInputError("build_character: bone " + skeleton.joints[b].name +
                              " has zero mass");
    }
  }

  // Subtree masses drive the default gains: heavier chains get stiffer PD.
  std::vector<double> subtree(nb, 0.0);
  for (int b = nb - 1; b >= 0; --b) {
    subtree[b] += model.bones[b].mass;
    if (b > 0) subtree[skeleton.joints[b].parent] += subtree[b];
  }

  const int nd = skeleton.non_root_dof();
  model.kp_base.resize(nd);
  model.kd_base.resize(nd);
  model.torque_limit = Eigen::VectorXd::Constant(nd, gains.torque_limit);
  for (int j = 1; j < nb; ++j) {
    const int off = skeleton.angle_offset(j);
    for (int k = 0; k < skeleton.joints[j].dof(); ++k) {
      model.kp_base(off + k) = gains.kp_per_subtree_kg * std::max(subtree[j], 1e-6);
      model.kd_base(off + k) = gains.kd_ratio * model.kp_base(off + k);
    }
  }
  if (gains.kp_override) {
    if (gains.kp_override->size() != nd) throw InvalidInputError("gains: kp override length");
    model.kp_base = *gains.kp_override;
  }
  if (gains.kd_override) {
    if (gains.kd_override->size() != nd) throw InvalidInputError("gains: kd override length");
    model.kd_base = *gains.kd_override;
  }
  if (gains.torque_limit_override) {
    if (gains.torque_limit_override->size() != nd) {
      throw InvalidInputError("gains: torque limit override length");
    }
    model.torque_limit = *gains.torque_limit_override;
  }
  return model;
}

}  // namespace posedyn
