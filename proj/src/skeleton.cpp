#include "posedyn/skeleton.hpp"

#include <cmath>

namespace posedyn {

int Skeleton::non_root_dof() const {
  int n = 0;
  for (const auto& j : joints) {
    if (j.kind != JointKind::FreeRoot) n += j.dof();
  }
  return n;
}

int Skeleton::angle_offset(int j) const {
  int off = 0;
  for (int i = 1; i < j; ++i) off += joints[i].dof();
  return off;
}

void Skeleton::validate() const {
  if (joints.empty()) throw InvalidInputError("skeleton: no joints");
  int roots = 0;
  for (int i = 0; i < joint_count(); ++i) {
    const Joint& j = joints[i];
    if (j.kind == JointKind::FreeRoot) {
      ++roots;
      if (i != 0) throw InvalidInputError("skeleton: root must be joint 0");
      if (j.parent != -1) throw InvalidInputError("skeleton: root has a parent");
    } else {
      if (j.parent < 0 || j.parent >= i) {
        throw InvalidInputError("skeleton: joint " + j.name +
                                " parent index must be smaller than its own index");
      }
      const int d = j.dof();
      if (j.lower_limit.size() != d || j.upper_limit.size() != d) {
        throw InvalidInputError("skeleton: joint " + j.name + " needs " + std::to_string(d) +
                                " limit pairs");
      }
      if (j.kind == JointKind::Hinge && std::abs(j.axis.norm() - 1.0) > 1e-9) {
        throw InvalidInputError("skeleton: joint " + j.name + " hinge axis is not unit");
      }
    }
  }
  if (roots != 1) throw InvalidInputError("skeleton: exactly one root joint required");
}

void Pose::validate(const Skeleton& skeleton) const {
  if (std::abs(root_orientation.norm() - 1.0) > 1e-9) {
    throw InvalidInputError("pose: root orientation is not unit");
  }
  if (joint_angles.size() != skeleton.non_root_dof()) {
    throw InvalidInputError("pose: joint angle count " + std::to_string(joint_angles.size()) +
                            " does not match skeleton dof " +
                            std::to_string(skeleton.non_root_dof()));
  }
}

Velocities Velocities::zero(const Skeleton& skeleton) {
  Velocities v;
  v.joint_rates = Eigen::VectorXd::Zero(skeleton.non_root_dof());
  return v;
}

Eigen::VectorXd Velocities::to_vector() const {
  Eigen::VectorXd v(6 + joint_rates.size());
  v.head<3>() = root_linear;
  v.segment<3>(3) = root_angular;
  v.tail(joint_rates.size()) = joint_rates;
  return v;
}

Velocities Velocities::from_vector(const Skeleton& skeleton, const Eigen::VectorXd& v) {
  if (v.size() != skeleton.total_dof()) {
    throw InvalidInputError("velocities: vector length does not match skeleton dof");
  }
  Velocities out;
  out.root_linear = v.head<3>();
  out.root_angular = v.segment<3>(3);
  out.joint_rates = v.tail(skeleton.non_root_dof());
  return out;
}

Eigen::MatrixXd FkResult::positions_matrix() const {
  Eigen::MatrixXd m(positions.size(), 3);
  for (size_t i = 0; i < positions.size(); ++i) m.row(i) = positions[i].transpose();
  return m;
}

namespace {

Eigen::Quaterniond joint_rotation(const Joint& joint, const Eigen::Ref<const Eigen::VectorXd>& c) {
  switch (joint.kind) {
    case JointKind::Ball:
      return quat_exp(Eigen::Vector3d(c(0), c(1), c(2)));
    case JointKind::Hinge:
      return Eigen::Quaterniond(Eigen::AngleAxisd(c(0), joint.axis));
    case JointKind::FreeRoot:
      break;
  }
  return Eigen::Quaterniond::Identity();
}

}  // namespace

FkResult forward_kinematics(const Skeleton& skeleton, const Pose& pose) {
  pose.validate(skeleton);
  const int n = skeleton.joint_count();
  FkResult fk;
  fk.positions.resize(n);
  fk.orientations.resize(n);
  fk.positions[0] = pose.root_translation;
  fk.orientations[0] = pose.root_orientation;
  for (int j = 1; j < n; ++j) {
    const Joint& joint = skeleton.joints[j];
    const int p = joint.parent;
    const int off = skeleton.angle_offset(j);
    const Eigen::Quaterniond local =
        joint_rotation(joint, pose.joint_angles.segment(off, joint.dof()));
    fk.positions[j] = fk.positions[p] + fk.orientations[p] * joint.offset;
    fk.orientations[j] = fk.orientations[p] * local;
  }
  return fk;
}

std::vector<Eigen::Quaterniond> joint_local_rotations(const Skeleton& skeleton, const Pose& pose) {
  pose.validate(skeleton);
  std::vector<Eigen::Quaterniond> out(skeleton.joint_count());
  out[0] = pose.root_orientation;
  for (int j = 1; j < skeleton.joint_count(); ++j) {
    const Joint& joint = skeleton.joints[j];
    out[j] = joint_rotation(joint, pose.joint_angles.segment(skeleton.angle_offset(j), joint.dof()));
  }
  return out;
}

Velocities finite_difference_velocities(const Skeleton& skeleton, const Pose& prev,
                                        const Pose& next, double dt) {
  if (!(dt > 0.0)) throw InvalidInputError("finite_difference_velocities: dt must be positive");
  prev.validate(skeleton);
  next.validate(skeleton);
  Velocities v;
  v.root_linear = (next.root_translation - prev.root_translation) / dt;
  v.root_angular = quat_log(next.root_orientation * prev.root_orientation.conjugate()) / dt;
  v.joint_rates = (next.joint_angles - prev.joint_angles) / dt;
  return v;
}

Eigen::MatrixX3d to_root_frame(const Pose& pose, const Eigen::MatrixX3d& vectors) {
  const Eigen::Matrix3d inv_heading = heading_rotation(pose.root_orientation).transpose();
  return vectors * inv_heading.transpose();
}

Pose apply_pose_delta(const Skeleton& skeleton, const Pose& pose, const Eigen::VectorXd& delta) {
  if (delta.size() != skeleton.total_dof()) {
    throw InvalidInputError("apply_pose_delta: delta length does not match pose tangent dim");
  }
  Pose out = pose;
  out.root_translation += delta.head<3>();
  out.root_orientation = quat_exp(delta.segment<3>(3)) * pose.root_orientation;
  out.root_orientation.normalize();
  out.joint_angles += delta.tail(skeleton.non_root_dof());
  return out;
}

Eigen::VectorXd pose_difference(const Skeleton& skeleton, const Pose& a, const Pose& b) {
  Eigen::VectorXd d(skeleton.total_dof());
  d.head<3>() = a.root_translation - b.root_translation;
  d.segment<3>(3) = quat_log(a.root_orientation * b.root_orientation.conjugate());
  d.tail(skeleton.non_root_dof()) = a.joint_angles - b.joint_angles;
  return d;
}

Eigen::MatrixXd fk_position_jacobian(const Skeleton& skeleton, const Pose& pose,
                                     const FkResult& fk) {
  const int nj = skeleton.joint_count();
  const int nd = skeleton.total_dof();
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(3 * nj, nd);

  // Root translation moves every joint.
  for (int j = 0; j < nj; ++j) jac.block<3, 3>(3 * j, 0).setIdentity();

  // For each non-root dof, a world rotation about the joint anchor moves all
  // strictly descendant positions. Build per-joint world axis columns first.
  std::vector<Eigen::Matrix3d> axis_cols(nj);  // columns = world axes per dof
  for (int j = 1; j < nj; ++j) {
    const Joint& joint = skeleton.joints[j];
    const Eigen::Matrix3d parent_rot = fk.orientations[joint.parent].toRotationMatrix();
    if (joint.kind == JointKind::Ball) {
      const Eigen::Vector3d theta =
          pose.joint_angles.segment<3>(skeleton.angle_offset(j));
      axis_cols[j] = parent_rot * so3_left_jacobian(theta);
    } else {
      axis_cols[j].col(0) = parent_rot * joint.axis;
    }
  }

  // Walk each joint's ancestor chain.
  for (int j = 1; j < nj; ++j) {
    const Eigen::Vector3d pos_j = fk.positions[j];
    // Root rotation (left tangent): all joints rotate about the root anchor.
    jac.block<3, 3>(3 * j, 3) = -skew(pos_j - fk.positions[0]);
    for (int a = j; a != 0; a = skeleton.joints[a].parent) {
      const Joint& joint = skeleton.joints[a];
      const int off = 6 + skeleton.angle_offset(a);
      const Eigen::Vector3d lever = pos_j - fk.positions[a];
      for (int k = 0; k < joint.dof(); ++k) {
        jac.block<3, 1>(3 * j, off + k) = axis_cols[a].col(k).cross(lever);
      }
    }
  }
  return jac;
}

Eigen::VectorXd clamp_to_limits(const Skeleton& skeleton, const Eigen::VectorXd& angles) {
  if (angles.size() != skeleton.non_root_dof()) {
    throw InvalidInputError("clamp_to_limits: angle vector length mismatch");
  }
  Eigen::VectorXd out = angles;
  for (int j = 1; j < skeleton.joint_count(); ++j) {
    const Joint& joint = skeleton.joints[j];
    const int off = skeleton.angle_offset(j);
    for (int k = 0; k < joint.dof(); ++k) {
      out(off + k) = std::clamp(out(off + k), joint.lower_limit(k), joint.upper_limit(k));
    }
  }
  return out;
}

}  // namespace posedyn
