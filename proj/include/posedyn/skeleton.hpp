#pragma once

#include <string>
#include <vector>

#include "posedyn/math.hpp"

namespace posedyn {

enum class JointKind { FreeRoot, Ball, Hinge };

struct Joint {
  std::string name;
  int parent = -1;  // -1 for the root
  JointKind kind = JointKind::Ball;
  Eigen::Vector3d axis = Eigen::Vector3d::UnitZ();  // hinge only, unit, child frame
  Eigen::Vector3d offset = Eigen::Vector3d::Zero();  // from parent joint, parent frame, meters
  Eigen::VectorXd lower_limit;  // radians, one per dof (empty for the root)
  Eigen::VectorXd upper_limit;

  int dof() const {
    switch (kind) {
      case JointKind::FreeRoot: return 6;
      case JointKind::Ball: return 3;
      case JointKind::Hinge: return 1;
    }
    return 0;
  }
};

/// Topologically sorted joint hierarchy. Joint 0 is the single free root;
/// every other joint is a ball (3 dof, exponential-map coordinates) or a
/// hinge (1 dof about a fixed axis).
struct Skeleton {
  std::vector<Joint> joints;

  int joint_count() const { return static_cast<int>(joints.size()); }
  int non_root_dof() const;
  int total_dof() const { return 6 + non_root_dof(); }
  /// Offset of joint j's coordinates inside the non-root angle vector.
  int angle_offset(int j) const;
  /// Throws InvalidInputError when any structural invariant is violated.
  void validate() const;
};

/// Generalized configuration: root translation, root orientation (unit
/// quaternion), and exponential-map angles for every non-root dof.
struct Pose {
  Eigen::Vector3d root_translation = Eigen::Vector3d::Zero();
  Eigen::Quaterniond root_orientation = Eigen::Quaterniond::Identity();
  Eigen::VectorXd joint_angles;

  void validate(const Skeleton& skeleton) const;
};

/// Generalized velocities. Root rates are world-frame; joint rates are one
/// scalar per non-root dof.
struct Velocities {
  Eigen::Vector3d root_linear = Eigen::Vector3d::Zero();
  Eigen::Vector3d root_angular = Eigen::Vector3d::Zero();
  Eigen::VectorXd joint_rates;

  static Velocities zero(const Skeleton& skeleton);
  Eigen::VectorXd to_vector() const;
  static Velocities from_vector(const Skeleton& skeleton, const Eigen::VectorXd& v);
};

struct FkResult {
  std::vector<Eigen::Vector3d> positions;       // world joint positions, J entries
  std::vector<Eigen::Quaterniond> orientations; // world joint orientations

  Eigen::MatrixXd positions_matrix() const;  // J x 3
};

/// World joint positions and orientations by composing parent transforms
/// root-to-leaf. The root joint position equals the root translation.
FkResult forward_kinematics(const Skeleton& skeleton, const Pose& pose);

/// The local (parent-relative) rotation of each joint, root included.
std::vector<Eigen::Quaterniond> joint_local_rotations(const Skeleton& skeleton, const Pose& pose);

/// Finite-difference velocities between two poses. Root angular rate comes
/// from the quaternion difference via the log map (world frame).
Velocities finite_difference_velocities(const Skeleton& skeleton, const Pose& prev,
                                        const Pose& next, double dt);

/// Rotates row vectors by the inverse of the root's heading (yaw about the
/// world up axis). Output is invariant to the character's heading and root
/// position applied consistently to world-frame inputs.
Eigen::MatrixX3d to_root_frame(const Pose& pose, const Eigen::MatrixX3d& vectors);

/// Pose tangent layout: [root translation (3), root rotation left-tangent (3),
/// joint angles (non-root dof)]. apply_pose_delta composes the rotation block
/// as q <- exp(delta) * q and adds the rest.
Pose apply_pose_delta(const Skeleton& skeleton, const Pose& pose, const Eigen::VectorXd& delta);

/// Tangent difference a (-) b: [ta - tb, log(Qa * Qb^-1), angles_a - angles_b].
Eigen::VectorXd pose_difference(const Skeleton& skeleton, const Pose& a, const Pose& b);

/// Jacobian of world joint positions with respect to the pose tangent,
/// (3J) x (6 + non-root dof), rows grouped per joint. Ball-joint columns use
/// the exact exponential-map Jacobian so the matrix is the true derivative
/// with respect to the stored coordinates.
Eigen::MatrixXd fk_position_jacobian(const Skeleton& skeleton, const Pose& pose,
                                     const FkResult& fk);

/// Clamp non-root angles to the skeleton's per-dof limits.
Eigen::VectorXd clamp_to_limits(const Skeleton& skeleton, const Eigen::VectorXd& angles);

}  // namespace posedyn
