#include "posedyn/simulator.hpp"

#include <cmath>

namespace posedyn {

SimState SimState::rest(const CharacterModel& character, const Pose& pose) {
  SimState s;
  s.pose = pose;
  s.velocities = Velocities::zero(character.skeleton);
  return s;
}

void Action::validate(const CharacterModel& character, const SceneConfig& scene) const {
  const int nd = character.skeleton.non_root_dof();
  if (u.size() != nd) throw InvalidInputError("action: PD target length mismatch");
  if (lambda_p.size() != scene.substeps || lambda_d.size() != scene.substeps) {
    throw InvalidInputError("action: need " + std::to_string(scene.substeps) +
                            " gain scales per sequence");
  }
  if ((lambda_p.array() <= 0.0).any() || (lambda_d.array() <= 0.0).any()) {
    throw InvalidInputError("action: gain scales must be positive");
  }
  if ((lambda_p.array() > scene.lambda_max).any() ||
      (lambda_d.array() > scene.lambda_max).any()) {
    throw InvalidInputError("action: gain scales exceed lambda_max");
  }
  if (!u.allFinite() || !eta.allFinite()) throw InvalidInputError("action: non-finite entries");
}

Eigen::VectorXd pd_torques(const Eigen::VectorXd& kp, const Eigen::VectorXd& kd,
                           const Eigen::VectorXd& u, const Eigen::VectorXd& q_nr,
                           const Eigen::VectorXd& qd_nr, const Eigen::VectorXd& torque_limit) {
  const auto n = kp.size();
  if (kd.size() != n || u.size() != n || q_nr.size() != n || qd_nr.size() != n ||
      torque_limit.size() != n) {
    throw InvalidInputError("pd_torques: dimension mismatch");
  }
  if ((kp.array() < 0.0).any() || (kd.array() < 0.0).any()) {
    throw InvalidInputError("pd_torques: gains must be non-negative");
  }
  Eigen::VectorXd tau =
      kp.cwiseProduct(u - q_nr) - kd.cwiseProduct(qd_nr);
  return tau.cwiseMax(-torque_limit).cwiseMin(torque_limit);
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> meta_pd_gains(const Eigen::VectorXd& kp_base,
                                                          const Eigen::VectorXd& kd_base,
                                                          double lambda_p, double lambda_d) {
  if (!(lambda_p > 0.0) || !(lambda_d > 0.0)) {
    throw InvalidInputError("meta_pd_gains: scales must be positive");
  }
  return {lambda_p * kp_base, lambda_d * kd_base};
}

namespace {

struct BodyKin {
  Eigen::Matrix3d rot;          // world orientation of the bone frame
  Eigen::Vector3d anchor;       // joint anchor, world
  Eigen::Vector3d com;          // COM, world
  Eigen::Vector3d omega;        // angular velocity, world
  Eigen::Vector3d v_anchor;     // velocity of the anchor point, world
  Eigen::Vector3d v_com;
  Eigen::Matrix3d axes;         // world axes of this joint's dofs (cols 0..dof-1)
};

std::vector<BodyKin> body_kinematics(const CharacterModel& character, const Pose& pose,
                                     const Velocities& vel) {
  const Skeleton& sk = character.skeleton;
  const int nb = sk.joint_count();
  std::vector<BodyKin> bk(nb);

  bk[0].rot = pose.root_orientation.toRotationMatrix();
  bk[0].anchor = pose.root_translation;
  bk[0].omega = vel.root_angular;
  bk[0].v_anchor = vel.root_linear;
  bk[0].axes.setZero();

  for (int b = 1; b < nb; ++b) {
    const Joint& joint = sk.joints[b];
    const BodyKin& par = bk[joint.parent];
    BodyKin& cur = bk[b];
    const int off = sk.angle_offset(b);

    Eigen::Matrix3d local;
    if (joint.kind == JointKind::Ball) {
      local = so3_exp(pose.joint_angles.segment<3>(off));
    } else {
      local = Eigen::AngleAxisd(pose.joint_angles(off), joint.axis).toRotationMatrix();
    }
    cur.rot = par.rot * local;
    const Eigen::Vector3d d = par.rot * joint.offset;
    cur.anchor = par.anchor + d;
    cur.v_anchor = par.v_anchor + par.omega.cross(d);

    Eigen::Vector3d wrel;
    if (joint.kind == JointKind::Ball) {
      cur.axes = cur.rot;  // child-frame angular velocity coordinates
      wrel = cur.rot * vel.joint_rates.segment<3>(off);
    } else {
      cur.axes.setZero();
      cur.axes.col(0) = cur.rot * joint.axis;
      wrel = cur.axes.col(0) * vel.joint_rates(off);
    }
    cur.omega = par.omega + wrel;
  }
  for (int b = 0; b < nb; ++b) {
    bk[b].com = bk[b].anchor + bk[b].rot * character.bones[b].com;
    bk[b].v_com = bk[b].v_anchor + bk[b].omega.cross(bk[b].rot * character.bones[b].com);
  }
  return bk;
}

using Matrix6d = Eigen::Matrix<double, 6, 6>;

/// Spatial inertia about the world origin, [angular; linear] ordering with
/// motion vectors [omega; velocity of the body point at the origin].
Matrix6d spatial_inertia(const BodyKin& kin, const BoneGeometry& bone) {
  const Eigen::Matrix3d iw = kin.rot * bone.inertia * kin.rot.transpose();
  const Eigen::Matrix3d cx = skew(kin.com);
  Matrix6d out;
  out.topLeftCorner<3, 3>() = iw - bone.mass * cx * cx;
  out.topRightCorner<3, 3>() = bone.mass * cx;
  out.bottomLeftCorner<3, 3>() = -bone.mass * cx;
  out.bottomRightCorner<3, 3>() = bone.mass * Eigen::Matrix3d::Identity();
  return out;
}

/// Motion subspace column [omega-part; velocity at the world origin].
Vector6d motion_column(const Eigen::Vector3d& axis, const Eigen::Vector3d& anchor) {
  Vector6d s;
  s.head<3>() = axis;
  s.tail<3>() = anchor.cross(axis);
  return s;
}

/// Columns of the root and joint dofs in a fixed layout:
/// [root linear 0..2, root angular 3..5, joints 6..].
void joint_motion_columns(const Skeleton& sk, const std::vector<BodyKin>& bk, int body,
                          std::vector<Vector6d>& cols) {
  cols.clear();
  if (body == 0) {
    for (int k = 0; k < 3; ++k) {
      Vector6d s = Vector6d::Zero();
      s(3 + k) = 1.0;
      cols.push_back(s);  // linear dof
    }
    for (int k = 0; k < 3; ++k) {
      cols.push_back(motion_column(Eigen::Vector3d::Unit(k), bk[0].anchor));
    }
    return;
  }
  const Joint& joint = sk.joints[body];
  for (int k = 0; k < joint.dof(); ++k) {
    cols.push_back(motion_column(bk[body].axes.col(k), bk[body].anchor));
  }
}

int dof_base(const Skeleton& sk, int body) {
  return body == 0 ? 0 : 6 + sk.angle_offset(body);
}

Eigen::MatrixXd mass_matrix(const CharacterModel& character, const std::vector<BodyKin>& bk) {
  const Skeleton& sk = character.skeleton;
  const int nb = sk.joint_count();
  const int n = sk.total_dof();

  // Composite spatial inertia of each body's subtree, world-origin coords.
  std::vector<Matrix6d> composite(nb);
  for (int b = 0; b < nb; ++b) composite[b] = spatial_inertia(bk[b], character.bones[b]);
  for (int b = nb - 1; b >= 1; --b) composite[sk.joints[b].parent] += composite[b];

  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
  std::vector<Vector6d> cols_j, cols_a;
  for (int b = 0; b < nb; ++b) {
    joint_motion_columns(sk, bk, b, cols_j);
    const int base_j = dof_base(sk, b);
    std::vector<Vector6d> f(cols_j.size());
    for (size_t k = 0; k < cols_j.size(); ++k) f[k] = composite[b] * cols_j[k];

    for (size_t k = 0; k < cols_j.size(); ++k) {
      for (size_t l = 0; l <= k; ++l) {
        m(base_j + k, base_j + l) = m(base_j + l, base_j + k) = cols_j[k].dot(f[l]);
      }
    }
    for (int a = (b == 0 ? -1 : sk.joints[b].parent); a >= 0;
         a = (a == 0 ? -1 : sk.joints[a].parent)) {
      joint_motion_columns(sk, bk, a, cols_a);
      const int base_a = dof_base(sk, a);
      for (size_t ka = 0; ka < cols_a.size(); ++ka) {
        for (size_t kj = 0; kj < cols_j.size(); ++kj) {
          m(base_a + ka, base_j + kj) = m(base_j + kj, base_a + ka) = cols_a[ka].dot(f[kj]);
        }
      }
    }
  }
  if (character.has_massless_bone()) {
    // Keep the matrix invertible when merged bones left dof rows empty.
    m.diagonal().array() += 1e-9 * std::max(1.0, m.trace());
  }
  return m;
}

/// Generalized bias force: C(q,v)v + g(q), by recursive Newton-Euler with
/// zero generalized acceleration.
Eigen::VectorXd bias_forces(const CharacterModel& character, const std::vector<BodyKin>& bk,
                            const Velocities& vel, const Eigen::Vector3d& gravity) {
  const Skeleton& sk = character.skeleton;
  const int nb = sk.joint_count();

  std::vector<Eigen::Vector3d> alpha(nb), a_anchor(nb), a_com(nb);
  alpha[0].setZero();
  a_anchor[0].setZero();
  for (int b = 1; b < nb; ++b) {
    const Joint& joint = sk.joints[b];
    const int p = joint.parent;
    const Eigen::Vector3d d = bk[b].anchor - bk[p].anchor;
    a_anchor[b] = a_anchor[p] + alpha[p].cross(d) + bk[p].omega.cross(bk[p].omega.cross(d));
    Eigen::Vector3d wrel;
    const int off = sk.angle_offset(b);
    if (joint.kind == JointKind::Ball) {
      wrel = bk[b].axes * vel.joint_rates.segment<3>(off);
    } else {
      wrel = bk[b].axes.col(0) * vel.joint_rates(off);
    }
    alpha[b] = alpha[p] + bk[p].omega.cross(wrel);
  }
  for (int b = 0; b < nb; ++b) {
    const Eigen::Vector3d r = bk[b].com - bk[b].anchor;
    a_com[b] = a_anchor[b] + alpha[b].cross(r) + bk[b].omega.cross(bk[b].omega.cross(r));
  }

  std::vector<Eigen::Vector3d> f(nb), n(nb);
  for (int b = 0; b < nb; ++b) {
    const BoneGeometry& bone = character.bones[b];
    const Eigen::Matrix3d iw = bk[b].rot * bone.inertia * bk[b].rot.transpose();
    const Eigen::Vector3d force = bone.mass * (a_com[b] - gravity);
    const Eigen::Vector3d torque = iw * alpha[b] + bk[b].omega.cross(iw * bk[b].omega);
    f[b] = force;
    n[b] = torque + (bk[b].com - bk[b].anchor).cross(force);
  }
  for (int b = nb - 1; b >= 1; --b) {
    const int p = sk.joints[b].parent;
    f[p] += f[b];
    n[p] += n[b] + (bk[b].anchor - bk[p].anchor).cross(f[b]);
  }

  Eigen::VectorXd bias = Eigen::VectorXd::Zero(sk.total_dof());
  bias.head<3>() = f[0];
  bias.segment<3>(3) = n[0];
  for (int b = 1; b < nb; ++b) {
    const int off = 6 + sk.angle_offset(b);
    for (int k = 0; k < sk.joints[b].dof(); ++k) {
      bias(off + k) = bk[b].axes.col(k).dot(n[b]);
    }
  }
  return bias;
}

/// Generalized force of a world-frame force applied at a world point on a body.
void apply_point_force(const Skeleton& sk, const std::vector<BodyKin>& bk, int body,
                       const Eigen::Vector3d& point, const Eigen::Vector3d& force,
                       Eigen::VectorXd& q_out) {
  q_out.head<3>() += force;
  q_out.segment<3>(3) += (point - bk[0].anchor).cross(force);
  for (int a = body; a != 0; a = sk.joints[a].parent) {
    const int off = 6 + sk.angle_offset(a);
    const Eigen::Vector3d torque = (point - bk[a].anchor).cross(force);
    for (int k = 0; k < sk.joints[a].dof(); ++k) {
      q_out(off + k) += bk[a].axes.col(k).dot(torque);
    }
  }
}

void accumulate_contact_forces(const CharacterModel& character, const SceneConfig& scene,
                               const std::vector<BodyKin>& bk, Eigen::VectorXd& q_out) {
  const ContactParams& cp = scene.contact;
  if (!cp.enabled) return;
  const Skeleton& sk = character.skeleton;
  for (int b = 0; b < sk.joint_count(); ++b) {
    const auto& hull = character.bones[b].hull;
    if (!hull) continue;
    for (const auto& v_local : hull->vertices) {
      const Eigen::Vector3d r = bk[b].rot * v_local;
      const Eigen::Vector3d w = bk[b].anchor + r;
      const double depth = cp.ground_height - w.z();
      if (depth <= 0.0) continue;
      const Eigen::Vector3d v_point = bk[b].v_anchor + bk[b].omega.cross(r);
      double fn = cp.kn * depth - cp.dn * v_point.z();
      if (fn <= 0.0) continue;
      Eigen::Vector3d ft(-cp.kt * v_point.x(), -cp.kt * v_point.y(), 0.0);
      const double ft_max = cp.mu * fn;
      const double ft_norm = ft.norm();
      if (ft_norm > ft_max) ft *= ft_max / ft_norm;
      apply_point_force(sk, bk, b, w, Eigen::Vector3d(ft.x(), ft.y(), fn), q_out);
    }
  }
}

void check_finite(const SimState& s) {
  if (!s.pose.root_translation.allFinite()) throw SimulationDivergedError("root translation");
  if (!s.pose.root_orientation.coeffs().allFinite()) {
    throw SimulationDivergedError("root orientation");
  }
  if (!s.pose.joint_angles.allFinite()) throw SimulationDivergedError("joint angles");
  if (!s.velocities.root_linear.allFinite() || !s.velocities.root_angular.allFinite()) {
    throw SimulationDivergedError("root velocity");
  }
  if (!s.velocities.joint_rates.allFinite()) throw SimulationDivergedError("joint rates");
}

}  // namespace

SimState substep(const CharacterModel& character, const SceneConfig& scene, const SimState& state,
                 const Eigen::VectorXd& tau, const Vector6d& eta, double h) {
  if (!(h > 0.0)) throw InvalidInputError("substep: h must be positive");
  const Skeleton& sk = character.skeleton;
  const int nd = sk.non_root_dof();
  if (tau.size() != nd) throw InvalidInputError("substep: torque length mismatch");

  SimState cur = state;
  if (scene.fix_root) {
    cur.velocities.root_linear.setZero();
    cur.velocities.root_angular.setZero();
  }

  const auto bk = body_kinematics(character, cur.pose, cur.velocities);
  const Eigen::MatrixXd m = mass_matrix(character, bk);
  const Eigen::VectorXd bias = bias_forces(character, bk, cur.velocities, scene.gravity);

  Eigen::VectorXd q_applied = Eigen::VectorXd::Zero(sk.total_dof());
  q_applied.tail(nd) = tau;
  q_applied.head<3>() += eta.head<3>();
  q_applied.segment<3>(3) += eta.tail<3>();
  accumulate_contact_forces(character, scene, bk, q_applied);

  const Eigen::VectorXd rhs = q_applied - bias;
  Eigen::VectorXd accel(sk.total_dof());
  if (scene.fix_root) {
    accel.head<6>().setZero();
    accel.tail(nd) = m.bottomRightCorner(nd, nd).ldlt().solve(rhs.tail(nd));
  } else {
    accel = m.ldlt().solve(rhs);
  }

  // Velocity update first, then positions with the midpoint velocity; exact
  // for ballistic motion and second-order for smooth forces.
  const Eigen::VectorXd v_old = cur.velocities.to_vector();
  const Eigen::VectorXd v_new = v_old + h * accel;
  const Eigen::VectorXd v_mid = 0.5 * (v_old + v_new);

  SimState next = cur;
  next.velocities = Velocities::from_vector(sk, v_new);
  next.pose.root_translation += h * v_mid.head<3>();
  next.pose.root_orientation =
      (quat_exp(h * v_mid.segment<3>(3)) * cur.pose.root_orientation).normalized();
  for (int b = 1; b < sk.joint_count(); ++b) {
    const Joint& joint = sk.joints[b];
    const int off = sk.angle_offset(b);
    if (joint.kind == JointKind::Ball) {
      const Eigen::Vector3d theta = cur.pose.joint_angles.segment<3>(off);
      const Eigen::Vector3d w = v_mid.segment<3>(6 + off);
      next.pose.joint_angles.segment<3>(off) = quat_log(quat_exp(theta) * quat_exp(h * w));
    } else {
      next.pose.joint_angles(off) += h * v_mid(6 + off);
    }
  }
  next.time = cur.time + h;
  next.substep_index = (cur.substep_index + 1) % scene.substeps;
  check_finite(next);
  return next;
}

SimState policy_step(const CharacterModel& character, const SceneConfig& scene,
                     const SimState& state, const Action& action) {
  action.validate(character, scene);
  const Vector6d eta_scaled = scene.residual_force_scale * action.eta;
  SimState cur = state;
  const double t0 = state.time;
  for (int j = 0; j < scene.substeps; ++j) {
    const auto [kp, kd] =
        meta_pd_gains(character.kp_base, character.kd_base, action.lambda_p(j),
                      action.lambda_d(j));
    const Eigen::VectorXd tau = pd_torques(kp, kd, action.u, cur.pose.joint_angles,
                                           cur.velocities.joint_rates, character.torque_limit);
    cur = substep(character, scene, cur, tau, eta_scaled, scene.substep_dt);
  }
  cur.time = t0 + scene.policy_dt();
  cur.substep_index = 0;
  return cur;
}

bool detect_fall(const SimState& state, const Pose& kinematic_pose) {
  return state.pose.root_translation.z() < kinematic_pose.root_translation.z() - 0.5;
}

Eigen::Vector3d total_linear_momentum(const CharacterModel& character, const SimState& state) {
  const auto bk = body_kinematics(character, state.pose, state.velocities);
  Eigen::Vector3d p = Eigen::Vector3d::Zero();
  for (int b = 0; b < character.skeleton.joint_count(); ++b) {
    p += character.bones[b].mass * bk[b].v_com;
  }
  return p;
}

std::vector<Eigen::Vector3d> world_hull_vertices(const CharacterModel& character,
                                                 const FkResult& fk, int bone) {
  std::vector<Eigen::Vector3d> out;
  const auto& hull = character.bones[bone].hull;
  if (!hull) return out;
  out.reserve(hull->vertices.size());
  for (const auto& v : hull->vertices) {
    out.push_back(fk.positions[bone] + fk.orientations[bone] * v);
  }
  return out;
}

}  // namespace posedyn
