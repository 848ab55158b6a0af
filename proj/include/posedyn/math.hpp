#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>
#include <cmath>

#include "posedyn/errors.hpp"

namespace posedyn {

using Vector6d = Eigen::Matrix<double, 6, 1>;

inline Eigen::Matrix3d skew(const Eigen::Vector3d& v) {
  Eigen::Matrix3d m;
  m << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return m;
}

/// Exponential map: rotation vector -> unit quaternion.
inline Eigen::Quaterniond quat_exp(const Eigen::Vector3d& v) {
  const double angle = v.norm();
  if (angle < 1e-12) {
    Eigen::Quaterniond q(1.0, 0.5 * v.x(), 0.5 * v.y(), 0.5 * v.z());
    q.normalize();
    return q;
  }
  const double half = 0.5 * angle;
  const double s = std::sin(half) / angle;
  return Eigen::Quaterniond(std::cos(half), s * v.x(), s * v.y(), s * v.z());
}

/// Log map: unit quaternion -> rotation vector with |v| <= pi.
inline Eigen::Vector3d quat_log(const Eigen::Quaterniond& q_in) {
  Eigen::Quaterniond q = q_in;
  if (q.w() < 0.0) q.coeffs() *= -1.0;
  const double vn = q.vec().norm();
  if (vn < 1e-12) return 2.0 * q.vec();
  const double angle = 2.0 * std::atan2(vn, q.w());
  return q.vec() * (angle / vn);
}

inline Eigen::Matrix3d so3_exp(const Eigen::Vector3d& v) { return quat_exp(v).toRotationMatrix(); }

/// Left Jacobian of the SO(3) exponential: exp(v + dv) ~ exp(Jl(v) dv) * exp(v).
inline Eigen::Matrix3d so3_left_jacobian(const Eigen::Vector3d& v) {
  const double t = v.norm();
  const Eigen::Matrix3d vx = skew(v);
  if (t < 1e-6) {
    return Eigen::Matrix3d::Identity() + 0.5 * vx + vx * vx / 6.0;
  }
  const double t2 = t * t;
  return Eigen::Matrix3d::Identity() + ((1.0 - std::cos(t)) / t2) * vx +
         ((t - std::sin(t)) / (t2 * t)) * (vx * vx);
}

inline Eigen::Matrix3d so3_left_jacobian_inv(const Eigen::Vector3d& v) {
  const double t = v.norm();
  const Eigen::Matrix3d vx = skew(v);
  if (t < 1e-6) {
    return Eigen::Matrix3d::Identity() - 0.5 * vx + vx * vx / 12.0;
  }
  const double t2 = t * t;
  const double coeff = 1.0 / t2 - (1.0 + std::cos(t)) / (2.0 * t * std::sin(t));
  return Eigen::Matrix3d::Identity() - 0.5 * vx + coeff * (vx * vx);
}

/// Right Jacobian: exp(v + dv) ~ exp(v) * exp(Jr(v) dv).
inline Eigen::Matrix3d so3_right_jacobian(const Eigen::Vector3d& v) {
  return so3_left_jacobian(-v);
}

/// Angle of the relative rotation o1^-1 * o2, in [0, pi]. Invariant to the
/// sign of either quaternion. Inputs must be unit within 1e-6.
inline double rotation_geodesic_angle(const Eigen::Quaterniond& o1, const Eigen::Quaterniond& o2) {
  if (std::abs(o1.norm() - 1.0) > 1e-6 || std::abs(o2.norm() - 1.0) > 1e-6) {
    throw InvalidInputError("rotation_geodesic_angle: non-unit quaternion input");
  }
  Eigen::Quaterniond rel = o1.conjugate() * o2;
  double w = std::abs(rel.w());
  if (w > 1.0) w = 1.0;
  return 2.0 * std::acos(w);
}

/// Heading: the yaw of the body x-axis about the world z (up) axis.
/// Near-vertical x-axis degenerates to heading 0.
inline double heading_angle(const Eigen::Quaterniond& q) {
  const Eigen::Vector3d d = q * Eigen::Vector3d::UnitX();
  const double nxy2 = d.x() * d.x() + d.y() * d.y();
  if (nxy2 < 1e-16) return 0.0;
  return std::atan2(d.y(), d.x());
}

inline Eigen::Quaterniond heading_quat(const Eigen::Quaterniond& q) {
  const double a = heading_angle(q);
  return Eigen::Quaterniond(Eigen::AngleAxisd(a, Eigen::Vector3d::UnitZ()));
}

inline Eigen::Matrix3d heading_rotation(const Eigen::Quaterniond& q) {
  return heading_quat(q).toRotationMatrix();
}

/// Gradient of heading_angle with respect to a left-tangent perturbation
/// of q, i.e. d/d(delta) heading(exp(delta) * q) at delta = 0.
inline Eigen::Vector3d heading_angle_gradient(const Eigen::Quaterniond& q) {
  const Eigen::Vector3d d = q * Eigen::Vector3d::UnitX();
  const double nxy2 = d.x() * d.x() + d.y() * d.y();
  if (nxy2 < 1e-16) return Eigen::Vector3d::Zero();
  return Eigen::Vector3d(-d.z() * d.x(), -d.z() * d.y(), nxy2) / nxy2;
}

inline bool all_finite(const Eigen::Ref<const Eigen::VectorXd>& v) {
  return v.allFinite();
}

}  // namespace posedyn
