#pragma once

#include <vector>

#include "posedyn/math.hpp"

namespace posedyn {

/// Calibrated pinhole camera, fixed per sequence. p_cam = rotation * p_world
/// + translation; the camera looks down its +z axis.
struct Camera {
  double fx = 500.0, fy = 500.0;
  double cx = 320.0, cy = 240.0;
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  void validate() const;
  Eigen::Vector3d to_camera(const Eigen::Vector3d& p_world) const {
    return rotation * p_world + translation;
  }
  /// Used to normalize pixel residuals; assumes the principal point sits at
  /// the image center.
  double image_diagonal() const { return 2.0 * std::sqrt(cx * cx + cy * cy); }
};

/// Camera placed at `eye` looking at `target`, `up` approximately up.
Camera look_at_camera(const Eigen::Vector3d& eye, const Eigen::Vector3d& target,
                      const Eigen::Vector3d& up, double fx, double fy, double cx, double cy);

/// Detected 2D joint locations with per-joint confidence in [0, 1].
struct Keypoints2D {
  Eigen::MatrixX2d positions;
  Eigen::VectorXd confidence;

  void validate(int joint_count) const;
};

/// Pinhole projection of world points, J x 2 pixels. Throws
/// DegenerateProjectionError naming the first joint at non-positive depth.
Eigen::MatrixX2d project(const Camera& camera, const Eigen::MatrixX3d& points);

/// Confidence-weighted squared pixel error between the projections of the
/// given 3D joints and the detected keypoints.
double reprojection_loss(const Camera& camera, const Eigen::MatrixX3d& points,
                         const Keypoints2D& keypoints);

/// Analytic gradient of reprojection_loss with respect to each 3D joint
/// position, world frame, J x 3.
Eigen::MatrixX3d reprojection_gradient(const Camera& camera, const Eigen::MatrixX3d& points,
                                       const Keypoints2D& keypoints);

/// Per-joint 3x3 blocks d(gradient_j)/d(point_j), world frame. The loss is a
/// per-joint sum, so cross blocks vanish.
std::vector<Eigen::Matrix3d> reprojection_gradient_jacobian(const Camera& camera,
                                                            const Eigen::MatrixX3d& points,
                                                            const Keypoints2D& keypoints);

}  // namespace posedyn
