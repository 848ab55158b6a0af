#include "posedyn/camera.hpp"

namespace posedyn {

void Camera::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw InvalidInputError("camera: focal lengths must be positive");
  if ((rotation * rotation.transpose() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() >
      1e-9) {
    throw InvalidInputError("camera: extrinsic rotation is not orthonormal");
  }
}

Camera look_at_camera(const Eigen::Vector3d& eye, const Eigen::Vector3d& target,
                      const Eigen::Vector3d& up, double fx, double fy, double cx, double cy) {
  Camera cam;
  cam.fx = fx;
  cam.fy = fy;
  cam.cx = cx;
  cam.cy = cy;
  const Eigen::Vector3d forward = (target - eye).normalized();  // camera +z
  Eigen::Vector3d right = forward.cross(up).normalized();       // camera +x
  const Eigen::Vector3d down = forward.cross(right);            // camera +y (image down)
  Eigen::Matrix3d cam_to_world;
  cam_to_world.col(0) = right;
  cam_to_world.col(1) = down;
  cam_to_world.col(2) = forward;
  cam.rotation = cam_to_world.transpose();
  cam.translation = -cam.rotation * eye;
  return cam;
}

void Keypoints2D::validate(int joint_count) const {
  if (positions.rows() != joint_count || confidence.size() != joint_count) {
    throw InvalidInputError("keypoints: row count does not match joint count");
  }
  if ((confidence.array() < 0.0).any() || (confidence.array() > 1.0).any()) {
    throw InvalidInputError("keypoints: confidences must lie in [0, 1]");
  }
}

Eigen::MatrixX2d project(const Camera& camera, const Eigen::MatrixX3d& points) {
  Eigen::MatrixX2d out(points.rows(), 2);
  for (int j = 0; j < points.rows(); ++j) {
    const Eigen::Vector3d p = camera.to_camera(points.row(j).transpose());
    if (!(p.z() > 0.0)) throw DegenerateProjectionError(j, p.z());
    out(j, 0) = camera.fx * p.x() / p.z() + camera.cx;
    out(j, 1) = camera.fy * p.y() / p.z() + camera.cy;
  }
  return out;
}

double reprojection_loss(const Camera& camera, const Eigen::MatrixX3d& points,
                         const Keypoints2D& keypoints) {
  keypoints.validate(static_cast<int>(points.rows()));
  const Eigen::MatrixX2d proj = project(camera, points);
  double loss = 0.0;
  for (int j = 0; j < points.rows(); ++j) {
    loss += (proj.row(j) - keypoints.positions.row(j)).squaredNorm() * keypoints.confidence(j);
  }
  return loss;
}

namespace {

// 2x3 Jacobian of the pixel coordinates with respect to camera-frame coords.
Eigen::Matrix<double, 2, 3> pixel_jacobian(const Camera& cam, const Eigen::Vector3d& p) {
  Eigen::Matrix<double, 2, 3> jac;
  const double iz = 1.0 / p.z();
  jac << cam.fx * iz, 0.0, -cam.fx * p.x() * iz * iz,
         0.0, cam.fy * iz, -cam.fy * p.y() * iz * iz;
  return jac;
}

}  // namespace

Eigen::MatrixX3d reprojection_gradient(const Camera& camera, const Eigen::MatrixX3d& points,
                                       const Keypoints2D& keypoints) {
  keypoints.validate(static_cast<int>(points.rows()));
  Eigen::MatrixX3d grad(points.rows(), 3);
  for (int j = 0; j < points.rows(); ++j) {
    const Eigen::Vector3d p = camera.to_camera(points.row(j).transpose());
    if (!(p.z() > 0.0)) throw DegenerateProjectionError(j, p.z());
    Eigen::Vector2d residual(camera.fx * p.x() / p.z() + camera.cx - keypoints.positions(j, 0),
                             camera.fy * p.y() / p.z() + camera.cy - keypoints.positions(j, 1));
    const Eigen::Vector3d g_cam =
        2.0 * keypoints.confidence(j) * pixel_jacobian(camera, p).transpose() * residual;
    grad.row(j) = (camera.rotation.transpose() * g_cam).transpose();
  }
  return grad;
}

std::vector<Eigen::Matrix3d> reprojection_gradient_jacobian(const Camera& camera,
                                                            const Eigen::MatrixX3d& points,
                                                            const Keypoints2D& keypoints) {
  keypoints.validate(static_cast<int>(points.rows()));
  std::vector<Eigen::Matrix3d> blocks(points.rows());
  for (int j = 0; j < points.rows(); ++j) {
    const Eigen::Vector3d p = camera.to_camera(points.row(j).transpose());
    if (!(p.z() > 0.0)) throw DegenerateProjectionError(j, p.z());
    const double iz = 1.0 / p.z();
    const double iz2 = iz * iz;
    const Eigen::Vector2d residual(
        camera.fx * p.x() * iz + camera.cx - keypoints.positions(j, 0),
        camera.fy * p.y() * iz + camera.cy - keypoints.positions(j, 1));
    const Eigen::Matrix<double, 2, 3> jac = pixel_jacobian(camera, p);

    // Hessians of the two pixel coordinates with respect to camera coords.
    Eigen::Matrix3d hu = Eigen::Matrix3d::Zero();
    hu(0, 2) = hu(2, 0) = -camera.fx * iz2;
    hu(2, 2) = 2.0 * camera.fx * p.x() * iz2 * iz;
    Eigen::Matrix3d hv = Eigen::Matrix3d::Zero();
    hv(1, 2) = hv(2, 1) = -camera.fy * iz2;
    hv(2, 2) = 2.0 * camera.fy * p.y() * iz2 * iz;

    const Eigen::Matrix3d cam_block =
        2.0 * keypoints.confidence(j) *
        (jac.transpose() * jac + residual(0) * hu + residual(1) * hv);
    blocks[j] = camera.rotation.transpose() * cam_block * camera.rotation;
  }
  return blocks;
}

}  // namespace posedyn
