#include "posedyn/policy.hpp"

#include <cmath>

namespace posedyn {

namespace {

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }
double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

PolicyParams PolicyParams::create(const Skeleton& skeleton, const PolicyConfig& config,
                                  Rng& rng) {
  skeleton.validate();
  const int nj = skeleton.joint_count();
  const int nd = skeleton.non_root_dof();
  PolicyParams p;
  p.config = config;

  std::vector<int> refiner_sizes = {3 * nj};
  refiner_sizes.insert(refiner_sizes.end(), config.refiner_hidden.begin(),
                       config.refiner_hidden.end());
  refiner_sizes.push_back(6 + nd);
  p.refiner = MlpParams::create(refiner_sizes, rng, config.init_final_scale);

  const int fdim = feature_dim(skeleton);
  std::vector<int> control_sizes = {fdim};
  control_sizes.insert(control_sizes.end(), config.control_hidden.begin(),
                       config.control_hidden.end());
  control_sizes.push_back(p.action_dim(skeleton));
  p.control = MlpParams::create(control_sizes, rng, config.init_final_scale);

  std::vector<int> value_sizes = {fdim};
  value_sizes.insert(value_sizes.end(), config.value_hidden.begin(), config.value_hidden.end());
  value_sizes.push_back(1);
  p.value = MlpParams::create(value_sizes, rng, config.init_final_scale);

  p.z_norm = RunningNormalizer(3 * nj);
  p.feat_norm = RunningNormalizer(fdim);
  return p;
}

Eigen::VectorXd PolicyParams::flatten_policy() const {
  Eigen::VectorXd a = refiner.flatten(), b = control.flatten();
  Eigen::VectorXd out(a.size() + b.size());
  out << a, b;
  return out;
}

void PolicyParams::unflatten_policy(const Eigen::VectorXd& flat) {
  const int nr = refiner.parameter_count();
  refiner.unflatten(flat.head(nr));
  control.unflatten(flat.tail(control.parameter_count()));
}

// ---------------------------------------------------------------------------
// Refinement unit

Pose refine_pose(const PolicyParams& params, const Skeleton& skeleton, const Camera& camera,
                 const Pose& estimate, const Keypoints2D& keypoints, int iterations,
                 RefineCache* cache, bool* degenerate) {
  if (iterations < 0) throw InvalidInputError("refine_pose: negative iteration count");
  estimate.validate(skeleton);
  keypoints.validate(skeleton.joint_count());
  if (degenerate) *degenerate = false;
  if (cache) cache->iterations.clear();

  const int nj = skeleton.joint_count();
  const int nd = skeleton.non_root_dof();
  Pose pose = estimate;
  for (int i = 0; i < iterations; ++i) {
    RefineIterationCache it;
    it.pose_in = pose;
    it.fk = forward_kinematics(skeleton, pose);
    try {
      it.z_world = reprojection_gradient(camera, it.fk.positions_matrix(), keypoints);
    } catch (const DegenerateProjectionError&) {
      it.skipped = true;
      if (degenerate) *degenerate = true;
      if (cache) cache->iterations.push_back(std::move(it));
      continue;
    }
    it.heading = heading_angle(pose.root_orientation);
    const Eigen::Matrix3d rh =
        Eigen::AngleAxisd(it.heading, Eigen::Vector3d::UnitZ()).toRotationMatrix();
    it.z_root.resize(3 * nj);
    for (int j = 0; j < nj; ++j) {
      it.z_root.segment<3>(3 * j) = rh.transpose() * it.z_world.row(j).transpose();
    }
    it.z_normalized = params.z_norm.normalize(it.z_root);
    it.delta_net = mlp_forward(params.refiner, it.z_normalized, &it.mlp);

    // The network's root blocks live in the heading frame; rotate them into
    // the world before composing so the unit commutes with global yaw.
    Eigen::VectorXd delta_world(6 + nd);
    delta_world.head<3>() = rh * it.delta_net.head<3>();
    delta_world.segment<3>(3) = rh * it.delta_net.segment<3>(3);
    delta_world.tail(nd) = it.delta_net.tail(nd);
    pose = apply_pose_delta(skeleton, pose, delta_world);
    if (cache) cache->iterations.push_back(std::move(it));
  }
  if (cache) cache->refined = pose;
  return pose;
}

Eigen::VectorXd refine_backward(const PolicyParams& params, const Skeleton& skeleton,
                                const Camera& camera, const Keypoints2D& keypoints,
                                const RefineCache& cache, const Eigen::VectorXd& g_refined,
                                MlpGrads& refiner_grads) {
  const int nj = skeleton.joint_count();
  const int nd = skeleton.non_root_dof();
  if (g_refined.size() != 6 + nd) throw InvalidInputError("refine_backward: gradient size");

  Eigen::VectorXd g = g_refined;
  const Eigen::Vector3d ez = Eigen::Vector3d::UnitZ();
  for (int i = static_cast<int>(cache.iterations.size()) - 1; i >= 0; --i) {
    const RefineIterationCache& it = cache.iterations[i];
    if (it.skipped) continue;  // identity iteration
    const Eigen::Matrix3d rh =
        Eigen::AngleAxisd(it.heading, ez).toRotationMatrix();

    const Eigen::Vector3d dt_world = rh * it.delta_net.head<3>();
    const Eigen::Vector3d dr_world = rh * it.delta_net.segment<3>(3);

    // Pullback through pose composition pose_out = pose_in (+) delta_world.
    Eigen::VectorXd g_delta_world(6 + nd);
    g_delta_world.head<3>() = g.head<3>();
    g_delta_world.segment<3>(3) = so3_left_jacobian(dr_world).transpose() * g.segment<3>(3);
    g_delta_world.tail(nd) = g.tail(nd);

    Eigen::VectorXd g_in = Eigen::VectorXd::Zero(6 + nd);
    g_in.head<3>() = g.head<3>();
    g_in.segment<3>(3) = so3_exp(dr_world).transpose() * g.segment<3>(3);
    g_in.tail(nd) = g.tail(nd);

    // delta_world = Rz(heading) applied to the network's root blocks.
    Eigen::VectorXd g_delta_net(6 + nd);
    g_delta_net.head<3>() = rh.transpose() * g_delta_world.head<3>();
    g_delta_net.segment<3>(3) = rh.transpose() * g_delta_world.segment<3>(3);
    g_delta_net.tail(nd) = g_delta_world.tail(nd);
    double g_heading = g_delta_world.head<3>().dot(ez.cross(dt_world)) +
                       g_delta_world.segment<3>(3).dot(ez.cross(dr_world));

    // Network and normalizer (statistics held constant).
    const Eigen::VectorXd g_zn = mlp_backward(params.refiner, it.mlp, g_delta_net, refiner_grads);
    const Eigen::VectorXd g_zroot = g_zn.cwiseProduct(params.z_norm.scale());

    // z_root = Rz(heading)^T z_world.
    Eigen::MatrixX3d g_zworld(nj, 3);
    for (int j = 0; j < nj; ++j) {
      const Eigen::Vector3d gj = g_zroot.segment<3>(3 * j);
      const Eigen::Vector3d zw = it.z_world.row(j).transpose();
      g_zworld.row(j) = (rh * gj).transpose();
      g_heading -= gj.dot(rh.transpose() * ez.cross(zw));
    }

    // z_world -> joint positions -> pose.
    const auto blocks = reprojection_gradient_jacobian(camera, it.fk.positions_matrix(), keypoints);
    Eigen::VectorXd g_positions(3 * nj);
    for (int j = 0; j < nj; ++j) {
      g_positions.segment<3>(3 * j) = blocks[j].transpose() * g_zworld.row(j).transpose();
    }
    const Eigen::MatrixXd jac = fk_position_jacobian(skeleton, it.pose_in, it.fk);
    g_in += jac.transpose() * g_positions;

    // Heading of the input pose fed both the z conversion and the delta frame.
    g_in.segment<3>(3) += g_heading * heading_angle_gradient(it.pose_in.root_orientation);

    g = g_in;
  }
  return g;
}

// ---------------------------------------------------------------------------
// Feature extraction

Eigen::VectorXd extract_features(const Skeleton& skeleton, const Pose& pose,
                                 const Velocities& velocities, const Pose& refined,
                                 FeatureCache* cache) {
  pose.validate(skeleton);
  refined.validate(skeleton);
  const int nj = skeleton.joint_count();
  const int nd = skeleton.non_root_dof();
  if (velocities.joint_rates.size() != nd) {
    throw InvalidInputError("extract_features: velocity dimension mismatch");
  }

  const FkResult fk_cur = forward_kinematics(skeleton, pose);
  const FkResult fk_ref = forward_kinematics(skeleton, refined);
  const Eigen::Matrix3d inv_h = heading_rotation(pose.root_orientation).transpose();
  const Eigen::Vector3d rot_diff =
      quat_log(refined.root_orientation * pose.root_orientation.conjugate());

  Eigen::VectorXd f(PolicyParams::feature_dim(skeleton));
  int off = 0;
  f.segment(off, nd) = pose.joint_angles;
  off += nd;
  f.segment<3>(off) = inv_h * velocities.root_linear;
  f.segment<3>(off + 3) = inv_h * velocities.root_angular;
  f.segment(off + 6, nd) = velocities.joint_rates;
  off += 6 + nd;
  const Eigen::Vector3d flat_root(pose.root_translation.x(), pose.root_translation.y(), 0.0);
  for (int j = 0; j < nj; ++j) {
    f.segment<3>(off + 3 * j) = inv_h * (fk_cur.positions[j] - flat_root);
  }
  off += 3 * nj;
  f.segment<3>(off) = inv_h * (refined.root_translation - pose.root_translation);
  f.segment<3>(off + 3) = inv_h * rot_diff;
  f.segment(off + 6, nd) = refined.joint_angles - pose.joint_angles;
  off += 6 + nd;
  for (int j = 0; j < nj; ++j) {
    f.segment<3>(off + 3 * j) = inv_h * (fk_ref.positions[j] - fk_cur.positions[j]);
  }

  if (cache) {
    cache->pose_cur = pose;
    cache->refined = refined;
    cache->fk_cur = fk_cur;
    cache->fk_ref = fk_ref;
    cache->inv_heading = inv_h;
    cache->rot_diff_world = rot_diff;
    cache->features = f;
  }
  return f;
}

Eigen::VectorXd features_backward_refined(const Skeleton& skeleton, const FeatureCache& cache,
                                          const Eigen::VectorXd& g_features) {
  const int nj = skeleton.joint_count();
  const int nd = skeleton.non_root_dof();
  if (g_features.size() != PolicyParams::feature_dim(skeleton)) {
    throw InvalidInputError("features_backward_refined: gradient size");
  }
  const Eigen::Matrix3d rh = cache.inv_heading.transpose();

  Eigen::VectorXd g_ref = Eigen::VectorXd::Zero(6 + nd);
  int off = nd + 6 + nd + 3 * nj;  // start of the pose-difference block
  g_ref.head<3>() = rh * g_features.segment<3>(off);
  g_ref.segment<3>(3) = so3_left_jacobian_inv(cache.rot_diff_world).transpose() *
                        (rh * g_features.segment<3>(off + 3));
  g_ref.tail(nd) = g_features.segment(off + 6, nd);
  off += 6 + nd;

  Eigen::VectorXd g_positions(3 * nj);
  for (int j = 0; j < nj; ++j) {
    g_positions.segment<3>(3 * j) = rh * g_features.segment<3>(off + 3 * j);
  }
  const Eigen::MatrixXd jac = fk_position_jacobian(skeleton, cache.refined, cache.fk_ref);
  g_ref += jac.transpose() * g_positions;
  return g_ref;
}

// ---------------------------------------------------------------------------
// Control generation

Eigen::VectorXd control_mean(const PolicyParams& params, const Skeleton& skeleton,
                             const Camera& camera, const Pose& pose, const Velocities& velocities,
                             const Pose& kin_next, const Keypoints2D& keypoints,
                             ControlCache* cache) {
  ControlCache local;
  ControlCache& c = cache ? *cache : local;

  const Pose refined = refine_pose(params, skeleton, camera, kin_next, keypoints,
                                   params.config.refine_iterations, &c.refine);
  const Eigen::VectorXd feats = extract_features(skeleton, pose, velocities, refined, &c.feat);
  c.feat_normalized = params.feat_norm.normalize(feats);
  c.raw = mlp_forward(params.control, c.feat_normalized, &c.control_mlp);

  const int nd = skeleton.non_root_dof();
  const int m = params.config.substeps;
  Eigen::VectorXd mean(params.action_dim(skeleton));
  mean.head(nd) = c.raw.head(nd);
  if (params.config.residual_angle) mean.head(nd) += refined.joint_angles;
  mean.segment<6>(nd) = c.raw.segment<6>(nd);
  if (params.config.meta_pd) {
    for (int k = 0; k < 2 * m; ++k) {
      mean(nd + 6 + k) = std::min(softplus(c.raw(nd + 6 + k)) + params.config.lambda_floor,
                                  params.config.lambda_max);
    }
  }
  c.mean = mean;
  return mean;
}

void control_mean_backward(const PolicyParams& params, const Skeleton& skeleton,
                           const Camera& camera, const Keypoints2D& keypoints,
                           const ControlCache& cache, const Eigen::VectorXd& g_mean,
                           PolicyGrads& grads) {
  const int nd = skeleton.non_root_dof();
  const int m = params.config.substeps;
  if (g_mean.size() != params.action_dim(skeleton)) {
    throw InvalidInputError("control_mean_backward: gradient size");
  }

  Eigen::VectorXd g_raw = Eigen::VectorXd::Zero(cache.raw.size());
  g_raw.head(nd) = g_mean.head(nd);
  g_raw.segment<6>(nd) = g_mean.segment<6>(nd);
  if (params.config.meta_pd) {
    for (int k = 0; k < 2 * m; ++k) {
      const double raw = cache.raw(nd + 6 + k);
      const bool clamped =
          softplus(raw) + params.config.lambda_floor >= params.config.lambda_max;
      g_raw(nd + 6 + k) = clamped ? 0.0 : g_mean(nd + 6 + k) * sigmoid(raw);
    }
  }

  const Eigen::VectorXd g_fn =
      mlp_backward(params.control, cache.control_mlp, g_raw, grads.control);
  const Eigen::VectorXd g_feats = g_fn.cwiseProduct(params.feat_norm.scale());

  Eigen::VectorXd g_refined = features_backward_refined(skeleton, cache.feat, g_feats);
  if (params.config.residual_angle) g_refined.tail(nd) += g_mean.head(nd);

  refine_backward(params, skeleton, camera, keypoints, cache.refine, g_refined, grads.refiner);
}

// ---------------------------------------------------------------------------
// Value

double value(const PolicyParams& params, const Skeleton& skeleton, const Camera& camera,
             const Pose& pose, const Velocities& velocities, const Pose& kin_next,
             const Keypoints2D& keypoints, ValueCache* cache) {
  const Pose refined = refine_pose(params, skeleton, camera, kin_next, keypoints,
                                   params.config.refine_iterations);
  const Eigen::VectorXd feats = extract_features(skeleton, pose, velocities, refined);
  ValueCache local;
  ValueCache& c = cache ? *cache : local;
  c.feat_normalized = params.feat_norm.normalize(feats);
  return value_from_normalized(params, c.feat_normalized, &c.mlp);
}

double value_from_normalized(const PolicyParams& params, const Eigen::VectorXd& feat_normalized,
                             MlpCache* cache) {
  return mlp_forward(params.value, feat_normalized, cache)(0);
}

void value_backward(const PolicyParams& params, const ValueCache& cache, double g_value,
                    MlpGrads& value_grads) {
  mlp_backward(params.value, cache.mlp, Eigen::VectorXd::Constant(1, g_value), value_grads);
}

// ---------------------------------------------------------------------------
// Gaussian action distribution

double action_log_prob(const PolicyParams& params, const Eigen::VectorXd& mean,
                       const Eigen::VectorXd& action_vec) {
  if (mean.size() != action_vec.size()) throw InvalidInputError("action_log_prob: size mismatch");
  const double sigma = params.config.sigma;
  const double var = sigma * sigma;
  double lp = 0.0;
  for (int i = 0; i < mean.size(); ++i) {
    const double d = action_vec(i) - mean(i);
    lp += -0.5 * d * d / var - 0.5 * std::log(2.0 * M_PI * var);
  }
  return lp;
}

Eigen::VectorXd sample_action_vector(const PolicyParams& params, const Eigen::VectorXd& mean,
                                     Rng* rng) {
  if (!rng) return mean;
  Eigen::VectorXd out = mean;
  for (int i = 0; i < out.size(); ++i) out(i) += params.config.sigma * rng->normal();
  return out;
}

Eigen::VectorXd action_log_prob_grad_mean(const PolicyParams& params, const Eigen::VectorXd& mean,
                                          const Eigen::VectorXd& action_vec) {
  const double var = params.config.sigma * params.config.sigma;
  return (action_vec - mean) / var;
}

// ---------------------------------------------------------------------------
// Refiner pretraining

RefinerPretrainReport pretrain_refiner(PolicyParams& params, const Skeleton& skeleton,
                                       const std::vector<RefineSample>& data, int epochs,
                                       double learning_rate, Rng& rng) {
  (void)rng;
  if (data.empty()) throw InvalidInputError("pretrain_refiner: empty dataset");
  const int nj = skeleton.joint_count();
  const int n = params.config.refine_iterations;

  // Warm the z normalizer on the raw estimates so early updates see sane
  // input scales; statistics then stay fixed through the optimization.
  if (params.z_norm.count() == 0.0 && !params.z_norm.frozen()) {
    Eigen::MatrixXd rows(data.size(), 3 * nj);
    for (size_t i = 0; i < data.size(); ++i) {
      const FkResult fk = forward_kinematics(skeleton, data[i].estimate);
      const Eigen::MatrixX3d z =
          reprojection_gradient(data[i].camera, fk.positions_matrix(), data[i].keypoints);
      const Eigen::Matrix3d inv_h =
          heading_rotation(data[i].estimate.root_orientation).transpose();
      for (int j = 0; j < nj; ++j) {
        rows.block<1, 3>(i, 3 * j) = (inv_h * z.row(j).transpose()).transpose();
      }
    }
    params.z_norm.update(rows);
  }

  auto mean_error = [&]() {
    double err = 0.0;
    for (const auto& sample : data) {
      const Pose refined =
          refine_pose(params, skeleton, sample.camera, sample.estimate, sample.keypoints, n);
      err += pose_difference(skeleton, refined, sample.ground_truth).squaredNorm();
    }
    return err / data.size();
  };

  RefinerPretrainReport report;
  report.before_error = mean_error();

  Eigen::VectorXd flat = params.refiner.flatten();
  AdamState opt = AdamState::zero(static_cast<int>(flat.size()));
  for (int epoch = 0; epoch < epochs; ++epoch) {
    MlpGrads grads = MlpGrads::zero_like(params.refiner);
    double loss = 0.0;
    for (const auto& sample : data) {
      RefineCache cache;
      const Pose refined = refine_pose(params, skeleton, sample.camera, sample.estimate,
                                       sample.keypoints, n, &cache);
      const Eigen::VectorXd diff = pose_difference(skeleton, refined, sample.ground_truth);
      loss += diff.squaredNorm();
      const Eigen::VectorXd g = (2.0 / data.size()) * diff;
      refine_backward(params, skeleton, sample.camera, sample.keypoints, cache, g, grads);
    }
    report.epoch_losses.push_back(loss / data.size());
    adam_step(flat, grads.flatten(), opt, learning_rate);
    params.refiner.unflatten(flat);
  }
  report.after_error = mean_error();
  return report;
}

}  // namespace posedyn
