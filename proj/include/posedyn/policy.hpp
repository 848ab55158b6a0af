#pragma once

#include <optional>
#include <vector>

#include "posedyn/camera.hpp"
#include "posedyn/mlp.hpp"
#include "posedyn/skeleton.hpp"

namespace posedyn {

struct PolicyConfig {
  int refine_iterations = 5;  // n
  std::vector<int> refiner_hidden = {256, 512, 256};
  std::vector<int> control_hidden = {2048, 1024};
  std::vector<int> value_hidden = {2048, 1024};
  double sigma = 0.1;          // diagonal stddev of the Gaussian policy
  double lambda_floor = 0.01;  // added to softplus to keep gain scales positive
  double lambda_max = 10.0;
  bool meta_pd = true;         // emit per-substep gain scales
  bool residual_angle = true;  // u = refined angles + delta
  int substeps = 15;           // m, gain scales per policy step
  double init_final_scale = 0.01;
};

/// Gaussian policy parameters: refinement MLP, control MLP, value MLP, and
/// the two input normalizers. Snapshots are immutable during rollouts.
struct PolicyParams {
  PolicyConfig config;
  MlpParams refiner;  // z (3J) -> pose update (6 + nd)
  MlpParams control;  // features -> (nd + 6 [+ 2m])
  MlpParams value;    // features -> 1
  RunningNormalizer z_norm;
  RunningNormalizer feat_norm;

  static PolicyParams create(const Skeleton& skeleton, const PolicyConfig& config, Rng& rng);

  int action_dim(const Skeleton& skeleton) const {
    return skeleton.non_root_dof() + 6 + (config.meta_pd ? 2 * config.substeps : 0);
  }
  static int feature_dim(const Skeleton& skeleton) {
    const int nd = skeleton.non_root_dof();
    return 3 * nd + 12 + 6 * skeleton.joint_count();
  }

  Eigen::VectorXd flatten_policy() const;  // refiner + control
  void unflatten_policy(const Eigen::VectorXd& flat);
  int policy_parameter_count() const {
    return refiner.parameter_count() + control.parameter_count();
  }
};

struct PolicyGrads {
  MlpGrads refiner, control;

  static PolicyGrads zero_like(const PolicyParams& p) {
    return {MlpGrads::zero_like(p.refiner), MlpGrads::zero_like(p.control)};
  }
  void add(const PolicyGrads& o) {
    refiner.add(o.refiner);
    control.add(o.control);
  }
  void scale(double s) {
    refiner.scale(s);
    control.scale(s);
  }
  Eigen::VectorXd flatten() const {
    Eigen::VectorXd a = refiner.flatten(), b = control.flatten();
    Eigen::VectorXd out(a.size() + b.size());
    out << a, b;
    return out;
  }
};

// ---------------------------------------------------------------------------
// Kinematic refinement unit

struct RefineIterationCache {
  Pose pose_in;
  FkResult fk;
  Eigen::MatrixX3d z_world;
  double heading = 0.0;      // heading of pose_in's root
  Eigen::VectorXd z_root;    // 3J, root frame, flattened row-major
  Eigen::VectorXd z_normalized;
  MlpCache mlp;
  Eigen::VectorXd delta_net;  // network output, root-heading frame
  bool skipped = false;       // projection degeneracy: identity iteration
};

struct RefineCache {
  std::vector<RefineIterationCache> iterations;
  Pose refined;
};

/// Iteratively refines a kinematic pose estimate from the gradient of the
/// keypoint reprojection loss. The network's root translation/rotation
/// updates are expressed in the root-heading frame so the unit commutes with
/// global yaw and translation. Iterations that hit a projection degeneracy
/// are skipped and flagged.
Pose refine_pose(const PolicyParams& params, const Skeleton& skeleton, const Camera& camera,
                 const Pose& estimate, const Keypoints2D& keypoints, int iterations,
                 RefineCache* cache = nullptr, bool* degenerate = nullptr);

/// Reverse pass through the recorded refinement unroll. Accumulates refiner
/// parameter gradients and returns the gradient with respect to the input
/// pose tangent.
Eigen::VectorXd refine_backward(const PolicyParams& params, const Skeleton& skeleton,
                                const Camera& camera, const Keypoints2D& keypoints,
                                const RefineCache& cache, const Eigen::VectorXd& g_refined,
                                MlpGrads& refiner_grads);

// ---------------------------------------------------------------------------
// Feature extraction layer

struct FeatureCache {
  Pose pose_cur;
  Pose refined;
  FkResult fk_cur, fk_ref;
  Eigen::Matrix3d inv_heading;          // of the current pose
  Eigen::Vector3d rot_diff_world;       // log(Q_ref * Q_cur^-1)
  Eigen::VectorXd features;
};

/// Root-frame features of the current state and the refined next-frame pose:
/// [angles (nd) | root-frame velocities (6 + nd) | root-frame current joint
/// positions (3J) | pose difference refined (-) current (6 + nd) | root-frame
/// position difference (3J)].
Eigen::VectorXd extract_features(const Skeleton& skeleton, const Pose& pose,
                                 const Velocities& velocities, const Pose& refined,
                                 FeatureCache* cache = nullptr);

/// Gradient of the features with respect to the refined-pose tangent.
Eigen::VectorXd features_backward_refined(const Skeleton& skeleton, const FeatureCache& cache,
                                          const Eigen::VectorXd& g_features);

// ---------------------------------------------------------------------------
// Control generation and value

struct ControlCache {
  RefineCache refine;
  FeatureCache feat;
  Eigen::VectorXd feat_normalized;
  MlpCache control_mlp;
  Eigen::VectorXd raw;   // control MLP output
  Eigen::VectorXd mean;  // assembled mean action
};

/// Mean action [u (nd) | eta (6) | lambda_p (m) | lambda_d (m)]; the lambda
/// blocks exist only with meta-PD enabled. u carries the residual connection
/// onto the refined kinematic angles; lambda goes through softplus + floor,
/// clamped at lambda_max.
Eigen::VectorXd control_mean(const PolicyParams& params, const Skeleton& skeleton,
                             const Camera& camera, const Pose& pose, const Velocities& velocities,
                             const Pose& kin_next, const Keypoints2D& keypoints,
                             ControlCache* cache = nullptr);

/// Reverse pass of control_mean into both MLPs (the policy gradient flows
/// through the residual connection and the features into the refiner).
void control_mean_backward(const PolicyParams& params, const Skeleton& skeleton,
                           const Camera& camera, const Keypoints2D& keypoints,
                           const ControlCache& cache, const Eigen::VectorXd& g_mean,
                           PolicyGrads& grads);

struct ValueCache {
  Eigen::VectorXd feat_normalized;
  MlpCache mlp;
};

/// State value through the same refine + feature pipeline with a scalar
/// head. The refined pose is treated as an input here: value-loss gradients
/// touch only the value MLP.
double value(const PolicyParams& params, const Skeleton& skeleton, const Camera& camera,
             const Pose& pose, const Velocities& velocities, const Pose& kin_next,
             const Keypoints2D& keypoints, ValueCache* cache = nullptr);

/// Value from already-normalized features (reused by the PPO update).
double value_from_normalized(const PolicyParams& params, const Eigen::VectorXd& feat_normalized,
                             MlpCache* cache = nullptr);

void value_backward(const PolicyParams& params, const ValueCache& cache, double g_value,
                    MlpGrads& value_grads);

// ---------------------------------------------------------------------------
// Gaussian action distribution

/// Exact diagonal-Gaussian log-density of an action vector about a mean.
double action_log_prob(const PolicyParams& params, const Eigen::VectorXd& mean,
                       const Eigen::VectorXd& action_vec);

/// a = mean + sigma * eps. Pass rng = nullptr for the deterministic mode,
/// which returns the mean exactly.
Eigen::VectorXd sample_action_vector(const PolicyParams& params, const Eigen::VectorXd& mean,
                                     Rng* rng);

/// d(log prob)/d(mean), used by the policy gradient.
Eigen::VectorXd action_log_prob_grad_mean(const PolicyParams& params, const Eigen::VectorXd& mean,
                                          const Eigen::VectorXd& action_vec);

// ---------------------------------------------------------------------------
// Refiner pretraining

struct RefineSample {
  Pose estimate;
  Keypoints2D keypoints;
  Camera camera;
  Pose ground_truth;
};

struct RefinerPretrainReport {
  double before_error = 0.0;  // mean squared pose-tangent error of q~(n)
  double after_error = 0.0;
  std::vector<double> epoch_losses;
};

/// Supervised pretraining of the refinement unit: MSE between the refined
/// pose and ground truth, backpropagated through the full n-iteration unroll.
RefinerPretrainReport pretrain_refiner(PolicyParams& params, const Skeleton& skeleton,
                                       const std::vector<RefineSample>& data, int epochs,
                                       double learning_rate, Rng& rng);

}  // namespace posedyn
