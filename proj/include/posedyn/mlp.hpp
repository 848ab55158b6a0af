#pragma once

#include <vector>

#include "posedyn/math.hpp"
#include "posedyn/rng.hpp"

namespace posedyn {

/// Fully-connected network with rectified-linear hidden activations and a
/// linear output layer.
struct MlpParams {
  std::vector<Eigen::MatrixXd> weights;  // per layer, rows = out, cols = in
  std::vector<Eigen::VectorXd> biases;

  /// sizes = [input, hidden..., output]. The final layer is scaled down so a
  /// fresh network starts near zero output.
  static MlpParams create(const std::vector<int>& sizes, Rng& rng, double final_scale = 0.01);

  int input_dim() const { return static_cast<int>(weights.front().cols()); }
  int output_dim() const { return static_cast<int>(weights.back().rows()); }
  int parameter_count() const;
  Eigen::VectorXd flatten() const;
  void unflatten(const Eigen::Ref<const Eigen::VectorXd>& flat);
};

struct MlpCache {
  Eigen::VectorXd input;
  std::vector<Eigen::VectorXd> pre;  // preactivation per layer
};

Eigen::VectorXd mlp_forward(const MlpParams& params, const Eigen::VectorXd& x,
                            MlpCache* cache = nullptr);

struct MlpGrads {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;

  static MlpGrads zero_like(const MlpParams& params);
  void add(const MlpGrads& other);
  void scale(double s);
  Eigen::VectorXd flatten() const;
};

/// Reverse pass for a recorded forward; accumulates parameter gradients and
/// returns the gradient with respect to the input.
Eigen::VectorXd mlp_backward(const MlpParams& params, const MlpCache& cache,
                             const Eigen::VectorXd& g_output, MlpGrads& grads);

/// Per-feature running mean/variance used to whiten network inputs.
/// Statistics move only through explicit update() calls during training.
class RunningNormalizer {
 public:
  RunningNormalizer() = default;
  explicit RunningNormalizer(int dim);

  void update(const Eigen::MatrixXd& batch_rows);
  Eigen::VectorXd normalize(const Eigen::VectorXd& x) const;
  Eigen::VectorXd scale() const;  // 1/sqrt(var + eps)

  void set_frozen(bool f) { frozen_ = f; }
  bool frozen() const { return frozen_; }
  double count() const { return count_; }
  const Eigen::VectorXd& mean() const { return mean_; }
  Eigen::VectorXd variance() const;
  int dim() const { return static_cast<int>(mean_.size()); }

  // Checkpoint plumbing.
  void restore(double count, const Eigen::VectorXd& mean, const Eigen::VectorXd& m2);
  const Eigen::VectorXd& m2() const { return m2_; }

 private:
  double count_ = 0.0;
  Eigen::VectorXd mean_, m2_;
  double eps_ = 1e-8;
  bool frozen_ = false;
};

struct AdamState {
  Eigen::VectorXd m, v;
  long step = 0;

  static AdamState zero(int n);
};

/// First-order adaptive-moment update, in place.
void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grad, AdamState& state, double lr,
               double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

}  // namespace posedyn
