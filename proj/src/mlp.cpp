#include "posedyn/mlp.hpp"

#include <cmath>

#include "posedyn/errors.hpp"

namespace posedyn {

MlpParams MlpParams::create(const std::vector<int>& sizes, Rng& rng, double final_scale) {
  if (sizes.size() < 2) throw InvalidInputError("mlp: need at least input and output sizes");
  MlpParams p;
  for (size_t l = 0; l + 1 < sizes.size(); ++l) {
    Eigen::MatrixXd w(sizes[l + 1], sizes[l]);
    const double scale = std::sqrt(2.0 / sizes[l]);
    for (int i = 0; i < w.size(); ++i) w.data()[i] = rng.normal() * scale;
    if (l + 2 == sizes.size()) w *= final_scale;
    p.weights.push_back(std::move(w));
    p.biases.push_back(Eigen::VectorXd::Zero(sizes[l + 1]));
  }
  return p;
}

int MlpParams::parameter_count() const {
  int n = 0;
  for (size_t l = 0; l < weights.size(); ++l) {
    n += static_cast<int>(weights[l].size() + biases[l].size());
  }
  return n;
}

Eigen::VectorXd MlpParams::flatten() const {
  Eigen::VectorXd out(parameter_count());
  int off = 0;
  for (size_t l = 0; l < weights.size(); ++l) {
    out.segment(off, weights[l].size()) =
        Eigen::Map<const Eigen::VectorXd>(weights[l].data(), weights[l].size());
    off += static_cast<int>(weights[l].size());
    out.segment(off, biases[l].size()) = biases[l];
    off += static_cast<int>(biases[l].size());
  }
  return out;
}

void MlpParams::unflatten(const Eigen::Ref<const Eigen::VectorXd>& flat) {
  if (flat.size() != parameter_count()) throw InvalidInputError("mlp: flat size mismatch");
  int off = 0;
  for (size_t l = 0; l < weights.size(); ++l) {
    Eigen::Map<Eigen::VectorXd>(weights[l].data(), weights[l].size()) =
        flat.segment(off, weights[l].size());
    off += static_cast<int>(weights[l].size());
    biases[l] = flat.segment(off, biases[l].size());
    off += static_cast<int>(biases[l].size());
  }
}

Eigen::VectorXd mlp_forward(const MlpParams& params, const Eigen::VectorXd& x, MlpCache* cache) {
  if (x.size() != params.input_dim()) throw InvalidInputError("mlp: input size mismatch");
  if (cache) {
    cache->input = x;
    cache->pre.clear();
  }
  Eigen::VectorXd h = x;
  const size_t layers = params.weights.size();
  for (size_t l = 0; l < layers; ++l) {
    Eigen::VectorXd z = params.weights[l] * h + params.biases[l];
    if (cache) cache->pre.push_back(z);
    h = (l + 1 < layers) ? z.cwiseMax(0.0) : z;
  }
  return h;
}

MlpGrads MlpGrads::zero_like(const MlpParams& params) {
  MlpGrads g;
  for (size_t l = 0; l < params.weights.size(); ++l) {
    g.weights.push_back(Eigen::MatrixXd::Zero(params.weights[l].rows(), params.weights[l].cols()));
    g.biases.push_back(Eigen::VectorXd::Zero(params.biases[l].size()));
  }
  return g;
}

void MlpGrads::add(const MlpGrads& other) {
  for (size_t l = 0; l < weights.size(); ++l) {
    weights[l] += other.weights[l];
    biases[l] += other.biases[l];
  }
}

void MlpGrads::scale(double s) {
  for (size_t l = 0; l < weights.size(); ++l) {
    weights[l] *= s;
    biases[l] *= s;
  }
}

Eigen::VectorXd MlpGrads::flatten() const {
  int n = 0;
  for (size_t l = 0; l < weights.size(); ++l) {
    n += static_cast<int>(weights[l].size() + biases[l].size());
  }
  Eigen::VectorXd out(n);
  int off = 0;
  for (size_t l = 0; l < weights.size(); ++l) {
    out.segment(off, weights[l].size()) =
        Eigen::Map<const Eigen::VectorXd>(weights[l].data(), weights[l].size());
    off += static_cast<int>(weights[l].size());
    out.segment(off, biases[l].size()) = biases[l];
    off += static_cast<int>(biases[l].size());
  }
  return out;
}

Eigen::VectorXd mlp_backward(const MlpParams& params, const MlpCache& cache,
                             const Eigen::VectorXd& g_output, MlpGrads& grads) {
  const int layers = static_cast<int>(params.weights.size());
  Eigen::VectorXd g = g_output;
  for (int l = layers - 1; l >= 0; --l) {
    if (l + 1 < layers) {
      // Rectifier passes gradient only where the preactivation was positive.
      g = (cache.pre[l].array() > 0.0).select(g, 0.0);
    }
    const Eigen::VectorXd below =
        (l == 0) ? cache.input : cache.pre[l - 1].cwiseMax(0.0);
    grads.weights[l].noalias() += g * below.transpose();
    grads.biases[l] += g;
    g = params.weights[l].transpose() * g;
  }
  return g;
}

RunningNormalizer::RunningNormalizer(int dim)
    : mean_(Eigen::VectorXd::Zero(dim)), m2_(Eigen::VectorXd::Zero(dim)) {}

void RunningNormalizer::update(const Eigen::MatrixXd& batch_rows) {
  if (frozen_ || batch_rows.rows() == 0) return;
  if (batch_rows.cols() != mean_.size()) {
    throw InvalidInputError("normalizer: feature dimension mismatch");
  }
  const double n_b = static_cast<double>(batch_rows.rows());
  const Eigen::VectorXd mean_b = batch_rows.colwise().mean();
  Eigen::VectorXd m2_b = Eigen::VectorXd::Zero(mean_.size());
  for (int i = 0; i < batch_rows.rows(); ++i) {
    const Eigen::VectorXd d = batch_rows.row(i).transpose() - mean_b;
    m2_b += d.cwiseProduct(d);
  }
  if (count_ == 0.0) {
    count_ = n_b;
    mean_ = mean_b;
    m2_ = m2_b;
    return;
  }
  const double total = count_ + n_b;
  const Eigen::VectorXd delta = mean_b - mean_;
  m2_ += m2_b + delta.cwiseProduct(delta) * (count_ * n_b / total);
  mean_ += delta * (n_b / total);
  count_ = total;
}

Eigen::VectorXd RunningNormalizer::variance() const {
  if (count_ < 1.0) return Eigen::VectorXd::Ones(mean_.size());
  return m2_ / count_;
}

Eigen::VectorXd RunningNormalizer::scale() const {
  return (variance().array() + eps_).rsqrt().matrix();
}

Eigen::VectorXd RunningNormalizer::normalize(const Eigen::VectorXd& x) const {
  if (x.size() != mean_.size()) throw InvalidInputError("normalizer: input dimension mismatch");
  return (x - mean_).cwiseProduct(scale());
}

void RunningNormalizer::restore(double count, const Eigen::VectorXd& mean,
                                const Eigen::VectorXd& m2) {
  count_ = count;
  mean_ = mean;
  m2_ = m2;
}

AdamState AdamState::zero(int n) {
  AdamState s;
  s.m = Eigen::VectorXd::Zero(n);
  s.v = Eigen::VectorXd::Zero(n);
  return s;
}

void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grad, AdamState& state, double lr,
               double beta1, double beta2, double eps) {
  if (grad.size() != params.size() || state.m.size() != params.size()) {
    throw InvalidInputError("adam: size mismatch");
  }
  state.step += 1;
  state.m = beta1 * state.m + (1.0 - beta1) * grad;
  state.v = beta2 * state.v + (1.0 - beta2) * grad.cwiseProduct(grad);
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
  const Eigen::ArrayXd m_hat = state.m.array() / bc1;
  const Eigen::ArrayXd v_hat = state.v.array() / bc2;
  params.array() -= lr * m_hat / (v_hat.sqrt() + eps);
}

}  // namespace posedyn
