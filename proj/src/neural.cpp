#include "karl/neural.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "karl/errors.hpp"

namespace karl {

Mlp::Mlp(std::vector<std::size_t> layer_dims, Rng& rng) : Mlp(zeros(std::move(layer_dims))) {
  for (auto& layer : layers_) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(layer.W.cols()));
    std::uniform_real_distribution<double> unif(-bound, bound);
    for (Eigen::Index i = 0; i < layer.W.size(); ++i) layer.W.data()[i] = unif(rng);
    for (Eigen::Index i = 0; i < layer.b.size(); ++i) layer.b[i] = unif(rng);
  }
}

Mlp Mlp::zeros(std::vector<std::size_t> layer_dims) {
  if (layer_dims.size() < 2) throw ConfigError("Mlp: need at least input and output sizes");
  Mlp net;
  net.dims_ = std::move(layer_dims);
  for (std::size_t l = 0; l + 1 < net.dims_.size(); ++l) {
    const auto in = static_cast<Eigen::Index>(net.dims_[l]);
    const auto out = static_cast<Eigen::Index>(net.dims_[l + 1]);
    net.layers_.push_back({Matrix::Zero(out, in), Vector::Zero(out)});
  }
  return net;
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers_) n += static_cast<std::size_t>(layer.W.size() + layer.b.size());
  return n;
}

Matrix Mlp::forward(const Matrix& X, Cache* cache) const {
  if (static_cast<std::size_t>(X.cols()) != input_dim()) {
    throw DimensionMismatch("Mlp::forward: input width mismatch");
  }
  if (cache) {
    cache->inputs.clear();
    cache->pre.clear();
  }
  Matrix h = X;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    Matrix z = h * layer.W.transpose();
    z.rowwise() += layer.b.transpose();
    if (cache) {
      cache->inputs.push_back(std::move(h));
      cache->pre.push_back(z);
    }
    h = l + 1 < layers_.size() ? Matrix(z.cwiseMax(0.0)) : std::move(z);
  }
  return h;
}

Vector Mlp::forward(const Vector& x) const {
  Vector h = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Vector z = layers_[l].W * h + layers_[l].b;
    h = l + 1 < layers_.size() ? Vector(z.cwiseMax(0.0)) : std::move(z);
  }
  return h;
}

MlpGrads Mlp::backward(const Cache& cache, const Matrix& out_grad, Matrix* input_grad) const {
  MlpGrads grads(layers_.size());
  Matrix g = out_grad;
  for (std::size_t l = layers_.size(); l-- > 0;) {
    if (l + 1 < layers_.size()) g.array() *= (cache.pre[l].array() > 0.0).cast<double>();
    grads[l].W.noalias() = g.transpose() * cache.inputs[l];
    grads[l].b = g.colwise().sum().transpose();
    if (l > 0 || input_grad) {
      Matrix next = g * layers_[l].W;
      g = std::move(next);
    }
  }
  if (input_grad) *input_grad = std::move(g);
  return grads;
}

Vector Mlp::flat_parameters() const { return flatten(layers_); }

void Mlp::set_flat_parameters(const Vector& flat) {
  if (static_cast<std::size_t>(flat.size()) != parameter_count()) {
    throw DimensionMismatch("Mlp::set_flat_parameters: size mismatch");
  }
  Eigen::Index k = 0;
  for (auto& layer : layers_) {
    std::copy_n(flat.data() + k, layer.W.size(), layer.W.data());
    k += layer.W.size();
    layer.b = flat.segment(k, layer.b.size());
    k += layer.b.size();
  }
}

Vector Mlp::flatten(const MlpGrads& grads) {
  Eigen::Index n = 0;
  for (const auto& layer : grads) n += layer.W.size() + layer.b.size();
  Vector flat(n);
  Eigen::Index k = 0;
  for (const auto& layer : grads) {
    std::copy_n(layer.W.data(), layer.W.size(), flat.data() + k);
    k += layer.W.size();
    flat.segment(k, layer.b.size()) = layer.b;
    k += layer.b.size();
  }
  return flat;
}

AdamState::AdamState(std::size_t n, double lr_)
    : m(Vector::Zero(static_cast<Eigen::Index>(n))),
      v(Vector::Zero(static_cast<Eigen::Index>(n))),
      lr(lr_) {}

void adam_step(Vector& params, const Vector& grads, AdamState& s) {
  if (params.size() != grads.size() || s.m.size() != params.size()) {
    throw DimensionMismatch("adam_step: size mismatch");
  }
  ++s.step;
  s.m = s.beta1 * s.m + (1.0 - s.beta1) * grads;
  s.v = s.beta2 * s.v + (1.0 - s.beta2) * grads.cwiseAbs2();
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  params.array() -= s.lr * (s.m.array() / c1) / ((s.v.array() / c2).sqrt() + s.eps);
}

void adam_step(Mlp& net, const MlpGrads& grads, AdamState& state) {
  Vector p = net.flat_parameters();
  adam_step(p, Mlp::flatten(grads), state);
  net.set_flat_parameters(p);
}

void polyak_update(Mlp& target, const Mlp& source, double tau) {
  if (target.layer_dims() != source.layer_dims()) {
    throw DimensionMismatch("polyak_update: architectures differ");
  }
  for (std::size_t l = 0; l < target.layers().size(); ++l) {
    auto& t = target.layers()[l];
    const auto& s = source.layers()[l];
    t.W = tau * s.W + (1.0 - tau) * t.W;
    t.b = tau * s.b + (1.0 - tau) * t.b;
  }
}

PolicyHead::PolicyHead(std::size_t state_dim, const Vector& low, const Vector& high,
                       std::size_t hidden, Rng& rng)
    : trunk({state_dim, hidden, 2 * static_cast<std::size_t>(low.size())}, rng),
      action_scale((high - low) / 2.0),
      action_bias((high + low) / 2.0),
      action_low(low),
      action_high(high) {
  if (low.size() != high.size()) throw DimensionMismatch("PolicyHead: bound dimensions differ");
}

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 * log(2 pi)

double squash_log_std(double raw) {
  return PolicyHead::kLogStdMin +
         0.5 * (PolicyHead::kLogStdMax - PolicyHead::kLogStdMin) * (std::tanh(raw) + 1.0);
}

}  // namespace

PolicyBatch policy_forward(const PolicyHead& head, const Matrix& X, const Matrix& noise) {
  const auto A = static_cast<Eigen::Index>(head.action_dim());
  const Eigen::Index n = X.rows();
  if (noise.rows() != n || noise.cols() != A) {
    throw DimensionMismatch("policy_forward: noise shape mismatch");
  }
  PolicyBatch b;
  const Matrix out = head.trunk.forward(X, &b.cache);
  b.mean = out.leftCols(A);
  b.raw_log_std = out.rightCols(A);
  b.log_std = b.raw_log_std.unaryExpr(&squash_log_std);
  b.noise = noise;
  b.squashed.resize(n, A);
  b.actions.resize(n, A);
  b.log_prob = Vector::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double lp = 0.0;
    for (Eigen::Index j = 0; j < A; ++j) {
      const double xi = noise(i, j);
      const double pre = b.mean(i, j) + std::exp(b.log_std(i, j)) * xi;
      const double y = std::tanh(pre);
      b.squashed(i, j) = y;
      b.actions(i, j) = head.action_scale[j] * y + head.action_bias[j];
      lp += -0.5 * xi * xi - b.log_std(i, j) - kHalfLog2Pi;
      lp -= std::log(head.action_scale[j] * (1.0 - y * y) + PolicyHead::kLogProbFloor);
    }
    b.log_prob[i] = lp;
  }
  return b;
}

MlpGrads policy_backward(const PolicyHead& head, const PolicyBatch& b, const Matrix& d_actions,
                         const Vector& d_log_prob) {
  const auto A = static_cast<Eigen::Index>(head.action_dim());
  const Eigen::Index n = b.mean.rows();
  Matrix d_out(n, 2 * A);
  const double half_range = 0.5 * (PolicyHead::kLogStdMax - PolicyHead::kLogStdMin);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < A; ++j) {
      const double y = b.squashed(i, j);
      const double s = head.action_scale[j];
      const double jac = s * (1.0 - y * y);  // d action / d pre-tanh
      // Through the action and through the -log(s (1 - y^2) + eps) correction.
      const double d_pre =
          d_actions(i, j) * jac + d_log_prob[i] * 2.0 * y * jac / (jac + PolicyHead::kLogProbFloor);
      const double sigma = std::exp(b.log_std(i, j));
      const double d_log_std = d_pre * sigma * b.noise(i, j) - d_log_prob[i];
      const double t = std::tanh(b.raw_log_std(i, j));
      d_out(i, j) = d_pre;
      d_out(i, A + j) = d_log_std * half_range * (1.0 - t * t);
    }
  }
  return head.trunk.backward(b.cache, d_out);
}

Matrix standard_normal(std::size_t rows, std::size_t cols, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix out(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] = normal(rng);
  return out;
}

PolicySample policy_sample(const PolicyHead& head, const Vector& x, Rng& rng) {
  const Matrix noise = standard_normal(1, head.action_dim(), rng);
  const PolicyBatch b = policy_forward(head, x.transpose(), noise);
  Vector a = b.actions.row(0).transpose();
  return {a.cwiseMax(head.action_low).cwiseMin(head.action_high), b.log_prob[0]};
}

Vector policy_mean_action(const PolicyHead& head, const Vector& x) {
  const auto A = static_cast<Eigen::Index>(head.action_dim());
  const Vector out = head.trunk.forward(x);
  return (head.action_scale.array() * out.head(A).array().tanh() + head.action_bias.array())
      .matrix();
}

Vector policy_log_std(const PolicyHead& head, const Vector& x) {
  const auto A = static_cast<Eigen::Index>(head.action_dim());
  const Vector out = head.trunk.forward(x);
  return out.tail(A).unaryExpr(&squash_log_std);
}

}  // namespace karl
