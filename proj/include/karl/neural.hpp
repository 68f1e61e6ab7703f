#pragma once

#include <cstddef>
#include <vector>

#include "karl/numerics.hpp"

namespace karl {

struct DenseLayer {
  Matrix W;  // out x in
  Vector b;  // out
};

/// Per-layer gradients, shaped like the network parameters.
using MlpGrads = std::vector<DenseLayer>;

/// Fully connected network: ReLU on hidden layers, identity on the output.
/// Batched calls take one sample per row.
class Mlp {
 public:
  struct Cache {
    std::vector<Matrix> inputs;  // input to each layer
    std::vector<Matrix> pre;     // pre-activation of each layer
  };

  Mlp() = default;
  /// Weights and biases uniform in +-1/sqrt(fan_in).
  Mlp(std::vector<std::size_t> layer_dims, Rng& rng);
  static Mlp zeros(std::vector<std::size_t> layer_dims);

  const std::vector<std::size_t>& layer_dims() const { return dims_; }
  std::size_t input_dim() const { return dims_.front(); }
  std::size_t output_dim() const { return dims_.back(); }
  std::size_t parameter_count() const;

  std::vector<DenseLayer>& layers() { return layers_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }

  Matrix forward(const Matrix& X, Cache* cache = nullptr) const;
  Vector forward(const Vector& x) const;

  /// Gradients of sum(out .* out_grad) w.r.t. all parameters; optionally also
  /// w.r.t. the input rows.
  MlpGrads backward(const Cache& cache, const Matrix& out_grad, Matrix* input_grad = nullptr) const;

  Vector flat_parameters() const;
  void set_flat_parameters(const Vector& flat);
  static Vector flatten(const MlpGrads& grads);

 private:
  std::vector<std::size_t> dims_;
  std::vector<DenseLayer> layers_;
};

struct AdamState {
  Vector m;
  Vector v;
  std::size_t step = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  AdamState() = default;
  AdamState(std::size_t n, double lr);
};

/// Bias-corrected Adam step on a flat parameter vector.
void adam_step(Vector& params, const Vector& grads, AdamState& state);
void adam_step(Mlp& net, const MlpGrads& grads, AdamState& state);

/// Polyak averaging: target <- tau * source + (1 - tau) * target.
void polyak_update(Mlp& target, const Mlp& source, double tau);

/// Tanh-squashed Gaussian policy. The trunk's output holds the mean followed
/// by the raw log-std; log-std = -5 + 3.5 * (tanh(raw) + 1) lies in [-5, 2].
struct PolicyHead {
  static constexpr double kLogStdMin = -5.0;
  static constexpr double kLogStdMax = 2.0;
  static constexpr double kLogProbFloor = 1e-6;

  Mlp trunk;
  Vector action_scale;
  Vector action_bias;
  Vector action_low;
  Vector action_high;

  PolicyHead() = default;
  PolicyHead(std::size_t state_dim, const Vector& low, const Vector& high, std::size_t hidden,
             Rng& rng);

  std::size_t action_dim() const { return static_cast<std::size_t>(action_scale.size()); }
};

/// Forward pass of a batch with externally supplied standard-normal noise.
struct PolicyBatch {
  Mlp::Cache cache;
  Matrix mean;
  Matrix raw_log_std;
  Matrix log_std;
  Matrix noise;
  Matrix squashed;  // tanh(mean + std * noise)
  Matrix actions;
  Vector log_prob;
};

PolicyBatch policy_forward(const PolicyHead& head, const Matrix& X, const Matrix& noise);

/// Gradients w.r.t. the trunk given dL/d(actions) and dL/d(log_prob), with the
/// noise held fixed (reparameterization).
MlpGrads policy_backward(const PolicyHead& head, const PolicyBatch& batch,
                         const Matrix& d_actions, const Vector& d_log_prob);

struct PolicySample {
  Vector action;
  double log_prob = 0.0;
};

PolicySample policy_sample(const PolicyHead& head, const Vector& x, Rng& rng);
Matrix standard_normal(std::size_t rows, std::size_t cols, Rng& rng);

/// Deterministic action scale * tanh(mean) + bias.
Vector policy_mean_action(const PolicyHead& head, const Vector& x);
Vector policy_log_std(const PolicyHead& head, const Vector& x);

}  // namespace karl
