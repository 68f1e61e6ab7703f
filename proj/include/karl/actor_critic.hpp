#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "karl/environments.hpp"
#include "karl/koopman.hpp"
#include "karl/neural.hpp"
#include "karl/numerics.hpp"

namespace karl {

/// Ring buffer of transitions with FIFO replacement at capacity.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 1'000'000);

  void push(Transition t);
  std::size_t size() const { return data_.size(); }
  std::size_t capacity() const { return capacity_; }
  /// Contents from oldest to newest.
  std::vector<Transition> contents() const;

  /// Uniform draw with replacement. Throws InsufficientData if size < n.
  std::vector<std::size_t> sample_indices(std::size_t n, Rng& rng) const;
  std::vector<Transition> sample(std::size_t n, Rng& rng) const;
  const Transition& at(std::size_t slot) const { return data_[slot]; }

 private:
  std::size_t capacity_;
  std::size_t cursor_ = 0;
  std::vector<Transition> data_;
};

/// Minibatch in matrix form, one sample per row.
struct Batch {
  Matrix x;
  Matrix u;
  Vector reward;
  Matrix x_next;

  std::size_t size() const { return static_cast<std::size_t>(x.rows()); }
};

Batch make_batch(const std::vector<Transition>& transitions);

enum class Algo { SAKC, SAC_V, SAC_Q };

Algo parse_algo(const std::string& name);
std::string algo_name(Algo algo);

struct AcConfig {
  std::size_t hidden = 256;
  double q_lr = 1e-3;
  double value_lr = 1e-3;  // SAC (V) network and SAKC weights
  double policy_lr = 3e-4;
  double alpha_lr = 1e-3;
  double alpha = 0.2;
  double gamma = 0.99;
  double tau = 0.005;
  std::size_t batch_size = 256;
  std::size_t warmup_steps = 5000;
  std::size_t total_steps = 50000;
  std::size_t buffer_capacity = 1'000'000;
};

/// Shared agent state. The value function is w^T phi (SAKC) or an MLP with a
/// target copy (SAC V); SAC Q has target critics and a learned temperature.
struct AgentState {
  Algo algo = Algo::SAKC;
  AcConfig config;
  EnvironmentSpec env;

  PolicyHead policy;
  AdamState policy_opt;
  Mlp q1, q2;
  AdamState q1_opt, q2_opt;

  // SAKC
  std::shared_ptr<const KoopmanTensor> tensor;
  Vector w;
  Vector w_bar;
  AdamState w_opt;

  // SAC (V)
  Mlp v, v_target;
  AdamState v_opt;

  // SAC (Q)
  Mlp q1_target, q2_target;
  double log_alpha = 0.0;
  AdamState alpha_opt;
  double target_entropy = 0.0;

  double alpha() const;
};

AgentState make_agent(Algo algo, const EnvironmentSpec& env, const AcConfig& config, Rng& rng,
                      std::shared_ptr<const KoopmanTensor> tensor = nullptr);

/// Q-hat(x, u) = r(x, u) + gamma * w_bar^T K^u phi(x), with r = -cost.
double target_q(const AgentState& agent, const Vector& x, const Vector& u);
/// Batched critic targets for the agent's algorithm. Draws next-state actions
/// from rng for SAC (Q).
Vector critic_targets(const AgentState& agent, const Batch& batch, Rng& rng);

/// min(q1, q2) evaluated on rows [x u].
Vector min_q(const Mlp& q1, const Mlp& q2, const Matrix& x, const Matrix& u);

/// 1/2 mean (Q(x,u) - target)^2 and its gradient.
double q_loss(const Mlp& q, const Matrix& x, const Matrix& u, const Vector& targets,
              MlpGrads* grads);

/// mean(alpha log pi(u~|x) - min Q(x, u~)) with u~ from frozen noise, and its
/// gradient w.r.t. the policy trunk.
double policy_loss(const PolicyHead& policy, const Mlp& q1, const Mlp& q2, const Matrix& x,
                   const Matrix& noise, double alpha, MlpGrads* grads);

/// 1/2 mean (w^T phi(x) - target)^2 and its gradient.
double value_weight_loss(const Vector& w, const Matrix& features, const Vector& targets,
                         Vector* grad);

/// Soft value targets min Q(x, u~) - alpha log pi(u~|x) for fresh policy samples.
Vector soft_value_targets(const AgentState& agent, const Matrix& x, Rng& rng);

/// One plain gradient step on the value weights: w -= lr * grad.
Vector value_weight_step(const Vector& w, const Matrix& features, const Vector& targets,
                         double lr);

/// SAKC: one Adam step (value_lr) on the soft value regression for w.
void update_value_weights(AgentState& agent, const Batch& batch, Rng& rng);
void update_value_network(AgentState& agent, const Batch& batch, Rng& rng);
void update_q(AgentState& agent, const Batch& batch, Rng& rng);
void update_policy(AgentState& agent, const Batch& batch, Rng& rng);
void update_temperature(AgentState& agent, const Batch& batch, Rng& rng);

/// w_bar' = tau * w + (1 - tau) * w_bar.
Vector polyak(const Vector& w, const Vector& w_bar, double tau);
void update_targets(AgentState& agent);

/// One full gradient step for the agent's algorithm.
void gradient_step(AgentState& agent, const Batch& batch, Rng& rng);

struct EpisodeLog {
  std::size_t episode = 0;
  std::size_t step = 0;  // global step at the end of the episode
  double episodic_return = 0.0;
};

struct TrainResult {
  AgentState agent;
  std::vector<EpisodeLog> returns;
};

using EpisodeCallback = std::function<void(const EpisodeLog&)>;

/// Environment interaction with one gradient step per environment step once
/// warmup_steps transitions have been collected.
TrainResult train(Algo algo, const EnvironmentSpec& env, const AcConfig& config, Rng& rng,
                  std::shared_ptr<const KoopmanTensor> tensor = nullptr,
                  const EpisodeCallback& on_episode = {});

/// Acts with the policy mean.
Policy make_actor_policy(const AgentState& agent);

}  // namespace karl
