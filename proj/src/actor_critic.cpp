#include "karl/actor_critic.hpp"

#include <algorithm>
#include <cmath>

#include "karl/errors.hpp"

namespace karl {

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ConfigError("ReplayBuffer: capacity must be positive");
}

void ReplayBuffer::push(Transition t) {
  if (data_.size() < capacity_) {
    data_.push_back(std::move(t));
  } else {
    data_[cursor_] = std::move(t);
  }
  cursor_ = (cursor_ + 1) % capacity_;
}

std::vector<Transition> ReplayBuffer::contents() const {
  std::vector<Transition> out;
  out.reserve(data_.size());
  const std::size_t start = data_.size() < capacity_ ? 0 : cursor_;
  for (std::size_t i = 0; i < data_.size(); ++i) out.push_back(data_[(start + i) % data_.size()]);
  return out;
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t n, Rng& rng) const {
  if (data_.size() < n || data_.empty()) {
    throw InsufficientData("ReplayBuffer: not enough transitions to sample");
  }
  std::uniform_int_distribution<std::size_t> pick(0, data_.size() - 1);
  std::vector<std::size_t> idx(n);
  for (auto& i : idx) i = pick(rng);
  return idx;
}

std::vector<Transition> ReplayBuffer::sample(std::size_t n, Rng& rng) const {
  std::vector<Transition> out;
  out.reserve(n);
  for (std::size_t i : sample_indices(n, rng)) out.push_back(data_[i]);
  return out;
}

Batch make_batch(const std::vector<Transition>& transitions) {
  if (transitions.empty()) throw InsufficientData("make_batch: empty batch");
  const auto n = static_cast<Eigen::Index>(transitions.size());
  const Eigen::Index sd = transitions.front().x.size();
  const Eigen::Index ad = transitions.front().u.size();
  Batch b{Matrix(n, sd), Matrix(n, ad), Vector(n), Matrix(n, sd)};
  for (Eigen::Index i = 0; i < n; ++i) {
    const Transition& t = transitions[static_cast<std::size_t>(i)];
    b.x.row(i) = t.x.transpose();
    b.u.row(i) = t.u.transpose();
    b.reward[i] = t.reward;
    b.x_next.row(i) = t.x_next.transpose();
  }
  return b;
}

Algo parse_algo(const std::string& name) {
  if (name == "sakc") return Algo::SAKC;
  if (name == "sac-v" || name == "sac_v") return Algo::SAC_V;
  if (name == "sac-q" || name == "sac_q") return Algo::SAC_Q;
  throw ConfigError("unknown algorithm: " + name);
}

std::string algo_name(Algo algo) {
  switch (algo) {
    case Algo::SAKC: return "sakc";
    case Algo::SAC_V: return "sac-v";
    case Algo::SAC_Q: return "sac-q";
  }
  return "?";
}

double AgentState::alpha() const {
  return algo == Algo::SAC_Q ? std::exp(log_alpha) : config.alpha;
}

AgentState make_agent(Algo algo, const EnvironmentSpec& env, const AcConfig& config, Rng& rng,
                      std::shared_ptr<const KoopmanTensor> tensor) {
  AgentState a;
  a.algo = algo;
  a.config = config;
  a.env = env;
  const std::size_t sd = env.state_dim, ad = env.action_dim;
  a.policy = PolicyHead(sd, env.action_low, env.action_high, config.hidden, rng);
  a.policy_opt = AdamState(a.policy.trunk.parameter_count(), config.policy_lr);
  a.q1 = Mlp({sd + ad, config.hidden, 1}, rng);
  a.q2 = Mlp({sd + ad, config.hidden, 1}, rng);
  a.q1_opt = AdamState(a.q1.parameter_count(), config.q_lr);
  a.q2_opt = AdamState(a.q2.parameter_count(), config.q_lr);
  switch (algo) {
    case Algo::SAKC:
      if (!tensor) throw ConfigError("SAKC needs a fitted Koopman tensor");
      if (tensor->phi().input_dim() != sd || tensor->psi().input_dim() != ad) {
        throw DimensionMismatch("SAKC: tensor bases do not match the environment");
      }
      a.tensor = std::move(tensor);
      a.w = Vector::Zero(static_cast<Eigen::Index>(a.tensor->d_x()));
      a.w_bar = a.w;
      a.w_opt = AdamState(static_cast<std::size_t>(a.w.size()), config.value_lr);
      break;
    case Algo::SAC_V:
      a.v = Mlp({sd, config.hidden, 1}, rng);
      a.v_target = a.v;
      a.v_opt = AdamState(a.v.parameter_count(), config.value_lr);
      break;
    case Algo::SAC_Q:
      a.q1_target = a.q1;
      a.q2_target = a.q2;
      a.log_alpha = std::log(config.alpha);
      a.alpha_opt = AdamState(1, config.alpha_lr);
      a.target_entropy = -static_cast<double>(ad);
      break;
  }
  return a;
}

namespace {

Matrix concat(const Matrix& x, const Matrix& u) {
  Matrix xu(x.rows(), x.cols() + u.cols());
  xu << x, u;
  return xu;
}

Matrix phi_rows(const MonomialBasis& phi, const Matrix& x) {
  Matrix out(x.rows(), static_cast<Eigen::Index>(phi.dim()));
  Vector f;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    phi.eval_into(x.row(i).transpose(), f);
    out.row(i) = f.transpose();
  }
  return out;
}

double continuation(const AgentState& agent, const Vector& x, const Vector& u) {
  const KoopmanTensor& t = *agent.tensor;
  return agent.w_bar.dot(t.M() * joint_feature(t.phi(), t.psi(), x, u));
}

}  // namespace

double target_q(const AgentState& agent, const Vector& x, const Vector& u) {
  const double r = -cost(agent.env, x, u);
  if (agent.config.gamma == 0.0) return r;
  return r + agent.config.gamma * continuation(agent, x, u);
}

Vector min_q(const Mlp& q1, const Mlp& q2, const Matrix& x, const Matrix& u) {
  const Matrix xu = concat(x, u);
  return q1.forward(xu).col(0).cwiseMin(q2.forward(xu).col(0));
}

Vector critic_targets(const AgentState& agent, const Batch& batch, Rng& rng) {
  const double gamma = agent.config.gamma;
  const auto n = static_cast<Eigen::Index>(batch.size());
  Vector y = batch.reward;
  switch (agent.algo) {
    case Algo::SAKC:
      for (Eigen::Index i = 0; i < n; ++i) {
        y[i] += gamma * continuation(agent, batch.x.row(i).transpose(), batch.u.row(i).transpose());
      }
      break;
    case Algo::SAC_V:
      y += gamma * agent.v_target.forward(batch.x_next).col(0);
      break;
    case Algo::SAC_Q: {
      const Matrix noise = standard_normal(batch.size(), agent.policy.action_dim(), rng);
      const PolicyBatch pb = policy_forward(agent.policy, batch.x_next, noise);
      const Vector q = min_q(agent.q1_target, agent.q2_target, batch.x_next, pb.actions);
      y += gamma * (q - agent.alpha() * pb.log_prob);
      break;
    }
  }
  return y;
}

double q_loss(const Mlp& q, const Matrix& x, const Matrix& u, const Vector& targets,
              MlpGrads* grads) {
  Mlp::Cache cache;
  const Matrix out = q.forward(concat(x, u), grads ? &cache : nullptr);
  const Vector r = out.col(0) - targets;
  const auto n = static_cast<double>(r.size());
  if (grads) *grads = q.backward(cache, Matrix(r / n));
  return 0.5 * r.squaredNorm() / n;
}

double policy_loss(const PolicyHead& policy, const Mlp& q1, const Mlp& q2, const Matrix& x,
                   const Matrix& noise, double alpha, MlpGrads* grads) {
  const PolicyBatch pb = policy_forward(policy, x, noise);
  const Matrix xu = concat(x, pb.actions);
  Mlp::Cache c1, c2;
  const Vector v1 = q1.forward(xu, &c1).col(0);
  const Vector v2 = q2.forward(xu, &c2).col(0);
  const Eigen::Index n = x.rows();
  const double inv_n = 1.0 / static_cast<double>(n);
  double loss = 0.0;
  Matrix g1 = Matrix::Zero(n, 1), g2 = Matrix::Zero(n, 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    // Ties go to q1.
    const bool first = v1[i] <= v2[i];
    loss += alpha * pb.log_prob[i] - (first ? v1[i] : v2[i]);
    (first ? g1 : g2)(i, 0) = -inv_n;
  }
  if (grads) {
    Matrix in1, in2;
    q1.backward(c1, g1, &in1);
    q2.backward(c2, g2, &in2);
    const Matrix d_actions = (in1 + in2).rightCols(pb.actions.cols());
    const Vector d_log_prob = Vector::Constant(n, alpha * inv_n);
    *grads = policy_backward(policy, pb, d_actions, d_log_prob);
  }
  return loss * inv_n;
}

double value_weight_loss(const Vector& w, const Matrix& features, const Vector& targets,
                         Vector* grad) {
  const Vector r = features * w - targets;
  const auto n = static_cast<double>(r.size());
  if (grad) *grad = features.transpose() * r / n;
  return 0.5 * r.squaredNorm() / n;
}

Vector value_weight_step(const Vector& w, const Matrix& features, const Vector& targets,
                         double lr) {
  if (features.rows() == 0) throw InsufficientData("value_weight_step: empty batch");
  Vector g;
  value_weight_loss(w, features, targets, &g);
  return w - lr * g;
}

Vector soft_value_targets(const AgentState& agent, const Matrix& x, Rng& rng) {
  const Matrix noise = standard_normal(static_cast<std::size_t>(x.rows()),
                                       agent.policy.action_dim(), rng);
  const PolicyBatch pb = policy_forward(agent.policy, x, noise);
  return min_q(agent.q1, agent.q2, x, pb.actions) - agent.alpha() * pb.log_prob;
}

void update_value_weights(AgentState& agent, const Batch& batch, Rng& rng) {
  const Vector targets = soft_value_targets(agent, batch.x, rng);
  const Matrix features = phi_rows(agent.tensor->phi(), batch.x);
  // Adam rather than plain SGD: unnormalized monomials make lr * |phi|^2 exceed
  // the SGD stability limit once exploration reaches |x| ~ 30.
  Vector grad;
  value_weight_loss(agent.w, features, targets, &grad);
  adam_step(agent.w, grad, agent.w_opt);
}

void update_value_network(AgentState& agent, const Batch& batch, Rng& rng) {
  const Vector targets = soft_value_targets(agent, batch.x, rng);
  Mlp::Cache cache;
  const Vector out = agent.v.forward(batch.x, &cache).col(0);
  const Vector r = (out - targets) / static_cast<double>(targets.size());
  adam_step(agent.v, agent.v.backward(cache, Matrix(r)), agent.v_opt);
}

void update_q(AgentState& agent, const Batch& batch, Rng& rng) {
  const Vector y = critic_targets(agent, batch, rng);
  MlpGrads g;
  q_loss(agent.q1, batch.x, batch.u, y, &g);
  adam_step(agent.q1, g, agent.q1_opt);
  q_loss(agent.q2, batch.x, batch.u, y, &g);
  adam_step(agent.q2, g, agent.q2_opt);
}

void update_policy(AgentState& agent, const Batch& batch, Rng& rng) {
  const Matrix noise = standard_normal(batch.size(), agent.policy.action_dim(), rng);
  MlpGrads g;
  policy_loss(agent.policy, agent.q1, agent.q2, batch.x, noise, agent.alpha(), &g);
  adam_step(agent.policy.trunk, g, agent.policy_opt);
}

void update_temperature(AgentState& agent, const Batch& batch, Rng& rng) {
  const Matrix noise = standard_normal(batch.size(), agent.policy.action_dim(), rng);
  const PolicyBatch pb = policy_forward(agent.policy, batch.x, noise);
  // J(alpha) = mean(-alpha (log pi + target_entropy)), differentiated in log alpha.
  const double grad = -std::exp(agent.log_alpha) * (pb.log_prob.mean() + agent.target_entropy);
  Vector p(1), g(1);
  p << agent.log_alpha;
  g << grad;
  adam_step(p, g, agent.alpha_opt);
  agent.log_alpha = p[0];
}

Vector polyak(const Vector& w, const Vector& w_bar, double tau) {
  if (tau < 0.0 || tau > 1.0) throw ConfigError("polyak: tau must lie in [0, 1]");
  if (w.size() != w_bar.size()) throw DimensionMismatch("polyak: size mismatch");
  return tau * w + (1.0 - tau) * w_bar;
}

void update_targets(AgentState& agent) {
  const double tau = agent.config.tau;
  switch (agent.algo) {
    case Algo::SAKC: agent.w_bar = polyak(agent.w, agent.w_bar, tau); break;
    case Algo::SAC_V: polyak_update(agent.v_target, agent.v, tau); break;
    case Algo::SAC_Q:
      polyak_update(agent.q1_target, agent.q1, tau);
      polyak_update(agent.q2_target, agent.q2, tau);
      break;
  }
}

void gradient_step(AgentState& agent, const Batch& batch, Rng& rng) {
  switch (agent.algo) {
    case Algo::SAKC: update_value_weights(agent, batch, rng); break;
    case Algo::SAC_V: update_value_network(agent, batch, rng); break;
    case Algo::SAC_Q: break;
  }
  update_q(agent, batch, rng);
  update_policy(agent, batch, rng);
  if (agent.algo == Algo::SAC_Q) update_temperature(agent, batch, rng);
  update_targets(agent);
}

TrainResult train(Algo algo, const EnvironmentSpec& env, const AcConfig& config, Rng& rng,
                  std::shared_ptr<const KoopmanTensor> tensor, const EpisodeCallback& on_episode) {
  env.validate();
  const std::uint64_t base = rng();
  Rng init_rng(derive_seed(base, 0));
  Rng env_rng(derive_seed(base, 1));
  Rng act_rng(derive_seed(base, 2));
  Rng update_rng(derive_seed(base, 3));

  TrainResult result{make_agent(algo, env, config, init_rng, std::move(tensor)), {}};
  AgentState& agent = result.agent;
  ReplayBuffer buffer(config.buffer_capacity);

  Vector x = reset(env, env_rng);
  std::size_t ep_len = 0;
  double ep_return = 0.0;
  for (std::size_t t = 0; t < config.total_steps; ++t) {
    Vector u = clip_action(env, policy_sample(agent.policy, x, act_rng).action);
    Vector next = step(env, x, u, env_rng);
    const double r = -cost(env, x, u);
    ep_return += r;
    ++ep_len;
    const bool done = ep_len == env.episode_len;
    buffer.push({x, u, r, next, done});
    if (done) {
      EpisodeLog log{result.returns.size(), t + 1, ep_return};
      result.returns.push_back(log);
      if (on_episode) on_episode(log);
      x = reset(env, env_rng);
      ep_len = 0;
      ep_return = 0.0;
    } else {
      x = std::move(next);
    }
    if (t >= config.warmup_steps && buffer.size() >= config.batch_size) {
      gradient_step(agent, make_batch(buffer.sample(config.batch_size, update_rng)), update_rng);
    }
  }
  return result;
}

Policy make_actor_policy(const AgentState& agent) {
  auto head = std::make_shared<const PolicyHead>(agent.policy);
  return [head](const Vector& x, Rng&) { return policy_mean_action(*head, x); };
}

}  // namespace karl
