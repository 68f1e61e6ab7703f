#include "karl/skvi.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "karl/errors.hpp"

namespace karl {

ActionGrid::ActionGrid(Vector low_, Vector high_, std::size_t count_)
    : low(std::move(low_)), high(std::move(high_)), count(count_) {
  if (low.size() != high.size()) throw DimensionMismatch("ActionGrid: bound dimensions differ");
  if (count < 2) throw ConfigError("ActionGrid: count must be >= 2");
}

ActionGrid ActionGrid::from_env(const EnvironmentSpec& env, std::size_t count) {
  return ActionGrid(env.action_low, env.action_high, count);
}

std::size_t ActionGrid::size() const {
  std::size_t n = 1;
  for (Eigen::Index d = 0; d < low.size(); ++d) n *= count;
  return n;
}

Vector ActionGrid::point(std::size_t index) const {
  Vector u(low.size());
  // Last action dimension varies fastest.
  for (Eigen::Index d = low.size() - 1; d >= 0; --d) {
    const std::size_t k = index % count;
    index /= count;
    const double t = static_cast<double>(k) / static_cast<double>(count - 1);
    u[d] = k + 1 == count ? high[d] : low[d] + t * (high[d] - low[d]);
  }
  return u;
}

std::vector<Vector> ActionGrid::points() const {
  std::vector<Vector> out;
  out.reserve(size());
  for (std::size_t i = 0; i < size(); ++i) out.push_back(point(i));
  return out;
}

Vector q_scores(const Vector& w, const KoopmanTensor& tensor, const Vector& x,
                const ActionGrid& grid, double gamma, const CostFn& cost_fn) {
  const Vector phi_x = tensor.phi().eval(x);
  Vector out(static_cast<Eigen::Index>(grid.size()));
  for (std::size_t a = 0; a < grid.size(); ++a) {
    const Vector u = grid.point(a);
    const double continuation = gamma == 0.0 ? 0.0 : w.dot(k_u(tensor, u) * phi_x);
    out[static_cast<Eigen::Index>(a)] = cost_fn(x, u) + gamma * continuation;
  }
  return out;
}

Vector softmax_policy(const Vector& scores, double alpha) {
  const double m = scores.minCoeff();
  Vector p = (-(scores.array() - m) / alpha).exp().matrix();
  return p / p.sum();
}

double soft_backup(const Vector& scores, double alpha) {
  const double m = scores.minCoeff();
  const double mean_exp = (-(scores.array() - m) / alpha).exp().mean();
  return m - alpha * std::log(mean_exp);
}

GridScorer::GridScorer(const KoopmanTensor& tensor, const EnvironmentSpec& env,
                       const ActionGrid& grid, double gamma)
    : tensor_(&tensor), env_(env), grid_(grid), gamma_(gamma), actions_(grid.points()) {
  if (tensor.psi().input_dim() != env.action_dim || tensor.phi().input_dim() != env.state_dim) {
    throw DimensionMismatch("GridScorer: tensor bases do not match the environment");
  }
  k_actions_.reserve(actions_.size());
  action_cost_.resize(static_cast<Eigen::Index>(actions_.size()));
  for (std::size_t a = 0; a < actions_.size(); ++a) {
    k_actions_.push_back(k_u(tensor, actions_[a]));
    action_cost_[static_cast<Eigen::Index>(a)] = actions_[a].dot(env.R * actions_[a]);
  }
  continuation_ = Matrix::Zero(static_cast<Eigen::Index>(actions_.size()),
                               static_cast<Eigen::Index>(tensor.d_x()));
}

void GridScorer::set_weights(const Vector& w) {
  if (static_cast<std::size_t>(w.size()) != tensor_->d_x()) {
    throw DimensionMismatch("GridScorer: weight dimension mismatch");
  }
  for (std::size_t a = 0; a < k_actions_.size(); ++a) {
    continuation_.row(static_cast<Eigen::Index>(a)) = (k_actions_[a].transpose() * w).transpose();
  }
}

void GridScorer::scores(const Vector& x, const Vector& phi_x, Vector& out) const {
  const Vector d = x - env_.x_e;
  const double state_cost = d.dot(env_.Q * d);
  out.noalias() = continuation_ * phi_x;
  out *= gamma_;
  out.array() += action_cost_.array() + state_cost;
}

void GridScorer::scores(const Vector& x, Vector& out) const {
  scores(x, tensor_->phi().eval(x), out);
}

double average_bellman_error(const GridScorer& scorer, const Vector& w,
                             std::span<const Vector> states, double alpha) {
  // Caller must have called scorer.set_weights(w).
  const MonomialBasis& phi = scorer.tensor().phi();
  Vector fx, s;
  double acc = 0.0;
  for (const Vector& x : states) {
    phi.eval_into(x, fx);
    scorer.scores(x, fx, s);
    const double gap = w.dot(fx) - soft_backup(s, alpha);
    acc += gap * gap;
  }
  return states.empty() ? 0.0 : acc / static_cast<double>(states.size());
}

SkviResult value_iteration(const KoopmanTensor& tensor, const EnvironmentSpec& env,
                           std::span<const Vector> states, const ActionGrid& grid,
                           const SkviConfig& config, Rng& rng, const Vector* initial_w) {
  if (states.empty()) throw InsufficientData("value_iteration: no states");
  if (!(config.alpha > 0.0)) throw ConfigError("value_iteration: alpha must be positive");
  if (config.gamma < 0.0 || config.gamma >= 1.0) {
    throw ConfigError("value_iteration: gamma must lie in [0, 1)");
  }
  const std::size_t dx = tensor.d_x();
  const std::size_t batch = std::max<std::size_t>(1, config.batch_size);
  GridScorer scorer(tensor, env, grid, config.gamma);

  Vector w = initial_w ? *initial_w : Vector::Zero(static_cast<Eigen::Index>(dx));
  SkviResult result;

  std::uniform_int_distribution<std::size_t> pick(0, states.size() - 1);
  std::vector<Vector> sample(batch);
  auto draw = [&] {
    for (auto& s : sample) s = states[pick(rng)];
  };

  draw();
  scorer.set_weights(w);
  double abe = average_bellman_error(scorer, w, sample, config.alpha);
  result.abe_history.push_back(abe);

  Matrix features(static_cast<Eigen::Index>(batch), static_cast<Eigen::Index>(dx));
  Matrix targets(static_cast<Eigen::Index>(batch), 1);
  Vector fx, s;
  while (abe > config.epsilon && result.iterations < config.max_iters) {
    draw();
    for (std::size_t i = 0; i < batch; ++i) {
      tensor.phi().eval_into(sample[i], fx);
      scorer.scores(sample[i], fx, s);
      features.row(static_cast<Eigen::Index>(i)) = fx.transpose();
      targets(static_cast<Eigen::Index>(i), 0) = soft_backup(s, config.alpha);
    }
    Vector next = lstsq(features, targets, config.ridge).col(0);
    const double norm = next.norm();
    if (norm > config.norm_bound) next *= config.norm_bound / norm;
    if (!next.allFinite()) throw NonFiniteState("value_iteration: weights became non-finite");
    w = std::move(next);
    scorer.set_weights(w);
    abe = average_bellman_error(scorer, w, sample, config.alpha);
    result.abe_history.push_back(abe);
    ++result.iterations;
  }
  result.weights = {w, config.norm_bound};
  return result;
}

namespace {

std::size_t pick_action(const Vector& scores, double alpha, Rng& rng, bool greedy) {
  if (greedy) {
    Eigen::Index best = 0;
    scores.minCoeff(&best);  // first minimum: lowest index wins ties
    return static_cast<std::size_t>(best);
  }
  const Vector p = softmax_policy(scores, alpha);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  double r = unif(rng);
  for (Eigen::Index a = 0; a < p.size(); ++a) {
    r -= p[a];
    if (r <= 0.0) return static_cast<std::size_t>(a);
  }
  return static_cast<std::size_t>(p.size() - 1);
}

}  // namespace

Vector skvi_act(const Vector& w, const KoopmanTensor& tensor, const Vector& x,
                const ActionGrid& grid, double alpha, double gamma, const CostFn& cost_fn,
                Rng& rng, bool greedy) {
  const Vector scores = q_scores(w, tensor, x, grid, gamma, cost_fn);
  return grid.point(pick_action(scores, alpha, rng, greedy));
}

Policy make_skvi_policy(std::shared_ptr<const KoopmanTensor> tensor, const EnvironmentSpec& env,
                        const ActionGrid& grid, const Vector& w, double alpha, double gamma,
                        bool greedy) {
  auto scorer = std::make_shared<GridScorer>(*tensor, env, grid, gamma);
  scorer->set_weights(w);
  return [tensor, scorer, alpha, greedy](const Vector& x, Rng& rng) {
    Vector s;
    scorer->scores(x, s);
    return scorer->actions()[pick_action(s, alpha, rng, greedy)];
  };
}

}  // namespace karl
