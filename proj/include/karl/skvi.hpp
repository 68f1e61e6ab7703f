#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "karl/environments.hpp"
#include "karl/koopman.hpp"
#include "karl/numerics.hpp"

namespace karl {

/// Linear-in-dictionary value function V(x) = w . phi(x) with ||w||_2 <= norm_bound.
struct ValueWeights {
  Vector w;
  double norm_bound = 1e6;
};

/// Evenly spaced actions, endpoints included; Cartesian product across action dims.
struct ActionGrid {
  Vector low;
  Vector high;
  std::size_t count = 101;

  ActionGrid() = default;
  ActionGrid(Vector low, Vector high, std::size_t count);
  static ActionGrid from_env(const EnvironmentSpec& env, std::size_t count);

  std::size_t size() const;
  Vector point(std::size_t index) const;
  std::vector<Vector> points() const;
};

using CostFn = std::function<double(const Vector& x, const Vector& u)>;

/// score[a] = c(x, u_a) + gamma * w^T K^{u_a} phi(x).
Vector q_scores(const Vector& w, const KoopmanTensor& tensor, const Vector& x,
                const ActionGrid& grid, double gamma, const CostFn& cost_fn);

/// pi[a] proportional to exp(-score[a] / alpha), computed with a max shift.
Vector softmax_policy(const Vector& scores, double alpha);

/// -alpha * log(mean_a exp(-score[a] / alpha)): soft minimum against the
/// uniform measure on the grid.
double soft_backup(const Vector& scores, double alpha);

/// Scores every grid action for many states with a fixed tensor and a
/// quadratic environment cost; K^{u_a} is built once per grid point.
class GridScorer {
 public:
  GridScorer(const KoopmanTensor& tensor, const EnvironmentSpec& env, const ActionGrid& grid,
             double gamma);

  /// Caches K^{u_a}^T w for every action.
  void set_weights(const Vector& w);
  /// Scores of all grid actions at x for the cached weights.
  void scores(const Vector& x, Vector& out) const;
  /// Same, reusing precomputed state features.
  void scores(const Vector& x, const Vector& phi_x, Vector& out) const;

  const ActionGrid& grid() const { return grid_; }
  const std::vector<Vector>& actions() const { return actions_; }
  const KoopmanTensor& tensor() const { return *tensor_; }

 private:
  const KoopmanTensor* tensor_;
  EnvironmentSpec env_;
  ActionGrid grid_;
  double gamma_;
  std::vector<Vector> actions_;
  std::vector<Matrix> k_actions_;
  Vector action_cost_;
  Matrix continuation_;  // row a: K^{u_a}^T w
};

struct SkviConfig {
  double alpha = 1.0;
  double gamma = 0.99;
  double epsilon = 1e-2;
  double norm_bound = 1e6;
  std::size_t max_iters = 150;
  std::size_t batch_size = 16384;
  double ridge = 1e-8;
};

struct SkviResult {
  ValueWeights weights;
  /// ABE(w_0) followed by ABE(w_i) after each iteration.
  std::vector<double> abe_history;
  std::size_t iterations = 0;
};

/// Mean squared gap between w^T phi(x) and the soft backup under w.
double average_bellman_error(const GridScorer& scorer, const Vector& w,
                             std::span<const Vector> states, double alpha);

/// Soft Koopman value iteration: regress w' on soft backups over sampled
/// states, project onto the norm ball, repeat until ABE <= epsilon or max_iters.
SkviResult value_iteration(const KoopmanTensor& tensor, const EnvironmentSpec& env,
                           std::span<const Vector> states, const ActionGrid& grid,
                           const SkviConfig& config, Rng& rng,
                           const Vector* initial_w = nullptr);

/// Greedy: lowest-index minimum score. Otherwise a draw from softmax_policy.
Vector skvi_act(const Vector& w, const KoopmanTensor& tensor, const Vector& x,
                const ActionGrid& grid, double alpha, double gamma, const CostFn& cost_fn,
                Rng& rng, bool greedy);

/// Policy wrapper around a GridScorer (fast path for rollouts).
Policy make_skvi_policy(std::shared_ptr<const KoopmanTensor> tensor, const EnvironmentSpec& env,
                        const ActionGrid& grid, const Vector& w, double alpha, double gamma,
                        bool greedy);

}  // namespace karl
