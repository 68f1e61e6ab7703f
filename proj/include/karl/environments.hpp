#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "karl/numerics.hpp"

namespace karl {

enum class EnvKind { LinearSystem, FluidFlow, Lorenz63, DoubleWell };
enum class Integrator { DiscreteMap, RK4, EulerMaruyama };

EnvKind parse_env_kind(const std::string& name);
std::string env_name(EnvKind kind);

/// A benchmark controlled dynamical system with quadratic tracking cost.
struct EnvironmentSpec {
  EnvKind kind = EnvKind::LinearSystem;
  std::size_t state_dim = 0;
  std::size_t action_dim = 0;
  double dt = 0.01;
  Integrator integrator = Integrator::DiscreteMap;
  Vector action_low;
  Vector action_high;
  Vector x_e;
  Matrix Q;
  Matrix R;
  std::size_t episode_len = 300;
  Vector init_low;
  Vector init_high;

  // LinearSystem only: x' = A x + B u.
  Matrix A;
  Matrix B;

  // DoubleWell only: multiplies the diffusion matrix (0 gives the deterministic drift).
  double noise_scale = 1.0;

  void validate() const;
};

/// Default configuration of each benchmark, including the frozen action bounds.
EnvironmentSpec make_environment(EnvKind kind);

/// Rebuilds Q = q_scale * I and R = r_scale * I.
void set_cost_scales(EnvironmentSpec& spec, double q_scale, double r_scale);

/// Continuous drift f(x, u), or the map F(x, u) for the discrete linear system.
Vector drift(const EnvironmentSpec& spec, const Vector& x, const Vector& u);

/// State-dependent diffusion matrix (zero for deterministic systems).
Matrix diffusion(const EnvironmentSpec& spec, const Vector& x);

Vector clip_action(const EnvironmentSpec& spec, const Vector& u);

/// One time step. The action is clipped to the bounds first. Throws NonFiniteState.
Vector step(const EnvironmentSpec& spec, const Vector& x, const Vector& u, Rng& rng);

/// (x - x_e)^T Q (x - x_e) + u^T R u
double cost(const EnvironmentSpec& spec, const Vector& x, const Vector& u);

/// Uniform sample from the initial-state box.
Vector reset(const EnvironmentSpec& spec, Rng& rng);

struct Transition {
  Vector x;
  Vector u;
  double reward = 0.0;
  Vector x_next;
  bool done = false;
};

using Policy = std::function<Vector(const Vector& x, Rng& rng)>;

struct Episode {
  double episodic_return = 0.0;
  bool diverged = false;
  std::vector<Transition> transitions;
};

/// Runs fixed-length episodes from reset. Environment randomness (initial
/// states, process noise) and policy randomness use separate streams drawn
/// from `rng`, so two policies evaluated with equal seeds see the same initial
/// states. A non-finite state ends the episode; the remaining steps are each
/// charged the largest single-step cost seen in that episode.
std::vector<Episode> rollout(const EnvironmentSpec& spec, const Policy& policy, Rng& rng,
                             std::size_t episodes, bool keep_transitions = true);

double mean_return(const std::vector<Episode>& episodes);

}  // namespace karl
