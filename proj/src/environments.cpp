#include "karl/environments.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "karl/errors.hpp"

namespace karl {

namespace {

// Fluid flow reduced-order model.
constexpr double kFlowMu = 0.1;
constexpr double kFlowOmega = 1.0;
constexpr double kFlowCoupling = -0.1;
constexpr double kFlowLambda = 1.0;

// Lorenz 63.
constexpr double kLorenzSigma = 10.0;
constexpr double kLorenzRho = 28.0;
constexpr double kLorenzBeta = 8.0 / 3.0;

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

std::string normalize(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '_' || c == '-' || c == ' ') continue;
    out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return out;
}

void check_dims(const EnvironmentSpec& spec, const Vector& x, const Vector& u) {
  if (static_cast<std::size_t>(x.size()) != spec.state_dim ||
      static_cast<std::size_t>(u.size()) != spec.action_dim) {
    throw DimensionMismatch("environment " + env_name(spec.kind) + ": expected state dim " +
                            std::to_string(spec.state_dim) + " and action dim " +
                            std::to_string(spec.action_dim));
  }
}

Vector rk4(const EnvironmentSpec& spec, const Vector& x, const Vector& u) {
  const double h = spec.dt;
  const Vector k1 = drift(spec, x, u);
  const Vector k2 = drift(spec, x + 0.5 * h * k1, u);
  const Vector k3 = drift(spec, x + 0.5 * h * k2, u);
  const Vector k4 = drift(spec, x + h * k3, u);
  return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

}  // namespace

EnvKind parse_env_kind(const std::string& name) {
  const std::string n = normalize(name);
  if (n == "linear" || n == "linearsystem") return EnvKind::LinearSystem;
  if (n == "fluidflow" || n == "fluid") return EnvKind::FluidFlow;
  if (n == "lorenz" || n == "lorenz63" || n == "lorenz1963") return EnvKind::Lorenz63;
  if (n == "doublewell" || n == "stochasticdoublewell") return EnvKind::DoubleWell;
  throw ConfigError("unknown environment '" + name + "'");
}

std::string env_name(EnvKind kind) {
  switch (kind) {
    case EnvKind::LinearSystem: return "linear_system";
    case EnvKind::FluidFlow: return "fluid_flow";
    case EnvKind::Lorenz63: return "lorenz";
    case EnvKind::DoubleWell: return "double_well";
  }
  return "unknown";
}

void EnvironmentSpec::validate() const {
  auto fail = [&](const std::string& what) {
    throw ConfigError("environment " + env_name(kind) + ": " + what);
  };
  if (!(dt > 0.0)) fail("dt must be positive");
  if (episode_len < 1) fail("episode_len must be >= 1");
  if (static_cast<std::size_t>(action_low.size()) != action_dim ||
      static_cast<std::size_t>(action_high.size()) != action_dim) {
    fail("action bounds have wrong dimension");
  }
  for (std::size_t i = 0; i < action_dim; ++i) {
    if (action_low[i] > action_high[i]) fail("action_low must not exceed action_high");
  }
  if (static_cast<std::size_t>(Q.rows()) != state_dim || Q.rows() != Q.cols()) fail("Q shape");
  if (static_cast<std::size_t>(R.rows()) != action_dim || R.rows() != R.cols()) fail("R shape");
  if (!Q.isApprox(Q.transpose()) || !R.isApprox(R.transpose())) fail("Q and R must be symmetric");
  if (static_cast<std::size_t>(x_e.size()) != state_dim) fail("x_e shape");
  if (static_cast<std::size_t>(init_low.size()) != state_dim ||
      static_cast<std::size_t>(init_high.size()) != state_dim) {
    fail("init box shape");
  }
}

void set_cost_scales(EnvironmentSpec& spec, double q_scale, double r_scale) {
  spec.Q = q_scale * Matrix::Identity(spec.state_dim, spec.state_dim);
  spec.R = r_scale * Matrix::Identity(spec.action_dim, spec.action_dim);
}

EnvironmentSpec make_environment(EnvKind kind) {
  EnvironmentSpec s;
  s.kind = kind;
  s.dt = 0.01;
  s.episode_len = 300;
  // Action bounds: [min, max] of the unclipped LQR policy's actions over 10
  // evaluation episodes (seed 0), frozen here. See calibrate_action_bounds().
  switch (kind) {
    case EnvKind::LinearSystem:
      s.state_dim = 2;
      s.action_dim = 1;
      s.integrator = Integrator::DiscreteMap;
      s.A = Matrix{{1.0, 0.02}, {0.0, 1.0}};
      s.B = Matrix{{0.0}, {0.02}};
      s.x_e = Vector::Zero(2);
      s.init_low = vec({-1.0, -1.0});
      s.init_high = vec({1.0, 1.0});
      s.action_low = vec({-0.823226176});
      s.action_high = vec({1.89700673});
      set_cost_scales(s, 1.0, 1.0);
      break;
    case EnvKind::FluidFlow:
      s.state_dim = 3;
      s.action_dim = 1;
      s.integrator = Integrator::RK4;
      s.x_e = Vector::Zero(3);
      s.init_low = vec({-1.0, -1.0, 0.0});
      s.init_high = vec({1.0, 1.0, 1.0});
      s.action_low = vec({-1.26812319});
      s.action_high = vec({1.54475649});
      set_cost_scales(s, 1.0, 1.0);
      break;
    case EnvKind::Lorenz63: {
      s.state_dim = 3;
      s.action_dim = 1;
      s.integrator = Integrator::RK4;
      const double c = std::sqrt(kLorenzBeta * (kLorenzRho - 1.0));
      s.x_e = vec({c, c, kLorenzRho - 1.0});
      s.init_low = vec({-20.0, -20.0, 0.0});
      s.init_high = vec({20.0, 20.0, 50.0});
      s.action_low = vec({-424.343943});
      s.action_high = vec({1356.79186});
      set_cost_scales(s, 1.0, 0.001);
      break;
    }
    case EnvKind::DoubleWell:
      s.state_dim = 2;
      s.action_dim = 1;
      s.integrator = Integrator::EulerMaruyama;
      s.x_e = Vector::Zero(2);
      s.init_low = vec({-2.0, -2.0});
      s.init_high = vec({2.0, 2.0});
      s.action_low = vec({-13.2135271});
      s.action_high = vec({15.7949051});
      set_cost_scales(s, 1.0, 1.0);
      break;
  }
  return s;
}

Vector drift(const EnvironmentSpec& spec, const Vector& x, const Vector& u) {
  check_dims(spec, x, u);
  switch (spec.kind) {
    case EnvKind::LinearSystem:
      return spec.A * x + spec.B * u;
    case EnvKind::FluidFlow:
      return vec({kFlowMu * x[0] - kFlowOmega * x[1] + kFlowCoupling * x[0] * x[2],
                  kFlowOmega * x[0] + kFlowMu * x[1] + kFlowCoupling * x[1] * x[2] + u[0],
                  -kFlowLambda * (x[2] - x[0] * x[0] - x[1] * x[1])});
    case EnvKind::Lorenz63:
      return vec({kLorenzSigma * (x[1] - x[0]) + u[0], (kLorenzRho - x[2]) * x[0] - x[1],
                  x[0] * x[1] - kLorenzBeta * x[2]});
    case EnvKind::DoubleWell:
      return vec({4.0 * x[0] - 4.0 * x[0] * x[0] * x[0] + u[0], -2.0 * x[1] + u[0]});
  }
  return {};
}

Matrix diffusion(const EnvironmentSpec& spec, const Vector& x) {
  if (spec.kind != EnvKind::DoubleWell) {
    return Matrix::Zero(spec.state_dim, spec.state_dim);
  }
  return spec.noise_scale * Matrix{{0.7, x[0]}, {0.0, 0.5}};
}

Vector clip_action(const EnvironmentSpec& spec, const Vector& u) {
  return u.cwiseMax(spec.action_low).cwiseMin(spec.action_high);
}

Vector step(const EnvironmentSpec& spec, const Vector& x, const Vector& u, Rng& rng) {
  check_dims(spec, x, u);
  const Vector uc = clip_action(spec, u);
  Vector next;
  switch (spec.integrator) {
    case Integrator::DiscreteMap:
      next = drift(spec, x, uc);
      break;
    case Integrator::RK4:
      next = rk4(spec, x, uc);
      break;
    case Integrator::EulerMaruyama: {
      std::normal_distribution<double> normal(0.0, 1.0);
      Vector xi(static_cast<Eigen::Index>(spec.state_dim));
      for (Eigen::Index i = 0; i < xi.size(); ++i) xi[i] = normal(rng);
      next = x + drift(spec, x, uc) * spec.dt + diffusion(spec, x) * (std::sqrt(spec.dt) * xi);
      break;
    }
  }
  if (!next.allFinite()) {
    throw NonFiniteState("environment " + env_name(spec.kind) + " produced a non-finite state");
  }
  return next;
}

double cost(const EnvironmentSpec& spec, const Vector& x, const Vector& u) {
  const Vector d = x - spec.x_e;
  return d.dot(spec.Q * d) + u.dot(spec.R * u);
}

Vector reset(const EnvironmentSpec& spec, Rng& rng) {
  Vector x(static_cast<Eigen::Index>(spec.state_dim));
  for (std::size_t i = 0; i < spec.state_dim; ++i) {
    const double lo = spec.init_low[i];
    const double hi = spec.init_high[i];
    if (lo == hi) {
      x[i] = lo;
      continue;
    }
    std::uniform_real_distribution<double> dist(lo, hi);
    x[i] = dist(rng);
  }
  return x;
}

std::vector<Episode> rollout(const EnvironmentSpec& spec, const Policy& policy, Rng& rng,
                             std::size_t episodes, bool keep_transitions) {
  Rng env_rng(rng());
  Rng policy_rng(rng());
  std::vector<Episode> out;
  out.reserve(episodes);
  for (std::size_t ep = 0; ep < episodes; ++ep) {
    Episode episode;
    if (keep_transitions) episode.transitions.reserve(spec.episode_len);
    Vector x = reset(spec, env_rng);
    double max_cost = 0.0;
    for (std::size_t k = 0; k < spec.episode_len; ++k) {
      const Vector u = clip_action(spec, policy(x, policy_rng));
      const double c = cost(spec, x, u);
      max_cost = std::max(max_cost, c);
      Vector next;
      try {
        next = step(spec, x, u, env_rng);
      } catch (const NonFiniteState&) {
        const double remaining = static_cast<double>(spec.episode_len - k);
        episode.episodic_return -= max_cost * remaining;
        episode.diverged = true;
        break;
      }
      const double reward = -c;
      episode.episodic_return += reward;
      if (keep_transitions) {
        episode.transitions.push_back({x, u, reward, next, k + 1 == spec.episode_len});
      }
      x = std::move(next);
    }
    out.push_back(std::move(episode));
  }
  return out;
}

double mean_return(const std::vector<Episode>& episodes) {
  if (episodes.empty()) return 0.0;
  double s = 0.0;
  for (const auto& e : episodes) s += e.episodic_return;
  return s / static_cast<double>(episodes.size());
}

}  // namespace karl
