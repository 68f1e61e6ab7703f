#pragma once

#include <cstddef>
#include <utility>

#include "karl/environments.hpp"
#include "karl/numerics.hpp"

namespace karl {

enum class LqrMode { Discrete, Continuous };

struct LqrSolution {
  Matrix P;
  Matrix K;
  LqrMode mode = LqrMode::Discrete;
};

struct Linearization {
  Matrix A;
  Matrix B;
};

/// Analytic Jacobians of the drift at (x_e, u = 0). Throws NotEquilibrium if
/// the drift does not vanish there (the discrete linear system is returned as is).
Linearization linearize(const EnvironmentSpec& env);

/// Discrete algebraic Riccati equation by fixed-point iteration from P = Q.
LqrSolution solve_dare(const Matrix& A, const Matrix& B, const Matrix& Q, const Matrix& R,
                       double tol = 1e-12, std::size_t max_iters = 1000000);

/// Continuous algebraic Riccati equation as the steady state of the Riccati
/// differential equation, integrated with RK4 in pseudo-time from P = Q.
LqrSolution solve_care(const Matrix& A, const Matrix& B, const Matrix& Q, const Matrix& R,
                       double tol = 1e-10, std::size_t max_iters = 10000000,
                       double pseudo_dt = 1e-3);

Matrix dare_residual(const Matrix& A, const Matrix& B, const Matrix& Q, const Matrix& R,
                     const Matrix& P);
Matrix care_residual(const Matrix& A, const Matrix& B, const Matrix& Q, const Matrix& R,
                     const Matrix& P);

/// DARE for the linear system, CARE for the continuous environments.
LqrSolution solve_lqr(const EnvironmentSpec& env);

/// clip(-K (x - x_e), [low, high]).
Vector lqr_policy(const LqrSolution& sol, const Vector& x, const Vector& x_e, const Vector& low,
                  const Vector& high);

Policy make_lqr_policy(const EnvironmentSpec& env, const LqrSolution& sol);

/// Spectral radius estimate via ||M^k||^(1/k) with k = 2^squarings.
double spectral_radius(const Matrix& M, int squarings = 12);

/// Solves M^T S + S M = -I through the vectorized Kronecker system.
Matrix solve_lyapunov_identity(const Matrix& M);

/// Closed-loop stability check: discrete spectral radius < 1, or a positive
/// definite Lyapunov certificate in continuous mode.
bool closed_loop_stable(const Linearization& lin, const LqrSolution& sol);

/// [min, max] of the actions the unclipped LQR policy takes over `episodes`
/// evaluation episodes.
std::pair<Vector, Vector> calibrate_action_bounds(const EnvironmentSpec& env,
                                                  std::uint64_t seed = 0,
                                                  std::size_t episodes = 10);

}  // namespace karl
