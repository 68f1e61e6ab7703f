#include "karl/lqr.hpp"

#include <cmath>
#include <limits>

#include "karl/errors.hpp"

namespace karl {

namespace {

constexpr double kFlowMu = 0.1;
constexpr double kFlowOmega = 1.0;
constexpr double kFlowLambda = 1.0;
constexpr double kLorenzSigma = 10.0;
constexpr double kLorenzRho = 28.0;
constexpr double kLorenzBeta = 8.0 / 3.0;

Matrix symmetrize(const Matrix& P) { return 0.5 * (P + P.transpose()); }

Matrix riccati_rhs(const Matrix& A, const Matrix& B, const Matrix& Q, const Matrix& Rinv,
                   const Matrix& P) {
  return A.transpose() * P + P * A - P * B * Rinv * B.transpose() * P + Q;
}

}  // namespace

Linearization linearize(const EnvironmentSpec& env) {
  if (env.kind == EnvKind::LinearSystem) {
    return {env.A, env.B};
  }
  const Vector u0 = Vector::Zero(static_cast<Eigen::Index>(env.action_dim));
  const Vector f0 = drift(env, env.x_e, u0);
  if (f0.norm() >= 1e-8) {
    throw NotEquilibrium("linearize: drift at reference point has norm " +
                         std::to_string(f0.norm()));
  }
  const Vector& xe = env.x_e;
  switch (env.kind) {
    case EnvKind::FluidFlow: {
      // Jacobian of the cylinder-wake ROM; the bilinear and quadratic terms
      // contribute through x_e (the origin by default).
      const double c = -0.1;
      Matrix A{{kFlowMu + c * xe[2], -kFlowOmega, c * xe[0]},
               {kFlowOmega, kFlowMu + c * xe[2], c * xe[1]},
               {2.0 * kFlowLambda * xe[0], 2.0 * kFlowLambda * xe[1], -kFlowLambda}};
      return {A, Matrix{{0.0}, {1.0}, {0.0}}};
    }
    case EnvKind::Lorenz63: {
      Matrix A{{-kLorenzSigma, kLorenzSigma, 0.0},
               {kLorenzRho - xe[2], -1.0, -xe[0]},
               {xe[1], xe[0], -kLorenzBeta}};
      return {A, Matrix{{1.0}, {0.0}, {0.0}}};
    }
    case EnvKind::DoubleWell: {
      Matrix A{{4.0 - 12.0 * xe[0] * xe[0], 0.0}, {0.0, -2.0}};
      return {A, Matrix{{1.0}, {1.0}}};
    }
    case EnvKind::LinearSystem:
      break;
  }
  return {env.A, env.B};
}

Matrix dare_residual(const Matrix& A, const Matrix& B, const Matrix& Q, const Matrix& R,
                     const Matrix& P) {
  const Matrix S = R + B.transpose() * P * B;
  const Matrix BtPA = B.transpose() * P * A;
  return Q + A.transpose() * P * A - BtPA.transpose() * S.ldlt().solve(BtPA) - P;
}

Matrix care_residual(const Matrix& A, const Matrix& B, const Matrix& Q, const Matrix& R,
                     const Matrix& P) {
  const Matrix Rinv = R.inverse();
  return riccati_rhs(A, B, Q, Rinv, P);
}

LqrSolution solve_dare(const Matrix& A, const Matrix& B, const Matrix& Q, const Matrix& R,
                       double tol, std::size_t max_iters) {
  Matrix P = Q;
  for (std::size_t it = 0; it < max_iters; ++it) {
    const Matrix S = R + B.transpose() * P * B;
    const Matrix BtPA = B.transpose() * P * A;
    Matrix next = symmetrize(Q + A.transpose() * P * A - BtPA.transpose() * S.ldlt().solve(BtPA));
    if (!next.allFinite()) break;
    const double delta = (next - P).cwiseAbs().maxCoeff();
    P = std::move(next);
    if (delta < tol) {
      const Matrix S2 = R + B.transpose() * P * B;
      Matrix K = S2.ldlt().solve(B.transpose() * P * A);
      return {P, K, LqrMode::Discrete};
    }
  }
  throw NoConvergence("solve_dare: no convergence");
}

LqrSolution solve_care(const Matrix& A, const Matrix& B, const Matrix& Q, const Matrix& R,
                       double tol, std::size_t max_iters, double pseudo_dt) {
  const Matrix Rinv = R.inverse();
  Matrix P = Q;
  const double h = pseudo_dt;
  for (std::size_t it = 0; it < max_iters; ++it) {
    const Matrix k1 = riccati_rhs(A, B, Q, Rinv, P);
    if (k1.cwiseAbs().maxCoeff() < tol) {
      Matrix K = Rinv * B.transpose() * P;
      return {P, K, LqrMode::Continuous};
    }
    const Matrix k2 = riccati_rhs(A, B, Q, Rinv, P + 0.5 * h * k1);
    const Matrix k3 = riccati_rhs(A, B, Q, Rinv, P + 0.5 * h * k2);
    const Matrix k4 = riccati_rhs(A, B, Q, Rinv, P + h * k3);
    P = symmetrize(P + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
    if (!P.allFinite()) break;
  }
  throw NoConvergence("solve_care: no convergence");
}

LqrSolution solve_lqr(const EnvironmentSpec& env) {
  const Linearization lin = linearize(env);
  if (env.kind == EnvKind::LinearSystem) {
    return solve_dare(lin.A, lin.B, env.Q, env.R);
  }
  return solve_care(lin.A, lin.B, env.Q, env.R);
}

Vector lqr_policy(const LqrSolution& sol, const Vector& x, const Vector& x_e, const Vector& low,
                  const Vector& high) {
  const Vector u = -sol.K * (x - x_e);
  return u.cwiseMax(low).cwiseMin(high);
}

Policy make_lqr_policy(const EnvironmentSpec& env, const LqrSolution& sol) {
  return [sol, x_e = env.x_e, low = env.action_low, high = env.action_high](const Vector& x, Rng&) {
    return lqr_policy(sol, x, x_e, low, high);
  };
}

double spectral_radius(const Matrix& M, int squarings) {
  // ||M^(2^s)||^(2^-s), renormalizing at each squaring to avoid overflow.
  Matrix P = M;
  double log_scale = 0.0;
  double power = 1.0;
  for (int s = 0; s < squarings; ++s) {
    const double n = P.norm();
    if (n == 0.0) return 0.0;
    P /= n;
    log_scale += std::log(n) / power;
    P = P * P;
    power *= 2.0;
  }
  const double n = P.norm();
  if (n == 0.0) return 0.0;
  return std::exp(log_scale + std::log(n) / power);
}

Matrix solve_lyapunov_identity(const Matrix& M) {
  const Eigen::Index n = M.rows();
  const Matrix I = Matrix::Identity(n, n);
  // Row-major vec: vec(M^T S) = (M^T kron I) vec(S), vec(S M) = (I kron M^T) vec(S).
  Matrix L = Matrix::Zero(n * n, n * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      for (Eigen::Index k = 0; k < n; ++k) {
        L(i * n + j, k * n + j) += M(k, i);  // (M^T S)_{ij} = sum_k M_{ki} S_{kj}
        L(i * n + j, i * n + k) += M(k, j);  // (S M)_{ij} = sum_k S_{ik} M_{kj}
      }
    }
  }
  Vector rhs(n * n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) rhs[i * n + j] = -I(i, j);
  const Vector s = L.fullPivLu().solve(rhs);
  Matrix S(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) S(i, j) = s[i * n + j];
  return symmetrize(S);
}

bool closed_loop_stable(const Linearization& lin, const LqrSolution& sol) {
  const Matrix Acl = lin.A - lin.B * sol.K;
  if (sol.mode == LqrMode::Discrete) {
    return spectral_radius(Acl) < 1.0;
  }
  const Matrix S = solve_lyapunov_identity(Acl);
  if (!S.allFinite()) return false;
  Eigen::LLT<Eigen::MatrixXd> llt(S);
  return llt.info() == Eigen::Success;
}

std::pair<Vector, Vector> calibrate_action_bounds(const EnvironmentSpec& env, std::uint64_t seed,
                                                  std::size_t episodes) {
  EnvironmentSpec open = env;
  const double inf = std::numeric_limits<double>::infinity();
  open.action_low = Vector::Constant(static_cast<Eigen::Index>(env.action_dim), -inf);
  open.action_high = Vector::Constant(static_cast<Eigen::Index>(env.action_dim), inf);
  const LqrSolution sol = solve_lqr(open);
  Rng rng(seed);
  const auto eps = rollout(open, make_lqr_policy(open, sol), rng, episodes, true);
  Vector lo = Vector::Constant(static_cast<Eigen::Index>(env.action_dim), inf);
  Vector hi = Vector::Constant(static_cast<Eigen::Index>(env.action_dim), -inf);
  for (const auto& e : eps) {
    for (const auto& t : e.transitions) {
      lo = lo.cwiseMin(t.u);
      hi = hi.cwiseMax(t.u);
    }
  }
  return {lo, hi};
}

}  // namespace karl
