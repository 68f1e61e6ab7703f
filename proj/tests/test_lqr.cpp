#include <doctest.h>

#include <cmath>

#include "karl/errors.hpp"
#include "karl/lqr.hpp"

using namespace karl;

namespace {

Matrix scalar(double v) { return Matrix::Constant(1, 1, v); }

const EnvKind kAll[] = {EnvKind::LinearSystem, EnvKind::FluidFlow, EnvKind::Lorenz63,
                        EnvKind::DoubleWell};

}  // namespace

TEST_CASE("scalar DARE") {
  const auto a = solve_dare(scalar(0), scalar(1), scalar(1), scalar(1));
  CHECK(a.P(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::abs(a.K(0, 0)) < 1e-12);

  const auto b = solve_dare(scalar(1), scalar(1), scalar(1), scalar(1));
  CHECK(std::abs(b.P(0, 0) - (1.0 + std::sqrt(5.0)) / 2.0) < 1e-8);
  CHECK(std::abs(b.K(0, 0) - (std::sqrt(5.0) - 1.0) / 2.0) < 1e-8);
  CHECK(dare_residual(scalar(1), scalar(1), scalar(1), scalar(1), b.P).cwiseAbs().maxCoeff() < 1e-8);
  CHECK(b.mode == LqrMode::Discrete);
}

TEST_CASE("scalar CARE") {
  const auto a = solve_care(scalar(-1), scalar(0), scalar(1), scalar(1));
  CHECK(a.P(0, 0) == doctest::Approx(0.5).epsilon(1e-9));

  const auto b = solve_care(scalar(0), scalar(1), scalar(1), scalar(1));
  CHECK(b.P(0, 0) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(b.K(0, 0) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(b.mode == LqrMode::Continuous);
}

TEST_CASE("unstabilizable system does not converge") {
  CHECK_THROWS_AS(solve_dare(scalar(2), scalar(0), scalar(1), scalar(1), 1e-12, 1000),
                  NoConvergence);
}

TEST_CASE("linearize closed forms") {
  const auto lin = make_environment(EnvKind::LinearSystem);
  const Linearization l = linearize(lin);
  CHECK(l.A == lin.A);
  CHECK(l.B == lin.B);

  const Linearization w = linearize(make_environment(EnvKind::DoubleWell));
  CHECK(w.A == Matrix{{4.0, 0.0}, {0.0, -2.0}});
  CHECK(w.B == Matrix{{1.0}, {1.0}});

  const auto lorenz = make_environment(EnvKind::Lorenz63);
  const Vector& xe = lorenz.x_e;
  const Matrix expect{{-10.0, 10.0, 0.0}, {28.0 - xe[2], -1.0, -xe[0]}, {xe[1], xe[0], -8.0 / 3.0}};
  const Linearization z = linearize(lorenz);
  CHECK((z.A - expect).cwiseAbs().maxCoeff() < 1e-14);
  CHECK(z.B == Matrix{{1.0}, {0.0}, {0.0}});
}

TEST_CASE("linearize matches finite differences of the drift") {
  for (EnvKind k : {EnvKind::FluidFlow, EnvKind::Lorenz63, EnvKind::DoubleWell}) {
    const auto env = make_environment(k);
    const Linearization l = linearize(env);
    const Vector u0 = Vector::Zero(1);
    const double h = 1e-6;
    for (Eigen::Index j = 0; j < env.x_e.size(); ++j) {
      Vector xp = env.x_e, xm = env.x_e;
      xp[j] += h;
      xm[j] -= h;
      const Vector col = (drift(env, xp, u0) - drift(env, xm, u0)) / (2 * h);
      CHECK((l.A.col(j) - col).cwiseAbs().maxCoeff() < 1e-6);
    }
    const Vector bcol = (drift(env, env.x_e, Vector::Constant(1, h)) -
                         drift(env, env.x_e, Vector::Constant(1, -h))) / (2 * h);
    CHECK((l.B.col(0) - bcol).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("linearize rejects non-equilibria") {
  auto env = make_environment(EnvKind::Lorenz63);
  env.x_e = Eigen::Vector3d(1, 1, 1);
  CHECK_THROWS_AS(linearize(env), NotEquilibrium);
}

TEST_CASE("Riccati residuals and stability on every environment") {
  for (EnvKind k : kAll) {
    CAPTURE(env_name(k));
    const auto env = make_environment(k);
    const Linearization l = linearize(env);
    const LqrSolution sol = solve_lqr(env);
    CHECK((sol.P - sol.P.transpose()).cwiseAbs().maxCoeff() < 1e-10);
    if (k == EnvKind::LinearSystem) {
      CHECK(sol.mode == LqrMode::Discrete);
      CHECK(dare_residual(l.A, l.B, env.Q, env.R, sol.P).cwiseAbs().maxCoeff() < 1e-8);
      CHECK(spectral_radius(l.A - l.B * sol.K) < 1.0);
    } else {
      CHECK(sol.mode == LqrMode::Continuous);
      CHECK(care_residual(l.A, l.B, env.Q, env.R, sol.P).cwiseAbs().maxCoeff() < 1e-6);
    }
    CHECK(closed_loop_stable(l, sol));
    CHECK(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(sol.P).eigenvalues().minCoeff() > -1e-10);
  }
}

TEST_CASE("spectral radius and Lyapunov helpers") {
  CHECK(spectral_radius(Matrix{{0.5, 100.0}, {0.0, 0.25}}) == doctest::Approx(0.5).epsilon(1e-2));
  const Matrix M{{-1.0, 2.0}, {0.0, -3.0}};
  const Matrix S = solve_lyapunov_identity(M);
  CHECK((M.transpose() * S + S * M + Matrix::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("lqr_policy") {
  const auto sol = solve_dare(scalar(1), scalar(1), scalar(1), scalar(1));
  const Vector lo = Vector::Constant(1, -10), hi = Vector::Constant(1, 10);
  CHECK(lqr_policy(sol, Vector::Constant(1, 3.0), Vector::Constant(1, 3.0), lo, hi)[0] == 0.0);
  CHECK(lqr_policy(sol, Vector::Constant(1, 1.0), Vector::Zero(1), lo, hi)[0] ==
        doctest::Approx(-0.618034).epsilon(1e-5));
  CHECK(lqr_policy(sol, Vector::Constant(1, -1e9), Vector::Zero(1), lo, hi)[0] == 10.0);
  CHECK(lqr_policy(sol, Vector::Constant(1, 1e9), Vector::Zero(1), lo, hi)[0] == -10.0);
}

TEST_CASE("LQR beats the zero policy on the linear system") {
  const auto env = make_environment(EnvKind::LinearSystem);
  const Policy zero = [](const Vector&, Rng&) { return Vector::Zero(1).eval(); };
  Rng a(3), b(3);
  const double lqr = mean_return(rollout(env, make_lqr_policy(env, solve_lqr(env)), a, 10, false));
  const double none = mean_return(rollout(env, zero, b, 10, false));
  CHECK(lqr > none);
}

TEST_CASE("frozen action bounds match the LQR calibration") {
  for (EnvKind k : kAll) {
    CAPTURE(env_name(k));
    const auto env = make_environment(k);
    const auto [lo, hi] = calibrate_action_bounds(env, 0, 10);
    CHECK(std::abs(lo[0] - env.action_low[0]) <= 1e-4 * std::abs(lo[0]));
    CHECK(std::abs(hi[0] - env.action_high[0]) <= 1e-4 * std::abs(hi[0]));
  }
}
