#include <doctest.h>

#include <cmath>

#include "karl/errors.hpp"
#include "karl/koopman.hpp"

using namespace karl;

namespace {

Vector v1(double a) { return Vector::Constant(1, a); }

Transition transition(const Vector& x, const Vector& u, const Vector& x_next) {
  Transition t;
  t.x = x;
  t.u = u;
  t.x_next = x_next;
  return t;
}

// x' = 0.9 x + 0.1 u on x, u uniform in [-1, 1].
std::vector<Transition> scalar_linear_data(std::size_t n, Rng& rng) {
  std::uniform_real_distribution<double> unif(-1, 1);
  std::vector<Transition> out;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = unif(rng), u = unif(rng);
    out.push_back(transition(v1(x), v1(u), v1(0.9 * x + 0.1 * u)));
  }
  return out;
}

std::vector<Transition> random_env_data(const EnvironmentSpec& env, std::size_t n, Rng& rng) {
  std::vector<Transition> out;
  for (std::size_t i = 0; i < n; ++i) {
    const Vector x = reset(env, rng);
    Vector u(static_cast<Eigen::Index>(env.action_dim));
    for (Eigen::Index j = 0; j < u.size(); ++j)
      u[j] = std::uniform_real_distribution<double>(env.action_low[j], env.action_high[j])(rng);
    out.push_back(transition(x, u, step(env, x, u, rng)));
  }
  return out;
}

}  // namespace

TEST_CASE("fit_tensor on a scalar linear system") {
  Rng rng(0);
  const auto data = scalar_linear_data(1000, rng);
  const MonomialBasis phi(1, 1), psi(1, 1);
  const KoopmanTensor t = fit_tensor(data, phi, psi, 0.0);
  // joint feature [1, x, u, u x]; phi(x') = [1, 0.9 x + 0.1 u]
  Matrix expect(2, 4);
  expect << 1, 0, 0, 0, 0, 0.9, 0.1, 0;
  CHECK((t.M() - expect).cwiseAbs().maxCoeff() < 1e-10);

  const Matrix k0 = k_u(t, v1(0.0));
  CHECK((k0 - Matrix{{1.0, 0.0}, {0.0, 0.9}}).cwiseAbs().maxCoeff() < 1e-10);
  CHECK(t.sample_count() == 1000);
}

TEST_CASE("fit_tensor recovers a planted M") {
  Rng rng(1);
  std::normal_distribution<double> g;
  const MonomialBasis phi(2, 2), psi(1, 2);
  const Eigen::Index dx = 6, du = 3;
  Matrix planted(dx, dx * du);
  for (Eigen::Index i = 0; i < planted.size(); ++i) planted.data()[i] = g(rng);

  // Synthetic targets: the features of x' are produced directly by the planted map.
  const std::size_t n = 500;
  Matrix X(static_cast<Eigen::Index>(n), dx * du), Y(static_cast<Eigen::Index>(n), dx);
  std::vector<Transition> data;
  for (std::size_t i = 0; i < n; ++i) {
    const Vector x = Eigen::Vector2d(g(rng), g(rng));
    const Vector u = v1(g(rng));
    data.push_back(transition(x, u, x));
    X.row(static_cast<Eigen::Index>(i)) = joint_feature(phi, psi, x, u).transpose();
  }
  Y = X * planted.transpose();
  const Matrix M = lstsq(X, Y, 0.0).transpose();
  CHECK((M - planted).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("fit_tensor exactly represents linear dynamics") {
  Rng rng(2);
  const auto env = make_environment(EnvKind::LinearSystem);
  const auto data = random_env_data(env, 400, rng);
  const KoopmanTensor t = fit_tensor(data, MonomialBasis(2, 1), MonomialBasis(1, 1), 0.0);
  double worst = 0.0;
  for (const auto& s : data) {
    const Vector pred = predict_phi(t, s.x, s.u);
    worst = std::max(worst, (pred - t.phi().eval(s.x_next)).cwiseAbs().maxCoeff());
  }
  CHECK(worst < 1e-8);
}

TEST_CASE("fit_tensor degenerate inputs") {
  const MonomialBasis phi(1, 2), psi(1, 2);
  std::vector<Transition> one(5, transition(v1(0.5), v1(0.2), v1(0.4)));
  CHECK_THROWS_AS(fit_tensor(one, phi, psi, 0.0), SingularSystem);
  CHECK(all_finite(fit_tensor(one, phi, psi, 1e-3).M()));
  CHECK_THROWS_AS(fit_tensor(std::vector<Transition>{}, phi, psi, 1e-3), InsufficientData);
}

TEST_CASE("k_u contraction") {
  Rng rng(3);
  std::normal_distribution<double> g;
  const MonomialBasis phi(3, 2), psi(1, 2);
  Matrix M(10, 30);
  for (Eigen::Index i = 0; i < M.size(); ++i) M.data()[i] = g(rng);
  const KoopmanTensor t(phi, psi, M);

  for (int trial = 0; trial < 10; ++trial) {
    const Vector x = Eigen::Vector3d(g(rng), g(rng), g(rng));
    const Vector u = v1(g(rng));
    const Vector direct = M * joint_feature(phi, psi, x, u);
    CHECK((k_u(t, u) * phi.eval(x) - direct).cwiseAbs().maxCoeff() < 1e-12 * (1 + direct.norm()));
  }

  // linear in psi(u)
  const Vector a = psi.eval(v1(0.3)), b = psi.eval(v1(-1.2));
  const Matrix lin = k_from_features(t, 2.0 * a - 0.5 * b);
  CHECK((lin - (2.0 * k_from_features(t, a) - 0.5 * k_from_features(t, b))).cwiseAbs().maxCoeff() <
        1e-12);

  // degree-0 control dictionary: K^u does not depend on u
  const KoopmanTensor t0(phi, MonomialBasis(1, 0), M.leftCols(10));
  CHECK(k_u(t0, v1(1.0)) == k_u(t0, v1(-7.0)));
}

TEST_CASE("dense tensor round trip") {
  Rng rng(4);
  std::normal_distribution<double> g;
  Matrix M(6, 18);
  for (Eigen::Index i = 0; i < M.size(); ++i) M.data()[i] = g(rng);
  const KoopmanTensor t(MonomialBasis(2, 2), MonomialBasis(2, 1), M);
  const auto dense = t.to_tensor();
  CHECK(dense.size() == 6u * 6u * 3u);
  CHECK(dense[2 * 18 + 4 * 3 + 1] == t.tensor(2, 4, 1));
  CHECK(KoopmanTensor::from_tensor(dense, 6, 3) == M);
}

TEST_CASE("predicted constant feature stays 1") {
  Rng rng(5);
  const auto env = make_environment(EnvKind::FluidFlow);
  const auto data = random_env_data(env, 3000, rng);
  const KoopmanTensor t = fit_tensor(data, MonomialBasis(3, 2), MonomialBasis(1, 2), 1e-8);
  for (std::size_t i = 0; i < 50; ++i) {
    CHECK(std::abs(predict_phi(t, data[i].x, data[i].u)[0] - 1.0) < 1e-6);
  }
}

TEST_CASE("fluid flow holdout one-step error") {
  Rng rng(6);
  const auto env = make_environment(EnvKind::FluidFlow);
  const auto train = random_env_data(env, 30000, rng);
  const auto test = random_env_data(env, 2000, rng);
  const KoopmanTensor t = fit_tensor(train, MonomialBasis(3, 2), MonomialBasis(1, 2), 1e-6);
  double err = 0.0, ref = 0.0;
  for (const auto& s : test) {
    const Vector x_hat = predict_phi(t, s.x, s.u).segment(1, 3);
    err += (x_hat - s.x_next).squaredNorm();
    ref += s.x_next.squaredNorm();
  }
  CHECK(std::sqrt(err / ref) < 0.05);
}

TEST_CASE("rktd scalar update") {
  RktdState s(1, 1, 1.0);
  CHECK(s.M().isZero());
  s = rktd_update(s, v1(1.0), v1(2.0));
  CHECK(s.M()(0, 0) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(s.samples_seen == 1);
}

TEST_CASE("rktd matches batch ridge regression") {
  Rng rng(7);
  const auto env = make_environment(EnvKind::DoubleWell);
  const auto data = random_env_data(env, 300, rng);
  const MonomialBasis phi(2, 2), psi(1, 2);
  const double delta = 0.5;
  RktdState s(phi.dim(), psi.dim(), delta);
  for (const auto& t : data) s = rktd_update(s, t.x, t.u, t.x_next, phi, psi);
  const Matrix batch = fit_tensor(data, phi, psi, delta).M();
  CHECK((s.M() - batch).cwiseAbs().maxCoeff() < 1e-6 * (1.0 + batch.cwiseAbs().maxCoeff()));
}

TEST_CASE("generator of exponential decay") {
  // x' = -x with no control; phi = (1, x)
  Rng rng(8);
  std::uniform_real_distribution<double> unif(-1, 1);
  const double dt = 0.01;
  std::vector<GeneratorSample> samples;
  for (int i = 0; i < 2000; ++i) {
    const double x = unif(rng);
    samples.push_back({v1(x), v1(0.0), v1(x * std::exp(-dt)), dt});
  }
  const MonomialBasis phi(1, 1), psi(1, 0);
  const KoopmanTensor L = fit_generator(samples, phi, psi, 0.0);
  CHECK(L.M()(1, 1) == doctest::Approx(-1.0).epsilon(2e-2));
  CHECK(std::abs(L.M()(1, 0)) < 1e-2);
  CHECK(L.M().row(0).cwiseAbs().maxCoeff() < 1e-2);

  // diffusion estimate dx^2 / dt is O(dt) for a deterministic flow
  for (const auto& s : samples) {
    const double d = s.x_next[0] - s.x[0];
    CHECK(d * d / dt < 10.0 * dt);
  }
  const Vector target = generator_target(samples[0], phi);
  CHECK(target[0] == 0.0);
}

TEST_CASE("policy_consistency") {
  const auto fluid = make_environment(EnvKind::FluidFlow);
  const DeterministicPolicy constant = [](const Vector&) { return v1(0.3); };

  // Tensor and autonomous fit use the same samples.
  {
    Rng a(9), b(9);
    const auto data = collect_policy_data(fluid, constant, a, 2000);
    const KoopmanTensor t = fit_tensor(data, MonomialBasis(3, 2), MonomialBasis(1, 1), 1e-12);
    CHECK(policy_consistency(t, constant, fluid, b, 2000) < 1e-6);
  }

  // Linear system with linear feedback is exactly representable.
  {
    const auto lin = make_environment(EnvKind::LinearSystem);
    Rng rng(10);
    const auto data = random_env_data(lin, 500, rng);
    const KoopmanTensor t = fit_tensor(data, MonomialBasis(2, 1), MonomialBasis(1, 1), 0.0);
    const DeterministicPolicy feedback = [](const Vector& x) { return v1(-0.4 * x[0] + 0.2 * x[1]); };
    CHECK(policy_consistency(t, feedback, lin, rng, 500) < 1e-6);
  }

  // Under-sampled data still produces a finite gap.
  {
    Rng rng(11);
    const auto data = random_env_data(fluid, 200, rng);
    const KoopmanTensor t = fit_tensor(data, MonomialBasis(3, 2), MonomialBasis(1, 2), 1e-6);
    CHECK(std::isfinite(policy_consistency(t, constant, fluid, rng, 3)));
  }
}
