#include <doctest.h>

#include <cmath>

#include "karl/actor_critic.hpp"
#include "karl/errors.hpp"

using namespace karl;

namespace {

Transition tagged(double tag) {
  Transition t;
  t.x = Vector::Constant(1, tag);
  t.u = Vector::Zero(1);
  t.x_next = t.x;
  return t;
}

Matrix random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng) {
  std::normal_distribution<double> g;
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  return m;
}

std::shared_ptr<const KoopmanTensor> linear_tensor(const EnvironmentSpec& env, Rng& rng) {
  std::vector<Transition> data;
  std::uniform_real_distribution<double> unif(env.action_low[0], env.action_high[0]);
  for (int i = 0; i < 500; ++i) {
    Transition t;
    t.x = reset(env, rng);
    t.u = Vector::Constant(1, unif(rng));
    t.x_next = step(env, t.x, t.u, rng);
    data.push_back(t);
  }
  return std::make_shared<const KoopmanTensor>(
      fit_tensor(data, MonomialBasis(2, 2), MonomialBasis(1, 2), 1e-8));
}

AcConfig small_config() {
  AcConfig c;
  c.hidden = 16;
  c.batch_size = 32;
  c.warmup_steps = 100;
  c.total_steps = 400;
  return c;
}

}  // namespace

TEST_CASE("replay buffer is FIFO at capacity") {
  ReplayBuffer buf(3);
  for (int i = 0; i < 5; ++i) buf.push(tagged(i));
  CHECK(buf.size() == 3);
  const auto c = buf.contents();
  CHECK(c[0].x[0] == 2.0);
  CHECK(c[1].x[0] == 3.0);
  CHECK(c[2].x[0] == 4.0);
  CHECK_THROWS_AS(ReplayBuffer(0), ConfigError);

  Rng rng(0);
  ReplayBuffer small(10);
  small.push(tagged(1));
  CHECK_THROWS_AS(small.sample(2, rng), InsufficientData);
}

TEST_CASE("replay buffer samples uniformly") {
  ReplayBuffer buf(10);
  for (int i = 0; i < 10; ++i) buf.push(tagged(i));
  Rng rng(1);
  const std::size_t n = 100000;
  std::vector<int> counts(10, 0);
  for (std::size_t draw = 0; draw < n / 10; ++draw)
    for (std::size_t idx : buf.sample_indices(10, rng)) ++counts[idx];
  const double expect = n / 10.0, sigma = std::sqrt(n * 0.1 * 0.9);
  for (int c : counts) CHECK(std::abs(c - expect) < 4.0 * sigma);
}

TEST_CASE("algorithm names") {
  CHECK(parse_algo("sakc") == Algo::SAKC);
  CHECK(parse_algo("sac-v") == Algo::SAC_V);
  CHECK(parse_algo("sac_q") == Algo::SAC_Q);
  CHECK(algo_name(Algo::SAC_V) == "sac-v");
  CHECK_THROWS_AS(parse_algo("ppo"), ConfigError);
}

TEST_CASE("target_q") {
  const auto env = make_environment(EnvKind::LinearSystem);
  Rng rng(2);
  AgentState a = make_agent(Algo::SAKC, env, small_config(), rng, linear_tensor(env, rng));
  const Vector x = Eigen::Vector2d(0.3, -0.2), u = Vector::Constant(1, 0.4);
  CHECK(target_q(a, x, u) == doctest::Approx(-cost(env, x, u)).epsilon(1e-14));

  a.config.gamma = 0.0;
  a.w_bar.setOnes();
  CHECK(target_q(a, x, u) == -cost(env, x, u));

  // moving w_bar along e_k moves the target by gamma * delta * (M joint)_k
  a.config.gamma = 0.99;
  a.w_bar.setZero();
  const Vector pred = a.tensor->M() * joint_feature(a.tensor->phi(), a.tensor->psi(), x, u);
  const double base = target_q(a, x, u);
  for (Eigen::Index k = 0; k < a.w_bar.size(); ++k) {
    a.w_bar.setZero();
    a.w_bar[k] = 0.1;
    CHECK(target_q(a, x, u) - base == doctest::Approx(0.99 * 0.1 * pred[k]).epsilon(1e-9));
  }

  CHECK_THROWS_AS(make_agent(Algo::SAKC, env, small_config(), rng), ConfigError);
}

TEST_CASE("value weight step") {
  Matrix f(1, 1);
  f << 1;
  const Vector w = value_weight_step(Vector::Zero(1), f, Vector::Ones(1), 1e-3);
  CHECK(w[0] == doctest::Approx(1e-3).epsilon(1e-14));

  // gradient matches finite differences
  Rng rng(3);
  const Matrix F = random_matrix(8, 4, rng);
  const Vector t = random_matrix(8, 1, rng).col(0);
  const Vector w0 = random_matrix(4, 1, rng).col(0);
  Vector g;
  value_weight_loss(w0, F, t, &g);
  for (Eigen::Index i = 0; i < 4; ++i) {
    Vector wp = w0, wm = w0;
    wp[i] += 1e-6;
    wm[i] -= 1e-6;
    const double fd = (value_weight_loss(wp, F, t, nullptr) - value_weight_loss(wm, F, t, nullptr)) / 2e-6;
    CHECK(g[i] == doctest::Approx(fd).epsilon(1e-6));
  }
}

TEST_CASE("q_loss gradient") {
  Rng rng(4);
  const Mlp q({3, 8, 1}, rng);
  const Matrix x = random_matrix(6, 2, rng), u = random_matrix(6, 1, rng);
  const Vector t = random_matrix(6, 1, rng).col(0);
  MlpGrads grads;
  q_loss(q, x, u, t, &grads);
  const Vector g = Mlp::flatten(grads);
  const Vector p = q.flat_parameters();
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    Mlp a = q, b = q;
    Vector pp = p, pm = p;
    pp[i] += 1e-6;
    pm[i] -= 1e-6;
    a.set_flat_parameters(pp);
    b.set_flat_parameters(pm);
    const double fd = (q_loss(a, x, u, t, nullptr) - q_loss(b, x, u, t, nullptr)) / 2e-6;
    CHECK(std::abs(fd - g[i]) < 1e-6 * std::max(1.0, std::abs(fd)));
  }
}

TEST_CASE("policy_loss gradient") {
  Rng rng(5);
  const Vector low = Vector::Constant(1, -2.0), high = Vector::Constant(1, 1.0);
  const PolicyHead head(2, low, high, 6, rng);
  const Mlp q1({3, 8, 1}, rng), q2({3, 8, 1}, rng);
  const Matrix x = random_matrix(7, 2, rng), noise = random_matrix(7, 1, rng);
  MlpGrads grads;
  policy_loss(head, q1, q2, x, noise, 0.3, &grads);
  const Vector g = Mlp::flatten(grads);
  const Vector p = head.trunk.flat_parameters();
  double worst = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    PolicyHead a = head, b = head;
    Vector pp = p, pm = p;
    pp[i] += 1e-6;
    pm[i] -= 1e-6;
    a.trunk.set_flat_parameters(pp);
    b.trunk.set_flat_parameters(pm);
    const double fd = (policy_loss(a, q1, q2, x, noise, 0.3, nullptr) -
                       policy_loss(b, q1, q2, x, noise, 0.3, nullptr)) / 2e-6;
    worst = std::max(worst, std::abs(fd - g[i]) / std::max(1.0, std::abs(fd)));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("policy updates move toward the better action") {
  // Q(x, u) = u exactly: one hidden ReLU kept active by a large bias.
  auto env = make_environment(EnvKind::LinearSystem);
  env.action_low = Vector::Constant(1, -1.0);
  env.action_high = Vector::Constant(1, 1.0);
  AcConfig cfg = small_config();
  cfg.alpha = 0.01;
  cfg.policy_lr = 3e-3;
  Rng rng(6);
  AgentState a = make_agent(Algo::SAC_V, env, cfg, rng);
  Mlp q = Mlp::zeros({3, 1, 1});
  q.layers()[0].W(0, 2) = 1.0;
  q.layers()[0].b[0] = 10.0;
  q.layers()[1].W(0, 0) = 1.0;
  q.layers()[1].b[0] = -10.0;
  a.q1 = a.q2 = q;

  Batch batch;
  batch.x = random_matrix(64, 2, rng) * 0.5;
  const double before = policy_mean_action(a.policy, Vector::Zero(2))[0];
  for (int i = 0; i < 500; ++i) update_policy(a, batch, rng);
  const double after = policy_mean_action(a.policy, Vector::Zero(2))[0];
  CHECK(after > before);
  CHECK(after > 0.9);
}

TEST_CASE("polyak") {
  const Vector w = Eigen::Vector2d(1, 2), w_bar = Eigen::Vector2d(3, -2);
  CHECK(polyak(w, w_bar, 1.0) == w);
  CHECK(polyak(w, w_bar, 0.0) == w_bar);
  CHECK(polyak(w, w_bar, 0.5) == Vector(Eigen::Vector2d(2, 0)));
  CHECK_THROWS_AS(polyak(w, w_bar, 1.5), ConfigError);
  CHECK_THROWS_AS(polyak(w, w_bar, -0.1), ConfigError);
}

TEST_CASE("gradient steps update the targets") {
  const auto env = make_environment(EnvKind::LinearSystem);
  Rng rng(7);
  for (Algo algo : {Algo::SAKC, Algo::SAC_V, Algo::SAC_Q}) {
    CAPTURE(algo_name(algo));
    AgentState a = make_agent(algo, env, small_config(), rng, linear_tensor(env, rng));
    std::vector<Transition> ts;
    for (int i = 0; i < 32; ++i) {
      Transition t;
      t.x = reset(env, rng);
      t.u = Vector::Constant(1, 0.1 * i - 1.0);
      t.reward = -cost(env, t.x, t.u);
      t.x_next = step(env, t.x, t.u, rng);
      ts.push_back(t);
    }
    const Batch b = make_batch(ts);
    const Vector q_before = a.q1.flat_parameters();
    const Vector p_before = a.policy.trunk.flat_parameters();
    gradient_step(a, b, rng);
    CHECK(a.q1.flat_parameters() != q_before);
    CHECK(a.policy.trunk.flat_parameters() != p_before);
    if (algo == Algo::SAKC) {
      CHECK(a.w != Vector::Zero(a.w.size()));
      CHECK((a.w_bar - 0.005 * a.w).cwiseAbs().maxCoeff() < 1e-15);
    }
    if (algo == Algo::SAC_Q) CHECK(a.log_alpha != std::log(0.2));
  }
}

TEST_CASE("value weights stay bounded on large-magnitude states") {
  // |x| ~ 30 gives |phi|^2 ~ 1e6, far past the plain-SGD stability limit at lr 1e-3
  const auto env = make_environment(EnvKind::LinearSystem);
  Rng rng(8);
  AgentState a = make_agent(Algo::SAKC, env, small_config(), rng, linear_tensor(env, rng));
  std::vector<Transition> ts;
  for (int i = 0; i < 32; ++i) {
    Transition t;
    t.x = 30.0 * random_matrix(2, 1, rng).col(0);
    t.u = Vector::Constant(1, 0.5);
    t.reward = -cost(env, t.x, t.u);
    t.x_next = step(env, t.x, t.u, rng);
    ts.push_back(t);
  }
  const Batch b = make_batch(ts);
  for (int i = 0; i < 200; ++i) {
    const Vector before = a.w;
    update_value_weights(a, b, rng);
    REQUIRE(a.w.allFinite());
    CHECK((a.w - before).cwiseAbs().maxCoeff() < 1e-2);
  }
}

TEST_CASE("train") {
  const auto env = make_environment(EnvKind::LinearSystem);
  AcConfig cfg = small_config();
  cfg.total_steps = 0;
  Rng rng(8);
  CHECK(train(Algo::SAC_V, env, cfg, rng).returns.empty());

  auto short_env = env;
  short_env.episode_len = 50;
  cfg.total_steps = 300;
  for (Algo algo : {Algo::SAKC, Algo::SAC_V, Algo::SAC_Q}) {
    CAPTURE(algo_name(algo));
    Rng trng(9);
    auto tensor = linear_tensor(env, trng);
    Rng a(10), b(10);
    std::size_t callbacks = 0;
    const auto ra = train(algo, short_env, cfg, a, tensor, [&](const EpisodeLog&) { ++callbacks; });
    const auto rb = train(algo, short_env, cfg, b, tensor);
    REQUIRE(ra.returns.size() == 6);
    CHECK(callbacks == 6);
    CHECK(ra.returns.back().step == 300);
    for (std::size_t i = 0; i < ra.returns.size(); ++i)
      CHECK(ra.returns[i].episodic_return == rb.returns[i].episodic_return);
    CHECK(ra.agent.policy.trunk.flat_parameters() == rb.agent.policy.trunk.flat_parameters());
  }
}

TEST_CASE("actor policy is the deterministic mean") {
  const auto env = make_environment(EnvKind::FluidFlow);
  Rng rng(11);
  const AgentState a = make_agent(Algo::SAC_V, env, small_config(), rng);
  const Policy p = make_actor_policy(a);
  const Vector x = Eigen::Vector3d(0.1, 0.2, 0.0);
  CHECK(p(x, rng) == p(x, rng));
  CHECK(p(x, rng) == policy_mean_action(a.policy, x));
}
