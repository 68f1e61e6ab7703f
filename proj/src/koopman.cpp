#include "karl/koopman.hpp"

#include <algorithm>
#include <cmath>

#include "karl/errors.hpp"

namespace karl {

KoopmanTensor::KoopmanTensor(MonomialBasis phi, MonomialBasis psi, Matrix M, double ridge,
                             std::size_t sample_count)
    : phi_(std::move(phi)),
      psi_(std::move(psi)),
      M_(std::move(M)),
      ridge_(ridge),
      sample_count_(sample_count) {
  if (static_cast<std::size_t>(M_.rows()) != phi_.dim() ||
      static_cast<std::size_t>(M_.cols()) != phi_.dim() * psi_.dim()) {
    throw DimensionMismatch("KoopmanTensor: M must be d_x x (d_x * d_u)");
  }
}

std::vector<double> KoopmanTensor::to_tensor() const {
  const std::size_t dx = d_x(), du = d_u();
  std::vector<double> t(dx * dx * du);
  for (std::size_t i = 0; i < dx; ++i)
    for (std::size_t j = 0; j < dx; ++j)
      for (std::size_t z = 0; z < du; ++z) t[i * dx * du + j * du + z] = tensor(i, j, z);
  return t;
}

Matrix KoopmanTensor::from_tensor(const std::vector<double>& t, std::size_t dx, std::size_t du) {
  if (t.size() != dx * dx * du) throw DimensionMismatch("from_tensor: size mismatch");
  Matrix M(dx, dx * du);
  for (std::size_t i = 0; i < dx; ++i)
    for (std::size_t j = 0; j < dx; ++j)
      for (std::size_t z = 0; z < du; ++z)
        M(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(z * dx + j)) =
            t[i * dx * du + j * du + z];
  return M;
}

KoopmanTensor fit_tensor(std::span<const Transition> data, const MonomialBasis& phi,
                         const MonomialBasis& psi, double ridge) {
  if (data.empty()) throw InsufficientData("fit_tensor: empty dataset");
  const std::size_t n = data.size();
  const std::size_t dx = phi.dim();
  const std::size_t du = psi.dim();
  Matrix X(n, dx * du);
  Matrix Y(n, dx);
  Vector fx, fu, fy;
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    phi.eval_into(data[i].x, fx);
    psi.eval_into(data[i].u, fu);
    phi.eval_into(data[i].x_next, fy);
    for (std::size_t z = 0; z < du; ++z) {
      X.row(r).segment(static_cast<Eigen::Index>(z * dx), static_cast<Eigen::Index>(dx)) =
          fu[static_cast<Eigen::Index>(z)] * fx.transpose();
    }
    Y.row(r) = fy.transpose();
  }
  Matrix W = lstsq(X, Y, ridge);  // (dx*du) x dx
  return KoopmanTensor(phi, psi, W.transpose(), ridge, n);
}

Matrix k_from_features(const KoopmanTensor& tensor, const Vector& psi_u) {
  const auto dx = static_cast<Eigen::Index>(tensor.d_x());
  if (static_cast<std::size_t>(psi_u.size()) != tensor.d_u()) {
    throw DimensionMismatch("k_u: control feature dimension mismatch");
  }
  Matrix K = Matrix::Zero(dx, dx);
  for (Eigen::Index z = 0; z < psi_u.size(); ++z) {
    K.noalias() += psi_u[z] * tensor.M().middleCols(z * dx, dx);
  }
  return K;
}

Matrix k_u(const KoopmanTensor& tensor, const Vector& u) {
  if (static_cast<std::size_t>(u.size()) != tensor.psi().input_dim()) {
    throw DimensionMismatch("k_u: action dimension mismatch");
  }
  return k_from_features(tensor, tensor.psi().eval(u));
}

Vector predict_phi(const KoopmanTensor& tensor, const Vector& x, const Vector& u) {
  if (static_cast<std::size_t>(x.size()) != tensor.phi().input_dim()) {
    throw DimensionMismatch("predict_phi: state dimension mismatch");
  }
  return k_u(tensor, u) * tensor.phi().eval(x);
}

RktdState::RktdState(std::size_t d_x, std::size_t d_u, double delta_)
    : z(Matrix::Zero(d_x, d_x * d_u)),
      inv_v(Matrix::Identity(d_x * d_u, d_x * d_u) / delta_),
      delta(delta_) {}

Matrix RktdState::M() const {
  if (samples_seen == 0) return Matrix::Zero(z.rows(), z.cols());
  return z * inv_v;
}

RktdState rktd_update(RktdState state, const Vector& v, const Vector& target) {
  if (v.size() != state.inv_v.rows() || target.size() != state.z.rows()) {
    throw DimensionMismatch("rktd_update: feature dimension mismatch");
  }
  state.z.noalias() += target * v.transpose();
  sherman_morrison_update_inplace(state.inv_v, v);
  ++state.samples_seen;
  return state;
}

RktdState rktd_update(RktdState state, const Vector& x, const Vector& u, const Vector& x_next,
                      const MonomialBasis& phi, const MonomialBasis& psi) {
  return rktd_update(std::move(state), joint_feature(phi, psi, x, u), phi.eval(x_next));
}

Vector generator_target(const GeneratorSample& s, const MonomialBasis& phi) {
  if (!(s.dt > 0.0)) throw DimensionMismatch("generator sample needs dt > 0");
  const Vector dx = s.x_next - s.x;
  const Vector mu = dx / s.dt;
  const Matrix a = (dx * dx.transpose()) / s.dt;
  const Matrix grad = phi.gradient(s.x);
  const std::vector<Matrix> hess = phi.hessian(s.x);
  Vector out = grad * mu;
  for (std::size_t k = 0; k < phi.dim(); ++k) {
    out[static_cast<Eigen::Index>(k)] += 0.5 * a.cwiseProduct(hess[k]).sum();
  }
  return out;
}

KoopmanTensor fit_generator(std::span<const GeneratorSample> data, const MonomialBasis& phi,
                            const MonomialBasis& psi, double ridge) {
  if (data.empty()) throw InsufficientData("fit_generator: empty dataset");
  const std::size_t n = data.size();
  Matrix X(n, phi.dim() * psi.dim());
  Matrix Y(n, phi.dim());
  for (std::size_t i = 0; i < n; ++i) {
    X.row(static_cast<Eigen::Index>(i)) = joint_feature(phi, psi, data[i].x, data[i].u).transpose();
    Y.row(static_cast<Eigen::Index>(i)) = generator_target(data[i], phi).transpose();
  }
  Matrix W = lstsq(X, Y, ridge);
  return KoopmanTensor(phi, psi, W.transpose(), ridge, n);
}

std::vector<Transition> collect_policy_data(const EnvironmentSpec& env,
                                            const DeterministicPolicy& policy, Rng& rng,
                                            std::size_t n_points) {
  std::vector<Transition> out;
  out.reserve(n_points);
  for (std::size_t i = 0; i < n_points; ++i) {
    Vector x = reset(env, rng);
    Vector u = clip_action(env, policy(x));
    Vector next = step(env, x, u, rng);
    const double r = -cost(env, x, u);
    out.push_back({std::move(x), std::move(u), r, std::move(next), false});
  }
  return out;
}

double policy_consistency(const KoopmanTensor& tensor, const DeterministicPolicy& policy,
                          const EnvironmentSpec& env, Rng& rng, std::size_t n_points,
                          double ridge) {
  const std::vector<Transition> data = collect_policy_data(env, policy, rng, n_points);
  const MonomialBasis constant_psi(env.action_dim, 0);
  // Under-sampled data is a legitimate diagnostic input; regularize just
  // enough to report a gap instead of failing.
  KoopmanTensor autonomous;
  try {
    autonomous = fit_tensor(data, tensor.phi(), constant_psi, ridge);
  } catch (const SingularSystem&) {
    autonomous = fit_tensor(data, tensor.phi(), constant_psi, std::max(ridge, 1e-8));
  }
  const Matrix& K_pi = autonomous.M();
  double gap = 0.0;
  for (const auto& t : data) {
    const Vector fx = tensor.phi().eval(t.x);
    const Vector a = k_u(tensor, t.u) * fx;
    const Vector b = K_pi * fx;
    gap = std::max(gap, (a - b).cwiseAbs().maxCoeff());
  }
  return gap;
}

}  // namespace karl
