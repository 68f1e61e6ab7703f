#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "karl/dictionaries.hpp"
#include "karl/environments.hpp"
#include "karl/numerics.hpp"

namespace karl {

/// Koopman tensor T_K stored as its flattened regression matrix M
/// (d_x x d_x*d_u), with T_K(i, j, z) = M(i, z * d_x + j).
///
/// Contracting the third index against psi(u) gives the action-conditioned
/// operator K^u, which advances state features: K^u phi(x) ~ phi(x').
class KoopmanTensor {
 public:
  KoopmanTensor() = default;
  KoopmanTensor(MonomialBasis phi, MonomialBasis psi, Matrix M, double ridge = 0.0,
                std::size_t sample_count = 0);

  std::size_t d_x() const { return phi_.dim(); }
  std::size_t d_u() const { return psi_.dim(); }
  const MonomialBasis& phi() const { return phi_; }
  const MonomialBasis& psi() const { return psi_; }
  const Matrix& M() const { return M_; }
  double ridge() const { return ridge_; }
  std::size_t sample_count() const { return sample_count_; }

  double tensor(std::size_t i, std::size_t j, std::size_t z) const {
    return M_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(z * d_x() + j));
  }

  /// Dense 3-D tensor, index (i, j, z) at i * d_x * d_u + j * d_u + z.
  std::vector<double> to_tensor() const;
  static Matrix from_tensor(const std::vector<double>& t, std::size_t d_x, std::size_t d_u);

 private:
  MonomialBasis phi_;
  MonomialBasis psi_;
  Matrix M_;
  double ridge_ = 0.0;
  std::size_t sample_count_ = 0;
};

/// argmin_M sum_i ||M (psi(u_i) kron phi(x_i)) - phi(x_i')||^2 + ridge ||M||_F^2.
KoopmanTensor fit_tensor(std::span<const Transition> data, const MonomialBasis& phi,
                         const MonomialBasis& psi, double ridge);

/// K^u[i, j] = sum_z T_K(i, j, z) psi(u)[z].
Matrix k_u(const KoopmanTensor& tensor, const Vector& u);
/// Same contraction from precomputed control features.
Matrix k_from_features(const KoopmanTensor& tensor, const Vector& psi_u);

/// K^u phi(x).
Vector predict_phi(const KoopmanTensor& tensor, const Vector& x, const Vector& u);

/// Recursive (per-sample) least-squares estimate of M.
struct RktdState {
  Matrix z;      // d_x x d_x*d_u, running sum of phi(x') v^T
  Matrix inv_v;  // inverse of (delta I + sum v v^T)
  double delta = 1.0;
  std::size_t samples_seen = 0;

  RktdState() = default;
  RktdState(std::size_t d_x, std::size_t d_u, double delta);

  /// z * inv_v; zero before any samples.
  Matrix M() const;
};

/// Rank-one update with a joint feature vector v and target features phi(x').
RktdState rktd_update(RktdState state, const Vector& v, const Vector& target);
RktdState rktd_update(RktdState state, const Vector& x, const Vector& u, const Vector& x_next,
                      const MonomialBasis& phi, const MonomialBasis& psi);

struct GeneratorSample {
  Vector x;
  Vector u;
  Vector x_next;
  double dt = 0.0;
};

/// Koopman generator tensor L from finite-difference estimates of drift and
/// diffusion: targets mu . grad phi + 1/2 a : hess phi with mu = dx/dt and
/// a = dx dx^T / dt, regressed on psi(u) kron phi(x).
KoopmanTensor fit_generator(std::span<const GeneratorSample> data, const MonomialBasis& phi,
                            const MonomialBasis& psi, double ridge);

/// The generator regression targets for one sample (exposed for diagnostics).
Vector generator_target(const GeneratorSample& s, const MonomialBasis& phi);

using DeterministicPolicy = std::function<Vector(const Vector& x)>;

/// n_points transitions with x from reset(), u = policy(x), x' = step(x, u).
std::vector<Transition> collect_policy_data(const EnvironmentSpec& env,
                                            const DeterministicPolicy& policy, Rng& rng,
                                            std::size_t n_points);

/// Fits an autonomous K^pi (degree-0 control dictionary) on policy-generated
/// data and reports max_x ||K^{pi(x)} phi(x) - K^pi phi(x)||_inf.
double policy_consistency(const KoopmanTensor& tensor, const DeterministicPolicy& policy,
                          const EnvironmentSpec& env, Rng& rng, std::size_t n_points,
                          double ridge = 0.0);

}  // namespace karl
