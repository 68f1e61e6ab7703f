#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "karl/numerics.hpp"

namespace karl {

using Exponents = std::vector<int>;

/// Monomials of total degree <= max_degree in input_dim variables.
///
/// Terms are ordered by total degree, then lexicographically by the sorted
/// list of variable indices they multiply (x0x0 < x0x1 < x1x1). The constant
/// term always comes first.
class MonomialBasis {
 public:
  MonomialBasis() = default;
  MonomialBasis(std::size_t input_dim, std::size_t max_degree);

  std::size_t input_dim() const { return input_dim_; }
  std::size_t max_degree() const { return max_degree_; }
  std::size_t dim() const { return exponents_.size(); }
  const std::vector<Exponents>& exponents() const { return exponents_; }

  Vector eval(const Vector& z) const;
  /// Writes eval(z) into out (resized as needed); avoids reallocation in hot loops.
  void eval_into(const Vector& z, Vector& out) const;

  /// Row k is the gradient of monomial k (dim() x input_dim()).
  Matrix gradient(const Vector& z) const;
  /// Entry k is the Hessian of monomial k (input_dim() x input_dim()).
  std::vector<Matrix> hessian(const Vector& z) const;

  /// Human-readable term, e.g. "1", "x", "x*y", "z^2" (x0, x1, ... beyond 3 variables).
  std::string term_name(std::size_t k) const;
  /// Index of the term with the given name, or dim() when absent.
  std::size_t find_term(const std::string& name) const;

  bool operator==(const MonomialBasis& other) const {
    return input_dim_ == other.input_dim_ && max_degree_ == other.max_degree_;
  }

 private:
  std::size_t input_dim_ = 0;
  std::size_t max_degree_ = 0;
  std::vector<Exponents> exponents_;
};

/// C(n + p, n).
std::size_t basis_dim(std::size_t n, std::size_t p);

/// kron(psi(u), phi(x)): entry z * phi.dim() + i equals psi(u)[z] * phi(x)[i].
Vector joint_feature(const MonomialBasis& phi, const MonomialBasis& psi, const Vector& x,
                     const Vector& u);

std::string variable_name(std::size_t index, std::size_t input_dim);

}  // namespace karl
