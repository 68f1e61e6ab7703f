#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Dense>

namespace karl {

/// Dense row-major matrix used for every matrix quantity in the library.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

using Rng = std::mt19937_64;

/// Deterministically derives an independent seed for a sub-stream.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

/// result[i * b.size() + j] = a[i] * b[j].
Vector kron(const Vector& a, const Vector& b);

/// Ridge least squares: argmin_W ||XW - Y||_F^2 + ridge ||W||_F^2.
///
/// Solved through the normal equations (X^T X + ridge I) W = X^T Y after a
/// symmetric diagonal equilibration. Cholesky is tried first; a fully
/// pivoted LU handles the rest. Throws SingularSystem when ridge == 0 and a
/// pivot falls below 1e-12 of the largest (equilibrated) diagonal entry.
Matrix lstsq(const Matrix& X, const Matrix& Y, double ridge);

/// Solves the symmetric system G W = B with the same strategy as lstsq.
Matrix solve_normal_equations(const Matrix& G, const Matrix& B, bool allow_singular_fallback);

/// Inverse of (Gram + v v^T) given inv = Gram^{-1}.
Matrix sherman_morrison_update(const Matrix& inv, const Vector& v);

/// In-place variant used by the streaming estimators.
void sherman_morrison_update_inplace(Matrix& inv, const Vector& v);

bool all_finite(const Matrix& m);
bool all_finite(const Vector& v);

}  // namespace karl
