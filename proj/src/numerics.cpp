#include "karl/numerics.hpp"

#include <algorithm>
#include <cmath>

#include "karl/errors.hpp"

namespace karl {

namespace {

constexpr double kPivotFloor = 1e-12;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  return splitmix64(splitmix64(base) ^ (stream * 0xD1B54A32D192ED03ULL + 1));
}

Vector kron(const Vector& a, const Vector& b) {
  Vector out(a.size() * b.size());
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    out.segment(i * b.size(), b.size()) = a[i] * b;
  }
  return out;
}

Matrix solve_normal_equations(const Matrix& G, const Matrix& B, bool allow_singular_fallback) {
  if (G.rows() != G.cols() || G.rows() != B.rows()) {
    throw DimensionMismatch("normal equations: incompatible shapes");
  }
  const Eigen::Index n = G.rows();
  // Jacobi equilibration: S G S y = S B, W = S y with S = diag(1/sqrt(G_ii)).
  Vector scale(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double d = G(i, i);
    scale[i] = d > 0.0 ? 1.0 / std::sqrt(d) : 1.0;
  }
  const Eigen::MatrixXd Gs = scale.asDiagonal() * G * scale.asDiagonal();
  const Eigen::MatrixXd Bs = scale.asDiagonal() * B;
  const double max_diag = std::max(Gs.diagonal().cwiseAbs().maxCoeff(), 1e-300);

  Eigen::LLT<Eigen::MatrixXd> llt(Gs);
  if (llt.info() == Eigen::Success) {
    const Eigen::VectorXd piv = llt.matrixL().toDenseMatrix().diagonal().cwiseAbs2();
    if (piv.minCoeff() >= kPivotFloor * max_diag) {
      Matrix W = scale.asDiagonal() * llt.solve(Bs);
      return W;
    }
  }

  Eigen::FullPivLU<Eigen::MatrixXd> lu(Gs);
  const double min_pivot = lu.matrixLU().diagonal().cwiseAbs().minCoeff();
  if (min_pivot < kPivotFloor * max_diag && !allow_singular_fallback) {
    throw SingularSystem("normal equations are numerically singular");
  }
  Matrix W = scale.asDiagonal() * lu.solve(Bs);
  return W;
}

Matrix lstsq(const Matrix& X, const Matrix& Y, double ridge) {
  if (X.rows() != Y.rows()) {
    throw DimensionMismatch("lstsq: X and Y must have the same number of rows");
  }
  if (ridge < 0.0) {
    throw DimensionMismatch("lstsq: ridge must be nonnegative");
  }
  Matrix G = X.transpose() * X;
  G.diagonal().array() += ridge;
  const Matrix B = X.transpose() * Y;
  return solve_normal_equations(G, B, ridge > 0.0);
}

void sherman_morrison_update_inplace(Matrix& inv, const Vector& v) {
  const Vector iv = inv * v;
  const double denom = 1.0 + v.dot(iv);
  // inv is symmetric, so v^T inv = (inv v)^T.
  inv.noalias() -= (iv * iv.transpose()) / denom;
}

Matrix sherman_morrison_update(const Matrix& inv, const Vector& v) {
  if (inv.rows() != inv.cols() || inv.rows() != v.size()) {
    throw DimensionMismatch("sherman_morrison_update: shape mismatch");
  }
  Matrix out = inv;
  sherman_morrison_update_inplace(out, v);
  return out;
}

bool all_finite(const Matrix& m) { return m.allFinite(); }
bool all_finite(const Vector& v) { return v.allFinite(); }

}  // namespace karl
