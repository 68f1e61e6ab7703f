#include "karl/dictionaries.hpp"

#include <functional>

#include "karl/errors.hpp"

namespace karl {

namespace {

// Appends every nondecreasing index sequence of length `degree` over n variables,
// in lexicographic order, converted to exponent form.
void append_degree(std::size_t n, std::size_t degree, std::vector<Exponents>& out) {
  std::vector<std::size_t> idx(degree, 0);
  std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t pos, std::size_t start) {
    if (pos == degree) {
      Exponents e(n, 0);
      for (std::size_t v : idx) ++e[v];
      out.push_back(std::move(e));
      return;
    }
    for (std::size_t v = start; v < n; ++v) {
      idx[pos] = v;
      rec(pos + 1, v);
    }
  };
  rec(0, 0);
}

}  // namespace

std::size_t basis_dim(std::size_t n, std::size_t p) {
  // C(n + p, p), computed incrementally; exact in integer arithmetic.
  std::size_t r = 1;
  for (std::size_t k = 1; k <= p; ++k) {
    r = r * (n + k) / k;
  }
  return r;
}

std::string variable_name(std::size_t index, std::size_t input_dim) {
  if (input_dim <= 3) {
    static const char* names[] = {"x", "y", "z"};
    return names[index];
  }
  return "x" + std::to_string(index);
}

MonomialBasis::MonomialBasis(std::size_t input_dim, std::size_t max_degree)
    : input_dim_(input_dim), max_degree_(max_degree) {
  if (input_dim == 0) {
    throw DimensionMismatch("MonomialBasis: input_dim must be >= 1");
  }
  exponents_.reserve(basis_dim(input_dim, max_degree));
  for (std::size_t d = 0; d <= max_degree; ++d) {
    append_degree(input_dim, d, exponents_);
  }
}

void MonomialBasis::eval_into(const Vector& z, Vector& out) const {
  if (static_cast<std::size_t>(z.size()) != input_dim_) {
    throw DimensionMismatch("MonomialBasis::eval: expected input of dimension " +
                            std::to_string(input_dim_));
  }
  // powers(j, e) = z[j]^e
  Eigen::MatrixXd powers(input_dim_, max_degree_ + 1);
  for (std::size_t j = 0; j < input_dim_; ++j) {
    powers(j, 0) = 1.0;
    for (std::size_t e = 1; e <= max_degree_; ++e) powers(j, e) = powers(j, e - 1) * z[j];
  }
  out.resize(static_cast<Eigen::Index>(exponents_.size()));
  for (std::size_t k = 0; k < exponents_.size(); ++k) {
    double v = 1.0;
    for (std::size_t j = 0; j < input_dim_; ++j) {
      if (exponents_[k][j] != 0) v *= powers(j, exponents_[k][j]);
    }
    out[k] = v;
  }
}

Vector MonomialBasis::eval(const Vector& z) const {
  Vector out;
  eval_into(z, out);
  return out;
}

namespace {

double monomial(const Exponents& e, const Vector& z) {
  double v = 1.0;
  for (std::size_t j = 0; j < e.size(); ++j) {
    for (int p = 0; p < e[j]; ++p) v *= z[j];
  }
  return v;
}

}  // namespace

Matrix MonomialBasis::gradient(const Vector& z) const {
  if (static_cast<std::size_t>(z.size()) != input_dim_) {
    throw DimensionMismatch("MonomialBasis::gradient: dimension mismatch");
  }
  Matrix g = Matrix::Zero(dim(), input_dim_);
  for (std::size_t k = 0; k < exponents_.size(); ++k) {
    for (std::size_t a = 0; a < input_dim_; ++a) {
      if (exponents_[k][a] == 0) continue;
      Exponents e = exponents_[k];
      const double c = e[a];
      --e[a];
      g(k, a) = c * monomial(e, z);
    }
  }
  return g;
}

std::vector<Matrix> MonomialBasis::hessian(const Vector& z) const {
  if (static_cast<std::size_t>(z.size()) != input_dim_) {
    throw DimensionMismatch("MonomialBasis::hessian: dimension mismatch");
  }
  std::vector<Matrix> out(dim(), Matrix::Zero(input_dim_, input_dim_));
  for (std::size_t k = 0; k < exponents_.size(); ++k) {
    for (std::size_t a = 0; a < input_dim_; ++a) {
      for (std::size_t b = a; b < input_dim_; ++b) {
        Exponents e = exponents_[k];
        double c = e[a];
        if (c == 0) continue;
        --e[a];
        c *= e[b];
        if (c == 0) continue;
        --e[b];
        const double v = c * monomial(e, z);
        out[k](a, b) = v;
        out[k](b, a) = v;
      }
    }
  }
  return out;
}

std::string MonomialBasis::term_name(std::size_t k) const {
  const Exponents& e = exponents_.at(k);
  std::string s;
  for (std::size_t j = 0; j < e.size(); ++j) {
    if (e[j] == 0) continue;
    if (!s.empty()) s += "*";
    s += variable_name(j, input_dim_);
    if (e[j] > 1) s += "^" + std::to_string(e[j]);
  }
  return s.empty() ? "1" : s;
}

std::size_t MonomialBasis::find_term(const std::string& name) const {
  for (std::size_t k = 0; k < dim(); ++k) {
    if (term_name(k) == name) return k;
  }
  return dim();
}

Vector joint_feature(const MonomialBasis& phi, const MonomialBasis& psi, const Vector& x,
                     const Vector& u) {
  return kron(psi.eval(u), phi.eval(x));
}

}  // namespace karl
