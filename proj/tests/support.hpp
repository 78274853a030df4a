#pragma once

#include <algorithm>
#include <random>

#include <Eigen/Dense>

#include "npsr/linalg.hpp"
#include "npsr/smoothers.hpp"

namespace npsr::testing {

inline Matrix random_matrix(Index rows, Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = normal(rng);
  return m;
}

inline Design random_design(Index n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  Matrix x(n, 1);
  for (Index i = 0; i < n; ++i) x(i, 0) = uniform(rng);
  return Design(std::move(x));
}

/// Haar-ish orthogonal matrix from Eigen's QR of a Gaussian draw.
inline Matrix random_orthogonal(Index q, std::mt19937_64& rng) {
  Eigen::HouseholderQR<Matrix> qr(random_matrix(q, q, rng));
  return qr.householderQ() * Matrix::Identity(q, q);
}

struct GramOracle {
  Vector singular_values;
  Matrix left;
};

/// Top-q left singular pairs from Eigen's eigensolver on M M^T.
inline GramOracle gram_eigen_oracle(const Matrix& m, Index q) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(m * m.transpose());
  const Index r = m.rows();
  GramOracle out{Vector(q), Matrix(r, q)};
  for (Index k = 0; k < q; ++k) {
    out.singular_values(k) = std::sqrt(std::max(0.0, eig.eigenvalues()(r - 1 - k)));
    out.left.col(k) = eig.eigenvectors().col(r - 1 - k);
  }
  return out;
}

}  // namespace npsr::testing
