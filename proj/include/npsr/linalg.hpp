#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "npsr/error.hpp"

namespace npsr {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

namespace detail {

inline void require_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) throw InvalidArgument(std::string(what) + ": non-finite entry");
}

inline std::string shape(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

/// Two passes of modified Gram-Schmidt on the columns in [begin, end),
/// against all earlier columns. Returns false if a column collapses.
inline bool gram_schmidt_columns(Matrix& m, Index begin, Index end) {
  for (Index j = begin; j < end; ++j) {
    const double original = m.col(j).norm();
    for (int pass = 0; pass < 2; ++pass) {
      for (Index i = 0; i < j; ++i) m.col(j) -= m.col(i).dot(m.col(j)) * m.col(i);
    }
    const double norm = m.col(j).norm();
    if (!(norm > 0.0) || norm < 1e-8 * original) return false;
    m.col(j) /= norm;
  }
  return true;
}

/// Replace column j by the first canonical vector that survives
/// orthogonalization against columns [0, j).
inline void complete_column(Matrix& m, Index j) {
  for (Index e = 0; e < m.rows(); ++e) {
    m.col(j).setZero();
    m(e, j) = 1.0;
    for (int pass = 0; pass < 2; ++pass) {
      for (Index i = 0; i < j; ++i) m.col(j) -= m.col(i).dot(m.col(j)) * m.col(i);
    }
    const double norm = m.col(j).norm();
    if (norm > 0.5) {
      m.col(j) /= norm;
      return;
    }
  }
  throw NumericalError("complete_column: no canonical vector left to complete the basis");
}

}  // namespace detail

/// Eigenpairs of a symmetric matrix, eigenvalues nonincreasing.
struct SymmetricEigen {
  Vector values;
  Matrix vectors;  // columns
};

/// Cyclic Jacobi eigensolver for a symmetric matrix. Only the lower and
/// upper triangles' average is used, so tiny asymmetries are tolerated.
inline SymmetricEigen jacobi_eigen(const Matrix& input, int max_sweeps = 100) {
  if (input.rows() != input.cols()) throw InvalidArgument("jacobi_eigen: matrix is " + detail::shape(input));
  const Index n = input.rows();
  Matrix a = 0.5 * (input + input.transpose());
  Matrix v = Matrix::Identity(n, n);
  const double scale = a.norm();

  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (Index p = 0; p < n; ++p)
      for (Index q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (std::sqrt(off) <= 1e-15 * scale || off == 0.0) break;

    for (Index p = 0; p < n; ++p) {
      for (Index q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (std::abs(apq) < std::numeric_limits<double>::min()) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (Index k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Index k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        a(p, q) = 0.0;
        a(q, p) = 0.0;
        for (Index k = 0; k < n; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index i, Index j) { return a(i, i) > a(j, j); });

  SymmetricEigen out{Vector(n), Matrix(n, n)};
  for (Index k = 0; k < n; ++k) {
    out.values(k) = a(order[static_cast<std::size_t>(k)], order[static_cast<std::size_t>(k)]);
    out.vectors.col(k) = v.col(order[static_cast<std::size_t>(k)]);
  }
  return out;
}

/// Top-q singular triplets of a dense matrix.
struct ThinSvd {
  Matrix left;             // rows x q, orthonormal columns
  Vector singular_values;  // length q, nonincreasing, nonnegative
  Matrix right;            // cols x q, orthonormal columns
};

/// Relative level below which a singular value is treated as zero when
/// building the opposite-side vectors. The Gram route resolves singular
/// values only down to about sqrt(machine epsilon) of the largest one.
inline constexpr double kGramRankTolerance = 1e-7;

/// Top-q SVD through the eigendecomposition of the smaller Gram matrix.
/// Left vectors follow a sign convention: the first entry with magnitude
/// above 1e-12 is nonnegative. Zero singular values get completed
/// (deterministic) orthonormal partners.
inline ThinSvd thin_svd(const Matrix& m, Index q) {
  const Index rows = m.rows();
  const Index cols = m.cols();
  if (rows < 1 || cols < 1) throw InvalidArgument("thin_svd: empty matrix");
  if (q < 1 || q > std::min(rows, cols))
    throw InvalidArgument("thin_svd: q = " + std::to_string(q) + " out of range for " + detail::shape(m));
  detail::require_finite(m, "thin_svd");

  ThinSvd out;
  out.singular_values.resize(q);
  const bool left_gram = rows <= cols;
  const SymmetricEigen eig =
      left_gram ? jacobi_eigen(m * m.transpose()) : jacobi_eigen(m.transpose() * m);
  for (Index k = 0; k < q; ++k) out.singular_values(k) = std::sqrt(std::max(eig.values(k), 0.0));

  const double cutoff = kGramRankTolerance * out.singular_values(0);
  Matrix primary = eig.vectors.leftCols(q);
  Matrix partner = left_gram ? Matrix(m.transpose() * primary) : Matrix(m * primary);
  for (Index k = 0; k < q; ++k) {
    const double s = out.singular_values(k);
    if (s > cutoff && s > 0.0) {
      partner.col(k) /= s;
      if (!detail::gram_schmidt_columns(partner, k, k + 1)) detail::complete_column(partner, k);
    } else {
      detail::complete_column(partner, k);
    }
  }

  out.left = left_gram ? std::move(primary) : std::move(partner);
  out.right = left_gram ? std::move(partner) : std::move(primary);

  for (Index k = 0; k < q; ++k) {
    for (Index i = 0; i < rows; ++i) {
      const double e = out.left(i, k);
      if (std::abs(e) > 1e-12) {
        if (e < 0.0) {
          out.left.col(k) *= -1.0;
          out.right.col(k) *= -1.0;
        }
        break;
      }
    }
  }
  return out;
}

/// A q-dimensional subspace of R^p held by an orthonormal basis.
class Subspace {
 public:
  explicit Subspace(Matrix basis, double tolerance = 1e-10) : basis_(std::move(basis)) {
    if (basis_.rows() < 1 || basis_.cols() < 1) throw InvalidArgument("Subspace: empty basis");
    if (basis_.cols() > basis_.rows())
      throw InvalidArgument("Subspace: more columns than rows (" + detail::shape(basis_) + ")");
    detail::require_finite(basis_, "Subspace");
    const double deviation =
        (basis_.transpose() * basis_ - Matrix::Identity(basis_.cols(), basis_.cols())).cwiseAbs().maxCoeff();
    if (deviation > tolerance)
      throw InvalidArgument("Subspace: basis is not orthonormal (deviation " + std::to_string(deviation) + ")");
  }

  const Matrix& basis() const noexcept { return basis_; }
  Index ambient_dim() const noexcept { return basis_.rows(); }
  Index dim() const noexcept { return basis_.cols(); }
  Matrix projector() const { return basis_ * basis_.transpose(); }

  /// The subspace spanned by the first k basis vectors.
  Subspace leading(Index k) const {
    if (k < 1 || k > dim()) throw InvalidArgument("Subspace::leading: k out of range");
    return Subspace(basis_.leftCols(k));
  }

 private:
  Matrix basis_;
};

/// Orthonormal basis of span(M) through Householder QR, with R's diagonal
/// made nonnegative so that the result is unique.
inline Subspace orthonormalize(const Matrix& m) {
  if (m.rows() < 1 || m.cols() < 1) throw InvalidArgument("orthonormalize: empty matrix");
  if (m.cols() > m.rows()) throw InvalidArgument("orthonormalize: more columns than rows");
  detail::require_finite(m, "orthonormalize");

  const Vector sv = Eigen::JacobiSVD<Matrix>(m).singularValues();
  if (!(sv(sv.size() - 1) > 1e-10 * sv(0)))
    throw NumericalError("orthonormalize: input is rank deficient");

  Eigen::HouseholderQR<Matrix> qr(m);
  Matrix q = qr.householderQ() * Matrix::Identity(m.rows(), m.cols());
  const Matrix& r = qr.matrixQR();
  for (Index k = 0; k < m.cols(); ++k)
    if (r(k, k) < 0.0) q.col(k) *= -1.0;
  // One cleanup pass keeps the orthonormality residual near machine precision.
  detail::gram_schmidt_columns(q, 0, q.cols());
  return Subspace(std::move(q));
}

namespace detail {
inline void require_same_ambient(const Subspace& u, const Subspace& v, const char* what) {
  if (u.ambient_dim() != v.ambient_dim())
    throw InvalidArgument(std::string(what) + ": ambient dimensions differ (" + std::to_string(u.ambient_dim()) +
                          " vs " + std::to_string(v.ambient_dim()) + ")");
}
}  // namespace detail

/// Principal angles arccos(sigma_i(U^T V)), nondecreasing. The number of
/// angles is min(dim U, dim V).
inline Vector principal_angles(const Subspace& u, const Subspace& v) {
  detail::require_same_ambient(u, v, "principal_angles");
  const Vector cosines = Eigen::JacobiSVD<Matrix>(u.basis().transpose() * v.basis()).singularValues();
  Vector angles(cosines.size());
  for (Index i = 0; i < cosines.size(); ++i) angles(i) = std::acos(std::clamp(cosines(i), 0.0, 1.0));
  return angles;
}

/// Spectral norm of sin(Theta(U, V)), i.e. the sine of the largest
/// principal angle, evaluated as ||(I - P_big) small||_2.
inline double sin_theta_distance(const Subspace& u, const Subspace& v) {
  detail::require_same_ambient(u, v, "sin_theta_distance");
  const Subspace& big = u.dim() >= v.dim() ? u : v;
  const Subspace& small = u.dim() >= v.dim() ? v : u;
  const Matrix residual = small.basis() - big.basis() * (big.basis().transpose() * small.basis());
  const double s = Eigen::JacobiSVD<Matrix>(residual).singularValues()(0);
  return std::clamp(s, 0.0, 1.0);
}

}  // namespace npsr
