#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <variant>
#include <initializer_list>

#include <Eigen/Dense>

#include "npsr/error.hpp"
#include "npsr/linalg.hpp"
#include "npsr/smoothers.hpp"

namespace npsr {

// Seed splitting. Every random component of an experiment draws from its
// own stream, seeded by hashing (master seed, component label, index):
//   stream_seed = splitmix64(master ^ splitmix64(fnv1a(label) ^ splitmix64(index)))
// Components: "design", "loadings", "component" (index k), "noise",
// "replication" (index r), "cv" (index r), "holdout".

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t stream_seed(std::uint64_t master, std::string_view label, std::uint64_t index = 0) {
  return splitmix64(master ^ splitmix64(fnv1a(label) ^ splitmix64(index)));
}

inline Matrix standard_normal(Index rows, Index cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix out(rows, cols);
  // Column-major fill order is part of the reproducibility contract.
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) out(i, j) = normal(rng);
  return out;
}

struct IidNoise {};

/// vec(Z) ~ N(0, sigma^2 Sigma_1 (x) Sigma_2) with AR(1)-type factors
/// (Sigma_1)_{ab} = rho1^|a-b| over observations, (Sigma_2)_{ab} = rho2^|a-b| over channels.
struct SeparableArNoise {
  double rho1 = 0.5;
  double rho2 = 0.5;
};

using NoiseModel = std::variant<IidNoise, SeparableArNoise>;

struct SimConfig {
  Index n = 128;
  Index p = 10;
  Index q = 2;
  double alpha = 0.5;     // covariance range
  double beta_var = 15.0; // covariance scale
  double sigma = 1.0;
  NoiseModel noise = IidNoise{};
  std::uint64_t seed = 1;

  void validate() const {
    if (n < 2 || p < 1 || q < 1) throw InvalidArgument("SimConfig: need n >= 2 and p, q >= 1");
    if (q > p) throw InvalidArgument("SimConfig: q must not exceed p");
    if (!(alpha > 0.0) || !(beta_var > 0.0)) throw InvalidArgument("SimConfig: alpha and beta must be positive");
    if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw InvalidArgument("SimConfig: sigma must be nonnegative");
    if (const auto* ar = std::get_if<SeparableArNoise>(&noise)) {
      if (!(std::abs(ar->rho1) < 1.0) || !(std::abs(ar->rho2) < 1.0))
        throw InvalidArgument("SimConfig: AR coefficients must lie in (-1, 1)");
    }
  }
};

struct SimInstance {
  Design design;
  Subspace loadings;  // true U, p x q
  Matrix f_values;    // q x n, f_k(x_i)
  Matrix f_true;      // p x n, U * f_values
  Matrix y;           // p x n
};

/// Compactly supported covariance beta * max(0, (1-r))^5 * (8 r^2 + 5 r + 1), r = |s-t|/alpha.
inline double compact_covariance(double s, double t, double alpha, double beta_var) {
  if (!(alpha > 0.0)) throw InvalidArgument("compact_covariance: alpha must be positive");
  const double r = std::abs(s - t) / alpha;
  const double one_minus = 1.0 - r;
  if (one_minus <= 0.0) return 0.0;
  const double sq = one_minus * one_minus;
  return beta_var * sq * sq * one_minus * (8.0 * r * r + 5.0 * r + 1.0);
}

/// Lower Cholesky factor with diagonal jitter escalation. `jitters` are
/// absolute amounts tried in order after the plain factorization.
inline Matrix cholesky_with_jitter(const Matrix& c, std::initializer_list<double> jitters, const char* what) {
  Eigen::LLT<Matrix> llt(c);
  if (llt.info() == Eigen::Success) return llt.matrixL();
  for (double jitter : jitters) {
    Matrix shifted = c;
    shifted.diagonal().array() += jitter;
    llt.compute(shifted);
    if (llt.info() == Eigen::Success) return llt.matrixL();
  }
  throw NumericalError(std::string(what) + ": Cholesky failed after maximum jitter");
}

/// One draw of the zero-mean Gaussian process at a one-dimensional design.
inline Vector sample_gp(const Matrix& points, double alpha, double beta_var, std::uint64_t seed) {
  if (points.cols() != 1) throw InvalidArgument("sample_gp: design must be one-dimensional");
  const Index n = points.rows();
  if (n < 1) throw InvalidArgument("sample_gp: empty design");
  Matrix c(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j <= i; ++j) c(i, j) = c(j, i) = compact_covariance(points(i, 0), points(j, 0), alpha, beta_var);
  const Matrix l = cholesky_with_jitter(c, {1e-10 * beta_var, 1e-8 * beta_var}, "sample_gp");
  return l * standard_normal(n, 1, seed).col(0);
}

inline Vector sample_gp(const Design& design, double alpha, double beta_var, std::uint64_t seed) {
  return sample_gp(design.points(), alpha, beta_var, seed);
}

/// Orthonormalized p x q standard normal draw.
inline Subspace sample_orthonormal(Index p, Index q, std::uint64_t seed) {
  if (q < 1 || q > p) throw InvalidArgument("sample_orthonormal: need 1 <= q <= p");
  for (std::uint64_t attempt = 0;; ++attempt) {
    try {
      return orthonormalize(standard_normal(p, q, attempt == 0 ? seed : splitmix64(seed + attempt)));
    } catch (const NumericalError&) {
      if (attempt >= 8) throw;
    }
  }
}

/// rho^|a-b| for a, b in 0..m-1.
inline Matrix ar_correlation(Index m, double rho) {
  Matrix out(m, m);
  for (Index a = 0; a < m; ++a)
    for (Index b = 0; b < m; ++b) out(a, b) = std::pow(rho, static_cast<double>(std::abs(a - b)));
  return out;
}

/// p x n noise matrix. The separable model is realized as
/// Z = chol(Sigma_2) W chol(Sigma_1)^T without forming the Kronecker product.
inline Matrix sample_noise(Index n, Index p, double sigma, const NoiseModel& model, std::uint64_t seed) {
  if (n < 1 || p < 1) throw InvalidArgument("sample_noise: empty shape");
  Matrix w = sigma * standard_normal(p, n, seed);
  if (const auto* ar = std::get_if<SeparableArNoise>(&model)) {
    const Matrix l1 = cholesky_with_jitter(ar_correlation(n, ar->rho1), {1e-12, 1e-10, 1e-8}, "sample_noise");
    const Matrix l2 = cholesky_with_jitter(ar_correlation(p, ar->rho2), {1e-12, 1e-10, 1e-8}, "sample_noise");
    return l2 * w * l1.transpose();
  }
  return w;
}

/// y_i = sum_k f_k(x_i) u_k + z_i with uniform design, random orthonormal
/// loadings and independent compact-covariance GP components.
inline SimInstance generate(const SimConfig& config) {
  config.validate();
  std::mt19937_64 design_rng(stream_seed(config.seed, "design"));
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  Matrix x(config.n, 1);
  for (Index i = 0; i < config.n; ++i) x(i, 0) = uniform(design_rng);
  Design design(std::move(x));

  Subspace loadings = sample_orthonormal(config.p, config.q, stream_seed(config.seed, "loadings"));
  Matrix f(config.q, config.n);
  for (Index k = 0; k < config.q; ++k)
    f.row(k) = sample_gp(design, config.alpha, config.beta_var,
                         stream_seed(config.seed, "component", static_cast<std::uint64_t>(k)))
                   .transpose();
  Matrix f_true = loadings.basis() * f;
  Matrix z = sample_noise(config.n, config.p, config.sigma, config.noise, stream_seed(config.seed, "noise"));
  Matrix y = f_true + z;
  return SimInstance{std::move(design), std::move(loadings), std::move(f), std::move(f_true), std::move(y)};
}

}  // namespace npsr
