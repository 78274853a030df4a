#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <numeric>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "npsr/error.hpp"
#include "npsr/linalg.hpp"

namespace npsr {

/// n sample points in [0,1]^d, stored one point per row.
class Design {
 public:
  explicit Design(Matrix points) : points_(std::move(points)) {
    if (points_.rows() < 2) throw InvalidArgument("Design: need at least 2 points");
    if (points_.cols() < 1) throw InvalidArgument("Design: dimension must be at least 1");
    require_unit_cube(points_, "Design");
  }

  static Design from_values(const std::vector<double>& xs) {
    return Design(Eigen::Map<const Vector>(xs.data(), static_cast<Index>(xs.size())));
  }

  /// Throws unless every entry is finite and inside [0,1].
  static void require_unit_cube(const Matrix& pts, const char* what) {
    for (Index i = 0; i < pts.rows(); ++i)
      for (Index j = 0; j < pts.cols(); ++j) {
        const double v = pts(i, j);
        if (!std::isfinite(v) || v < 0.0 || v > 1.0)
          throw InvalidArgument(std::string(what) + ": coordinate (" + std::to_string(i) + ", " +
                                std::to_string(j) + ") = " + std::to_string(v) + " outside [0,1]");
      }
  }

  Index size() const noexcept { return points_.rows(); }
  Index dim() const noexcept { return points_.cols(); }
  const Matrix& points() const noexcept { return points_; }
  Vector point(Index i) const { return points_.row(i).transpose(); }

  Design subset(const std::vector<Index>& rows) const {
    Matrix out(static_cast<Index>(rows.size()), dim());
    for (std::size_t k = 0; k < rows.size(); ++k) out.row(static_cast<Index>(k)) = points_.row(rows[k]);
    return Design(std::move(out));
  }

  friend bool operator==(const Design& a, const Design& b) {
    return a.points_.rows() == b.points_.rows() && a.points_.cols() == b.points_.cols() &&
           a.points_ == b.points_;
  }

 private:
  Matrix points_;
};

enum class LocalKernel { Epanechnikov, Uniform, Tricube };

inline double local_kernel_weight(LocalKernel kernel, double u) {
  const double a = std::abs(u);
  if (a > 1.0) return 0.0;
  switch (kernel) {
    case LocalKernel::Epanechnikov:
      return 0.75 * (1.0 - u * u);
    case LocalKernel::Uniform:
      return 0.5;
    case LocalKernel::Tricube: {
      const double t = 1.0 - a * a * a;
      return (70.0 / 81.0) * t * t * t;
    }
  }
  return 0.0;
}

inline const char* to_string(LocalKernel kernel) {
  switch (kernel) {
    case LocalKernel::Epanechnikov:
      return "epanechnikov";
    case LocalKernel::Uniform:
      return "uniform";
    case LocalKernel::Tricube:
      return "tricube";
  }
  return "?";
}

inline LocalKernel parse_local_kernel(const std::string& name) {
  if (name == "epanechnikov") return LocalKernel::Epanechnikov;
  if (name == "uniform") return LocalKernel::Uniform;
  if (name == "tricube") return LocalKernel::Tricube;
  throw InvalidArgument("unknown local polynomial kernel '" + name + "'");
}

/// Gaussian RBF ridge regression with the Gram matrix scaled by 1/n.
struct KernelRidgeSpec {
  double rho = 1.0;
  double kappa = 0.0;
};

enum class FourierCoefficients {
  LeastSquares,          // regress on the basis: an orthogonal projection
  EmpiricalInnerProduct  // c_k = (1/n) sum_i y_i phi_k(x_i)
};

/// Regression on the first `terms` trigonometric basis functions.
struct FourierSpec {
  int terms = 1;
  FourierCoefficients coefficients = FourierCoefficients::LeastSquares;
};

/// Local polynomial smoothing on the order-statistics pseudo-design i/(n+1).
struct LocalPolySpec {
  int degree = 1;
  double bandwidth = 0.3;
  LocalKernel kernel = LocalKernel::Epanechnikov;
};

using SmootherSpec = std::variant<KernelRidgeSpec, FourierSpec, LocalPolySpec>;

inline std::string smoother_name(const SmootherSpec& spec) {
  return std::visit(
      [](const auto& s) -> std::string {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, KernelRidgeSpec>) return "kernel_ridge";
        else if constexpr (std::is_same_v<T, FourierSpec>) return "fourier";
        else return "local_poly";
      },
      spec);
}

inline double rbf_kernel(const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b, double rho) {
  return std::exp(-(a - b).squaredNorm() / rho);
}

/// Median of the pairwise squared distances of the design (the even-count
/// median averages the two central order statistics).
inline double median_heuristic(const Design& design) {
  const Index n = design.size();
  const Matrix& x = design.points();
  std::vector<double> d2;
  d2.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j) d2.push_back((x.row(i) - x.row(j)).squaredNorm());

  if (std::all_of(d2.begin(), d2.end(), [](double v) { return v == 0.0; }))
    throw NumericalError("median_heuristic: degenerate design (all points identical)");

  const std::size_t m = d2.size();
  auto mid = d2.begin() + static_cast<std::ptrdiff_t>(m / 2);
  std::nth_element(d2.begin(), mid, d2.end());
  double median = *mid;
  if (m % 2 == 0) median = 0.5 * (median + *std::max_element(d2.begin(), mid));
  if (!(median > 0.0)) throw NumericalError("median_heuristic: median pairwise distance is zero");
  return median;
}

/// Rate-optimal number of Fourier terms, max(1, round(n^{1/(1+2 beta)})).
inline int choose_fourier_N(Index n, double beta) {
  if (n < 2) throw InvalidArgument("choose_fourier_N: n must be at least 2");
  if (!(beta >= 1.0)) throw InvalidArgument("choose_fourier_N: beta must be at least 1");
  const double scale = std::pow(static_cast<double>(n), 1.0 / (1.0 + 2.0 * beta));
  return std::max(1, static_cast<int>(std::lround(scale)));
}

/// Rate-optimal bandwidth h = n^{-1/(2 beta + 1)} on the pseudo-design scale.
inline double default_local_poly_bandwidth(Index n, double beta = 2.0) {
  return std::pow(static_cast<double>(n), -1.0 / (2.0 * beta + 1.0));
}

/// phi_1 = 1, phi_{2k} = sqrt2 cos(2 pi k x), phi_{2k+1} = sqrt2 sin(2 pi k x); index is 1-based.
inline double fourier_basis(int index, double x) {
  if (index == 1) return 1.0;
  const int k = index / 2;
  const double arg = 2.0 * std::numbers::pi * k * x;
  return std::numbers::sqrt2 * (index % 2 == 0 ? std::cos(arg) : std::sin(arg));
}

namespace detail {

class SmootherEngine {
 public:
  virtual ~SmootherEngine() = default;
  virtual Vector coefficients(const Vector& y) const = 0;
  virtual Vector fitted(const Vector& coefficients) const = 0;
  virtual double evaluate(const Vector& coefficients, const Vector& x) const = 0;
};

class KernelRidgeEngine final : public SmootherEngine {
 public:
  KernelRidgeEngine(const Design& design, const KernelRidgeSpec& spec) : points_(design.points()), spec_(spec) {
    if (!(spec.rho > 0.0) || !std::isfinite(spec.rho)) throw InvalidArgument("kernel ridge: rho must be positive");
    if (!(spec.kappa >= 0.0) || !std::isfinite(spec.kappa))
      throw InvalidArgument("kernel ridge: kappa must be nonnegative");
    const Index n = points_.rows();
    gram_.resize(n, n);
    bool duplicates = false;
    for (Index i = 0; i < n; ++i) {
      gram_(i, i) = 1.0 / static_cast<double>(n);
      for (Index j = 0; j < i; ++j) {
        const double d2 = (points_.row(i) - points_.row(j)).squaredNorm();
        duplicates = duplicates || d2 == 0.0;
        gram_(i, j) = gram_(j, i) = std::exp(-d2 / spec.rho) / static_cast<double>(n);
      }
    }
    if (spec.kappa == 0.0 && duplicates)
      throw NumericalError("kernel ridge: singular system (kappa = 0 with duplicated design points)");

    for (double jitter : {0.0, 1e-12, 1e-10, 1e-8}) {
      Matrix system = gram_;
      system.diagonal().array() += spec.kappa + jitter;
      llt_.compute(system);
      if (llt_.info() == Eigen::Success) return;
    }
    throw NumericalError("kernel ridge: Cholesky of K + kappa I failed after jitter escalation");
  }

  Vector coefficients(const Vector& y) const override { return llt_.solve(y); }
  Vector fitted(const Vector& alpha) const override { return gram_ * alpha; }

  double evaluate(const Vector& alpha, const Vector& x) const override {
    double s = 0.0;
    for (Index i = 0; i < points_.rows(); ++i)
      s += alpha(i) * std::exp(-(points_.row(i).transpose() - x).squaredNorm() / spec_.rho);
    return s / static_cast<double>(points_.rows());
  }

 private:
  Matrix points_;
  KernelRidgeSpec spec_;
  Matrix gram_;
  Eigen::LLT<Matrix> llt_;
};

class FourierEngine final : public SmootherEngine {
 public:
  FourierEngine(const Design& design, const FourierSpec& spec) : spec_(spec) {
    if (design.dim() != 1) throw InvalidArgument("truncated Fourier: design must be one-dimensional");
    if (spec.terms < 1) throw InvalidArgument("truncated Fourier: N must be at least 1");
    const Index n = design.size();
    basis_.resize(n, spec.terms);
    for (Index i = 0; i < n; ++i)
      for (int k = 1; k <= spec.terms; ++k) basis_(i, k - 1) = fourier_basis(k, design.points()(i, 0));
    if (spec.coefficients == FourierCoefficients::LeastSquares) {
      if (spec.terms > n) throw InvalidArgument("truncated Fourier: more basis terms than design points");
      qr_.compute(basis_);
      if (qr_.rank() < spec.terms) throw NumericalError("truncated Fourier: basis matrix is rank deficient");
    }
  }

  Vector coefficients(const Vector& y) const override {
    if (spec_.coefficients == FourierCoefficients::LeastSquares) return qr_.solve(y);
    return basis_.transpose() * y / static_cast<double>(basis_.rows());
  }

  Vector fitted(const Vector& c) const override { return basis_ * c; }

  double evaluate(const Vector& c, const Vector& x) const override {
    double s = 0.0;
    for (int k = 1; k <= spec_.terms; ++k) s += c(k - 1) * fourier_basis(k, x(0));
    return s;
  }

 private:
  FourierSpec spec_;
  Matrix basis_;
  Eigen::ColPivHouseholderQR<Matrix> qr_;
};

class LocalPolyEngine final : public SmootherEngine {
 public:
  LocalPolyEngine(const Design& design, const LocalPolySpec& spec) : spec_(spec) {
    if (design.dim() != 1) throw InvalidArgument("local polynomial: design must be one-dimensional");
    if (spec.degree < 0) throw InvalidArgument("local polynomial: degree must be nonnegative");
    if (!(spec.bandwidth > 0.0) || !std::isfinite(spec.bandwidth))
      throw InvalidArgument("local polynomial: bandwidth must be positive");
    const Index n = design.size();
    if (n <= spec.degree) throw InvalidArgument("local polynomial: need more points than the degree");

    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](Index a, Index b) { return design.points()(a, 0) < design.points()(b, 0); });
    pseudo_.resize(n);
    sorted_x_.resize(n);
    sorted_pseudo_.resize(n);
    for (Index r = 0; r < n; ++r) {
      const Index i = order[static_cast<std::size_t>(r)];
      const double delta = static_cast<double>(r + 1) / static_cast<double>(n + 1);
      pseudo_(i) = delta;
      sorted_x_(r) = design.points()(i, 0);
      sorted_pseudo_(r) = delta;
    }
    weights_.resize(n, n);
    for (Index i = 0; i < n; ++i) weights_.row(i) = weights_at(pseudo_(i)).transpose();
  }

  /// W_{n,j}(t): weights on the responses for the estimate at pseudo-coordinate t.
  Vector weights_at(double t) const {
    const Index n = pseudo_.size();
    const int m = spec_.degree + 1;
    Matrix normal = Matrix::Zero(m, m);
    Vector kernel_w(n);
    Matrix design_rows(n, m);
    int support = 0;
    for (Index j = 0; j < n; ++j) {
      const double u = (pseudo_(j) - t) / spec_.bandwidth;
      kernel_w(j) = local_kernel_weight(spec_.kernel, u);
      double term = 1.0;
      for (int a = 0; a < m; ++a) {
        if (a > 0) term *= u / static_cast<double>(a);
        design_rows(j, a) = term;
      }
      if (kernel_w(j) > 0.0) {
        ++support;
        normal.noalias() += kernel_w(j) * design_rows.row(j).transpose() * design_rows.row(j);
      }
    }
    if (support < m)
      throw NumericalError("local polynomial: only " + std::to_string(support) + " points in the window at t = " +
                           std::to_string(t) + "; widen the bandwidth");
    Eigen::LDLT<Matrix> ldlt(normal);
    if (ldlt.info() != Eigen::Success || !(ldlt.rcond() > 1e-13))
      throw NumericalError("local polynomial: singular normal equations at t = " + std::to_string(t) +
                           "; widen the bandwidth");
    const Vector b = ldlt.solve(Vector::Unit(m, 0));
    return kernel_w.cwiseProduct(design_rows * b);
  }

  /// Map an original coordinate onto the pseudo-design scale by linear
  /// interpolation through (0,0), (x_(i), i/(n+1)), (1,1).
  double pseudo_coordinate(double x) const {
    const Index n = sorted_x_.size();
    if (x < sorted_x_(0)) return sorted_pseudo_(0) * x / sorted_x_(0);
    if (x > sorted_x_(n - 1))
      return sorted_pseudo_(n - 1) + (1.0 - sorted_pseudo_(n - 1)) * (x - sorted_x_(n - 1)) / (1.0 - sorted_x_(n - 1));
    const auto* begin = sorted_x_.data();
    const Index k = static_cast<Index>(std::upper_bound(begin, begin + n, x) - begin) - 1;
    if (sorted_x_(k) == x || k == n - 1) return sorted_pseudo_(k);
    const double w = (x - sorted_x_(k)) / (sorted_x_(k + 1) - sorted_x_(k));
    return sorted_pseudo_(k) + w * (sorted_pseudo_(k + 1) - sorted_pseudo_(k));
  }

  Vector coefficients(const Vector& y) const override { return y; }
  Vector fitted(const Vector& y) const override { return weights_ * y; }
  double evaluate(const Vector& y, const Vector& x) const override {
    return weights_at(pseudo_coordinate(x(0))).dot(y);
  }

  const Matrix& weight_matrix() const noexcept { return weights_; }
  const Vector& pseudo_design() const noexcept { return pseudo_; }

 private:
  LocalPolySpec spec_;
  Vector pseudo_;
  Vector sorted_x_;
  Vector sorted_pseudo_;
  Matrix weights_;
};

}  // namespace detail

class SmootherFit;

/// The response-independent operator L of a linear smoother for one design
/// and one parameter setting. Fitting any response reuses it.
class LinearSmoother : public std::enable_shared_from_this<LinearSmoother> {
 public:
  static std::shared_ptr<const LinearSmoother> make(Design design, SmootherSpec spec) {
    return std::shared_ptr<const LinearSmoother>(new LinearSmoother(std::move(design), std::move(spec)));
  }

  const Design& design() const noexcept { return design_; }
  const SmootherSpec& spec() const noexcept { return spec_; }
  Index size() const noexcept { return design_.size(); }

  /// L y.
  Vector apply(const Vector& y) const {
    check_length(y);
    return engine_->fitted(engine_->coefficients(y));
  }

  SmootherFit fit(const Vector& y) const;

  const detail::SmootherEngine& engine() const noexcept { return *engine_; }

 private:
  LinearSmoother(Design design, SmootherSpec spec) : design_(std::move(design)), spec_(std::move(spec)) {
    engine_ = std::visit(
        [this](const auto& s) -> std::unique_ptr<detail::SmootherEngine> {
          using T = std::decay_t<decltype(s)>;
          if constexpr (std::is_same_v<T, KernelRidgeSpec>)
            return std::make_unique<detail::KernelRidgeEngine>(design_, s);
          else if constexpr (std::is_same_v<T, FourierSpec>)
            return std::make_unique<detail::FourierEngine>(design_, s);
          else
            return std::make_unique<detail::LocalPolyEngine>(design_, s);
        },
        spec_);
  }

  void check_length(const Vector& y) const {
    if (y.size() != design_.size())
      throw InvalidArgument("smoother: response length " + std::to_string(y.size()) + " does not match design size " +
                            std::to_string(design_.size()));
    if (!y.allFinite()) throw InvalidArgument("smoother: non-finite response");
  }

  Design design_;
  SmootherSpec spec_;
  std::unique_ptr<detail::SmootherEngine> engine_;
};

/// A fitted smoother: values at the design points plus an evaluator.
/// Immutable; safe to share across threads.
class SmootherFit {
 public:
  SmootherFit(std::shared_ptr<const LinearSmoother> smoother, Vector coefficients, Vector fitted)
      : smoother_(std::move(smoother)), coefficients_(std::move(coefficients)), fitted_(std::move(fitted)) {}

  const SmootherSpec& spec() const noexcept { return smoother_->spec(); }
  const Design& design() const noexcept { return smoother_->design(); }
  const Vector& fitted() const noexcept { return fitted_; }
  const Vector& coefficients() const noexcept { return coefficients_; }
  const std::shared_ptr<const LinearSmoother>& smoother() const noexcept { return smoother_; }

  double operator()(const Vector& x) const {
    if (x.size() != design().dim()) throw InvalidArgument("SmootherFit: point dimension mismatch");
    Design::require_unit_cube(x.transpose(), "SmootherFit");
    return smoother_->engine().evaluate(coefficients_, x);
  }

  /// Evaluate at each row of `points` (m x d).
  Vector evaluate(const Matrix& points) const {
    if (points.cols() != design().dim()) throw InvalidArgument("SmootherFit: point dimension mismatch");
    Design::require_unit_cube(points, "SmootherFit");
    Vector out(points.rows());
    for (Index i = 0; i < points.rows(); ++i)
      out(i) = smoother_->engine().evaluate(coefficients_, points.row(i).transpose());
    return out;
  }

 private:
  std::shared_ptr<const LinearSmoother> smoother_;
  Vector coefficients_;
  Vector fitted_;
};

inline SmootherFit LinearSmoother::fit(const Vector& y) const {
  check_length(y);
  Vector coef = engine_->coefficients(y);
  Vector fitted = engine_->fitted(coef);
  return SmootherFit(shared_from_this(), std::move(coef), std::move(fitted));
}

/// The action of L, with helpers to materialize it and bound its norm.
class SmootherMatrix {
 public:
  explicit SmootherMatrix(std::shared_ptr<const LinearSmoother> smoother) : smoother_(std::move(smoother)) {}

  Vector operator()(const Vector& v) const { return smoother_->apply(v); }

  Index size() const noexcept { return smoother_->size(); }

  Matrix materialize() const {
    const Index n = size();
    Matrix l(n, n);
    for (Index j = 0; j < n; ++j) l.col(j) = smoother_->apply(Vector::Unit(n, j));
    return l;
  }

  /// max_i sum_j |L_ij|, an upper bound on the spectral radius.
  double max_abs_row_sum() const { return materialize().cwiseAbs().rowwise().sum().maxCoeff(); }

  double spectral_norm() const { return Eigen::JacobiSVD<Matrix>(materialize()).singularValues()(0); }

 private:
  std::shared_ptr<const LinearSmoother> smoother_;
};

inline SmootherMatrix smoother_matrix(const SmootherFit& fit) { return SmootherMatrix(fit.smoother()); }

inline SmootherFit fit_smoother(const Design& design, const Vector& y, const SmootherSpec& spec) {
  return LinearSmoother::make(design, spec)->fit(y);
}

inline SmootherFit fit_kernel_ridge(const Design& design, const Vector& y, double rho, double kappa) {
  return fit_smoother(design, y, KernelRidgeSpec{rho, kappa});
}

inline SmootherFit fit_truncated_fourier(const Design& design, const Vector& y, int terms,
                                         FourierCoefficients mode = FourierCoefficients::LeastSquares) {
  return fit_smoother(design, y, FourierSpec{terms, mode});
}

inline SmootherFit fit_local_poly(const Design& design, const Vector& y, int degree, double bandwidth,
                                  LocalKernel kernel = LocalKernel::Epanechnikov) {
  return fit_smoother(design, y, LocalPolySpec{degree, bandwidth, kernel});
}

}  // namespace npsr
