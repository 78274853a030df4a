#pragma once

#include <cmath>
#include <cstdint>
#include <algorithm>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "npsr/error.hpp"
#include "npsr/linalg.hpp"
#include "npsr/smoothers.hpp"

namespace npsr {

/// 25 log-spaced ridge penalties from 1e-6 to 1e2.
inline std::vector<double> default_kappa_grid() {
  std::vector<double> grid(25);
  for (std::size_t i = 0; i < grid.size(); ++i)
    grid[i] = std::pow(10.0, -6.0 + 8.0 * static_cast<double>(i) / 24.0);
  return grid;
}

/// Row k holds u_k^T y_i for i = 1..n.
struct RotatedResponses {
  Matrix values;  // q x n
};

inline RotatedResponses rotate(const Matrix& y, const Subspace& subspace) {
  if (y.rows() != subspace.ambient_dim())
    throw InvalidArgument("rotate: data has " + std::to_string(y.rows()) + " rows but subspace lives in R^" +
                          std::to_string(subspace.ambient_dim()));
  return RotatedResponses{subspace.basis().transpose() * y};
}

/// K-fold cross-validation of the ridge penalty for Gaussian-kernel ridge
/// regression on a fixed design. Folds come from a seeded shuffle dealt
/// round-robin. Each fold's training kernel is eigendecomposed once, so the
/// whole penalty grid and any number of response series share that work.
class KappaCrossValidator {
 public:
  KappaCrossValidator(const Design& design, double rho, int folds, std::uint64_t seed) : n_(design.size()) {
    if (folds < 2) throw InvalidArgument("cross-validation: need at least 2 folds");
    if (design.size() < folds) throw InvalidArgument("cross-validation: fewer points than folds");
    if (!(rho > 0.0)) throw InvalidArgument("cross-validation: rho must be positive");

    std::vector<Index> perm(static_cast<std::size_t>(n_));
    std::iota(perm.begin(), perm.end(), Index{0});
    std::mt19937_64 rng(seed);
    std::shuffle(perm.begin(), perm.end(), rng);
    fold_of_.assign(static_cast<std::size_t>(n_), 0);
    for (std::size_t k = 0; k < perm.size(); ++k) fold_of_[static_cast<std::size_t>(perm[k])] = static_cast<int>(k) % folds;

    const Matrix& x = design.points();
    folds_.resize(static_cast<std::size_t>(folds));
    for (int f = 0; f < folds; ++f) {
      Fold& fold = folds_[static_cast<std::size_t>(f)];
      for (Index i = 0; i < n_; ++i) (fold_of_[static_cast<std::size_t>(i)] == f ? fold.test : fold.train).push_back(i);
      const Index nt = static_cast<Index>(fold.train.size());
      const Index nv = static_cast<Index>(fold.test.size());
      const double scale = 1.0 / static_cast<double>(nt);
      Matrix k_train(nt, nt);
      for (Index a = 0; a < nt; ++a) {
        k_train(a, a) = scale;
        for (Index b = 0; b < a; ++b)
          k_train(a, b) = k_train(b, a) =
              scale * std::exp(-(x.row(fold.train[a]) - x.row(fold.train[b])).squaredNorm() / rho);
      }
      Matrix k_cross(nv, nt);
      for (Index a = 0; a < nv; ++a)
        for (Index b = 0; b < nt; ++b)
          k_cross(a, b) = scale * std::exp(-(x.row(fold.test[a]) - x.row(fold.train[b])).squaredNorm() / rho);

      Eigen::SelfAdjointEigenSolver<Matrix> eig(k_train);
      if (eig.info() != Eigen::Success) throw NumericalError("cross-validation: eigendecomposition failed");
      fold.eigenvalues = eig.eigenvalues().cwiseMax(0.0);
      fold.eigenvectors = eig.eigenvectors();
      fold.cross_basis = k_cross * fold.eigenvectors;
    }
  }

  int folds() const noexcept { return static_cast<int>(folds_.size()); }
  const std::vector<int>& fold_assignment() const noexcept { return fold_of_; }

  /// Summed squared held-out error per grid value; `responses` is n x r
  /// (one column per series) and errors are aggregated over all columns.
  Vector cv_errors(const Matrix& responses, const std::vector<double>& grid) const {
    if (responses.rows() != n_) throw InvalidArgument("cross-validation: response length does not match design");
    if (grid.empty()) throw InvalidArgument("cross-validation: empty kappa grid");
    Vector errors = Vector::Zero(static_cast<Index>(grid.size()));
    for (const Fold& fold : folds_) {
      const Index nt = static_cast<Index>(fold.train.size());
      const Index nv = static_cast<Index>(fold.test.size());
      Matrix y_train(nt, responses.cols());
      Matrix y_test(nv, responses.cols());
      for (Index a = 0; a < nt; ++a) y_train.row(a) = responses.row(fold.train[a]);
      for (Index a = 0; a < nv; ++a) y_test.row(a) = responses.row(fold.test[a]);
      const Matrix projected = fold.eigenvectors.transpose() * y_train;
      const double top = std::max(fold.eigenvalues.maxCoeff(), std::numeric_limits<double>::min());
      for (std::size_t g = 0; g < grid.size(); ++g) {
        const double kappa = grid[g];
        if (!(kappa >= 0.0)) throw InvalidArgument("cross-validation: negative kappa in grid");
        Vector inv(nt);
        for (Index a = 0; a < nt; ++a) {
          const double d = fold.eigenvalues(a) + kappa;
          inv(a) = d > 1e-15 * top ? 1.0 / d : 0.0;
        }
        const Matrix prediction = fold.cross_basis * (inv.asDiagonal() * projected);
        errors(static_cast<Index>(g)) += (y_test - prediction).squaredNorm();
      }
    }
    return errors;
  }

  /// Grid value with the smallest CV error; ties go to the smaller kappa.
  double select(const Matrix& responses, const std::vector<double>& grid) const {
    const Vector errors = cv_errors(responses, grid);
    std::size_t best = 0;
    for (std::size_t g = 1; g < grid.size(); ++g) {
      const double e = errors(static_cast<Index>(g));
      const double b = errors(static_cast<Index>(best));
      if (e < b || (e == b && grid[g] < grid[best])) best = g;
    }
    return grid[best];
  }

 private:
  struct Fold {
    std::vector<Index> train;
    std::vector<Index> test;
    Vector eigenvalues;
    Matrix eigenvectors;
    Matrix cross_basis;  // K(test, train) * eigenvectors
  };

  Index n_;
  std::vector<int> fold_of_;
  std::vector<Fold> folds_;
};

/// One kappa shared by all q directions, minimizing the summed CV error.
inline double cv_select_kappa(const Design& design, const RotatedResponses& rotated, double rho, int folds,
                              const std::vector<double>& grid, std::uint64_t seed = 0) {
  if (grid.empty()) throw InvalidArgument("cv_select_kappa: empty kappa grid");
  if (rotated.values.cols() != design.size())
    throw InvalidArgument("cv_select_kappa: rotated responses do not match design");
  if (grid.size() == 1) return grid.front();
  return KappaCrossValidator(design, rho, folds, seed).select(rotated.values.transpose(), grid);
}

/// Kernel ridge settings with optional data-driven choices: an empty rho
/// means the median heuristic, an empty kappa means K-fold CV on the grid.
struct KernelRidgeTemplate {
  std::optional<double> rho;
  std::optional<double> kappa;
  int folds = 10;
  std::vector<double> kappa_grid = default_kappa_grid();
  std::uint64_t cv_seed = 0;
};

using SmootherTemplate = std::variant<KernelRidgeTemplate, FourierSpec, LocalPolySpec>;

struct AicEntry {
  Index q = 0;
  double kappa = std::numeric_limits<double>::quiet_NaN();  // NaN unless kernel ridge
  double v = 0.0;
  double aic = 0.0;
};

struct TuningRecord {
  std::optional<double> rho;
  std::optional<double> kappa;
  Index q = 0;
  std::vector<AicEntry> aic;
};

/// F_hat(x) = sum_k f_hat_k(x) u_hat_k.
class NpsrModel {
 public:
  NpsrModel(Subspace subspace, std::vector<SmootherFit> fits, SmootherSpec spec, TuningRecord tuning)
      : subspace_(std::move(subspace)), fits_(std::move(fits)), spec_(std::move(spec)), tuning_(std::move(tuning)) {
    if (static_cast<Index>(fits_.size()) != subspace_.dim())
      throw InvalidArgument("NpsrModel: one smoother fit per direction required");
    tuning_.q = subspace_.dim();
  }

  const Subspace& subspace() const noexcept { return subspace_; }
  const std::vector<SmootherFit>& direction_fits() const noexcept { return fits_; }
  Index q() const noexcept { return subspace_.dim(); }
  Index p() const noexcept { return subspace_.ambient_dim(); }
  const SmootherSpec& spec() const noexcept { return spec_; }
  const TuningRecord& tuning() const noexcept { return tuning_; }
  TuningRecord& tuning() noexcept { return tuning_; }
  const Design& design() const noexcept { return fits_.front().design(); }

  /// f_hat_k at the training design, q x n.
  Matrix components() const {
    Matrix out(q(), design().size());
    for (Index k = 0; k < q(); ++k) out.row(k) = fits_[static_cast<std::size_t>(k)].fitted().transpose();
    return out;
  }

  /// f_hat_k at arbitrary points (rows of `points`), q x m.
  Matrix components_at(const Matrix& points) const {
    Matrix out(q(), points.rows());
    for (Index k = 0; k < q(); ++k) out.row(k) = fits_[static_cast<std::size_t>(k)].evaluate(points).transpose();
    return out;
  }

  /// F_hat at the training design, p x n.
  Matrix fitted() const { return subspace_.basis() * components(); }

  /// F_hat at the points of `design`; uses the stored fit when it is the training design.
  Matrix values_at(const Design& other) const {
    if (other == design()) return fitted();
    return subspace_.basis() * components_at(other.points());
  }

  Vector operator()(const Vector& x) const {
    Vector out = Vector::Zero(p());
    for (Index k = 0; k < q(); ++k) out += fits_[static_cast<std::size_t>(k)](x) * subspace_.basis().col(k);
    return out;
  }

 private:
  Subspace subspace_;
  std::vector<SmootherFit> fits_;
  SmootherSpec spec_;
  TuningRecord tuning_;
};

namespace detail {

inline void require_data(const Matrix& y, const Design& design, const char* what) {
  if (y.rows() < 1 || y.cols() < 1) throw InvalidArgument(std::string(what) + ": empty data matrix");
  if (y.cols() != design.size())
    throw InvalidArgument(std::string(what) + ": data has " + std::to_string(y.cols()) +
                          " observations but the design has " + std::to_string(design.size()));
  require_finite(y, what);
}

inline Subspace leading_subspace(const Matrix& y, Index q, const char* what) {
  if (q < 1 || q > std::min(y.rows(), y.cols()))
    throw InvalidArgument(std::string(what) + ": q = " + std::to_string(q) + " outside [1, min(p, n)]");
  if (y.squaredNorm() == 0.0)
    throw NumericalError(std::string(what) + ": data matrix is zero, principal directions are undefined");
  return Subspace(thin_svd(y, q).left);
}

inline NpsrModel fit_on_subspace(const Matrix& y, const Subspace& subspace,
                                 const std::shared_ptr<const LinearSmoother>& smoother, TuningRecord tuning) {
  const Matrix rotated = subspace.basis().transpose() * y;
  std::vector<SmootherFit> fits;
  fits.reserve(static_cast<std::size_t>(subspace.dim()));
  for (Index k = 0; k < subspace.dim(); ++k) fits.push_back(smoother->fit(rotated.row(k).transpose()));
  return NpsrModel(subspace, std::move(fits), smoother->spec(), std::move(tuning));
}

/// Resolves the template against the data in `rotated` (q x n).
inline SmootherSpec resolve_template(const SmootherTemplate& tmpl, const Design& design, const Matrix& rotated,
                                     TuningRecord& record, const KappaCrossValidator* validator) {
  if (const auto* kr = std::get_if<KernelRidgeTemplate>(&tmpl)) {
    const double rho = kr->rho ? *kr->rho : median_heuristic(design);
    double kappa = 0.0;
    if (kr->kappa) {
      kappa = *kr->kappa;
    } else if (kr->kappa_grid.size() == 1) {
      kappa = kr->kappa_grid.front();
    } else if (validator) {
      kappa = validator->select(rotated.transpose(), kr->kappa_grid);
    } else {
      kappa = KappaCrossValidator(design, rho, kr->folds, kr->cv_seed).select(rotated.transpose(), kr->kappa_grid);
    }
    record.rho = rho;
    record.kappa = kappa;
    return KernelRidgeSpec{rho, kappa};
  }
  if (const auto* fs = std::get_if<FourierSpec>(&tmpl)) return *fs;
  return std::get<LocalPolySpec>(tmpl);
}

}  // namespace detail

/// Step 1: top-q left singular subspace of Y (p x n). Step 2: smooth each
/// rotated response series with the same linear smoother.
inline NpsrModel fit_npsr(const Matrix& y, const Design& design, Index q, const SmootherSpec& spec) {
  detail::require_data(y, design, "fit_npsr");
  const Subspace subspace = detail::leading_subspace(y, q, "fit_npsr");
  TuningRecord record;
  if (const auto* kr = std::get_if<KernelRidgeSpec>(&spec)) {
    record.rho = kr->rho;
    record.kappa = kr->kappa;
  }
  return detail::fit_on_subspace(y, subspace, LinearSmoother::make(design, spec), std::move(record));
}

/// As above, with rho/kappa resolved from the data when left open.
inline NpsrModel fit_npsr(const Matrix& y, const Design& design, Index q, const SmootherTemplate& tmpl) {
  detail::require_data(y, design, "fit_npsr");
  const Subspace subspace = detail::leading_subspace(y, q, "fit_npsr");
  TuningRecord record;
  const SmootherSpec spec =
      detail::resolve_template(tmpl, design, subspace.basis().transpose() * y, record, nullptr);
  return detail::fit_on_subspace(y, subspace, LinearSmoother::make(design, spec), std::move(record));
}

inline NpsrModel fit_npsr(const Matrix& y, const Design& design, Index q, const FourierSpec& spec) {
  return fit_npsr(y, design, q, SmootherSpec{spec});
}

inline NpsrModel fit_npsr(const Matrix& y, const Design& design, Index q, const LocalPolySpec& spec) {
  return fit_npsr(y, design, q, SmootherSpec{spec});
}

/// R^D_n = (1/n) sum_i ||y_i - F_hat(x_i)||^2.
inline double empirical_discrepancy(const Matrix& y, const Design& design, const NpsrModel& model) {
  detail::require_data(y, design, "empirical_discrepancy");
  if (y.rows() != model.p()) throw InvalidArgument("empirical_discrepancy: channel count mismatch");
  return (y - model.values_at(design)).squaredNorm() / static_cast<double>(y.cols());
}

struct DiscrepancyDecomposition {
  double orthogonal = 0.0;  // (1/n) sum ||(I - P) y_i||^2
  Vector per_direction;     // (1/n) sum_i (u_k^T y_i - f_k(x_i))^2

  double total() const { return orthogonal + per_direction.sum(); }
};

inline DiscrepancyDecomposition decompose_discrepancy(const Matrix& y, const Design& design, const NpsrModel& model) {
  detail::require_data(y, design, "decompose_discrepancy");
  if (y.rows() != model.p()) throw InvalidArgument("decompose_discrepancy: channel count mismatch");
  const double n = static_cast<double>(y.cols());
  const Matrix& basis = model.subspace().basis();
  const Matrix rotated = basis.transpose() * y;
  const Matrix comps = design == model.design() ? model.components() : model.components_at(design.points());
  DiscrepancyDecomposition out;
  out.orthogonal = (y - basis * rotated).squaredNorm() / n;
  out.per_direction = (rotated - comps).rowwise().squaredNorm() / n;
  return out;
}

/// log V + 2 q / n.
inline double aic_value(double v, Index q, Index n) {
  if (!(v > 0.0)) throw NumericalError("aic: residual criterion V is zero, AIC is degenerate (-inf)");
  return std::log(v) + 2.0 * static_cast<double>(q) / static_cast<double>(n);
}

/// V = (1/2n) sum_i ||y_i - F_hat(x_i)||^2.
inline double aic_residual(const Matrix& y, const Design& design, const NpsrModel& model) {
  return 0.5 * empirical_discrepancy(y, design, model);
}

inline double aic(const Matrix& y, const Design& design, const NpsrModel& model) {
  return aic_value(aic_residual(y, design, model), model.q(), y.cols());
}

struct QSelection {
  Index q_star = 0;
  std::vector<AicEntry> candidates;
  NpsrModel model;  // the fit at q_star
};

/// Fits q = 1..q_max (kappa re-selected by CV at each q when open) and
/// keeps the AIC minimizer; ties go to the smaller q.
inline QSelection select_q(const Matrix& y, const Design& design, Index q_max, const SmootherTemplate& tmpl) {
  detail::require_data(y, design, "select_q");
  const Subspace full = detail::leading_subspace(y, q_max, "select_q");

  std::optional<KappaCrossValidator> validator;
  if (const auto* kr = std::get_if<KernelRidgeTemplate>(&tmpl); kr && !kr->kappa && kr->kappa_grid.size() > 1)
    validator.emplace(design, kr->rho ? *kr->rho : median_heuristic(design), kr->folds, kr->cv_seed);

  std::vector<AicEntry> entries;
  std::optional<NpsrModel> best;
  std::size_t best_index = 0;
  for (Index q = 1; q <= q_max; ++q) {
    const Subspace sub = full.leading(q);
    TuningRecord record;
    const SmootherSpec spec = detail::resolve_template(tmpl, design, sub.basis().transpose() * y, record,
                                                       validator ? &*validator : nullptr);
    NpsrModel model = detail::fit_on_subspace(y, sub, LinearSmoother::make(design, spec), std::move(record));
    AicEntry entry;
    entry.q = q;
    if (model.tuning().kappa) entry.kappa = *model.tuning().kappa;
    entry.v = aic_residual(y, design, model);
    entry.aic = aic_value(entry.v, q, y.cols());
    entries.push_back(entry);
    if (!best || entry.aic < entries[best_index].aic) {
      best_index = entries.size() - 1;
      best.emplace(std::move(model));
    }
  }
  best->tuning().aic = entries;
  return QSelection{entries[best_index].q, entries, std::move(*best)};
}

/// Independent kernel ridge fits of every response row.
struct CurveByCurveFit {
  std::vector<SmootherFit> fits;
  double rho = 0.0;
  std::vector<double> kappas;

  /// p x n fitted values at the training design.
  Matrix fitted() const {
    Matrix out(static_cast<Index>(fits.size()), fits.front().design().size());
    for (std::size_t j = 0; j < fits.size(); ++j) out.row(static_cast<Index>(j)) = fits[j].fitted().transpose();
    return out;
  }

  /// p x m predictions at the rows of `points`.
  Matrix predict(const Matrix& points) const {
    Matrix out(static_cast<Index>(fits.size()), points.rows());
    for (std::size_t j = 0; j < fits.size(); ++j)
      out.row(static_cast<Index>(j)) = fits[j].evaluate(points).transpose();
    return out;
  }
};

inline CurveByCurveFit fit_curve_by_curve(const Matrix& y, const Design& design, const KernelRidgeTemplate& tmpl) {
  detail::require_data(y, design, "fit_curve_by_curve");
  CurveByCurveFit out;
  out.rho = tmpl.rho ? *tmpl.rho : median_heuristic(design);
  std::optional<KappaCrossValidator> validator;
  if (!tmpl.kappa && tmpl.kappa_grid.size() > 1) validator.emplace(design, out.rho, tmpl.folds, tmpl.cv_seed);
  for (Index j = 0; j < y.rows(); ++j) {
    const Vector row = y.row(j).transpose();
    double kappa = 0.0;
    if (tmpl.kappa) kappa = *tmpl.kappa;
    else if (!validator) kappa = tmpl.kappa_grid.at(0);
    else kappa = validator->select(row, tmpl.kappa_grid);
    out.kappas.push_back(kappa);
    out.fits.push_back(fit_kernel_ridge(design, row, out.rho, kappa));
  }
  return out;
}

/// Column j is F_hat at row j of `points` (m x d); returns p x m.
inline Matrix predict(const NpsrModel& model, const Matrix& points) {
  if (points.cols() != model.design().dim()) throw InvalidArgument("predict: point dimension mismatch");
  Design::require_unit_cube(points, "predict");
  return model.subspace().basis() * model.components_at(points);
}

}  // namespace npsr
