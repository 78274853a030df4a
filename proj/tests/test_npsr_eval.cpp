#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>
#include <vector>

#include <gtest/gtest.h>

#include "npsr/eval.hpp"
#include "npsr/npsr.hpp"
#include "support.hpp"

using namespace npsr;
using npsr::testing::random_design;
using npsr::testing::random_matrix;
using npsr::testing::random_orthogonal;

namespace {

Design grid_design(Index n) {
  Matrix x(n, 1);
  for (Index i = 0; i < n; ++i) x(i, 0) = (static_cast<double>(i) + 0.5) / static_cast<double>(n);
  return Design(std::move(x));
}

Vector sine(const Design& d) {
  Vector f(d.size());
  for (Index i = 0; i < d.size(); ++i) f(i) = std::sin(2 * std::numbers::pi * d.points()(i, 0));
  return f;
}

Vector unit(Index p, std::mt19937_64& rng) {
  const Vector v = random_matrix(p, 1, rng).col(0);
  return v / v.norm();
}

/// Model with the given basis and one fit per direction of the rotated data.
NpsrModel model_on(const Matrix& y, const Design& d, const Matrix& basis, const SmootherSpec& spec) {
  return detail::fit_on_subspace(y, Subspace(basis), LinearSmoother::make(d, spec), TuningRecord{});
}

}  // namespace

// ------------------------------------------------------------------ npsr

TEST(Rotate, CanonicalSubspaceCopiesRows) {
  std::mt19937_64 rng(40);
  const Matrix y = random_matrix(5, 7, rng);
  const RotatedResponses r = rotate(y, Subspace(Matrix::Identity(5, 2)));
  EXPECT_EQ(r.values, y.topRows(2));
}

TEST(Rotate, FullOrthogonalBasisIsAnIsometry) {
  std::mt19937_64 rng(41);
  const Matrix y = random_matrix(4, 9, rng);
  const RotatedResponses r = rotate(y, Subspace(random_orthogonal(4, rng)));
  EXPECT_NEAR(r.values.norm(), y.norm(), 1e-10);
}

TEST(Rotate, HandComputedInnerProducts) {
  Matrix y(3, 4);
  y << 3, 0, 1, -3,
       0, 3, 1, 6,
       0, 0, 1, 3;
  Matrix u(3, 1);
  u << 1.0 / 3, 2.0 / 3, 2.0 / 3;
  const RotatedResponses r = rotate(y, Subspace(u));
  EXPECT_NEAR(r.values(0, 0), 1.0, 1e-15);
  EXPECT_NEAR(r.values(0, 1), 2.0, 1e-15);
  EXPECT_NEAR(r.values(0, 2), 5.0 / 3, 1e-15);
  EXPECT_NEAR(r.values(0, 3), 5.0, 1e-15);
  EXPECT_THROW(rotate(Matrix::Ones(4, 4), Subspace(u)), InvalidArgument);
}

TEST(FitNpsr, NoiseFreeRankOneIsRecovered) {
  std::mt19937_64 rng(42);
  const Design d = grid_design(100);
  const Vector u = unit(5, rng);
  const Matrix f = u * sine(d).transpose();
  const NpsrModel m = fit_npsr(f, d, 1, KernelRidgeSpec{median_heuristic(d), 1e-6});
  EXPECT_LT(sin_theta_distance(m.subspace(), Subspace(u)), 1e-8);
  EXPECT_LT(estimation_error(f, m.fitted()), 1e-3);
}

TEST(FitNpsr, ScalarResponseReducesToUnivariateSmoothing) {
  std::mt19937_64 rng(43);
  const Design d = random_design(40, rng);
  const Matrix y = random_matrix(1, 40, rng);
  const KernelRidgeSpec spec{0.2, 1e-2};
  const NpsrModel m = fit_npsr(y, d, 1, spec);
  EXPECT_NEAR(std::abs(m.subspace().basis()(0, 0)), 1.0, 1e-15);
  const double sign = m.subspace().basis()(0, 0);
  const SmootherFit direct = fit_kernel_ridge(d, sign * y.row(0).transpose(), spec.rho, spec.kappa);
  EXPECT_LT((sign * direct.fitted() - m.fitted().row(0).transpose()).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(FitNpsr, ModelShapeAndEvaluation) {
  std::mt19937_64 rng(44);
  const Design d = random_design(30, rng);
  const Matrix y = random_matrix(6, 30, rng);
  const NpsrModel m = fit_npsr(y, d, 3, FourierSpec{3});
  EXPECT_EQ(m.q(), 3);
  EXPECT_EQ(m.p(), 6);
  EXPECT_EQ(m.direction_fits().size(), 3u);
  EXPECT_EQ(m.tuning().q, 3);
  EXPECT_LT((m(d.point(4)) - m.fitted().col(4)).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LT((m.subspace().basis().transpose() * m.subspace().basis() - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff(),
            1e-10);
}

TEST(FitNpsr, Errors) {
  std::mt19937_64 rng(45);
  const Design d = random_design(10, rng);
  EXPECT_THROW(fit_npsr(Matrix::Zero(3, 10), d, 1, KernelRidgeSpec{0.1, 1.0}), NumericalError);
  EXPECT_THROW(fit_npsr(random_matrix(3, 9, rng), d, 1, KernelRidgeSpec{0.1, 1.0}), InvalidArgument);
  EXPECT_THROW(fit_npsr(random_matrix(3, 10, rng), d, 4, KernelRidgeSpec{0.1, 1.0}), InvalidArgument);
  EXPECT_THROW(fit_npsr(random_matrix(3, 10, rng), d, 0, KernelRidgeSpec{0.1, 1.0}), InvalidArgument);
}

TEST(FitNpsr, TemplateResolvesMedianHeuristicAndCrossValidation) {
  std::mt19937_64 rng(46);
  const Design d = random_design(50, rng);
  const Matrix y = random_matrix(4, 50, rng);
  const NpsrModel m = fit_npsr(y, d, 2, SmootherTemplate{KernelRidgeTemplate{}});
  ASSERT_TRUE(m.tuning().rho && m.tuning().kappa);
  EXPECT_DOUBLE_EQ(*m.tuning().rho, median_heuristic(d));
  const auto grid = default_kappa_grid();
  EXPECT_NE(std::find(grid.begin(), grid.end(), *m.tuning().kappa), grid.end());
  const RotatedResponses r = rotate(y, m.subspace());
  EXPECT_EQ(*m.tuning().kappa, cv_select_kappa(d, r, *m.tuning().rho, 10, grid, 0));
}

TEST(FitNpsr, RotationOfTheBasisLeavesFittedValuesUnchanged) {
  std::mt19937_64 rng(47);
  for (int trial = 0; trial < 10; ++trial) {
    const Design d = random_design(40, rng);
    const Matrix y = random_matrix(6, 40, rng);
    const Matrix basis = thin_svd(y, 3).left;
    const KernelRidgeSpec spec{median_heuristic(d), 1e-3};
    const Matrix a = model_on(y, d, basis, spec).fitted();
    const Matrix b = model_on(y, d, basis * random_orthogonal(3, rng), spec).fitted();
    EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-8);
  }
}

TEST(FitNpsr, SampledSvdSpansTheLoadings) {
  std::mt19937_64 rng(48);
  const Index n = 60, p = 8, q = 3;
  const Matrix u = orthonormalize(random_matrix(p, q, rng)).basis();
  const Matrix g = orthonormalize(random_matrix(n, q, rng)).basis();  // orthogonal sampled components
  Vector scale(q);
  scale << 5.0, 3.0, 1.5;
  const Matrix f = u * scale.asDiagonal() * g.transpose();
  EXPECT_LT(sin_theta_distance(Subspace(thin_svd(f, q).left), Subspace(u)), 1e-8);
}

TEST(Discrepancy, HandCase) {
  const Design d = Design::from_values({0.25, 0.75});
  Matrix y(2, 2);
  y << 1, 3,
       2, 4;
  const NpsrModel m = model_on(y, d, Matrix::Identity(2, 1), FourierSpec{1});
  // F_hat columns (2, 0): residuals (-1, 2) and (1, 4)
  EXPECT_NEAR(empirical_discrepancy(y, d, m), 11.0, 1e-14);
  const DiscrepancyDecomposition dec = decompose_discrepancy(y, d, m);
  EXPECT_NEAR(dec.orthogonal, 10.0, 1e-14);
  EXPECT_NEAR(dec.per_direction(0), 1.0, 1e-14);
}

TEST(Discrepancy, PerfectFitIsZero) {
  std::mt19937_64 rng(49);
  const Design d = grid_design(12);
  const Matrix y = random_matrix(3, 12, rng);
  const NpsrModel m = fit_npsr(y, d, 3, KernelRidgeSpec{0.005, 0.0});
  EXPECT_LT(empirical_discrepancy(y, d, m), 1e-12);
  EXPECT_LT(std::abs(decompose_discrepancy(y, d, m).orthogonal), 1e-10);
}

TEST(Discrepancy, ZeroComponentsGivePythagoras) {
  std::mt19937_64 rng(50);
  const Design d = random_design(15, rng);
  const Matrix y = random_matrix(5, 15, rng);
  const Subspace sub = orthonormalize(random_matrix(5, 2, rng));
  const auto smoother = LinearSmoother::make(d, KernelRidgeSpec{0.1, 1.0});
  const NpsrModel m(sub, {smoother->fit(Vector::Zero(15)), smoother->fit(Vector::Zero(15))}, smoother->spec(), {});
  const DiscrepancyDecomposition dec = decompose_discrepancy(y, d, m);
  EXPECT_NEAR(dec.per_direction.sum(), (sub.projector() * y).squaredNorm() / 15.0, 1e-12);
}

TEST(Discrepancy, DecompositionIdentityOnRandomModels) {
  std::mt19937_64 rng(51);
  const std::vector<SmootherSpec> specs = {KernelRidgeSpec{0.2, 1e-2}, FourierSpec{3}, LocalPolySpec{1, 0.5}};
  for (int trial = 0; trial < 30; ++trial) {
    const Index p = 2 + trial % 5, n = 6 + trial % 11;
    const Design d = random_design(n, rng);
    const Matrix y = random_matrix(p, n, rng);
    const NpsrModel m = fit_npsr(y, d, 1 + trial % p, specs[static_cast<std::size_t>(trial % 3)]);
    const DiscrepancyDecomposition dec = decompose_discrepancy(y, d, m);
    EXPECT_NEAR(dec.total(), empirical_discrepancy(y, d, m), 1e-10);
  }
}

TEST(Aic, Arithmetic) {
  EXPECT_DOUBLE_EQ(aic_value(1.0, 10, 10), 2.0);
  EXPECT_NEAR(aic_value(std::exp(1.0), 7, 7), 3.0, 1e-15);
  EXPECT_THROW(aic_value(0.0, 1, 10), NumericalError);
}

TEST(Aic, RecomputedFromResiduals) {
  SimConfig c;
  c.n = 64;
  c.p = 5;
  c.seed = 3;
  const SimInstance sim = generate(c);
  const NpsrModel m = fit_npsr(sim.y, sim.design, 2, KernelRidgeSpec{median_heuristic(sim.design), 1e-3});
  double ss = 0.0;
  for (Index i = 0; i < 64; ++i) ss += (sim.y.col(i) - m.fitted().col(i)).squaredNorm();
  EXPECT_NEAR(aic(sim.y, sim.design, m), std::log(ss / (2.0 * 64)) + 2.0 * 2 / 64, 1e-12);
}

TEST(CrossValidation, SingleCandidate) {
  std::mt19937_64 rng(52);
  const Design d = random_design(30, rng);
  const RotatedResponses r{random_matrix(2, 30, rng)};
  EXPECT_EQ(cv_select_kappa(d, r, 0.2, 10, {0.37}, 1), 0.37);
}

TEST(CrossValidation, TiesGoToTheSmallerKappa) {
  const Design d = grid_design(20);
  const RotatedResponses zero{Matrix::Zero(1, 20)};
  EXPECT_EQ(cv_select_kappa(d, zero, 0.2, 5, {1e-3, 1e-1, 10.0}, 1), 1e-3);
}

TEST(CrossValidation, HeldOutErrorsMatchDirectRefits) {
  std::mt19937_64 rng(53);
  const Index n = 23;
  const Design d = random_design(n, rng);
  const Matrix resp = random_matrix(n, 2, rng);
  const std::vector<double> grid = {1e-4, 1e-2, 1.0};
  const int folds = 4;
  const std::uint64_t seed = 99;
  const Vector ours = KappaCrossValidator(d, 0.15, folds, seed).cv_errors(resp, grid);

  // same fold rule: seeded shuffle, then round-robin
  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Index{0});
  std::mt19937_64 shuffle_rng(seed);
  std::shuffle(perm.begin(), perm.end(), shuffle_rng);
  std::vector<int> fold_of(static_cast<std::size_t>(n));
  for (std::size_t r = 0; r < perm.size(); ++r) fold_of[static_cast<std::size_t>(perm[r])] = static_cast<int>(r % folds);

  for (std::size_t g = 0; g < grid.size(); ++g) {
    double total = 0.0;
    for (int f = 0; f < folds; ++f) {
      std::vector<Index> train, test;
      for (Index i = 0; i < n; ++i) (fold_of[static_cast<std::size_t>(i)] == f ? test : train).push_back(i);
      const Design dt = d.subset(train);
      for (Index c = 0; c < 2; ++c) {
        Vector yt(static_cast<Index>(train.size()));
        for (std::size_t j = 0; j < train.size(); ++j) yt(static_cast<Index>(j)) = resp(train[j], c);
        const SmootherFit fit = fit_kernel_ridge(dt, yt, 0.15, grid[g]);
        for (Index i : test) total += std::pow(resp(i, c) - fit(d.point(i)), 2);
      }
    }
    EXPECT_NEAR(ours(static_cast<Index>(g)), total, 1e-8 * std::max(1.0, total)) << grid[g];
  }
}

TEST(CrossValidation, PureNoisePrefersStrongShrinkage) {
  int strong = 0;
  for (std::uint64_t s = 0; s < 50; ++s) {
    std::mt19937_64 rng(1000 + s);
    const Design d = random_design(100, rng);
    const RotatedResponses r{random_matrix(2, 100, rng)};
    const double kappa = cv_select_kappa(d, r, median_heuristic(d), 10, default_kappa_grid(), s);
    strong += kappa >= 1.0;
  }
  EXPECT_GE(strong, 40);
}

TEST(CrossValidation, NoiseFreeSmoothRowsPreferWeakShrinkage) {
  int weak = 0;
  for (std::uint64_t s = 0; s < 50; ++s) {
    std::mt19937_64 rng(2000 + s);
    const Design d = random_design(100, rng);
    Matrix rows(2, 100);
    rows.row(0) = sine(d).transpose();
    for (Index i = 0; i < 100; ++i) rows(1, i) = std::cos(2 * std::numbers::pi * d.points()(i, 0));
    const double kappa = cv_select_kappa(d, RotatedResponses{rows}, median_heuristic(d), 10, default_kappa_grid(), s);
    weak += kappa <= 1e-4;
  }
  EXPECT_GE(weak, 40);
}

TEST(CrossValidation, Errors) {
  const Design d = grid_design(8);
  const RotatedResponses r{Matrix::Ones(1, 8)};
  EXPECT_THROW(cv_select_kappa(d, r, 0.2, 10, {1.0, 2.0}, 0), InvalidArgument);
  EXPECT_THROW(cv_select_kappa(d, r, 0.2, 1, {1.0, 2.0}, 0), InvalidArgument);
  EXPECT_THROW(cv_select_kappa(d, r, 0.2, 4, {}, 0), InvalidArgument);
  EXPECT_THROW(cv_select_kappa(d, RotatedResponses{Matrix::Ones(1, 7)}, 0.2, 4, {1.0, 2.0}, 0), InvalidArgument);
}

TEST(DefaultGrid, LogSpaced) {
  const auto grid = default_kappa_grid();
  ASSERT_EQ(grid.size(), 25u);
  EXPECT_NEAR(grid.front(), 1e-6, 1e-20);
  EXPECT_NEAR(grid.back(), 1e2, 1e-12);
  for (std::size_t i = 1; i < grid.size(); ++i) EXPECT_NEAR(std::log10(grid[i] / grid[i - 1]), 1.0 / 3.0, 1e-12);
}

TEST(SelectQ, SingleCandidate) {
  std::mt19937_64 rng(54);
  const Design d = random_design(30, rng);
  const QSelection s = select_q(random_matrix(4, 30, rng), d, 1, SmootherTemplate{FourierSpec{3}});
  EXPECT_EQ(s.q_star, 1);
  EXPECT_EQ(s.candidates.size(), 1u);
}

TEST(SelectQ, CandidatesMatchIndividualFits) {
  SimConfig c;
  c.n = 80;
  c.p = 6;
  c.seed = 8;
  const SimInstance sim = generate(c);
  KernelRidgeTemplate tmpl;
  tmpl.cv_seed = 5;
  const QSelection s = select_q(sim.y, sim.design, 4, tmpl);
  ASSERT_EQ(s.candidates.size(), 4u);
  Index best = 1;
  for (const auto& e : s.candidates) {
    KernelRidgeTemplate fixed = tmpl;
    fixed.kappa = e.kappa;
    const NpsrModel m = fit_npsr(sim.y, sim.design, e.q, SmootherTemplate{fixed});
    EXPECT_NEAR(e.aic, aic(sim.y, sim.design, m), 1e-12);
    KernelRidgeTemplate open = tmpl;
    EXPECT_EQ(e.kappa, *fit_npsr(sim.y, sim.design, e.q, SmootherTemplate{open}).tuning().kappa);
    if (e.aic < s.candidates[static_cast<std::size_t>(best - 1)].aic) best = e.q;
  }
  EXPECT_EQ(s.q_star, best);
  EXPECT_EQ(s.model.q(), best);
  EXPECT_EQ(s.model.tuning().aic.size(), 4u);
}

TEST(SelectQ, FindsTheTrueDimensionOnCleanSignal) {
  SimConfig c;
  c.n = 128;
  c.p = 10;
  c.q = 2;
  c.sigma = 0.3;
  c.seed = 21;
  const SimInstance sim = generate(c);
  EXPECT_EQ(select_q(sim.y, sim.design, 6, KernelRidgeTemplate{}).q_star, 2);
}

TEST(CurveByCurve, ScalarCaseEqualsSingleFit) {
  std::mt19937_64 rng(55);
  const Design d = random_design(40, rng);
  const Matrix y = random_matrix(1, 40, rng);
  const CurveByCurveFit cbc = fit_curve_by_curve(y, d, KernelRidgeTemplate{});
  const double kappa =
      cv_select_kappa(d, RotatedResponses{y}, median_heuristic(d), 10, default_kappa_grid(), 0);
  EXPECT_EQ(cbc.kappas.at(0), kappa);
  const SmootherFit single = fit_kernel_ridge(d, y.row(0).transpose(), median_heuristic(d), kappa);
  EXPECT_LT((cbc.fitted().row(0).transpose() - single.fitted()).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((cbc.predict(d.points()) - cbc.fitted()).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(CurveByCurve, NoiseFreeRankOne) {
  std::mt19937_64 rng(56);
  const Design d = grid_design(100);
  const Matrix f = unit(4, rng) * sine(d).transpose();
  KernelRidgeTemplate tmpl;
  tmpl.kappa = 1e-6;
  EXPECT_LT(estimation_error(f, fit_curve_by_curve(f, d, tmpl).fitted()), 1e-3);
}

TEST(Predict, AtTheDesignMatchesFittedValues) {
  std::mt19937_64 rng(57);
  const Design d = random_design(35, rng);
  const Matrix y = random_matrix(5, 35, rng);
  for (const SmootherSpec& spec : std::vector<SmootherSpec>{KernelRidgeSpec{0.2, 1e-3}, FourierSpec{5}}) {
    const NpsrModel m = fit_npsr(y, d, 2, spec);
    EXPECT_LT((predict(m, d.points()) - m.fitted()).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LT((m.values_at(Design(d.points())) - m.fitted()).cwiseAbs().maxCoeff(), 1e-8);
  }
}

TEST(Predict, ConstantComponent) {
  std::mt19937_64 rng(58);
  const Design d = random_design(20, rng);
  const Vector u = unit(3, rng);
  const Matrix y = u * Vector::Constant(20, 2.0).transpose();
  const NpsrModel m = fit_npsr(y, d, 1, FourierSpec{1});
  Matrix pts(3, 1);
  pts << 0.0, 0.33, 1.0;
  const Matrix out = predict(m, pts);
  for (Index j = 0; j < 3; ++j) EXPECT_LT((out.col(j) - 2.0 * u).cwiseAbs().maxCoeff(), 1e-12);
  Matrix bad(1, 1);
  bad << 1.2;
  EXPECT_THROW(predict(m, bad), InvalidArgument);
  EXPECT_THROW(predict(m, Matrix::Constant(1, 2, 0.5)), InvalidArgument);
}

TEST(Predict, HandRankOne) {
  const Design d = Design::from_values({0.2, 0.6});
  Matrix y(2, 2);
  y << 3, 3,
       4, 4;
  const NpsrModel m = fit_npsr(y, d, 1, FourierSpec{1});
  Matrix pts(1, 1);
  pts << 0.9;
  const Matrix out = predict(m, pts);
  EXPECT_NEAR(out(0, 0), 3.0, 1e-12);
  EXPECT_NEAR(out(1, 0), 4.0, 1e-12);
}

TEST(SmootherRisk, DecreasesWithSampleSize) {
  const std::vector<Index> ns = {64, 128, 256, 512};
  const int reps = 50;
  for (int which = 0; which < 3; ++which) {
    std::vector<double> medians;
    for (Index n : ns) {
      std::vector<double> risk;
      for (int r = 0; r < reps; ++r) {
        std::mt19937_64 rng(stream_seed(60, "risk", static_cast<std::uint64_t>(n * 1000 + r)));
        const Design d = random_design(n, rng);
        Vector f(n);
        for (Index i = 0; i < n; ++i) f(i) = std::numbers::sqrt2 * std::cos(2 * std::numbers::pi * d.points()(i, 0));
        const Vector y = f + random_matrix(n, 1, rng).col(0);
        SmootherSpec spec;
        if (which == 0) {
          const double rho = median_heuristic(d);
          spec = KernelRidgeSpec{rho, cv_select_kappa(d, RotatedResponses{y.transpose()}, rho, 10,
                                                      default_kappa_grid(), static_cast<std::uint64_t>(r))};
        } else if (which == 1) {
          spec = FourierSpec{choose_fourier_N(n, 2.0)};
        } else {
          spec = LocalPolySpec{1, default_local_poly_bandwidth(n)};
        }
        risk.push_back((fit_smoother(d, y, spec).fitted() - f).squaredNorm() / static_cast<double>(n));
      }
      std::nth_element(risk.begin(), risk.begin() + reps / 2, risk.end());
      medians.push_back(risk[reps / 2]);
    }
    for (std::size_t i = 1; i < medians.size(); ++i) EXPECT_LT(medians[i], medians[i - 1]) << which << " n=" << ns[i];
  }
}

// ------------------------------------------------------------------ eval

TEST(EstimationError, Arithmetic) {
  Matrix a(2, 1), b(2, 1);
  a << 3, 4;
  b << 0, 0;
  EXPECT_DOUBLE_EQ(estimation_error(a, b), 25.0);
  EXPECT_DOUBLE_EQ(estimation_error(a, a), 0.0);
  EXPECT_THROW(estimation_error(a, Matrix::Zero(1, 2)), InvalidArgument);
}

TEST(PredictionError, Arithmetic) {
  Matrix y(2, 1), p(2, 1);
  y << 1, 1;
  p << 0, 0;
  EXPECT_DOUBLE_EQ(prediction_error(y, p), 1.0);
  EXPECT_DOUBLE_EQ(prediction_error(y, y), 0.0);
  EXPECT_THROW(prediction_error(Matrix(2, 0), Matrix(2, 0)), InvalidArgument);
  Matrix y2(2, 2), p2(2, 2);
  y2 << 1, 2, 3, 4;
  p2 << 0, 0, 0, 0;
  EXPECT_DOUBLE_EQ(prediction_error(y2, p2), 30.0 / 4.0);
}

TEST(Moments, TextbookStandardError) {
  const std::vector<double> v = {1.0, 2.0, 4.0, 7.0};
  const Moments m = mean_and_se(v);
  EXPECT_DOUBLE_EQ(m.mean, 3.5);
  // sample variance (6.25 + 2.25 + 0.25 + 12.25) / 3 = 7
  EXPECT_DOUBLE_EQ(m.se, std::sqrt(7.0) / 2.0);
  EXPECT_EQ(mean_and_se({5.0}).se, 0.0);
  EXPECT_THROW(mean_and_se({}), InvalidArgument);
}

TEST(Campaign, SingleReplicationFlagsStandardErrors) {
  SimConfig c;
  c.n = 40;
  c.p = 4;
  c.q = 1;
  const CampaignSummary s = run_campaign(c, 1, CampaignOptions{});
  EXPECT_FALSE(s.se_defined);
  EXPECT_EQ(s.estimation_error.se, 0.0);
  EXPECT_EQ(s.results.size(), 1u);
  EXPECT_GE(s.results[0].estimation_error, 0.0);
  EXPECT_GE(s.results[0].sin_theta, 0.0);
  EXPECT_LE(s.results[0].sin_theta, 1.0);
}

TEST(Campaign, SummaryMatchesStoredReplications) {
  SimConfig c;
  c.n = 40;
  c.p = 4;
  c.q = 1;
  const CampaignSummary s = run_campaign(c, 5, CampaignOptions{});
  EXPECT_TRUE(s.se_defined);
  std::vector<double> est;
  for (const auto& r : s.results) est.push_back(r.estimation_error);
  const Moments m = mean_and_se(est);
  EXPECT_EQ(s.estimation_error.mean, m.mean);
  EXPECT_EQ(s.estimation_error.se, m.se);
  EXPECT_EQ(s.results[2].seed, replication_seed(c.seed, 2));
}

TEST(Campaign, IndependentOfThreadCount) {
  SimConfig c;
  c.n = 48;
  c.p = 5;
  c.q = 2;
  c.seed = 77;
  CampaignOptions one, many;
  one.threads = 1;
  many.threads = 4;
  const CampaignSummary a = run_campaign(c, 6, one), b = run_campaign(c, 6, many);
  for (std::size_t r = 0; r < 6; ++r) {
    EXPECT_EQ(a.results[r].estimation_error, b.results[r].estimation_error);
    EXPECT_EQ(a.results[r].baseline_error, b.results[r].baseline_error);
    EXPECT_EQ(a.results[r].q_selected, b.results[r].q_selected);
    EXPECT_EQ(a.results[r].sin_theta, b.results[r].sin_theta);
  }
}

TEST(Campaign, FixedDimensionAndNoBaseline) {
  SimConfig c;
  c.n = 40;
  c.p = 5;
  c.q = 2;
  CampaignOptions o;
  o.fixed_q = 3;
  o.run_baseline = false;
  const CampaignSummary s = run_campaign(c, 2, o);
  EXPECT_EQ(s.results[0].q_selected, 3);
  EXPECT_TRUE(std::isnan(s.results[0].baseline_error));
  EXPECT_THROW(run_campaign(c, 0, o), InvalidArgument);
}

TEST(ParallelFor, RethrowsTheLowestFailingIndex) {
  for (unsigned threads : {1u, 3u}) {
    try {
      parallel_for(10, threads, [](std::size_t i) {
        if (i == 4 || i == 7) throw std::runtime_error(std::to_string(i));
      });
      FAIL();
    } catch (const std::runtime_error& e) {
      EXPECT_STREQ(e.what(), "4");
    }
  }
}

TEST(RateDiagnostic, ExactPowerLaws) {
  const std::vector<double> ns = {100, 200, 400, 800};
  std::vector<double> inv, flat;
  for (double n : ns) {
    inv.push_back(3.0 / n);
    flat.push_back(0.7);
  }
  EXPECT_NEAR(rate_diagnostic(ns, inv), -1.0, 1e-10);
  EXPECT_NEAR(rate_diagnostic(ns, flat), 0.0, 1e-12);
  EXPECT_THROW(rate_diagnostic({100, 100, 200}, {1, 2, 3}), InvalidArgument);
  EXPECT_THROW(rate_diagnostic({100, 200, 300}, {1, 0, 3}), InvalidArgument);
}

TEST(SinThetaDiagnostic, NoiseFreeIsExact) {
  SimConfig c;
  c.sigma = 0.0;
  const auto means = sin_theta_diagnostic(c, {64, 128}, 10);
  for (double m : means) EXPECT_LT(m, 1e-32);  // fourth power of < 1e-8
}

TEST(SinThetaDiagnostic, GrowsWithDimension) {
  SimConfig c;
  c.n = 128;
  c.q = 2;
  c.p = 10;
  const double small = sin_theta_diagnostic(c, {128}, 200).at(0);
  c.p = 20;
  const double large = sin_theta_diagnostic(c, {128}, 200).at(0);
  EXPECT_GT(large, small);
}

TEST(Holdout, RunsOnSyntheticHighDimensionalData) {
  SimConfig c;
  c.n = 256;
  c.p = 64;
  c.q = 5;
  c.seed = 4;
  const SimInstance sim = generate(c);
  const HoldoutResult h = holdout_evaluation(sim.y, sim.design, 0.1, 10, KernelRidgeTemplate{}, KernelRidgeTemplate{}, 9);
  EXPECT_EQ(h.test_indices.size(), 26u);
  EXPECT_TRUE(std::is_sorted(h.test_indices.begin(), h.test_indices.end()));
  EXPECT_GE(h.q_star, 1);
  EXPECT_LE(h.q_star, 10);
  EXPECT_TRUE(std::isfinite(h.npsr_prediction_error));
  EXPECT_TRUE(std::isfinite(h.baseline_prediction_error));
  EXPECT_THROW(holdout_evaluation(sim.y, sim.design, 1.0, 10, KernelRidgeTemplate{}, KernelRidgeTemplate{}, 9),
               InvalidArgument);
}
