#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <mutex>
#include <numeric>
#include <optional>
#include <random>
#include <thread>
#include <vector>

#include "npsr/error.hpp"
#include "npsr/linalg.hpp"
#include "npsr/npsr.hpp"
#include "npsr/simgen.hpp"
#include "npsr/smoothers.hpp"

namespace npsr {

/// ||F - F_hat||_n^2 = (1/n) sum_i ||F(x_i) - F_hat(x_i)||^2 for p x n matrices.
inline double estimation_error(const Matrix& f_true, const Matrix& f_hat) {
  if (f_true.rows() != f_hat.rows() || f_true.cols() != f_hat.cols())
    throw InvalidArgument("estimation_error: shapes " + detail::shape(f_true) + " and " + detail::shape(f_hat) +
                          " differ");
  return (f_true - f_hat).squaredNorm() / static_cast<double>(f_true.cols());
}

inline double estimation_error(const Matrix& f_true, const NpsrModel& model, const Design& design) {
  return estimation_error(f_true, model.values_at(design));
}

/// |S|^{-1} sum_{i in S} ||Y_i - F_hat(x_i)||^2 / p for p x m matrices.
inline double prediction_error(const Matrix& y_test, const Matrix& predicted) {
  if (y_test.cols() == 0) throw InvalidArgument("prediction_error: empty test set");
  if (y_test.rows() != predicted.rows() || y_test.cols() != predicted.cols())
    throw InvalidArgument("prediction_error: shapes " + detail::shape(y_test) + " and " + detail::shape(predicted) +
                          " differ");
  return (y_test - predicted).squaredNorm() / static_cast<double>(y_test.rows() * y_test.cols());
}

inline double prediction_error(const Matrix& y_test, const NpsrModel& model, const Matrix& x_test) {
  if (y_test.cols() == 0) throw InvalidArgument("prediction_error: empty test set");
  if (x_test.rows() != y_test.cols()) throw InvalidArgument("prediction_error: test points and responses differ");
  return prediction_error(y_test, predict(model, x_test));
}

struct Moments {
  double mean = 0.0;
  double se = 0.0;  // sample sd / sqrt(R); 0 when R = 1
};

inline Moments mean_and_se(const std::vector<double>& values) {
  if (values.empty()) throw InvalidArgument("mean_and_se: no values");
  const double r = static_cast<double>(values.size());
  double sum = 0.0;
  for (double v : values) sum += v;
  Moments m;
  m.mean = sum / r;
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - m.mean) * (v - m.mean);
    m.se = std::sqrt(ss / (r - 1.0)) / std::sqrt(r);
  }
  return m;
}

struct ReplicationResult {
  std::uint64_t seed = 0;
  double estimation_error = 0.0;
  double baseline_error = 0.0;  // NaN when the baseline was skipped
  Index q_selected = 0;
  double sin_theta = 0.0;  // top-q_true left subspace vs the true loadings
  double wall_time = 0.0;  // seconds
};

struct CampaignOptions {
  Index q_max = 6;
  std::optional<Index> fixed_q;  // skip AIC selection and fit at this q
  SmootherTemplate npsr = KernelRidgeTemplate{};
  KernelRidgeTemplate baseline{};
  bool run_baseline = true;
  unsigned threads = 1;
};

struct CampaignSummary {
  SimConfig config;
  CampaignOptions options;
  Index replications = 0;
  bool se_defined = false;  // false for a single replication
  Moments estimation_error;
  Moments baseline_error;
  Moments q_selected;
  Moments sin_theta;
  Moments wall_time;
  std::vector<ReplicationResult> results;  // in replication order
};

/// Runs body(i) for i in [0, count) on up to `threads` workers. Results
/// must be written by index; the first failure (lowest index) is rethrown.
template <typename Body>
void parallel_for(std::size_t count, unsigned threads, Body&& body) {
  const unsigned workers = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(count)));
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  auto run = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        body(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (workers == 1) {
    run();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(run);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

namespace detail {
inline SmootherTemplate with_cv_seed(SmootherTemplate tmpl, std::uint64_t seed) {
  if (auto* kr = std::get_if<KernelRidgeTemplate>(&tmpl)) kr->cv_seed = seed;
  return tmpl;
}
}  // namespace detail

/// One replication: simulate, fit NPSR (AIC-selected or fixed q), fit the
/// curve-by-curve baseline, and score both against the truth.
inline ReplicationResult run_replication(const SimConfig& config, const CampaignOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  const SimInstance sim = generate(config);
  const std::uint64_t cv_seed = stream_seed(config.seed, "cv");

  ReplicationResult r;
  r.seed = config.seed;
  const SmootherTemplate tmpl = detail::with_cv_seed(options.npsr, cv_seed);
  if (options.fixed_q) {
    const NpsrModel model = fit_npsr(sim.y, sim.design, *options.fixed_q, tmpl);
    r.q_selected = model.q();
    r.estimation_error = estimation_error(sim.f_true, model.fitted());
  } else {
    const QSelection sel = select_q(sim.y, sim.design, std::min(options.q_max, std::min(config.p, config.n)), tmpl);
    r.q_selected = sel.q_star;
    r.estimation_error = estimation_error(sim.f_true, sel.model.fitted());
  }

  r.baseline_error = std::numeric_limits<double>::quiet_NaN();
  if (options.run_baseline) {
    KernelRidgeTemplate base = options.baseline;
    base.cv_seed = cv_seed;
    r.baseline_error = estimation_error(sim.f_true, fit_curve_by_curve(sim.y, sim.design, base).fitted());
  }

  r.sin_theta = sin_theta_distance(Subspace(thin_svd(sim.y, config.q).left), sim.loadings);
  r.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

inline std::uint64_t replication_seed(std::uint64_t master, std::size_t r) {
  return stream_seed(master, "replication", static_cast<std::uint64_t>(r));
}

inline CampaignSummary summarize(const SimConfig& config, const CampaignOptions& options,
                                 std::vector<ReplicationResult> results) {
  CampaignSummary s;
  s.config = config;
  s.options = options;
  s.replications = static_cast<Index>(results.size());
  s.se_defined = results.size() > 1;
  std::vector<double> est, base, q, sin, wall;
  for (const auto& r : results) {
    est.push_back(r.estimation_error);
    base.push_back(r.baseline_error);
    q.push_back(static_cast<double>(r.q_selected));
    sin.push_back(r.sin_theta);
    wall.push_back(r.wall_time);
  }
  s.estimation_error = mean_and_se(est);
  s.baseline_error = mean_and_se(base);
  s.q_selected = mean_and_se(q);
  s.sin_theta = mean_and_se(sin);
  s.wall_time = mean_and_se(wall);
  s.results = std::move(results);
  return s;
}

/// Independent replications with seeds derived from config.seed. Output
/// does not depend on the thread count.
inline CampaignSummary run_campaign(const SimConfig& config, Index replications, const CampaignOptions& options) {
  if (replications < 1) throw InvalidArgument("run_campaign: need at least one replication");
  config.validate();
  std::vector<ReplicationResult> results(static_cast<std::size_t>(replications));
  std::vector<std::uint64_t> seeds(results.size());
  for (std::size_t r = 0; r < results.size(); ++r) seeds[r] = replication_seed(config.seed, r);
  parallel_for(results.size(), options.threads, [&](std::size_t r) {
    SimConfig c = config;
    c.seed = seeds[r];
    try {
      results[r] = run_replication(c, options);
    } catch (const NumericalError& e) {
      throw NumericalError("replication " + std::to_string(r) + " (seed " + std::to_string(seeds[r]) +
                           ") failed: " + e.what());
    }
  });
  return summarize(config, options, std::move(results));
}

/// Least-squares slope of log(error) against log(n).
inline double rate_diagnostic(const std::vector<double>& ns, const std::vector<double>& errors) {
  if (ns.size() != errors.size()) throw InvalidArgument("rate_diagnostic: length mismatch");
  std::vector<double> distinct = ns;
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  if (distinct.size() < 3) throw InvalidArgument("rate_diagnostic: need at least 3 distinct sample sizes");
  const std::size_t m = ns.size();
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    if (!(ns[i] > 0.0) || !(errors[i] > 0.0)) throw InvalidArgument("rate_diagnostic: values must be positive");
    mx += std::log(ns[i]);
    my += std::log(errors[i]);
  }
  mx /= static_cast<double>(m);
  my /= static_cast<double>(m);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double dx = std::log(ns[i]) - mx;
    sxy += dx * (std::log(errors[i]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

/// Monte Carlo mean of ||sin Theta(U_hat, U)||^4 for each n, where U_hat is
/// the top-q left singular subspace of the simulated Y.
inline std::vector<double> sin_theta_diagnostic(const SimConfig& base, const std::vector<Index>& ns,
                                                Index replications, unsigned threads = 1) {
  if (replications < 1) throw InvalidArgument("sin_theta_diagnostic: need at least one replication");
  std::vector<double> means;
  for (Index n : ns) {
    std::vector<double> fourth(static_cast<std::size_t>(replications));
    parallel_for(fourth.size(), threads, [&](std::size_t r) {
      SimConfig c = base;
      c.n = n;
      c.seed = replication_seed(base.seed, r);
      const SimInstance sim = generate(c);
      const double s = sin_theta_distance(Subspace(thin_svd(sim.y, c.q).left), sim.loadings);
      fourth[r] = s * s * s * s;
    });
    means.push_back(mean_and_se(fourth).mean);
  }
  return means;
}

struct HoldoutResult {
  double npsr_prediction_error = 0.0;
  double baseline_prediction_error = 0.0;
  Index q_star = 0;
  std::vector<Index> test_indices;  // ascending
};

/// Reserve a random fraction of observations, fit NPSR (AIC over
/// 1..q_max) and the curve-by-curve baseline on the rest, and score both
/// on the reserved points with the per-channel prediction error.
inline HoldoutResult holdout_evaluation(const Matrix& y, const Design& design, double test_fraction, Index q_max,
                                        const SmootherTemplate& tmpl, const KernelRidgeTemplate& baseline,
                                        std::uint64_t seed) {
  detail::require_data(y, design, "holdout_evaluation");
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw InvalidArgument("holdout_evaluation: test fraction must lie in (0, 1)");
  const Index n = design.size();
  const Index m = std::clamp<Index>(static_cast<Index>(std::lround(test_fraction * static_cast<double>(n))), 1, n - 2);

  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Index{0});
  std::mt19937_64 rng(stream_seed(seed, "holdout"));
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<Index> test(perm.begin(), perm.begin() + m);
  std::vector<Index> train(perm.begin() + m, perm.end());
  std::sort(test.begin(), test.end());
  std::sort(train.begin(), train.end());

  Matrix y_train(y.rows(), static_cast<Index>(train.size()));
  Matrix y_test(y.rows(), m);
  for (std::size_t j = 0; j < train.size(); ++j) y_train.col(static_cast<Index>(j)) = y.col(train[j]);
  for (std::size_t j = 0; j < test.size(); ++j) y_test.col(static_cast<Index>(j)) = y.col(test[j]);
  const Design d_train = design.subset(train);
  Matrix x_test(m, design.dim());
  for (std::size_t j = 0; j < test.size(); ++j) x_test.row(static_cast<Index>(j)) = design.points().row(test[j]);

  HoldoutResult out;
  const QSelection sel =
      select_q(y_train, d_train, std::min(q_max, std::min(y.rows(), static_cast<Index>(train.size()))), tmpl);
  out.q_star = sel.q_star;
  out.npsr_prediction_error = prediction_error(y_test, sel.model, x_test);
  out.baseline_prediction_error = prediction_error(y_test, fit_curve_by_curve(y_train, d_train, baseline).predict(x_test));
  out.test_indices = std::move(test);
  return out;
}

}  // namespace npsr
