#include "cli.hpp"

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "npsr/eval.hpp"
#include "npsr/io.hpp"
#include "npsr/npsr.hpp"
#include "npsr/simgen.hpp"

namespace npsr::cli {

namespace fs = std::filesystem;

const std::vector<ReferenceCell>& reference_cells() {
  static const std::vector<ReferenceCell> cells = {
      // iid noise
      {128, 2, 10, false, 0.535, 0.038, 0.902, 0.039, 2.000, 0.000},
      {128, 2, 20, false, 0.708, 0.046, 1.537, 0.038, 2.000, 0.000},
      {128, 2, 40, false, 1.069, 0.051, 2.538, 0.040, 1.980, 0.014},
      {128, 4, 10, false, 1.208, 0.088, 1.293, 0.066, 3.830, 0.038},
      {128, 4, 20, false, 1.430, 0.078, 1.821, 0.039, 3.850, 0.038},
      {128, 4, 40, false, 2.147, 0.059, 3.237, 0.062, 3.600, 0.049},
      {256, 2, 20, false, 0.451, 0.034, 0.890, 0.024, 2.000, 0.000},
      {256, 2, 40, false, 0.685, 0.059, 1.464, 0.028, 1.990, 0.010},
      {256, 2, 60, false, 0.784, 0.024, 2.021, 0.036, 2.000, 0.000},
      {256, 4, 20, false, 0.856, 0.045, 1.158, 0.046, 3.920, 0.031},
      {256, 4, 40, false, 1.344, 0.074, 1.783, 0.034, 3.810, 0.039},
      {256, 4, 60, false, 1.575, 0.047, 2.429, 0.033, 3.740, 0.044},
      {512, 2, 40, false, 0.376, 0.032, 0.867, 0.017, 2.000, 0.000},
      {512, 2, 60, false, 0.478, 0.025, 1.172, 0.020, 2.000, 0.000},
      {512, 2, 80, false, 0.512, 0.011, 1.436, 0.022, 2.000, 0.000},
      {512, 4, 40, false, 0.876, 0.057, 1.189, 0.033, 3.910, 0.029},
      {512, 4, 60, false, 1.073, 0.054, 1.563, 0.031, 3.850, 0.036},
      {512, 4, 80, false, 1.165, 0.031, 1.857, 0.028, 3.870, 0.034},
      // separable AR(0.5) x AR(0.5) noise
      {128, 2, 10, true, 1.362, 0.062, 1.963, 0.050, 2.840, 0.099},
      {128, 2, 20, true, 2.052, 0.067, 3.250, 0.058, 2.770, 0.097},
      {128, 2, 40, true, 3.123, 0.084, 5.657, 0.077, 2.520, 0.095},
      {128, 4, 10, true, 2.282, 0.097, 2.376, 0.082, 4.400, 0.102},
      {128, 4, 20, true, 3.553, 0.101, 4.028, 0.072, 4.150, 0.095},
      {128, 4, 40, true, 5.416, 0.095, 7.195, 0.104, 3.830, 0.079},
      {256, 2, 20, true, 1.170, 0.047, 2.002, 0.045, 2.730, 0.116},
      {256, 2, 40, true, 1.838, 0.073, 3.349, 0.042, 2.330, 0.074},
      {256, 2, 60, true, 2.378, 0.059, 4.540, 0.059, 2.260, 0.058},
      {256, 4, 20, true, 2.121, 0.079, 2.407, 0.055, 4.760, 0.152},
      {256, 4, 40, true, 3.349, 0.074, 4.129, 0.059, 3.960, 0.082},
      {256, 4, 60, true, 4.344, 0.064, 5.590, 0.055, 3.700, 0.078},
      {512, 2, 40, true, 1.118, 0.040, 1.975, 0.035, 2.460, 0.113},
      {512, 2, 60, true, 1.362, 0.046, 2.658, 0.038, 2.190, 0.061},
      {512, 2, 80, true, 1.635, 0.036, 3.306, 0.041, 2.080, 0.042},
      {512, 4, 40, true, 2.254, 0.055, 2.494, 0.043, 4.570, 0.138},
      {512, 4, 60, true, 2.843, 0.067, 3.383, 0.044, 3.980, 0.081},
      {512, 4, 80, true, 3.299, 0.054, 4.270, 0.052, 3.750, 0.074},
  };
  return cells;
}

std::string cell_name(const ReferenceCell& cell) {
  return "n" + std::to_string(cell.n) + "_q" + std::to_string(cell.q) + "_p" + std::to_string(cell.p) +
         (cell.separable_ar ? "_ar" : "");
}

std::optional<ReferenceCell> find_cell(const std::string& name) {
  for (const auto& cell : reference_cells())
    if (cell_name(cell) == name) return cell;
  return std::nullopt;
}

namespace {

struct Common {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  unsigned threads = std::max(1u, std::thread::hardware_concurrency());
  bool quiet = false;
};

void add_common(CLI::App* cmd, Common& c, bool needs_out) {
  cmd->add_option("--config", c.config, "key = value run configuration");
  auto* out = cmd->add_option("--out", c.out, "output directory");
  if (needs_out) out->required();
  cmd->add_option("--seed", c.seed, "master seed (overrides the config)");
  cmd->add_option("--threads", c.threads, "worker threads")->check(CLI::PositiveNumber);
  cmd->add_flag("--quiet", c.quiet, "suppress informational output");
}

io::RunConfig load_config(const Common& c) {
  io::RunConfig rc = c.config.empty() ? io::RunConfig{} : io::load_run_config(c.config);
  if (c.seed) rc.seed = *c.seed;
  return rc;
}

fs::path prepare_dir(const std::string& dir) {
  const fs::path path(dir);
  std::error_code ec;
  fs::create_directories(path, ec);
  if (ec || !fs::is_directory(path)) throw IoError("cannot create output directory '" + dir + "'");
  return path;
}

std::string fmt(double v) { return io::format_double(v); }

std::string fixed(double v, int digits) {
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(digits);
  s << v;
  return s.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << text;
  out.flush();
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

int cmd_simulate(const Common& c, std::ostream& out) {
  const io::RunConfig rc = load_config(c);
  const SimInstance sim = generate(io::to_sim_config(rc));
  const fs::path dir = prepare_dir(c.out);
  io::write_csv(dir / "design.csv", sim.design.points());
  io::write_csv(dir / "response.csv", sim.y.transpose());
  io::write_csv(dir / "truth_F.csv", sim.f_true.transpose());
  io::write_csv(dir / "truth_U.csv", sim.loadings.basis());
  io::write_csv(dir / "truth_f.csv", sim.f_values.transpose());
  if (!c.quiet)
    out << "wrote design.csv response.csv truth_F.csv truth_U.csv truth_f.csv to " << dir.string() << '\n';
  return kOk;
}

struct FitArgs {
  std::string design;
  std::string response;
  std::string predict;
  std::string truth;
};

std::string model_summary(const NpsrModel& model, const io::RunConfig& rc, Index n) {
  std::ostringstream s;
  s << "smoother = " << smoother_name(model.spec()) << '\n';
  s << "n = " << n << '\n';
  s << "p = " << model.p() << '\n';
  s << "q = " << model.q() << '\n';
  s << "q_selection = " << (rc.q ? "fixed" : "aic") << '\n';
  std::visit(
      [&](const auto& spec) {
        using T = std::decay_t<decltype(spec)>;
        if constexpr (std::is_same_v<T, KernelRidgeSpec>) {
          s << "rho = " << fmt(spec.rho) << '\n';
          s << "kappa = " << fmt(spec.kappa) << '\n';
        } else if constexpr (std::is_same_v<T, FourierSpec>) {
          s << "fourier_terms = " << spec.terms << '\n';
        } else {
          s << "degree = " << spec.degree << '\n';
          s << "bandwidth = " << fmt(spec.bandwidth) << '\n';
          s << "kernel = " << to_string(spec.kernel) << '\n';
        }
      },
      model.spec());
  for (const auto& e : model.tuning().aic) {
    s << "aic_q" << e.q << " = " << fmt(e.aic) << '\n';
    s << "v_q" << e.q << " = " << fmt(e.v) << '\n';
    if (!std::isnan(e.kappa)) s << "kappa_q" << e.q << " = " << fmt(e.kappa) << '\n';
  }
  return s.str();
}

int cmd_fit(const Common& c, const FitArgs& a, std::ostream& out) {
  const io::RunConfig rc = load_config(c);
  const Design design = io::read_design(a.design);
  const Matrix y = io::read_response(a.response);
  if (y.cols() != design.size())
    throw InvalidArgument("response has " + std::to_string(y.cols()) + " rows but the design has " +
                          std::to_string(design.size()));
  const SmootherTemplate tmpl = io::smoother_template(rc, design.size());

  std::optional<NpsrModel> model;
  if (rc.q) {
    model.emplace(fit_npsr(y, design, *rc.q, tmpl));
  } else {
    const Index q_max = std::min(rc.q_max.value_or(6), std::min(y.rows(), y.cols()));
    model.emplace(select_q(y, design, q_max, tmpl).model);
  }

  const fs::path dir = prepare_dir(c.out);
  write_text(dir / "model.txt", model_summary(*model, rc, design.size()));
  io::write_csv(dir / "fitted_F.csv", model->fitted().transpose());
  io::write_csv(dir / "subspace.csv", model->subspace().basis());
  io::write_csv(dir / "components.csv", model->components().transpose());
  if (!a.predict.empty()) {
    const Matrix points = io::read_csv(a.predict).values;
    io::write_csv(dir / "predicted.csv", predict(*model, points).transpose());
  }

  if (!c.quiet) out << "q = " << model->q() << '\n';
  if (!a.truth.empty()) {
    const Matrix truth = io::read_csv(a.truth).values.transpose();
    out << "estimation_error=" << fmt(estimation_error(truth, model->fitted())) << '\n';
  }
  return kOk;
}

struct EvaluateArgs {
  std::string truth;
  std::string fitted;
  std::string test_response;
  std::string test_predicted;
};

int cmd_evaluate(const EvaluateArgs& a, std::ostream& out) {
  const Matrix truth = io::read_csv(a.truth).values.transpose();
  const Matrix fitted = io::read_csv(a.fitted).values.transpose();
  out << "estimation_error=" << fmt(estimation_error(truth, fitted)) << '\n';
  if (!a.test_response.empty()) {
    const Matrix y_test = io::read_csv(a.test_response).values.transpose();
    const Matrix predicted = io::read_csv(a.test_predicted).values.transpose();
    out << "prediction_error=" << fmt(prediction_error(y_test, predicted)) << '\n';
  }
  return kOk;
}

struct ReproduceArgs {
  std::string cell;
  std::optional<Index> replications;
};

std::string moment(const Moments& m, bool se_defined, int digits) {
  return fixed(m.mean, digits) + " (" + (se_defined ? fixed(m.se, digits) : std::string("SE undefined")) + ")";
}

int cmd_reproduce(const Common& c, const ReproduceArgs& a, std::ostream& out) {
  const auto cell = find_cell(a.cell);
  if (!cell) throw InvalidArgument("unknown cell '" + a.cell + "'; expected a name such as n128_q2_p10 or n128_q2_p10_ar");
  io::RunConfig rc = load_config(c);
  rc.n = cell->n;
  rc.p = cell->p;
  rc.q_true = cell->q;
  rc.separable_ar = cell->separable_ar;
  const Index replications = a.replications.value_or(rc.replications);
  if (replications < 1) throw InvalidArgument("--replications must be at least 1");

  CampaignOptions options;
  options.q_max = rc.q_max.value_or(cell->q + 4);
  if (rc.q) options.fixed_q = *rc.q;
  options.npsr = io::smoother_template(rc, rc.n);
  options.baseline = io::kernel_ridge_template(rc);
  options.threads = c.threads;

  const CampaignSummary s = run_campaign(io::to_sim_config(rc), replications, options);

  std::ostringstream row;
  row << cell_name(*cell) << " replications=" << replications << " seed=" << rc.seed << '\n'
      << "  NPSR error          " << moment(s.estimation_error, s.se_defined, 3) << "   reference " << fixed(cell->npsr, 3)
      << " (" << fixed(cell->npsr_se, 3) << ")\n"
      << "  Nonparametric error " << moment(s.baseline_error, s.se_defined, 3) << "   reference "
      << fixed(cell->baseline, 3) << " (" << fixed(cell->baseline_se, 3) << ")\n"
      << "  q*                  " << moment(s.q_selected, s.se_defined, 3) << "   reference " << fixed(cell->q_star, 3)
      << " (" << fixed(cell->q_star_se, 3) << ")\n";
  out << row.str();

  if (!c.out.empty()) {
    const fs::path dir = prepare_dir(c.out);
    auto se = [&](const Moments& m) { return s.se_defined ? fmt(m.se) : std::string("NA"); };
    std::ostringstream summary;
    summary << "metric,mean,se,reference_mean,reference_se\n";
    summary << "npsr_error," << fmt(s.estimation_error.mean) << ',' << se(s.estimation_error) << ','
            << fixed(cell->npsr, 3) << ',' << fixed(cell->npsr_se, 3) << '\n';
    summary << "baseline_error," << fmt(s.baseline_error.mean) << ',' << se(s.baseline_error) << ','
            << fixed(cell->baseline, 3) << ',' << fixed(cell->baseline_se, 3) << '\n';
    summary << "q_star," << fmt(s.q_selected.mean) << ',' << se(s.q_selected) << ',' << fixed(cell->q_star, 3) << ','
            << fixed(cell->q_star_se, 3) << '\n';
    summary << "sin_theta," << fmt(s.sin_theta.mean) << ',' << se(s.sin_theta) << ",NA,NA\n";
    write_text(dir / "summary.csv", summary.str());

    std::ostringstream reps;
    reps << "replication,seed,npsr_error,baseline_error,q_star,sin_theta\n";
    for (std::size_t r = 0; r < s.results.size(); ++r) {
      const auto& res = s.results[r];
      reps << r << ',' << res.seed << ',' << fmt(res.estimation_error) << ',' << fmt(res.baseline_error) << ','
           << res.q_selected << ',' << fmt(res.sin_theta) << '\n';
    }
    write_text(dir / "replications.csv", reps.str());
    if (!c.quiet) out << "wrote summary.csv replications.csv to " << dir.string() << '\n';
  }
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app("Nonparametric principal subspace regression", "npsr");
  app.require_subcommand(1);

  Common sim_common, fit_common, rep_common;
  FitArgs fit_args;
  EvaluateArgs eval_args;
  ReproduceArgs rep_args;

  auto* simulate = app.add_subcommand("simulate", "draw a simulated data set and its truth");
  add_common(simulate, sim_common, true);

  auto* fit = app.add_subcommand("fit", "fit NPSR to a design and response");
  add_common(fit, fit_common, true);
  fit->add_option("--design", fit_args.design, "design CSV (n x d)")->required();
  fit->add_option("--response", fit_args.response, "response CSV (n x p)")->required();
  fit->add_option("--predict", fit_args.predict, "points CSV (m x d) to predict at");
  fit->add_option("--truth", fit_args.truth, "true F CSV (n x p); prints the estimation error");

  auto* evaluate = app.add_subcommand("evaluate", "score fitted values against the truth");
  evaluate->add_option("--truth", eval_args.truth, "true F CSV (n x p)")->required();
  evaluate->add_option("--fitted", eval_args.fitted, "fitted F CSV (n x p)")->required();
  auto* test_response = evaluate->add_option("--test-response", eval_args.test_response, "held-out responses (m x p)");
  auto* test_predicted =
      evaluate->add_option("--test-predicted", eval_args.test_predicted, "predictions at the held-out points (m x p)");
  test_response->needs(test_predicted);
  test_predicted->needs(test_response);

  auto* reproduce = app.add_subcommand("reproduce", "run a Monte Carlo campaign for a reference cell");
  add_common(reproduce, rep_common, false);
  reproduce->add_option("--cell", rep_args.cell, "cell name, e.g. n128_q2_p10 or n128_q2_p10_ar")->required();
  reproduce->add_option("--replications", rep_args.replications, "number of replications");

  std::vector<const char*> argv;
  argv.reserve(args.size());
  for (const auto& a : args) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*simulate) return cmd_simulate(sim_common, out);
    if (*fit) return cmd_fit(fit_common, fit_args, out);
    if (*evaluate) return cmd_evaluate(eval_args, out);
    return cmd_reproduce(rep_common, rep_args, out);
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kIo;
  } catch (const InvalidArgument& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kNumerical;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kIo;
  }
}

}  // namespace npsr::cli
