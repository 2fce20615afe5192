#include "tbudget/commands.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>

#include "tbudget/csv.hpp"
#include "tbudget/errors.hpp"
#include "tbudget/random.hpp"

namespace tbudget {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kCalibrationKey = 0xF15E;

// Discrepancy of the first source, used by curve and verify.
const SourceConfig& single_source(const RunConfig& config) {
  if (config.sources.size() != 1) throw ConfigError("sources", "this command needs exactly one source");
  return config.sources.front();
}

void ensure_dir(const fs::path& out) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw std::runtime_error("cannot create output directory " + out.string() + ": " + ec.message());
}

}  // namespace

FisherEstimate config_fisher(const RunConfig& config, const ParamVector& theta) {
  const Family& family = config.require_family();
  FisherMode mode = config.fisher_mode;
  if (mode == FisherMode::Analytic) {
    if (family.has_analytic_fisher()) return FisherEstimate::analytic(fisher_analytic(family, theta));
    mode = FisherMode::PerSampleOuterProduct;
  }
  RandomStream rng = RandomStream::derive(config.seed, {kCalibrationKey});
  const SampleSet calib = sample(family, theta, rng, static_cast<std::size_t>(config.calibration_samples));
  return empirical_fisher(family, theta, calib, mode);
}

TransferProblem build_problem(const RunConfig& config) {
  const Family& family = config.require_family();
  TransferProblem problem;
  problem.N0 = config.require_N0();
  problem.d = family.dim();
  problem.stepnumber = config.stepnumber;
  for (const auto& s : config.sources) problem.caps.push_back(s.cap);
  if (config.sources.empty()) {
    problem.M = Eigen::MatrixXd(0, 0);
    return problem;
  }
  const ParamVector theta0 = config.target_theta();
  const std::vector<ParamVector> thetas = config.source_thetas();
  const FisherEstimate fisher = config_fisher(config, theta0);
  problem.M = quad_form_matrix(fisher, theta0, thetas, config.workers, config.workers).M;
  return problem;
}

TransferPlan cmd_plan(const RunConfig& config, const fs::path& out, std::ostream& log) {
  const TransferProblem problem = build_problem(config);
  const TransferPlan plan = plan_multi(problem, {.keep_curve = false, .workers = config.workers, .qp = {}});
  ensure_dir(out);
  CsvWriter csv(out / "plan.csv");
  csv.row({"source_name", "cap", "alpha_star", "n_star"});
  for (std::size_t i = 0; i < config.sources.size(); ++i)
    csv.row({config.sources[i].name, format_number(config.sources[i].cap),
             format_number(plan.alpha_star(static_cast<Eigen::Index>(i))), format_number(plan.n_star[i])});
  csv.row({"s_star", format_number(plan.s_star), "predicted_proxy", format_number(plan.predicted_proxy)});

  log << "s_star " << plan.s_star << "  predicted_proxy " << format_number(plan.predicted_proxy) << '\n';
  for (std::size_t i = 0; i < config.sources.size(); ++i)
    log << "  " << config.sources[i].name << ": n_star " << plan.n_star[i] << " of " << config.sources[i].cap << '\n';
  return plan;
}

ProxyCurve cmd_curve(const RunConfig& config, const fs::path& out, std::ostream& log) {
  const long N0 = config.require_N0();
  double t = 0.0;
  long N1 = 0;
  if (config.curve.t) {
    t = *config.curve.t;
  } else {
    single_source(config);
    const ParamVector theta0 = config.target_theta();
    t = t_scalar_single(config_fisher(config, theta0), theta0, config.source_thetas().front());
  }
  if (config.curve.N1) {
    N1 = *config.curve.N1;
  } else {
    N1 = single_source(config).cap;
  }
  const ProxyCurve curve = regime_curve(N0, N1, t, config.curve.grid_points);
  ensure_dir(out);
  CsvWriter csv(out / "curve.csv");
  csv.row({"n1", "proxy", "regime"});
  for (const auto& p : curve.points) csv.row({format_number(p.quantity), format_number(p.proxy), to_string(curve.regime)});

  log << "t " << format_number(t) << "  N0*t " << format_number(static_cast<double>(N0) * t) << "  regime "
      << to_string(curve.regime);
  if (curve.regime == Regime::InteriorMinimum) log << "  minimum at " << format_number(curve.minimum_location);
  log << '\n';
  return curve;
}

VerifySummary cmd_verify(const RunConfig& config, const fs::path& out, std::ostream& log) {
  const Family& family = config.require_family();
  const long N0 = config.require_N0();
  const SourceConfig& source = single_source(config);
  const ParamVector theta0 = config.target_theta();
  const ParamVector theta1 = config.source_thetas().front();

  VerifySummary summary;
  summary.t = t_scalar_single(config_fisher(config, theta0), theta0, theta1);

  std::vector<long> axis;
  if (config.verify.mode == VerifyConfig::Mode::Sweep) {
    for (long n = 0; n <= source.cap; n += config.verify.grid_step) axis.push_back(n);
    if (axis.back() != source.cap) axis.push_back(source.cap);
    summary.theoretical_argmin = optimal_single(N0, source.cap, summary.t).n1_star;
  } else {
    axis = config.verify.n1_values;
    for (std::size_t i = 0; i < axis.size(); ++i)
      if (axis[i] > source.cap)
        throw ConfigError("verify.n1[" + std::to_string(i) + "]", "exceeds the source cap");
  }

  const SimOptions options{.workers = config.workers, .mle = {}};
  std::size_t best = 0;
  std::size_t within = 0;
  for (std::size_t k = 0; k < axis.size(); ++k) {
    VerifyRow row;
    row.axis_value = axis[k];
    const SourceSpec src{theta1, axis[k]};
    row.report = mc_expected_kl(family, theta0, std::span(&src, 1), N0, config.trials, config.seed, options);
    row.theoretical_proxy = proxy_single_high_dim(N0, axis[k], summary.t, family.dim());
    // An estimated KL adds its own Monte-Carlo error to the trial spread.
    const double se = std::hypot(row.report.std_err, row.report.approx_kl_error);
    const double gap = std::abs(row.report.mean_kl - row.theoretical_proxy);
    row.z_ratio = se > 0.0 ? gap / se : (gap == 0.0 ? 0.0 : std::numeric_limits<double>::infinity());
    summary.max_z_ratio = std::max(summary.max_z_ratio, row.z_ratio);
    if (row.z_ratio <= config.verify.threshold) ++within;
    if (!summary.rows.empty() && row.report.mean_kl < summary.rows[best].report.mean_kl) best = k;
    summary.rows.push_back(std::move(row));
  }
  summary.empirical_argmin = summary.rows[best].axis_value;
  if (config.verify.mode == VerifyConfig::Mode::Points) {
    std::size_t tbest = 0;
    for (std::size_t k = 1; k < summary.rows.size(); ++k)
      if (summary.rows[k].theoretical_proxy < summary.rows[tbest].theoretical_proxy) tbest = k;
    summary.theoretical_argmin = summary.rows[tbest].axis_value;
  }
  summary.fraction_within = static_cast<double>(within) / static_cast<double>(summary.rows.size());
  summary.passed = summary.fraction_within >= config.verify.pass_fraction;

  ensure_dir(out);
  CsvWriter csv(out / "verify.csv");
  csv.row({"axis_value", "mean_kl", "std_err", "theoretical_proxy", "z_ratio"});
  for (const auto& r : summary.rows)
    csv.row({format_number(r.axis_value), format_number(r.report.mean_kl), format_number(r.report.std_err),
             format_number(r.theoretical_proxy), format_number(r.z_ratio)});
  csv.row({"max_z_ratio", format_number(summary.max_z_ratio), "fraction_within", format_number(summary.fraction_within),
           summary.passed ? "pass" : "fail"});

  log << "t " << format_number(summary.t) << "  empirical argmin " << summary.empirical_argmin
      << "  theoretical argmin " << summary.theoretical_argmin << '\n';
  log << "max z " << format_number(summary.max_z_ratio) << "  within " << format_number(config.verify.threshold)
      << ": " << format_number(summary.fraction_within) << (summary.passed ? "  pass" : "  fail") << '\n';
  return summary;
}

Comparison cmd_train(const RunConfig& config, const fs::path& out, std::ostream& log) {
  const TrainerConfig& tc = config.require_trainer();
  const Comparison cmp = compare_strategies({tc.suite}, tc.strategies, tc.seeds, tc.options, config.workers);
  const std::size_t K = tc.suite.deltas.size();

  ensure_dir(out / "runs");
  for (const auto& [key, run] : cmp.runs) {
    CsvWriter csv(out / "runs" / (std::string(to_string(key.strategy)) + "-" + std::to_string(key.seed) + ".csv"));
    std::vector<std::string> header{"epoch", "train_loss", "val_acc", "samples_used", "s_star"};
    for (std::size_t i = 0; i < K; ++i) header.push_back("alpha_" + std::to_string(i + 1));
    csv.row(header);
    for (const auto& e : run.epochs) {
      std::vector<std::string> cells{format_number(static_cast<long>(e.epoch)), format_number(e.train_loss),
                                     format_number(e.val_acc), format_number(e.samples_used)};
      if (e.plan) {
        cells.push_back(format_number(e.plan->s_star));
        for (std::size_t i = 0; i < K; ++i) cells.push_back(format_number(e.plan->alpha_star(static_cast<Eigen::Index>(i))));
      } else {
        cells.resize(cells.size() + 1 + K);
      }
      csv.row(cells);
    }
  }

  CsvWriter csv(out / "comparison.csv");
  csv.row({"suite", "strategy", "mean_test_acc", "std_test_acc", "mean_samples", "std_samples", "runs"});
  for (const auto& s : cmp.summary) {
    csv.row({format_number(static_cast<long>(s.suite)), to_string(s.strategy), format_number(s.mean_test_acc),
             format_number(s.std_test_acc), format_number(s.mean_samples), format_number(s.std_samples),
             format_number(static_cast<long>(s.runs))});
    log << to_string(s.strategy) << ": test acc " << format_number(s.mean_test_acc) << " +- "
        << format_number(s.std_test_acc) << "  samples " << format_number(s.mean_samples) << '\n';
  }
  return cmp;
}

int run_command(const std::string& name, const fs::path& config_path, const fs::path& out, int workers,
                std::ostream& log, std::ostream& err) {
  try {
    RunConfig config = load_config(config_path);
    if (workers > 0) config.workers = workers;
    if (name == "plan") {
      cmd_plan(config, out, log);
    } else if (name == "curve") {
      cmd_curve(config, out, log);
    } else if (name == "verify") {
      if (!cmd_verify(config, out, log).passed) throw VerificationFailed("verification gate not met");
    } else if (name == "train") {
      cmd_train(config, out, log);
    } else {
      err << "unknown command '" << name << "'\n";
      return kExitConfig;
    }
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const Infeasible& e) {
    err << "infeasible: " << e.what() << '\n';
    return kExitInfeasible;
  } catch (const VerificationFailed& e) {
    err << e.what() << '\n';
    return kExitVerify;
  } catch (const std::invalid_argument& e) {
    err << "invalid input: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

}  // namespace tbudget
