#include "tbudget/simlab.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "tbudget/errors.hpp"
#include "tbudget/parallel.hpp"

namespace tbudget {

namespace {

// Trials are cut into this many fixed slices regardless of worker count.
constexpr std::size_t kTrialChunks = 64;

}  // namespace

TrialReport mc_expected_kl(const Family& family, const ParamVector& theta0, std::span<const SourceSpec> sources,
                           long N0, long trials, std::uint64_t seed, const SimOptions& options) {
  if (trials < kMinTrials)
    throw std::invalid_argument("mc_expected_kl: trials must be at least " + std::to_string(kMinTrials));
  if (N0 < 0) throw std::invalid_argument("mc_expected_kl: N0 must be nonnegative");
  family.check_parameter(theta0);
  long total = N0;
  for (const auto& s : sources) {
    family.check_parameter(s.theta);
    if (s.count < 0) throw std::invalid_argument("mc_expected_kl: negative source count");
    total += s.count;
  }
  if (total == 0) throw InsufficientData("mc_expected_kl: no samples per trial");

  std::vector<double> kl(static_cast<std::size_t>(trials));
  std::vector<double> kl_err(static_cast<std::size_t>(trials));
  std::vector<char> approx(static_cast<std::size_t>(trials));
  const int width = family.observation_width();

  parallel_chunks(kl.size(), kTrialChunks, options.workers, [&](std::size_t b, std::size_t e, std::size_t) {
    PooledDataset data;
    data.target = SampleSet(width);
    data.sources.assign(sources.size(), SampleSet(width));
    for (std::size_t r = b; r < e; ++r) {
      data.target.clear();
      RandomStream target_rng = RandomStream::derive(seed, {r, 0});
      sample_into(data.target, family, theta0, target_rng, static_cast<std::size_t>(N0), 0);
      for (std::size_t i = 0; i < sources.size(); ++i) {
        data.sources[i].clear();
        RandomStream rng = RandomStream::derive(seed, {r, i + 1});
        sample_into(data.sources[i], family, sources[i].theta, rng, static_cast<std::size_t>(sources[i].count),
                    static_cast<int>(i) + 1);
      }
      const MleResult fit = pooled_mle(family, data, options.mle);
      const KlValue v = kl_divergence(family, theta0, fit.theta);
      kl[r] = v.value;
      kl_err[r] = v.std_err;
      approx[r] = v.approximate;
    }
  });

  TrialReport rep;
  double sum = 0.0;
  double err = 0.0;
  for (std::size_t r = 0; r < kl.size(); ++r) {
    sum += kl[r];
    err += kl_err[r];
    rep.approximate_kl = rep.approximate_kl || approx[r];
  }
  const double n = static_cast<double>(trials);
  rep.mean_kl = sum / n;
  double ss = 0.0;
  for (double v : kl) ss += (v - rep.mean_kl) * (v - rep.mean_kl);
  rep.std_err = std::sqrt(ss / (n - 1.0) / n);
  rep.approx_kl_error = err / n;
  rep.trials = trials;
  rep.seed = seed;
  rep.family = family.name();
  rep.theta0 = theta0;
  rep.sources.assign(sources.begin(), sources.end());
  rep.N0 = N0;
  return rep;
}

FisherEstimate planning_fisher(const Family& family, const ParamVector& theta, std::uint64_t seed) {
  if (family.has_analytic_fisher()) return FisherEstimate::analytic(fisher_analytic(family, theta));
  RandomStream rng = RandomStream::derive(seed, {0xF15E});
  const SampleSet calib = sample(family, theta, rng, static_cast<std::size_t>(kFisherCalibrationSamples));
  return empirical_fisher(family, theta, calib, FisherMode::PerSampleOuterProduct);
}

SweepResult brute_force_optimal_n1(const Family& family, const ParamVector& theta0, const ParamVector& theta1,
                                   long N0, long N1, long grid_step, long trials, std::uint64_t seed,
                                   const SimOptions& options) {
  if (grid_step < 1) throw std::invalid_argument("brute_force_optimal_n1: grid_step must be at least 1");
  if (N0 < 1 || N1 < 1) throw std::invalid_argument("brute_force_optimal_n1: N0 and N1 must be at least 1");
  SweepResult out;
  for (long n = 0; n <= N1; n += grid_step) out.axis.push_back(n);
  if (out.axis.back() != N1) out.axis.push_back(N1);

  const FisherEstimate fisher = planning_fisher(family, theta0, seed);
  out.t = t_scalar_single(fisher, theta0, theta1);
  const SingleOptimum opt = optimal_single(N0, N1, out.t);
  out.theoretical_argmin = opt.n1_star;
  out.theoretical_curve.regime = opt.regime;
  out.theoretical_curve.minimum_location = opt.stationary_point;

  std::size_t best = 0;
  for (std::size_t k = 0; k < out.axis.size(); ++k) {
    const SourceSpec src{theta1, out.axis[k]};
    out.reports.push_back(mc_expected_kl(family, theta0, std::span(&src, 1), N0, trials, seed, options));
    out.theoretical_curve.points.push_back({out.axis[k], proxy_single_high_dim(N0, out.axis[k], out.t, family.dim())});
    if (out.reports[k].mean_kl < out.reports[best].mean_kl) best = k;
  }
  out.empirical_argmin = out.axis[best];
  return out;
}

const char* to_string(TransferStrategy strategy) {
  switch (strategy) {
    case TransferStrategy::TargetOnly: return "target_only";
    case TransferStrategy::AllSources: return "all_sources";
    case TransferStrategy::Planned: return "planned";
  }
  return "?";
}

std::vector<NegativeTransferRow> negative_transfer_demo(const Family& family, const ParamVector& theta0,
                                                        std::span<const SourceSpec> sources,
                                                        std::span<const long> N0_range, long trials,
                                                        std::uint64_t seed, int stepnumber,
                                                        const SimOptions& options) {
  if (sources.empty()) throw std::invalid_argument("negative_transfer_demo: need at least one source");
  const FisherEstimate fisher = planning_fisher(family, theta0, seed);
  std::vector<ParamVector> thetas;
  for (const auto& s : sources) thetas.push_back(s.theta);
  const QuadFormMatrix qf = quad_form_matrix(fisher, theta0, thetas);

  std::vector<NegativeTransferRow> rows;
  for (long N0 : N0_range) {
    NegativeTransferRow row;
    row.N0 = N0;
    TransferProblem problem;
    problem.N0 = N0;
    problem.d = family.dim();
    for (const auto& s : sources) problem.caps.push_back(s.count);
    problem.M = qf.M;
    problem.stepnumber = stepnumber;
    row.plan = plan_multi(problem, {.keep_curve = false, .workers = options.workers, .qp = {}});

    std::vector<SourceSpec> none, all, planned;
    for (std::size_t i = 0; i < sources.size(); ++i) {
      none.push_back({sources[i].theta, 0});
      all.push_back(sources[i]);
      planned.push_back({sources[i].theta, row.plan.n_star[i]});
    }
    row.target_only = mc_expected_kl(family, theta0, none, N0, trials, seed, options);
    row.all_sources = mc_expected_kl(family, theta0, all, N0, trials, seed, options);
    row.planned = mc_expected_kl(family, theta0, planned, N0, trials, seed, options);
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace tbudget
