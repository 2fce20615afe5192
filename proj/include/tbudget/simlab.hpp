#pragma once

// Monte-Carlo measurement of E[KL(P_theta0 || P_thetahat)] under pooled MLE,
// and the sweeps built on it.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tbudget/estimation.hpp"
#include "tbudget/families.hpp"
#include "tbudget/planner.hpp"

namespace tbudget {

struct SourceSpec {
  ParamVector theta;
  long count = 0;
};

struct TrialReport {
  double mean_kl = 0.0;
  double std_err = 0.0;
  long trials = 0;
  std::uint64_t seed = 0;
  // The KL had no closed form and was itself estimated; approx_kl_error is the
  // mean of the per-trial KL standard errors.
  bool approximate_kl = false;
  double approx_kl_error = 0.0;

  std::string family;
  ParamVector theta0;
  std::vector<SourceSpec> sources;
  long N0 = 0;
};

struct SimOptions {
  int workers = 1;
  MleOptions mle;
};

inline constexpr long kMinTrials = 100;

// Trial r draws N0 target samples from stream (seed, r, 0) and source i's
// samples from (seed, r, i + 1), so reports do not depend on the worker count
// and two calls that differ only in counts share their common draws.
TrialReport mc_expected_kl(const Family& family, const ParamVector& theta0, std::span<const SourceSpec> sources,
                           long N0, long trials, std::uint64_t seed, const SimOptions& options = {});

struct SweepResult {
  std::vector<long> axis;
  std::vector<TrialReport> reports;
  long empirical_argmin = 0;
  long theoretical_argmin = 0;
  double t = 0.0;
  // Leading-order proxy at each axis value (with the family's d).
  ProxyCurve theoretical_curve;
};

// Number of calibration draws used when the family has no analytic Fisher.
inline constexpr long kFisherCalibrationSamples = 100000;

// J(theta) for planning: analytic when available, otherwise the per-sample
// empirical Fisher from kFisherCalibrationSamples seeded draws at theta.
FisherEstimate planning_fisher(const Family& family, const ParamVector& theta, std::uint64_t seed);

SweepResult brute_force_optimal_n1(const Family& family, const ParamVector& theta0, const ParamVector& theta1,
                                   long N0, long N1, long grid_step, long trials, std::uint64_t seed,
                                   const SimOptions& options = {});

enum class TransferStrategy { TargetOnly, AllSources, Planned };

const char* to_string(TransferStrategy strategy);

struct NegativeTransferRow {
  long N0 = 0;
  TrialReport target_only;
  TrialReport all_sources;
  TrialReport planned;
  TransferPlan plan;
};

// `sources[i].count` is the cap N_i; AllSources transfers every sample,
// Planned transfers plan_multi's n_star computed with J(theta0).
std::vector<NegativeTransferRow> negative_transfer_demo(const Family& family, const ParamVector& theta0,
                                                        std::span<const SourceSpec> sources,
                                                        std::span<const long> N0_range, long trials,
                                                        std::uint64_t seed, int stepnumber = 1000,
                                                        const SimOptions& options = {});

}  // namespace tbudget
