#pragma once

// Desk-scale training with per-epoch transfer planning (dynamic strategy)
// and the baselines it is compared against.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tbudget/estimation.hpp"
#include "tbudget/families.hpp"
#include "tbudget/planner.hpp"

namespace tbudget {

struct SuiteConfig {
  int feature_dim = 5;
  int classes = 4;
  // Labeled target samples per class (k-shot).
  int shots = 10;
  // One entry per source: ||theta_i - theta_0||.
  std::vector<double> deltas;
  // One entry per source: pool size N_i.
  std::vector<long> pool_sizes;
  double prior_scale = 1.0;
  double feature_scale = 1.0;
  bool intercept = false;
  long test_size = 2000;
  // Per-class size of the separately drawn validation set when shots < 5.
  int small_shot_val_per_class = 5;

  void validate() const;
};

struct SyntheticTaskSuite {
  Family family = Family::softmax(1, 2);
  ParamVector theta_target;
  std::vector<ParamVector> theta_sources;
  std::vector<double> deltas;
  SampleSet target_train;
  SampleSet target_val;
  SampleSet target_test;
  std::vector<SampleSet> source_pools;
  std::uint64_t seed = 0;

  std::vector<long> pool_sizes() const;
};

// theta_0 from a seeded Gaussian prior; theta_i = theta_0 + delta_i * u_i with
// u_i a seeded unit direction. Softmax parameters are kept class-centred
// (sum over classes is zero per feature) so ||theta_i - theta_0|| is a real
// distribution shift.
SyntheticTaskSuite generate_suite(const SuiteConfig& config, std::uint64_t seed);

enum class TrainStrategy { TargetOnly, AllSources, StaticUnder, StaticExact, StaticOver, Dynamic };

const char* to_string(TrainStrategy strategy);
std::optional<TrainStrategy> parse_train_strategy(const std::string& name);

struct TrainOptions {
  double learning_rate = 0.5;
  // Full-batch gradient steps per epoch.
  int steps_per_epoch = 30;
  int max_epochs = 200;
  int patience = 5;
  FisherMode fisher_mode = FisherMode::PerSampleOuterProduct;
  // Dynamic: estimate J from target samples only instead of the mixed batch.
  bool target_only_fisher = false;
  int stepnumber = 1000;
  // StaticOver warms up for this many times the plateau epoch count.
  int static_over_factor = 3;
  MleOptions pretrain;
};

struct EpochRecord {
  int epoch = 0;
  // Plan that produced this epoch's training set, if any.
  std::optional<TransferPlan> plan;
  double train_loss = 0.0;
  double val_acc = 0.0;
  long samples_used = 0;
};

struct TrainRun {
  TrainStrategy strategy = TrainStrategy::TargetOnly;
  std::vector<EpochRecord> epochs;
  double best_val_acc = 0.0;
  int best_epoch = 0;
  double test_acc_at_best = 0.0;
  long total_samples_consumed = 0;
  int planner_calls = 0;
  std::uint64_t seed = 0;
  ParamVector theta_at_best;
};

// MLE of each source parameter on its full pool.
std::vector<ParamVector> pretrain_sources(const SyntheticTaskSuite& suite, const TrainOptions& options = {});

TrainRun train_dynamic(const SyntheticTaskSuite& suite, const std::vector<ParamVector>& source_params,
                       const TrainOptions& options, std::uint64_t seed);

TrainRun train_baseline(const SyntheticTaskSuite& suite, const std::vector<ParamVector>& source_params,
                        TrainStrategy strategy, const TrainOptions& options, std::uint64_t seed);

// Dispatches to train_dynamic or train_baseline.
TrainRun train(const SyntheticTaskSuite& suite, const std::vector<ParamVector>& source_params,
               TrainStrategy strategy, const TrainOptions& options, std::uint64_t seed);

double accuracy(const Family& family, const ParamVector& theta, const SampleSet& samples);

struct StrategySummary {
  std::size_t suite = 0;
  TrainStrategy strategy = TrainStrategy::TargetOnly;
  double mean_test_acc = 0.0;
  double std_test_acc = 0.0;
  double mean_samples = 0.0;
  double std_samples = 0.0;
  std::size_t runs = 0;
};

struct RunKey {
  std::size_t suite = 0;
  TrainStrategy strategy = TrainStrategy::TargetOnly;
  std::uint64_t seed = 0;
};

struct Comparison {
  std::vector<StrategySummary> summary;
  // Every run, ordered by (suite, seed, strategy) as listed in the inputs.
  std::vector<std::pair<RunKey, TrainRun>> runs;
};

// Every (suite, seed, strategy) combination; suite s at seed k is generated by
// generate_suite(suites[s], k) and shared by all strategies.
Comparison compare_strategies(const std::vector<SuiteConfig>& suites, const std::vector<TrainStrategy>& strategies,
                              const std::vector<std::uint64_t>& seeds, const TrainOptions& options,
                              int workers = 1);

}  // namespace tbudget
