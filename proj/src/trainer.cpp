#include "tbudget/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <utility>

#include "tbudget/errors.hpp"
#include "tbudget/parallel.hpp"

namespace tbudget {

namespace {

// Stream keys under the suite seed.
enum : std::uint64_t { kPrior = 1, kDirection, kTarget, kValidation, kTest, kPool, kResample };

// Subtract the across-class mean of each feature weight.
void center_classes(ParamVector& theta, int F, int C) {
  Eigen::Map<Eigen::MatrixXd> W(theta.data(), F, C);
  const Eigen::VectorXd mean = W.rowwise().mean();
  W.colwise() -= mean;
}

// Draws from theta until every class has `per_class` samples.
SampleSet draw_per_class(const Family& f, const ParamVector& theta, RandomStream& rng, int per_class) {
  SampleSet out(f.observation_width());
  std::vector<int> have(static_cast<std::size_t>(f.classes()), 0);
  int missing = per_class * f.classes();
  SampleSet one(f.observation_width());
  for (long attempts = 0; missing > 0; ++attempts) {
    if (attempts > 10'000'000) throw std::runtime_error("generate_suite: a class is too rare to fill its shots");
    one.clear();
    sample_into(one, f, theta, rng, 1, 0);
    const int y = one[0].label;
    if (have[y] < per_class) {
      ++have[y];
      --missing;
      out.push_back(one[0]);
    }
  }
  return out;
}

class EarlyStopper {
 public:
  explicit EarlyStopper(int patience) : patience_(patience) {}
  // True when training should stop after this epoch.
  bool observe(int epoch, double val) {
    if (best_epoch_ < 0 || val > best_) {
      best_ = val;
      best_epoch_ = epoch;
    }
    return epoch - best_epoch_ >= patience_;
  }

 private:
  int patience_;
  double best_ = 0.0;
  int best_epoch_ = -1;
};

// Mutable state of one training run.
class RunState {
 public:
  RunState(const SyntheticTaskSuite& suite, const TrainOptions& opt, TrainStrategy strategy, std::uint64_t seed)
      : suite_(suite), opt_(opt), theta_(ParamVector::Zero(suite.family.dim())) {
    run_.strategy = strategy;
    run_.seed = seed;
  }

  const ParamVector& theta() const { return theta_; }
  void set_theta(const ParamVector& theta) { theta_ = theta; }
  int next_epoch() const { return static_cast<int>(run_.epochs.size()); }
  int best_epoch() const { return run_.best_epoch; }
  const ParamVector& theta_at_best() const { return run_.theta_at_best; }
  // Later epochs only compete for the reported best checkpoint.
  void restart_selection() { has_best_ = false; }

  // Trains one epoch on `train` and logs it; returns validation accuracy.
  double epoch(const SampleSet& train, std::optional<TransferPlan> plan) {
    const SampleSet* sets[] = {&train};
    Eigen::VectorXd grad(theta_.size());
    double objective = 0.0;
    for (int step = 0; step < opt_.steps_per_epoch; ++step) {
      softmax_objective(suite_.family, theta_, sets, &grad);
      theta_ += opt_.learning_rate * grad;
      if (!theta_.allFinite()) throw Diverged("trainer: parameters became non-finite at epoch " +
                                              std::to_string(next_epoch()));
    }
    objective = softmax_objective(suite_.family, theta_, sets, nullptr);

    EpochRecord rec;
    rec.epoch = next_epoch();
    rec.plan = std::move(plan);
    rec.train_loss = -objective;
    rec.val_acc = accuracy(suite_.family, theta_, suite_.target_val);
    rec.samples_used = static_cast<long>(train.size());
    if (rec.plan) ++run_.planner_calls;
    run_.total_samples_consumed += rec.samples_used;
    if (!has_best_ || rec.val_acc > run_.best_val_acc) {
      has_best_ = true;
      run_.best_val_acc = rec.val_acc;
      run_.best_epoch = rec.epoch;
      run_.theta_at_best = theta_;
      run_.test_acc_at_best = accuracy(suite_.family, theta_, suite_.target_test);
    }
    run_.epochs.push_back(std::move(rec));
    return run_.epochs.back().val_acc;
  }

  TrainRun finish() { return std::move(run_); }

 private:
  const SyntheticTaskSuite& suite_;
  const TrainOptions& opt_;
  ParamVector theta_;
  TrainRun run_;
  bool has_best_ = false;
};

TransferPlan make_plan(const SyntheticTaskSuite& suite, const std::vector<ParamVector>& source_params,
                       const ParamVector& theta, const SampleSet& fisher_samples, const TrainOptions& opt) {
  const FisherEstimate fisher = empirical_fisher(suite.family, theta, fisher_samples, opt.fisher_mode);
  const QuadFormMatrix qf = quad_form_matrix(fisher, theta, source_params);
  TransferProblem problem;
  problem.N0 = static_cast<long>(suite.target_train.size());
  problem.d = suite.family.dim();
  problem.caps = suite.pool_sizes();
  problem.M = qf.M;
  problem.stepnumber = opt.stepnumber;
  return plan_multi(problem);
}

// Target samples plus n_star[i] draws without replacement from each pool.
SampleSet resample(const SyntheticTaskSuite& suite, const TransferPlan& plan, std::uint64_t seed, int epoch) {
  SampleSet train = suite.target_train;
  for (std::size_t i = 0; i < suite.source_pools.size(); ++i) {
    const SampleSet& pool = suite.source_pools[i];
    const long n = plan.n_star[i];
    if (n > static_cast<long>(pool.size())) throw Infeasible("resample: plan exceeds pool size");
    RandomStream rng = RandomStream::derive(seed, {kResample, static_cast<std::uint64_t>(epoch), i});
    std::vector<std::size_t> idx(pool.size());
    std::iota(idx.begin(), idx.end(), 0);
    // Partial Fisher-Yates: the first n entries are a uniform n-subset.
    for (long k = 0; k < n; ++k) {
      const std::size_t j = static_cast<std::size_t>(k) + rng.below(pool.size() - static_cast<std::size_t>(k));
      std::swap(idx[static_cast<std::size_t>(k)], idx[j]);
    }
    std::sort(idx.begin(), idx.begin() + n);
    for (long k = 0; k < n; ++k) train.push_back(pool[idx[static_cast<std::size_t>(k)]]);
  }
  return train;
}

// Trains on a fixed set until early stopping or the epoch cap.
void train_fixed(RunState& state, const SampleSet& train, const TrainOptions& opt,
                 std::optional<TransferPlan> first_plan = std::nullopt) {
  EarlyStopper stopper(opt.patience);
  while (state.next_epoch() < opt.max_epochs) {
    const int e = state.next_epoch();
    const double val = state.epoch(train, std::exchange(first_plan, std::nullopt));
    if (stopper.observe(e, val)) break;
  }
}

}  // namespace

void SuiteConfig::validate() const {
  if (feature_dim < 1) throw std::invalid_argument("suite: feature_dim must be at least 1");
  if (classes < 2) throw std::invalid_argument("suite: classes must be at least 2");
  if (shots < 1) throw std::invalid_argument("suite: shots must be at least 1");
  if (deltas.empty()) throw std::invalid_argument("suite: need at least one source");
  if (deltas.size() != pool_sizes.size()) throw std::invalid_argument("suite: deltas and pool_sizes differ in length");
  for (double d : deltas)
    if (!(d >= 0.0) || !std::isfinite(d)) throw std::invalid_argument("suite: deltas must be finite and nonnegative");
  for (long n : pool_sizes)
    if (n < 1) throw std::invalid_argument("suite: pool sizes must be at least 1");
  if (test_size < 1) throw std::invalid_argument("suite: test_size must be at least 1");
}

std::vector<long> SyntheticTaskSuite::pool_sizes() const {
  std::vector<long> out;
  for (const auto& p : source_pools) out.push_back(static_cast<long>(p.size()));
  return out;
}

SyntheticTaskSuite generate_suite(const SuiteConfig& config, std::uint64_t seed) {
  config.validate();
  FeatureDistribution fd;
  fd.scale = config.feature_scale;
  fd.intercept = config.intercept;
  SyntheticTaskSuite suite;
  suite.family = Family::softmax(config.feature_dim, config.classes, fd);
  suite.seed = seed;
  suite.deltas = config.deltas;
  const int F = config.feature_dim, C = config.classes, d = F * C;

  RandomStream prior = RandomStream::derive(seed, {kPrior});
  suite.theta_target.resize(d);
  for (int j = 0; j < d; ++j) suite.theta_target(j) = config.prior_scale * prior.normal();
  center_classes(suite.theta_target, F, C);

  for (std::size_t i = 0; i < config.deltas.size(); ++i) {
    RandomStream rng = RandomStream::derive(seed, {kDirection, i});
    ParamVector u(d);
    for (int j = 0; j < d; ++j) u(j) = rng.normal();
    center_classes(u, F, C);
    u.normalize();
    suite.theta_sources.push_back(suite.theta_target + config.deltas[i] * u);
  }

  RandomStream target_rng = RandomStream::derive(seed, {kTarget});
  const SampleSet labeled = draw_per_class(suite.family, suite.theta_target, target_rng, config.shots);
  suite.target_train = SampleSet(F);
  suite.target_val = SampleSet(F);
  if (config.shots >= 5) {
    // Hold out 20% of each class for validation.
    const int val_per_class = std::max(1, static_cast<int>(std::lround(0.2 * config.shots)));
    std::vector<int> taken(static_cast<std::size_t>(C), 0);
    for (std::size_t k = 0; k < labeled.size(); ++k) {
      const Sample s = labeled[k];
      if (taken[s.label] < val_per_class) {
        ++taken[s.label];
        suite.target_val.push_back(s);
      } else {
        suite.target_train.push_back(s);
      }
    }
  } else {
    suite.target_train = labeled;
    RandomStream val_rng = RandomStream::derive(seed, {kValidation});
    suite.target_val = draw_per_class(suite.family, suite.theta_target, val_rng, config.small_shot_val_per_class);
  }

  RandomStream test_rng = RandomStream::derive(seed, {kTest});
  suite.target_test = sample(suite.family, suite.theta_target, test_rng, static_cast<std::size_t>(config.test_size));

  for (std::size_t i = 0; i < config.deltas.size(); ++i) {
    RandomStream rng = RandomStream::derive(seed, {kPool, i});
    suite.source_pools.push_back(sample(suite.family, suite.theta_sources[i], rng,
                                        static_cast<std::size_t>(config.pool_sizes[i]), static_cast<int>(i) + 1));
  }
  return suite;
}

const char* to_string(TrainStrategy strategy) {
  switch (strategy) {
    case TrainStrategy::TargetOnly: return "TargetOnly";
    case TrainStrategy::AllSources: return "AllSources";
    case TrainStrategy::StaticUnder: return "StaticUnder";
    case TrainStrategy::StaticExact: return "StaticExact";
    case TrainStrategy::StaticOver: return "StaticOver";
    case TrainStrategy::Dynamic: return "Dynamic";
  }
  return "?";
}

std::optional<TrainStrategy> parse_train_strategy(const std::string& name) {
  for (TrainStrategy s : {TrainStrategy::TargetOnly, TrainStrategy::AllSources, TrainStrategy::StaticUnder,
                          TrainStrategy::StaticExact, TrainStrategy::StaticOver, TrainStrategy::Dynamic})
    if (name == to_string(s)) return s;
  return std::nullopt;
}

double accuracy(const Family& family, const ParamVector& theta, const SampleSet& samples) {
  if (samples.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Sample s = samples[i];
    hits += softmax_predict(family, theta, s.reals) == s.label;
  }
  return static_cast<double>(hits) / static_cast<double>(samples.size());
}

std::vector<ParamVector> pretrain_sources(const SyntheticTaskSuite& suite, const TrainOptions& options) {
  std::vector<ParamVector> out;
  for (const auto& pool : suite.source_pools) {
    if (pool.empty()) throw InsufficientData("pretrain_sources: empty source pool");
    const SampleSet* sets[] = {&pool};
    out.push_back(fit_mle(suite.family, sets, options.pretrain).theta);
  }
  return out;
}

TrainRun train_dynamic(const SyntheticTaskSuite& suite, const std::vector<ParamVector>& source_params,
                       const TrainOptions& opt, std::uint64_t seed) {
  if (source_params.size() != suite.source_pools.size())
    throw ShapeError("train_dynamic: one source parameter per pool required");
  RunState state(suite, opt, TrainStrategy::Dynamic, seed);
  EarlyStopper stopper(opt.patience);
  SampleSet train = suite.target_train;
  std::optional<TransferPlan> plan;
  while (state.next_epoch() < opt.max_epochs) {
    const int e = state.next_epoch();
    const double val = state.epoch(train, std::move(plan));
    plan.reset();
    if (state.next_epoch() >= opt.max_epochs) break;
    // Epoch 0 is the target-only initialization; selection and early
    // stopping start with the first planned epoch.
    if (e == 0) {
      state.restart_selection();
    } else if (stopper.observe(e, val)) {
      break;
    }
    const SampleSet& fisher_samples = opt.target_only_fisher ? suite.target_train : train;
    plan = make_plan(suite, source_params, state.theta(), fisher_samples, opt);
    train = resample(suite, *plan, seed, e + 1);
  }
  return state.finish();
}

TrainRun train_baseline(const SyntheticTaskSuite& suite, const std::vector<ParamVector>& source_params,
                        TrainStrategy strategy, const TrainOptions& opt, std::uint64_t seed) {
  RunState state(suite, opt, strategy, seed);
  switch (strategy) {
    case TrainStrategy::Dynamic:
      throw std::invalid_argument("train_baseline: use train_dynamic for the dynamic strategy");
    case TrainStrategy::TargetOnly:
      train_fixed(state, suite.target_train, opt);
      break;
    case TrainStrategy::AllSources: {
      SampleSet all = suite.target_train;
      for (const auto& pool : suite.source_pools) all.append(pool);
      train_fixed(state, all, opt);
      break;
    }
    case TrainStrategy::StaticUnder:
    case TrainStrategy::StaticExact:
    case TrainStrategy::StaticOver: {
      if (source_params.size() != suite.source_pools.size())
        throw ShapeError("train_baseline: one source parameter per pool required");
      // Warm-up on target data only: one epoch, until the validation plateau
      // (rewound to the best checkpoint), or static_over_factor times the
      // plateau length. The reported checkpoint comes from the transfer phase.
      if (strategy == TrainStrategy::StaticUnder) {
        state.epoch(suite.target_train, std::nullopt);
      } else {
        train_fixed(state, suite.target_train, opt);
        const int plateau = state.best_epoch() + 1;
        if (strategy == TrainStrategy::StaticExact) {
          state.set_theta(state.theta_at_best());
        } else {
          const int warm = std::min(opt.max_epochs, opt.static_over_factor * plateau);
          while (state.next_epoch() < warm) state.epoch(suite.target_train, std::nullopt);
        }
      }
      if (state.next_epoch() >= opt.max_epochs) break;
      state.restart_selection();
      TransferPlan plan = make_plan(suite, source_params, state.theta(), suite.target_train, opt);
      const SampleSet train = resample(suite, plan, seed, state.next_epoch());
      train_fixed(state, train, opt, std::move(plan));
      break;
    }
  }
  return state.finish();
}

TrainRun train(const SyntheticTaskSuite& suite, const std::vector<ParamVector>& source_params,
               TrainStrategy strategy, const TrainOptions& options, std::uint64_t seed) {
  if (strategy == TrainStrategy::Dynamic) return train_dynamic(suite, source_params, options, seed);
  return train_baseline(suite, source_params, strategy, options, seed);
}

Comparison compare_strategies(const std::vector<SuiteConfig>& suites, const std::vector<TrainStrategy>& strategies,
                              const std::vector<std::uint64_t>& seeds, const TrainOptions& options, int workers) {
  if (suites.empty() || strategies.empty() || seeds.empty())
    throw std::invalid_argument("compare_strategies: suites, strategies and seeds must be nonempty");

  struct Job {
    std::size_t suite;
    std::size_t seed;
  };
  std::vector<Job> jobs;
  for (std::size_t s = 0; s < suites.size(); ++s)
    for (std::size_t k = 0; k < seeds.size(); ++k) jobs.push_back({s, k});

  std::vector<std::vector<TrainRun>> results(jobs.size());
  parallel_for(jobs.size(), workers, [&](std::size_t j) {
    const SyntheticTaskSuite suite = generate_suite(suites[jobs[j].suite], seeds[jobs[j].seed]);
    const std::vector<ParamVector> params = pretrain_sources(suite, options);
    for (TrainStrategy strategy : strategies)
      results[j].push_back(train(suite, params, strategy, options, seeds[jobs[j].seed]));
  });

  Comparison out;
  for (std::size_t j = 0; j < jobs.size(); ++j)
    for (std::size_t k = 0; k < strategies.size(); ++k)
      out.runs.push_back({{jobs[j].suite, strategies[k], seeds[jobs[j].seed]}, std::move(results[j][k])});

  for (std::size_t s = 0; s < suites.size(); ++s) {
    for (TrainStrategy strategy : strategies) {
      std::vector<double> acc, used;
      for (const auto& [key, run] : out.runs)
        if (key.suite == s && key.strategy == strategy) {
          acc.push_back(run.test_acc_at_best);
          used.push_back(static_cast<double>(run.total_samples_consumed));
        }
      const auto mean_sd = [](const std::vector<double>& v) {
        const double n = static_cast<double>(v.size());
        const double m = std::accumulate(v.begin(), v.end(), 0.0) / n;
        double ss = 0.0;
        for (double x : v) ss += (x - m) * (x - m);
        return std::pair{m, v.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0};
      };
      const auto [ma, sa] = mean_sd(acc);
      const auto [mu, su] = mean_sd(used);
      out.summary.push_back({s, strategy, ma, sa, mu, su, acc.size()});
    }
  }
  return out;
}

}  // namespace tbudget
