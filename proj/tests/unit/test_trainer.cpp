#include <doctest.h>

#include <cmath>
#include <set>
#include <vector>

#include "tbudget/errors.hpp"
#include "tbudget/trainer.hpp"

using namespace tbudget;

namespace {

SuiteConfig small_suite(std::vector<double> deltas, long pool = 150) {
  SuiteConfig c;
  c.feature_dim = 3;
  c.classes = 3;
  c.shots = 10;
  c.deltas = std::move(deltas);
  c.pool_sizes.assign(c.deltas.size(), pool);
  c.test_size = 300;
  return c;
}

TrainOptions fast_options() {
  TrainOptions o;
  o.max_epochs = 25;
  o.stepnumber = 200;
  return o;
}

std::vector<int> class_counts(const SampleSet& s, int classes) {
  std::vector<int> n(static_cast<std::size_t>(classes), 0);
  for (int y : s.labels()) ++n[y];
  return n;
}

}  // namespace

TEST_CASE("suite generation is seeded and follows the protocol") {
  const SuiteConfig cfg = small_suite({0.0, 1.5});
  const SyntheticTaskSuite a = generate_suite(cfg, 3);
  const SyntheticTaskSuite b = generate_suite(cfg, 3);
  CHECK(a.target_train == b.target_train);
  CHECK(a.source_pools[1] == b.source_pools[1]);
  CHECK(a.theta_target == b.theta_target);
  CHECK_FALSE(generate_suite(cfg, 4).target_train == a.target_train);

  CHECK(class_counts(a.target_train, 3) == std::vector<int>{8, 8, 8});
  CHECK(class_counts(a.target_val, 3) == std::vector<int>{2, 2, 2});
  CHECK(a.target_test.size() == 300);
  CHECK(a.pool_sizes() == std::vector<long>{150, 150});
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK((a.theta_sources[i] - a.theta_target).norm() == doctest::Approx(cfg.deltas[i]).epsilon(1e-12));
    for (int t : a.source_pools[i].tasks()) REQUIRE(t == static_cast<int>(i) + 1);
  }
  // Parameters are centred across classes for every feature.
  const Eigen::Map<const Eigen::MatrixXd> W(a.theta_sources[1].data(), 3, 3);
  CHECK(W.rowwise().sum().norm() < 1e-12);
}

TEST_CASE("few-shot suites draw a separate validation set") {
  SuiteConfig cfg = small_suite({0.5});
  cfg.shots = 2;
  const SyntheticTaskSuite s = generate_suite(cfg, 1);
  CHECK(class_counts(s.target_train, 3) == std::vector<int>{2, 2, 2});
  CHECK(class_counts(s.target_val, 3) == std::vector<int>{5, 5, 5});
}

TEST_CASE("suite configuration is validated") {
  SuiteConfig cfg = small_suite({0.5});
  cfg.pool_sizes = {10, 10};
  CHECK_THROWS_AS(generate_suite(cfg, 1), std::invalid_argument);
  cfg = small_suite({-1.0});
  CHECK_THROWS_AS(generate_suite(cfg, 1), std::invalid_argument);
  cfg = small_suite({});
  CHECK_THROWS_AS(generate_suite(cfg, 1), std::invalid_argument);
}

TEST_CASE("strategy names round-trip") {
  for (TrainStrategy s : {TrainStrategy::TargetOnly, TrainStrategy::AllSources, TrainStrategy::StaticUnder,
                          TrainStrategy::StaticExact, TrainStrategy::StaticOver, TrainStrategy::Dynamic})
    CHECK(parse_train_strategy(to_string(s)) == s);
  CHECK_FALSE(parse_train_strategy("Sometimes"));
}

TEST_CASE("dynamic runs plan every epoch after the first") {
  const SyntheticTaskSuite suite = generate_suite(small_suite({0.0, 0.5, 2.0}), 5);
  const TrainOptions opt = fast_options();
  const auto params = pretrain_sources(suite, opt);
  const TrainRun run = train_dynamic(suite, params, opt, 5);
  REQUIRE(run.epochs.size() >= 2);
  CHECK_FALSE(run.epochs[0].plan);
  CHECK(run.epochs[0].samples_used == static_cast<long>(suite.target_train.size()));
  long total = 0;
  for (std::size_t e = 0; e < run.epochs.size(); ++e) {
    const EpochRecord& rec = run.epochs[e];
    CHECK(rec.epoch == static_cast<int>(e));
    total += rec.samples_used;
    if (e == 0) continue;
    REQUIRE(rec.plan);
    long sum = 0;
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(rec.plan->n_star[i] <= suite.pool_sizes()[i]);
      sum += rec.plan->n_star[i];
    }
    CHECK(rec.samples_used == static_cast<long>(suite.target_train.size()) + sum);
  }
  CHECK(total == run.total_samples_consumed);
  CHECK(run.planner_calls == static_cast<int>(run.epochs.size()) - 1);
  CHECK(run.best_epoch >= 1);
  if (static_cast<int>(run.epochs.size()) < opt.max_epochs)
    CHECK(static_cast<int>(run.epochs.size()) - 1 - run.best_epoch == opt.patience);
  CHECK(run.best_val_acc == run.epochs[static_cast<std::size_t>(run.best_epoch)].val_acc);

  const TrainRun again = train_dynamic(suite, params, opt, 5);
  REQUIRE(again.epochs.size() == run.epochs.size());
  for (std::size_t e = 0; e < run.epochs.size(); ++e) {
    CHECK(again.epochs[e].train_loss == run.epochs[e].train_loss);
    CHECK(again.epochs[e].samples_used == run.epochs[e].samples_used);
  }
  CHECK(again.test_acc_at_best == run.test_acc_at_best);
}

TEST_CASE("baseline accounting") {
  const SyntheticTaskSuite suite = generate_suite(small_suite({0.0, 2.0}), 6);
  const TrainOptions opt = fast_options();
  const auto params = pretrain_sources(suite, opt);
  const long n0 = static_cast<long>(suite.target_train.size());

  const TrainRun all = train_baseline(suite, params, TrainStrategy::AllSources, opt, 6);
  for (const auto& e : all.epochs) CHECK(e.samples_used == n0 + 300);
  CHECK(all.planner_calls == 0);

  const TrainRun target = train_baseline(suite, params, TrainStrategy::TargetOnly, opt, 6);
  for (const auto& e : target.epochs) CHECK(e.samples_used == n0);
  if (static_cast<int>(target.epochs.size()) < opt.max_epochs)
    CHECK(static_cast<int>(target.epochs.size()) - 1 - target.best_epoch == opt.patience);

  for (TrainStrategy s : {TrainStrategy::StaticUnder, TrainStrategy::StaticExact, TrainStrategy::StaticOver}) {
    const TrainRun run = train_baseline(suite, params, s, opt, 6);
    CHECK(run.planner_calls == 1);
    int first_planned = -1;
    for (const auto& e : run.epochs)
      if (e.plan) first_planned = e.epoch;
    REQUIRE(first_planned >= 1);
    CHECK(run.best_epoch >= first_planned);
    const long planned = run.epochs[static_cast<std::size_t>(first_planned)].samples_used;
    for (const auto& e : run.epochs) CHECK(e.samples_used == (e.epoch < first_planned ? n0 : planned));
  }
  const TrainRun under = train_baseline(suite, params, TrainStrategy::StaticUnder, opt, 6);
  CHECK(under.epochs[1].plan);
  CHECK_THROWS_AS(train_baseline(suite, params, TrainStrategy::Dynamic, opt, 6), std::invalid_argument);
}

TEST_CASE("resampling draws fresh subsets each epoch") {
  SuiteConfig cfg = small_suite({0.0, 0.0}, 400);
  const SyntheticTaskSuite suite = generate_suite(cfg, 8);
  TrainOptions opt = fast_options();
  opt.max_epochs = 8;
  opt.patience = 100;
  const auto params = pretrain_sources(suite, opt);
  const TrainRun run = train_dynamic(suite, params, opt, 8);
  CHECK(run.epochs.size() == 8);
  std::set<double> losses;
  for (const auto& e : run.epochs) losses.insert(e.train_loss);
  CHECK(losses.size() == run.epochs.size());
}

TEST_CASE("plans follow the source discrepancies") {
  TrainOptions opt = fast_options();
  {
    const SyntheticTaskSuite suite = generate_suite(small_suite({0.0, 0.0}, 200), 9);
    const TrainRun run = train_dynamic(suite, pretrain_sources(suite, opt), opt, 9);
    const TransferPlan& last = *run.epochs.back().plan;
    CHECK(last.s_star >= 0.9 * 400);
    CHECK((last.alpha_star - Eigen::VectorXd::Constant(2, 0.5)).cwiseAbs().maxCoeff() <= 0.1);
  }
  {
    const SyntheticTaskSuite suite = generate_suite(small_suite({0.0, 6.0}, 200), 10);
    const TrainRun run = train_dynamic(suite, pretrain_sources(suite, opt), opt, 10);
    const TransferPlan& last = *run.epochs.back().plan;
    CHECK(last.n_star[1] < last.n_star[0]);
  }
}

TEST_CASE("pretrained sources agree when the tasks coincide") {
  const SyntheticTaskSuite suite = generate_suite(small_suite({0.0, 0.0}, 4000), 11);
  const auto params = pretrain_sources(suite);
  CHECK((params[0] - suite.theta_target).norm() < 0.5);
  CHECK((params[0] - params[1]).norm() < 0.5);
}

TEST_CASE("comparison aggregates runs deterministically") {
  const SuiteConfig cfg = small_suite({0.0, 1.0});
  const TrainOptions opt = fast_options();
  const Comparison one = compare_strategies({cfg}, {TrainStrategy::TargetOnly}, {2}, opt);
  REQUIRE(one.summary.size() == 1);
  REQUIRE(one.runs.size() == 1);
  CHECK(one.summary[0].mean_test_acc == one.runs[0].second.test_acc_at_best);
  CHECK(one.summary[0].mean_samples == one.runs[0].second.total_samples_consumed);
  CHECK(one.summary[0].std_test_acc == 0.0);
  CHECK(one.summary[0].runs == 1);

  const std::vector<TrainStrategy> strategies{TrainStrategy::TargetOnly, TrainStrategy::Dynamic};
  const Comparison a = compare_strategies({cfg}, strategies, {1, 2, 3}, opt, 1);
  const Comparison b = compare_strategies({cfg}, strategies, {1, 2, 3}, opt, 3);
  REQUIRE(a.summary.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(a.summary[i].mean_test_acc == b.summary[i].mean_test_acc);
    CHECK(a.summary[i].std_samples == b.summary[i].std_samples);
  }
  CHECK(a.runs.size() == 6);
  CHECK(a.runs[1].first.strategy == TrainStrategy::Dynamic);
  CHECK(a.runs[1].first.seed == 1);
}

TEST_CASE("accuracy counts correct predictions") {
  const Family f = Family::softmax(1, 2);
  SampleSet s(1);
  const double pos = 1.0, neg = -1.0;
  s.push_back(std::span(&pos, 1), 1, 0);
  s.push_back(std::span(&neg, 1), 0, 0);
  s.push_back(std::span(&neg, 1), 1, 0);
  const ParamVector theta = (ParamVector(2) << -1.0, 1.0).finished();
  CHECK(accuracy(f, theta, s) == doctest::Approx(2.0 / 3.0));
}
