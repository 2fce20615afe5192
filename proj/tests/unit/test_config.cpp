#include <doctest.h>

#include <string>

#include "tbudget/config.hpp"
#include "tbudget/errors.hpp"

using namespace tbudget;

namespace {

// Path of the ConfigError raised by parsing `text`, or "" when it parses.
std::string error_path(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.path();
  }
  return "";
}

}  // namespace

TEST_CASE("a full configuration parses") {
  const RunConfig c = parse_config(R"({
    "seed": 9, "family": {"kind": "gaussian", "sigma": 2.0, "dim": 3}, "N0": 40,
    "theta0": [0.1, 0.2, 0.3],
    "sources": [{"name": "a", "delta": 0.5, "cap": 100}, {"name": "b", "theta": [1, 1, 1], "cap": 50}],
    "stepnumber": 200, "trials": 500, "fisher_mode": "per_sample", "workers": 2,
    "curve": {"grid_points": 11, "t": 0.02, "N1": 300},
    "verify": {"mode": "points", "n1": [0, 10], "threshold": 2.5, "pass_fraction": 0.9}
  })");
  CHECK(c.seed == 9);
  CHECK(c.require_family().dim() == 3);
  CHECK(c.require_N0() == 40);
  CHECK(c.sources.size() == 2);
  CHECK(c.stepnumber == 200);
  CHECK(c.trials == 500);
  CHECK(c.fisher_mode == FisherMode::PerSampleOuterProduct);
  CHECK(c.workers == 2);
  CHECK(c.curve.grid_points == 11);
  CHECK(*c.curve.N1 == 300);
  CHECK(c.verify.mode == VerifyConfig::Mode::Points);
  CHECK(c.verify.n1_values == std::vector<long>{0, 10});
  const auto thetas = c.source_thetas();
  CHECK((thetas[0] - c.target_theta()).norm() == doctest::Approx(0.5));
  CHECK(thetas[1] == ParamVector::Ones(3));
  CHECK_FALSE(c.trainer);
  CHECK_THROWS_AS(c.require_trainer(), ConfigError);
}

TEST_CASE("defaults") {
  const RunConfig c = parse_config(R"({"family": {"kind": "bernoulli"}, "N0": 10})");
  CHECK(c.seed == 0);
  CHECK(c.stepnumber == 1000);
  CHECK(c.workers == 1);
  CHECK(c.fisher_mode == FisherMode::Analytic);
  CHECK(c.target_theta() == ParamVector::Zero(1));
  const RunConfig one = parse_config(R"({"family": {"kind": "gaussian"}, "N0": 10,
                                          "sources": [{"delta": 0.3, "cap": 5}]})");
  CHECK(one.sources[0].name == "source1");
  CHECK(one.source_thetas()[0](0) == doctest::Approx(0.3));
}

TEST_CASE("errors name the offending field") {
  CHECK(error_path(R"({"family": {"kind": "gaussian"}, "N0": 0})") == "N0");
  CHECK(error_path(R"({"trials": 99})") == "trials");
  CHECK(error_path(R"({"sources": [{"name": "a", "delta": 1, "cap": 5}, {"name": "a", "delta": 2, "cap": 5}]})") ==
        "sources[1].name");
  CHECK(error_path(R"({"sources": [{"delta": 1, "cap": 0}]})") == "sources[0].cap");
  CHECK(error_path(R"({"sources": [{"delta": -1, "cap": 3}]})") == "sources[0].delta");
  CHECK(error_path(R"({"sources": [{"cap": 3}]})") == "sources[0]");
  CHECK(error_path(R"({"family": {"kind": "poisson"}})") == "family.kind");
  CHECK(error_path(R"({"family": {"kind": "gaussian", "sigma": -1}})") == "family.sigma");
  CHECK(error_path(R"({"family": {"kind": "categorical"}})") == "family.classes");
  CHECK(error_path(R"({"family": {"kind": "gaussian"}, "theta0": [1, 2]})") == "theta0");
  CHECK(error_path(R"({"fisher_mode": "exact"})") == "fisher_mode");
  CHECK(error_path(R"({"curve": {"grid_points": 1}})") == "curve.grid_points");
  CHECK(error_path(R"({"verify": {"pass_fraction": 1.5}})") == "verify.pass_fraction");
  CHECK(error_path(R"({"verify": {"mode": "points"}})") == "verify.n1");
  CHECK(error_path(R"({"unknown": 1})") == "unknown");
  CHECK(error_path(R"({"seed": "x"})") == "seed");
  CHECK(error_path("[1, 2]") == "<root>");
  CHECK(error_path("{not json") == "<root>");
  CHECK(error_path(R"({"family": {"kind": "softmax", "feature_dim": 2, "classes": 2,
                       "features": {"kind": "finite", "points": [[1, 2], [3]]}}})") == "family.features.points[1]");
}

TEST_CASE("trainer section") {
  const RunConfig c = parse_config(R"({
    "seed": 4,
    "sources": [{"name": "near", "delta": 0, "cap": 100}, {"name": "far", "delta": 2, "cap": 200}],
    "trainer": {"shots": 5, "patience": 3, "strategies": ["TargetOnly", "Dynamic"], "target_only_fisher": true}
  })");
  const TrainerConfig& t = c.require_trainer();
  CHECK(t.suite.shots == 5);
  CHECK(t.suite.deltas == std::vector<double>{0.0, 2.0});
  CHECK(t.suite.pool_sizes == std::vector<long>{100, 200});
  CHECK(t.options.patience == 3);
  CHECK(t.options.target_only_fisher);
  CHECK(t.strategies == std::vector<TrainStrategy>{TrainStrategy::TargetOnly, TrainStrategy::Dynamic});
  CHECK(t.seeds == std::vector<std::uint64_t>{4});

  CHECK(error_path(R"({"sources": [{"delta": 0, "cap": 10}], "trainer": {"strategies": ["Best"]}})") ==
        "trainer.strategies[0]");
  CHECK(error_path(R"({"sources": [{"delta": 0, "cap": 10}], "trainer": {"seeds": [1, 1]}})") == "trainer.seeds[1]");
  CHECK(error_path(R"({"sources": [{"delta": 0, "cap": 10}], "trainer": {"fisher_mode": "analytic"}})") ==
        "trainer.fisher_mode");
  CHECK(error_path(R"({"trainer": {}})") == "sources");
  CHECK(error_path(R"({"sources": [{"theta": [1], "cap": 10}], "trainer": {}})") == "sources[0].delta");
}

TEST_CASE("softmax family with features") {
  const RunConfig c = parse_config(R"({"family": {"kind": "softmax", "feature_dim": 2, "classes": 3,
                                        "features": {"kind": "finite", "points": [[1, 0], [0, 1]]}}})");
  CHECK(c.require_family().dim() == 6);
  CHECK(c.require_family().has_analytic_fisher());
}
