#pragma once

// JSON run configuration shared by every subcommand.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tbudget/estimation.hpp"
#include "tbudget/families.hpp"
#include "tbudget/trainer.hpp"

namespace tbudget {

struct SourceConfig {
  std::string name;
  // Exactly one of delta / theta is set.
  std::optional<double> delta;
  std::optional<ParamVector> theta;
  long cap = 0;
};

struct CurveConfig {
  int grid_points = 101;
  // Overrides the discrepancy computed from the first source.
  std::optional<double> t;
  // Overrides the first source's cap as the n1 range.
  std::optional<long> N1;
};

struct VerifyConfig {
  enum class Mode { Sweep, Points };
  Mode mode = Mode::Sweep;
  long grid_step = 10;
  std::vector<long> n1_values;
  double threshold = 3.0;
  double pass_fraction = 0.95;
};

struct TrainerConfig {
  SuiteConfig suite;
  TrainOptions options;
  std::vector<TrainStrategy> strategies;
  std::vector<std::uint64_t> seeds;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::optional<Family> family;
  std::optional<ParamVector> theta0;
  std::optional<long> N0;
  std::vector<SourceConfig> sources;
  int stepnumber = 1000;
  long trials = 20000;
  FisherMode fisher_mode = FisherMode::Analytic;
  long calibration_samples = 100000;
  int workers = 1;
  CurveConfig curve;
  VerifyConfig verify;
  std::optional<TrainerConfig> trainer;

  // Accessors that raise ConfigError naming the missing field.
  const Family& require_family() const;
  long require_N0() const;
  const TrainerConfig& require_trainer() const;

  // theta0, defaulting to zeros.
  ParamVector target_theta() const;
  // theta_i for each source: explicit, or theta0 + delta * u_i where u_i is
  // +1 for d = 1 and a seeded unit direction otherwise.
  std::vector<ParamVector> source_thetas() const;
};

RunConfig parse_config(std::string_view json_text);
RunConfig load_config(const std::filesystem::path& path);

}  // namespace tbudget
