#include "tbudget/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "tbudget/errors.hpp"
#include "tbudget/random.hpp"

namespace tbudget {

namespace {

using json = nlohmann::json;

std::string child(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }
std::string index(const std::string& path, std::size_t i) { return path + "[" + std::to_string(i) + "]"; }

void require_object(const json& j, const std::string& path) {
  if (!j.is_object()) throw ConfigError(path.empty() ? "<root>" : path, "expected an object");
}

void reject_unknown(const json& j, const std::string& path, std::initializer_list<const char*> known) {
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) throw ConfigError(child(path, key), "unknown field");
  }
}

double number(const json& j, const std::string& path) {
  if (!j.is_number()) throw ConfigError(path, "expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw ConfigError(path, "must be finite");
  return v;
}

long integer(const json& j, const std::string& path, long min) {
  if (!j.is_number_integer()) throw ConfigError(path, "expected an integer");
  const long v = j.get<long>();
  if (v < min) throw ConfigError(path, "must be at least " + std::to_string(min));
  return v;
}

template <typename T, typename Fn>
std::optional<T> optional_field(const json& obj, const std::string& path, const char* key, Fn&& read) {
  if (!obj.contains(key)) return std::nullopt;
  return read(obj.at(key), child(path, key));
}

long opt_int(const json& obj, const std::string& path, const char* key, long min, long fallback) {
  return optional_field<long>(obj, path, key, [&](const json& j, const std::string& p) { return integer(j, p, min); })
      .value_or(fallback);
}

double opt_positive(const json& obj, const std::string& path, const char* key, double fallback) {
  return optional_field<double>(obj, path, key,
                                [&](const json& j, const std::string& p) {
                                  const double v = number(j, p);
                                  if (!(v > 0.0)) throw ConfigError(p, "must be positive");
                                  return v;
                                })
      .value_or(fallback);
}

bool opt_bool(const json& obj, const std::string& path, const char* key, bool fallback) {
  if (!obj.contains(key)) return fallback;
  if (!obj.at(key).is_boolean()) throw ConfigError(child(path, key), "expected true or false");
  return obj.at(key).get<bool>();
}

std::string string_field(const json& j, const std::string& path) {
  if (!j.is_string()) throw ConfigError(path, "expected a string");
  return j.get<std::string>();
}

ParamVector vector_field(const json& j, const std::string& path) {
  if (!j.is_array() || j.empty()) throw ConfigError(path, "expected a nonempty array of numbers");
  ParamVector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = number(j[i], index(path, i));
  return v;
}

FisherMode fisher_mode(const json& j, const std::string& path) {
  const std::string s = string_field(j, path);
  if (s == "analytic") return FisherMode::Analytic;
  if (s == "per_sample") return FisherMode::PerSampleOuterProduct;
  if (s == "batch") return FisherMode::BatchGradientOuterProduct;
  throw ConfigError(path, "expected one of analytic, per_sample, batch");
}

Family parse_family(const json& j, const std::string& path) {
  require_object(j, path);
  if (!j.contains("kind")) throw ConfigError(child(path, "kind"), "missing");
  const std::string kind = string_field(j.at("kind"), child(path, "kind"));
  if (kind == "gaussian") {
    reject_unknown(j, path, {"kind", "sigma", "dim"});
    return Family::gaussian(opt_positive(j, path, "sigma", 1.0),
                            static_cast<int>(opt_int(j, path, "dim", 1, 1)));
  }
  if (kind == "bernoulli") {
    reject_unknown(j, path, {"kind"});
    return Family::bernoulli();
  }
  if (kind == "categorical") {
    reject_unknown(j, path, {"kind", "classes"});
    if (!j.contains("classes")) throw ConfigError(child(path, "classes"), "missing");
    return Family::categorical(static_cast<int>(integer(j.at("classes"), child(path, "classes"), 2)));
  }
  if (kind == "softmax") {
    reject_unknown(j, path, {"kind", "feature_dim", "classes", "features"});
    if (!j.contains("feature_dim")) throw ConfigError(child(path, "feature_dim"), "missing");
    if (!j.contains("classes")) throw ConfigError(child(path, "classes"), "missing");
    const int F = static_cast<int>(integer(j.at("feature_dim"), child(path, "feature_dim"), 1));
    const int C = static_cast<int>(integer(j.at("classes"), child(path, "classes"), 2));
    FeatureDistribution fd;
    if (j.contains("features")) {
      const std::string fp = child(path, "features");
      const json& f = j.at("features");
      require_object(f, fp);
      reject_unknown(f, fp, {"kind", "scale", "intercept", "points"});
      const std::string fk = f.contains("kind") ? string_field(f.at("kind"), child(fp, "kind")) : "standard_normal";
      if (fk == "standard_normal") {
        fd.scale = opt_positive(f, fp, "scale", 1.0);
        fd.intercept = opt_bool(f, fp, "intercept", false);
      } else if (fk == "finite") {
        fd.kind = FeatureDistribution::Kind::FiniteSet;
        const std::string pp = child(fp, "points");
        if (!f.contains("points") || !f.at("points").is_array() || f.at("points").empty())
          throw ConfigError(pp, "expected a nonempty array of feature vectors");
        for (std::size_t i = 0; i < f.at("points").size(); ++i) {
          const ParamVector p = vector_field(f.at("points")[i], index(pp, i));
          if (p.size() != F) throw ConfigError(index(pp, i), "must have feature_dim entries");
          fd.points.emplace_back(p.data(), p.data() + p.size());
        }
      } else {
        throw ConfigError(child(fp, "kind"), "expected standard_normal or finite");
      }
    }
    return Family::softmax(F, C, std::move(fd));
  }
  throw ConfigError(child(path, "kind"), "expected one of gaussian, bernoulli, categorical, softmax");
}

TrainerConfig parse_trainer(const json& j, const std::string& path, const RunConfig& rc) {
  require_object(j, path);
  reject_unknown(j, path,
                 {"feature_dim", "classes", "shots", "prior_scale", "feature_scale", "intercept", "test_size",
                  "learning_rate", "steps_per_epoch", "max_epochs", "patience", "fisher_mode", "target_only_fisher",
                  "static_over_factor", "strategies", "seeds"});
  TrainerConfig tc;
  SuiteConfig& s = tc.suite;
  s.feature_dim = static_cast<int>(opt_int(j, path, "feature_dim", 1, s.feature_dim));
  s.classes = static_cast<int>(opt_int(j, path, "classes", 2, s.classes));
  s.shots = static_cast<int>(opt_int(j, path, "shots", 1, s.shots));
  s.prior_scale = opt_positive(j, path, "prior_scale", s.prior_scale);
  s.feature_scale = opt_positive(j, path, "feature_scale", s.feature_scale);
  s.intercept = opt_bool(j, path, "intercept", s.intercept);
  s.test_size = opt_int(j, path, "test_size", 1, s.test_size);
  if (rc.sources.empty()) throw ConfigError("sources", "training needs at least one source");
  for (std::size_t i = 0; i < rc.sources.size(); ++i) {
    if (!rc.sources[i].delta) throw ConfigError(index("sources", i) + ".delta", "training sources need a delta");
    s.deltas.push_back(*rc.sources[i].delta);
    s.pool_sizes.push_back(rc.sources[i].cap);
  }

  TrainOptions& o = tc.options;
  o.learning_rate = opt_positive(j, path, "learning_rate", o.learning_rate);
  o.steps_per_epoch = static_cast<int>(opt_int(j, path, "steps_per_epoch", 1, o.steps_per_epoch));
  o.max_epochs = static_cast<int>(opt_int(j, path, "max_epochs", 1, o.max_epochs));
  o.patience = static_cast<int>(opt_int(j, path, "patience", 1, o.patience));
  o.static_over_factor = static_cast<int>(opt_int(j, path, "static_over_factor", 1, o.static_over_factor));
  o.fisher_mode = optional_field<FisherMode>(j, path, "fisher_mode", fisher_mode).value_or(o.fisher_mode);
  if (o.fisher_mode == FisherMode::Analytic)
    throw ConfigError(child(path, "fisher_mode"), "training needs per_sample or batch (no closed form)");
  o.target_only_fisher = opt_bool(j, path, "target_only_fisher", o.target_only_fisher);
  o.stepnumber = rc.stepnumber;

  if (j.contains("strategies")) {
    const std::string sp = child(path, "strategies");
    if (!j.at("strategies").is_array() || j.at("strategies").empty())
      throw ConfigError(sp, "expected a nonempty array");
    for (std::size_t i = 0; i < j.at("strategies").size(); ++i) {
      const std::string name = string_field(j.at("strategies")[i], index(sp, i));
      const auto st = parse_train_strategy(name);
      if (!st)
        throw ConfigError(index(sp, i),
                          "unknown strategy '" + name +
                              "' (TargetOnly, AllSources, StaticUnder, StaticExact, StaticOver, Dynamic)");
      tc.strategies.push_back(*st);
    }
  } else {
    tc.strategies = {TrainStrategy::TargetOnly, TrainStrategy::AllSources, TrainStrategy::StaticExact,
                     TrainStrategy::Dynamic};
  }
  if (j.contains("seeds")) {
    const std::string sp = child(path, "seeds");
    if (!j.at("seeds").is_array() || j.at("seeds").empty()) throw ConfigError(sp, "expected a nonempty array");
    std::set<std::uint64_t> seen;
    for (std::size_t i = 0; i < j.at("seeds").size(); ++i) {
      const auto v = static_cast<std::uint64_t>(integer(j.at("seeds")[i], index(sp, i), 0));
      if (!seen.insert(v).second) throw ConfigError(index(sp, i), "duplicate seed");
      tc.seeds.push_back(v);
    }
  } else {
    tc.seeds = {rc.seed};
  }
  return tc;
}

}  // namespace

const Family& RunConfig::require_family() const {
  if (!family) throw ConfigError("family", "missing");
  return *family;
}

long RunConfig::require_N0() const {
  if (!N0) throw ConfigError("N0", "missing");
  return *N0;
}

const TrainerConfig& RunConfig::require_trainer() const {
  if (!trainer) throw ConfigError("trainer", "missing");
  return *trainer;
}

ParamVector RunConfig::target_theta() const {
  const Family& f = require_family();
  return theta0 ? *theta0 : ParamVector::Zero(f.dim());
}

std::vector<ParamVector> RunConfig::source_thetas() const {
  const Family& f = require_family();
  const ParamVector t0 = target_theta();
  std::vector<ParamVector> out;
  for (std::size_t i = 0; i < sources.size(); ++i) {
    const SourceConfig& s = sources[i];
    if (s.theta) {
      if (s.theta->size() != f.dim())
        throw ConfigError(index("sources", i) + ".theta", "must have " + std::to_string(f.dim()) + " entries");
      out.push_back(*s.theta);
      continue;
    }
    ParamVector u = ParamVector::Ones(f.dim());
    if (f.dim() > 1) {
      RandomStream rng = RandomStream::derive(seed, {0xD1EC7, i});
      for (Eigen::Index j = 0; j < u.size(); ++j) u(j) = rng.normal();
      if (f.kind() == FamilyKind::SoftmaxRegression) {
        Eigen::Map<Eigen::MatrixXd> W(u.data(), f.feature_dim(), f.classes());
        const Eigen::VectorXd mean = W.rowwise().mean();
        W.colwise() -= mean;
      }
      u.normalize();
    }
    out.push_back(t0 + *s.delta * u);
  }
  return out;
}

RunConfig parse_config(std::string_view json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError("<root>", std::string("invalid JSON: ") + e.what());
  }
  require_object(root, "");
  reject_unknown(root, "",
                 {"seed", "family", "theta0", "N0", "sources", "stepnumber", "trials", "fisher_mode",
                  "calibration_samples", "workers", "curve", "verify", "trainer"});
  RunConfig rc;
  rc.seed = static_cast<std::uint64_t>(opt_int(root, "", "seed", 0, 0));
  if (root.contains("family")) rc.family = parse_family(root.at("family"), "family");
  if (root.contains("theta0")) {
    rc.theta0 = vector_field(root.at("theta0"), "theta0");
    if (!rc.family) throw ConfigError("theta0", "requires family");
    if (rc.theta0->size() != rc.family->dim())
      throw ConfigError("theta0", "must have " + std::to_string(rc.family->dim()) + " entries");
  }
  if (root.contains("N0")) rc.N0 = integer(root.at("N0"), "N0", 1);
  rc.stepnumber = static_cast<int>(opt_int(root, "", "stepnumber", 1, rc.stepnumber));
  rc.trials = opt_int(root, "", "trials", 100, rc.trials);
  rc.calibration_samples = opt_int(root, "", "calibration_samples", 1, rc.calibration_samples);
  rc.workers = static_cast<int>(opt_int(root, "", "workers", 1, rc.workers));
  rc.fisher_mode = optional_field<FisherMode>(root, "", "fisher_mode", fisher_mode).value_or(rc.fisher_mode);

  if (root.contains("sources")) {
    const json& arr = root.at("sources");
    if (!arr.is_array()) throw ConfigError("sources", "expected an array");
    std::set<std::string> names;
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const std::string p = index("sources", i);
      const json& s = arr[i];
      require_object(s, p);
      reject_unknown(s, p, {"name", "delta", "theta", "cap"});
      SourceConfig sc;
      sc.name = s.contains("name") ? string_field(s.at("name"), child(p, "name")) : "source" + std::to_string(i + 1);
      if (sc.name.empty()) throw ConfigError(child(p, "name"), "must not be empty");
      if (!names.insert(sc.name).second) throw ConfigError(child(p, "name"), "duplicate source name '" + sc.name + "'");
      if (s.contains("delta") == s.contains("theta")) throw ConfigError(p, "give exactly one of delta or theta");
      if (s.contains("delta")) {
        sc.delta = number(s.at("delta"), child(p, "delta"));
        if (*sc.delta < 0.0) throw ConfigError(child(p, "delta"), "must be nonnegative");
      } else {
        sc.theta = vector_field(s.at("theta"), child(p, "theta"));
      }
      if (!s.contains("cap")) throw ConfigError(child(p, "cap"), "missing");
      sc.cap = integer(s.at("cap"), child(p, "cap"), 1);
      rc.sources.push_back(std::move(sc));
    }
  }

  if (root.contains("curve")) {
    const json& c = root.at("curve");
    require_object(c, "curve");
    reject_unknown(c, "curve", {"grid_points", "t", "N1"});
    rc.curve.grid_points = static_cast<int>(opt_int(c, "curve", "grid_points", 2, rc.curve.grid_points));
    rc.curve.t = optional_field<double>(c, "curve", "t", [](const json& j, const std::string& p) {
      const double v = number(j, p);
      if (v < 0.0) throw ConfigError(p, "must be nonnegative");
      return v;
    });
    if (c.contains("N1")) rc.curve.N1 = integer(c.at("N1"), "curve.N1", 1);
  }

  if (root.contains("verify")) {
    const json& v = root.at("verify");
    require_object(v, "verify");
    reject_unknown(v, "verify", {"mode", "grid_step", "n1", "threshold", "pass_fraction"});
    if (v.contains("mode")) {
      const std::string m = string_field(v.at("mode"), "verify.mode");
      if (m == "sweep") rc.verify.mode = VerifyConfig::Mode::Sweep;
      else if (m == "points") rc.verify.mode = VerifyConfig::Mode::Points;
      else throw ConfigError("verify.mode", "expected sweep or points");
    }
    rc.verify.grid_step = opt_int(v, "verify", "grid_step", 1, rc.verify.grid_step);
    rc.verify.threshold = opt_positive(v, "verify", "threshold", rc.verify.threshold);
    if (v.contains("pass_fraction")) {
      const double f = number(v.at("pass_fraction"), "verify.pass_fraction");
      if (f < 0.0 || f > 1.0) throw ConfigError("verify.pass_fraction", "must be in [0, 1]");
      rc.verify.pass_fraction = f;
    }
    if (v.contains("n1")) {
      if (!v.at("n1").is_array() || v.at("n1").empty()) throw ConfigError("verify.n1", "expected a nonempty array");
      for (std::size_t i = 0; i < v.at("n1").size(); ++i)
        rc.verify.n1_values.push_back(integer(v.at("n1")[i], index("verify.n1", i), 0));
    }
    if (rc.verify.mode == VerifyConfig::Mode::Points && rc.verify.n1_values.empty())
      throw ConfigError("verify.n1", "points mode needs n1 values");
  }

  // Sources given by theta need the family to check their length.
  for (std::size_t i = 0; i < rc.sources.size(); ++i)
    if (rc.sources[i].theta && rc.family && rc.sources[i].theta->size() != rc.family->dim())
      throw ConfigError(index("sources", i) + ".theta", "must have " + std::to_string(rc.family->dim()) + " entries");

  if (root.contains("trainer")) rc.trainer = parse_trainer(root.at("trainer"), "trainer", rc);
  return rc;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("<file>", "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

}  // namespace tbudget
