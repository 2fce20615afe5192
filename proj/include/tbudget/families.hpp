#pragma once

// Parametric families P(x; theta): sampling, log-density, score, Fisher
// information and KL divergence.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tbudget/random.hpp"

namespace tbudget {

using ParamVector = Eigen::VectorXd;

enum class FamilyKind { GaussianMean, Bernoulli, Categorical, SoftmaxRegression };

// Marginal of the feature vector z in softmax regression. It carries no
// parameters, so it only contributes a constant to log P.
struct FeatureDistribution {
  enum class Kind { StandardNormal, FiniteSet };

  Kind kind = Kind::StandardNormal;
  // StandardNormal: each free coordinate is scale * N(0, 1).
  double scale = 1.0;
  // When set, coordinate 0 is the constant 1 (an intercept column).
  bool intercept = false;
  // FiniteSet: z is drawn uniformly from these rows.
  std::vector<std::vector<double>> points;
};

class Family {
 public:
  static Family gaussian(double sigma, int dim = 1);
  static Family bernoulli();
  static Family categorical(int classes);
  static Family softmax(int feature_dim, int classes, FeatureDistribution features = {});

  FamilyKind kind() const { return kind_; }
  // Parameter dimension d.
  int dim() const;
  double sigma() const { return sigma_; }
  int classes() const { return classes_; }
  int feature_dim() const { return feature_dim_; }
  const FeatureDistribution& features() const { return features_; }
  // Number of real coordinates stored per observation.
  int observation_width() const;
  bool has_analytic_fisher() const;
  std::string name() const;

  void check_parameter(const ParamVector& theta) const;

 private:
  Family() = default;

  FamilyKind kind_ = FamilyKind::GaussianMean;
  double sigma_ = 1.0;
  int gauss_dim_ = 1;
  int classes_ = 2;
  int feature_dim_ = 0;
  FeatureDistribution features_;
};

// One observation: a real vector (Gaussian coordinates or softmax features),
// an integer label (Bernoulli bit, category, class) and the originating task.
struct Sample {
  std::span<const double> reals;
  int label = 0;
  int task = 0;
};

// Column store of observations sharing one width.
class SampleSet {
 public:
  SampleSet() = default;
  explicit SampleSet(int width) : width_(width) {}

  int width() const { return width_; }
  std::size_t size() const { return labels_.size(); }
  bool empty() const { return labels_.empty(); }

  Sample operator[](std::size_t i) const {
    return {std::span<const double>(reals_.data() + i * static_cast<std::size_t>(width_),
                                    static_cast<std::size_t>(width_)),
            labels_[i], tasks_[i]};
  }

  void reserve(std::size_t n);
  void push_back(std::span<const double> reals, int label, int task);
  void push_back(const Sample& s) { push_back(s.reals, s.label, s.task); }
  void append(const SampleSet& other);
  void clear();

  const std::vector<double>& reals() const { return reals_; }
  const std::vector<int>& labels() const { return labels_; }
  const std::vector<int>& tasks() const { return tasks_; }

  bool operator==(const SampleSet&) const = default;

 private:
  int width_ = 0;
  std::vector<double> reals_;
  std::vector<int> labels_;
  std::vector<int> tasks_;
};

double log_prob(const Family& family, const ParamVector& theta, const Sample& x);

ParamVector score(const Family& family, const ParamVector& theta, const Sample& x);

// Writes the score into out (length d) without allocating.
void score_into(const Family& family, const ParamVector& theta, const Sample& x,
                Eigen::Ref<Eigen::VectorXd> out);

// n i.i.d. draws tagged with `task`.
SampleSet sample(const Family& family, const ParamVector& theta, RandomStream& rng, std::size_t n,
                 int task = 0);

// Appends n draws to an existing set.
void sample_into(SampleSet& out, const Family& family, const ParamVector& theta,
                 RandomStream& rng, std::size_t n, int task = 0);

// Exact J(theta). Throws NotAvailable for softmax with a continuous feature marginal.
Eigen::MatrixXd fisher_analytic(const Family& family, const ParamVector& theta);

struct KlValue {
  double value = 0.0;
  double std_err = 0.0;
  // Monte-Carlo average over features rather than a closed form.
  bool approximate = false;
};

// D(P_a || P_b).
KlValue kl_divergence(const Family& family, const ParamVector& theta_a,
                      const ParamVector& theta_b);

inline double kl_exact(const Family& family, const ParamVector& theta_a,
                       const ParamVector& theta_b) {
  return kl_divergence(family, theta_a, theta_b).value;
}

// Softmax helpers shared with estimation and the trainer. Parameters are laid
// out class-major: theta[c * feature_dim + j].
Eigen::VectorXd softmax_probabilities(const Family& family, const ParamVector& theta,
                                      std::span<const double> features);
int softmax_predict(const Family& family, const ParamVector& theta,
                    std::span<const double> features);

// Number of features drawn when the softmax KL has no closed form.
inline constexpr int kSoftmaxKlDraws = 4096;

}  // namespace tbudget
