#pragma once

// Pooled maximum-likelihood estimation over target plus transferred source
// samples, empirical Fisher information, and the K x K matrix
// Theta^T J Theta used by the planner.

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "tbudget/families.hpp"

namespace tbudget {

// Target samples carry task tag 0; source i (0-based) carries tag i + 1.
struct PooledDataset {
  SampleSet target;
  std::vector<SampleSet> sources;
  // Per-source caps the source lists were drawn under. Empty means unchecked.
  std::vector<long> caps;

  std::size_t total_size() const;
  void validate() const;
};

struct MleOptions {
  double grad_tol = 1e-8;
  int max_iterations = 10000;
  double initial_step = 1.0;
  // Starting point for the iterative (softmax) path; zeros when unset.
  std::optional<ParamVector> start;
};

struct MleResult {
  ParamVector theta;
  // Discrete families: a cell was unobserved and 0.5 was added to every cell.
  bool smoothed = false;
  int iterations = 0;
  bool converged = true;
  // Average parameter-dependent log-likelihood at theta.
  double mean_log_likelihood = 0.0;
};

MleResult pooled_mle(const Family& family, const PooledDataset& data, const MleOptions& options = {});

// Same estimator over an arbitrary collection of sample sets.
MleResult fit_mle(const Family& family, std::span<const SampleSet* const> sets,
                  const MleOptions& options = {});

// Average conditional log-likelihood and its gradient for softmax regression
// (the feature marginal is parameter-free and omitted).
double softmax_objective(const Family& family, const ParamVector& theta,
                         std::span<const SampleSet* const> sets, Eigen::VectorXd* gradient);

enum class FisherMode { Analytic, PerSampleOuterProduct, BatchGradientOuterProduct };

const char* to_string(FisherMode mode);

// Either a dense J, the per-sample score rows g_j (J = mean g_j g_j^T), or the
// mean gradient gbar (J = gbar gbar^T). Consumers use quad_form or
// quad_form_matrix so the per-sample form never has to be densified.
class FisherEstimate {
 public:
  static FisherEstimate analytic(Eigen::MatrixXd J);
  static FisherEstimate per_sample(Eigen::MatrixXd scores);
  static FisherEstimate batch(Eigen::VectorXd mean_gradient, std::size_t sample_count);

  FisherMode mode() const { return mode_; }
  std::size_t sample_count() const { return sample_count_; }
  int dim() const { return dim_; }

  // v^T J v.
  double quad_form(const Eigen::VectorXd& v) const;
  Eigen::MatrixXd dense() const;

  const Eigen::MatrixXd& scores() const { return scores_; }
  const Eigen::VectorXd& mean_gradient() const { return mean_gradient_; }

 private:
  FisherMode mode_ = FisherMode::Analytic;
  int dim_ = 0;
  std::size_t sample_count_ = 0;
  Eigen::MatrixXd matrix_;
  Eigen::MatrixXd scores_;
  Eigen::VectorXd mean_gradient_;
};

FisherEstimate empirical_fisher(const Family& family, const ParamVector& theta,
                                const SampleSet& samples, FisherMode mode);

struct QuadFormMatrix {
  Eigen::MatrixXd M;
  std::vector<double> theta_diff_norms;
};

// M[i][j] = (theta_i - theta_0)^T J (theta_j - theta_0). Per-sample estimates
// are accumulated as averages of v v^T with v = Theta^T g, summed over
// `partitions` contiguous row blocks in block order.
QuadFormMatrix quad_form_matrix(const FisherEstimate& fisher, const ParamVector& theta0,
                                std::span<const ParamVector> sources, int partitions = 1,
                                int workers = 1);

// (theta_1 - theta_0)^T J (theta_1 - theta_0) / d.
double t_scalar_single(const FisherEstimate& fisher, const ParamVector& theta0, const ParamVector& theta1);

}  // namespace tbudget
