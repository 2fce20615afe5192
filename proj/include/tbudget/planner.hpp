#pragma once

// Leading-order KL generalization-error proxies and the transfer-quantity
// planners built on them.

#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace tbudget {

// 1/2 * (1/(N0+n1) + n1^2 t / (N0+n1)^2)
double proxy_single(long N0, long n1, double t);

// d/2 * (1/(N0+n1) + n1^2 t / (N0+n1)^2)
double proxy_single_high_dim(long N0, long n1, double t, int d);

// d/dn1 of proxy_single, treating n1 as real.
double proxy_single_derivative(double N0, double n1, double t);

enum class Regime { MonotoneDecreasing, InteriorMinimum };

const char* to_string(Regime regime);

struct SingleOptimum {
  long n1_star = 0;
  Regime regime = Regime::MonotoneDecreasing;
  // N0 / (2 N0 t - 1) in the interior regime; NaN otherwise.
  double stationary_point = 0.0;
};

// Closed-form optimal single-source quantity. The real stationary point is
// integerized by comparing its floor and ceiling (ties go to the smaller).
SingleOptimum optimal_single(long N0, long N1, double t);

struct TransferProblem {
  long N0 = 1;
  int d = 1;
  std::vector<long> caps;
  // K x K, symmetric PSD: Theta^T J Theta.
  Eigen::MatrixXd M;
  int stepnumber = 1000;

  long total_cap() const;
  void validate() const;
};

// d/2 * (1/(N0+s) + s^2/(N0+s)^2 * alpha^T M alpha / d). alpha must lie on the
// simplex with s * alpha_i <= N_i + 0.5; ignored when s == 0.
double proxy_multi(const TransferProblem& problem, long s, const Eigen::VectorXd& alpha);

// Euclidean projection of y onto {0 <= a_i <= upper_i, sum a = 1}, by bisection
// on the shift multiplier. Requires sum(upper) >= 1.
Eigen::VectorXd project_capped_simplex(const Eigen::VectorXd& y, const Eigen::VectorXd& upper);

struct QpOptions {
  int max_iterations = 10000;
  double tolerance = 1e-12;
};

struct QpResult {
  Eigen::VectorXd alpha;
  double objective = 0.0;
  int iterations = 0;
};

// Minimizes alpha^T M alpha over the capped simplex A(s) = {sum alpha = 1,
// 0 <= alpha_i <= N_i / s} by projected gradient descent, finished with an
// equality-constrained solve on the detected free set.
QpResult solve_alpha_qp(const Eigen::MatrixXd& M, long s, std::span<const long> caps,
                        const QpOptions& options = {});

struct ProxyCurvePoint {
  long quantity = 0;
  double proxy = 0.0;
};

struct ProxyCurve {
  std::vector<ProxyCurvePoint> points;
  Regime regime = Regime::MonotoneDecreasing;
  // Interior minimum location (NaN in the monotone regime).
  double minimum_location = 0.0;
};

struct TransferPlan {
  long s_star = 0;
  // n_star / s_star, the proportions actually realized (empty when K == 0).
  Eigen::VectorXd alpha_star;
  std::vector<long> n_star;
  // proxy_multi at (s_star, alpha_star).
  double predicted_proxy = 0.0;

  // Grid optimum before integerization.
  Eigen::VectorXd continuous_alpha;
  double continuous_proxy = 0.0;
  // Largest proxy change between the optimal grid point and its grid
  // neighbours; bounds the integerization gap.
  double grid_step_variation = 0.0;

  std::optional<ProxyCurve> curve;
};

struct PlanOptions {
  bool keep_curve = false;
  int workers = 1;
  QpOptions qp;
};

// Grid over s in {0} U {round(k * sum(caps) / stepnumber)}, QP over alpha at
// each s, smallest s among ties, then largest-remainder integerization.
TransferPlan plan_multi(const TransferProblem& problem, const PlanOptions& options = {});

// Even n1 grid over [0, N1] (rounded to integers, duplicates dropped).
ProxyCurve regime_curve(long N0, long N1, double t, int grid_points);

}  // namespace tbudget
