#include "tbudget/planner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "tbudget/errors.hpp"
#include "tbudget/parallel.hpp"

namespace tbudget {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double multi_proxy_value(long N0, int d, long s, double quad) {
  const double total = static_cast<double>(N0 + s);
  const double sd = static_cast<double>(s);
  return 0.5 * d * (1.0 / total + sd * sd / (total * total) * quad / d);
}

Eigen::VectorXd upper_bounds(long s, std::span<const long> caps) {
  Eigen::VectorXd u(static_cast<Eigen::Index>(caps.size()));
  for (std::size_t i = 0; i < caps.size(); ++i)
    u(static_cast<Eigen::Index>(i)) = std::min(1.0, static_cast<double>(caps[i]) / static_cast<double>(s));
  return u;
}

// Equality-constrained minimizer over the free coordinates of alpha, with the
// others held at their bounds. Returns false when the solution leaves the box.
bool polish_on_free_set(const Eigen::MatrixXd& M, const Eigen::VectorXd& upper, Eigen::VectorXd& alpha) {
  const Eigen::Index K = alpha.size();
  constexpr double snap = 1e-10;
  std::vector<Eigen::Index> free_idx;
  Eigen::VectorXd fixed = Eigen::VectorXd::Zero(K);
  for (Eigen::Index i = 0; i < K; ++i) {
    if (alpha(i) <= snap) {
      fixed(i) = 0.0;
    } else if (alpha(i) >= upper(i) - snap) {
      fixed(i) = upper(i);
    } else {
      free_idx.push_back(i);
    }
  }
  const auto F = static_cast<Eigen::Index>(free_idx.size());
  if (F == 0) return false;
  Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(F + 1, F + 1);
  Eigen::VectorXd rhs(F + 1);
  const Eigen::VectorXd cross = M * fixed;
  for (Eigen::Index a = 0; a < F; ++a) {
    for (Eigen::Index b = 0; b < F; ++b) kkt(a, b) = 2.0 * M(free_idx[a], free_idx[b]);
    kkt(a, F) = 1.0;
    kkt(F, a) = 1.0;
    rhs(a) = -2.0 * cross(free_idx[a]);
  }
  rhs(F) = 1.0 - fixed.sum();
  const Eigen::VectorXd sol = kkt.completeOrthogonalDecomposition().solve(rhs);
  Eigen::VectorXd candidate = fixed;
  for (Eigen::Index a = 0; a < F; ++a) {
    const double v = sol(a);
    const Eigen::Index i = free_idx[a];
    if (!std::isfinite(v) || v < -1e-12 || v > upper(i) + 1e-12) return false;
    candidate(i) = std::clamp(v, 0.0, upper(i));
  }
  alpha = project_capped_simplex(candidate, upper);
  return true;
}

}  // namespace

double proxy_single(long N0, long n1, double t) { return proxy_single_high_dim(N0, n1, t, 1); }

double proxy_single_high_dim(long N0, long n1, double t, int d) {
  if (N0 < 1) throw std::invalid_argument("proxy: N0 must be at least 1");
  if (n1 < 0) throw std::invalid_argument("proxy: n1 must be nonnegative");
  if (d < 1) throw std::invalid_argument("proxy: d must be at least 1");
  const double total = static_cast<double>(N0 + n1);
  const double n = static_cast<double>(n1);
  return 0.5 * d * (1.0 / total + n * n * t / (total * total));
}

double proxy_single_derivative(double N0, double n1, double t) {
  const double total = N0 + n1;
  return 0.5 * (-1.0 / (total * total) + 2.0 * t * n1 * N0 / (total * total * total));
}

const char* to_string(Regime regime) {
  return regime == Regime::MonotoneDecreasing ? "monotone_decreasing" : "interior_minimum";
}

SingleOptimum optimal_single(long N0, long N1, double t) {
  if (N0 < 1 || N1 < 1) throw std::invalid_argument("optimal_single: N0 and N1 must be at least 1");
  if (!(t >= 0.0)) throw std::invalid_argument("optimal_single: t must be nonnegative");
  if (static_cast<double>(N0) * t <= 0.5) return {N1, Regime::MonotoneDecreasing, kNaN};

  const double stationary = static_cast<double>(N0) / (2.0 * static_cast<double>(N0) * t - 1.0);
  SingleOptimum out{N1, Regime::InteriorMinimum, stationary};
  if (stationary >= static_cast<double>(N1)) return out;
  const long lo = std::clamp(static_cast<long>(std::floor(stationary)), 0L, N1);
  const long hi = std::clamp(static_cast<long>(std::ceil(stationary)), 0L, N1);
  out.n1_star = proxy_single(N0, hi, t) < proxy_single(N0, lo, t) ? hi : lo;
  return out;
}

long TransferProblem::total_cap() const { return std::accumulate(caps.begin(), caps.end(), 0L); }

void TransferProblem::validate() const {
  if (N0 < 1) throw std::invalid_argument("transfer problem: N0 must be at least 1");
  if (d < 1) throw std::invalid_argument("transfer problem: d must be at least 1");
  if (stepnumber < 1) throw std::invalid_argument("transfer problem: stepnumber must be at least 1");
  for (long c : caps)
    if (c < 1) throw std::invalid_argument("transfer problem: caps must be at least 1");
  const auto K = static_cast<Eigen::Index>(caps.size());
  if (M.rows() != K || M.cols() != K) throw ShapeError("transfer problem: M must be K x K");
  if (K > 0 && (M - M.transpose()).cwiseAbs().maxCoeff() > 1e-9 * std::max(1.0, M.cwiseAbs().maxCoeff()))
    throw std::invalid_argument("transfer problem: M must be symmetric");
}

double proxy_multi(const TransferProblem& problem, long s, const Eigen::VectorXd& alpha) {
  if (s < 0) throw Infeasible("proxy_multi: negative s");
  if (s == 0) return 0.5 * problem.d / static_cast<double>(problem.N0);
  const auto K = static_cast<Eigen::Index>(problem.caps.size());
  if (alpha.size() != K) throw ShapeError("proxy_multi: alpha has wrong length");
  if (std::abs(alpha.sum() - 1.0) > 1e-9) throw Infeasible("proxy_multi: alpha does not sum to 1");
  for (Eigen::Index i = 0; i < K; ++i) {
    if (alpha(i) < -1e-12) throw Infeasible("proxy_multi: negative alpha");
    if (static_cast<double>(s) * alpha(i) > static_cast<double>(problem.caps[i]) + 0.5)
      throw Infeasible("proxy_multi: s * alpha_" + std::to_string(i) + " exceeds its cap");
  }
  return multi_proxy_value(problem.N0, problem.d, s, alpha.dot(problem.M * alpha));
}

Eigen::VectorXd project_capped_simplex(const Eigen::VectorXd& y, const Eigen::VectorXd& upper) {
  if (y.size() != upper.size() || y.size() == 0) throw ShapeError("capped simplex: size mismatch");
  if (upper.sum() < 1.0 - 1e-12 || upper.minCoeff() < 0.0) throw Infeasible("capped simplex: empty feasible set");
  const auto mass = [&](double tau) { return (y.array() - tau).max(0.0).min(upper.array()).sum(); };
  double lo = (y - upper).minCoeff() - 1.0;  // mass(lo) = sum(upper) >= 1
  double hi = y.maxCoeff();                  // mass(hi) = 0
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    (mass(mid) > 1.0 ? lo : hi) = mid;
  }
  const double tau = 0.5 * (lo + hi);
  Eigen::VectorXd a = (y.array() - tau).max(0.0).min(upper.array()).matrix();

  // Spread the residual over coordinates with room in its direction.
  for (int pass = 0; pass < 4; ++pass) {
    const double r = 1.0 - a.sum();
    if (r == 0.0) break;
    int room = 0;
    for (Eigen::Index i = 0; i < a.size(); ++i) room += r > 0.0 ? a(i) < upper(i) : a(i) > 0.0;
    if (room == 0) break;
    for (Eigen::Index i = 0; i < a.size(); ++i)
      if (r > 0.0 ? a(i) < upper(i) : a(i) > 0.0) a(i) = std::clamp(a(i) + r / room, 0.0, upper(i));
  }
  return a;
}

QpResult solve_alpha_qp(const Eigen::MatrixXd& M, long s, std::span<const long> caps, const QpOptions& options) {
  const auto K = static_cast<Eigen::Index>(caps.size());
  if (K == 0) throw ShapeError("solve_alpha_qp: no sources");
  if (M.rows() != K || M.cols() != K) throw ShapeError("solve_alpha_qp: M must be K x K");
  if (s < 1) throw Infeasible("solve_alpha_qp: s must be positive");
  if (s > std::accumulate(caps.begin(), caps.end(), 0L))
    throw Infeasible("solve_alpha_qp: s = " + std::to_string(s) + " exceeds the total cap");

  const Eigen::VectorXd upper = upper_bounds(s, caps);
  QpResult out;
  out.alpha = project_capped_simplex(Eigen::VectorXd::Constant(K, 1.0 / K), upper);

  const Eigen::MatrixXd sym = 0.5 * (M + M.transpose());
  const double lambda_max = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(sym, Eigen::EigenvaluesOnly)
                                .eigenvalues()
                                .maxCoeff();
  if (!(lambda_max > 0.0)) {
    out.objective = out.alpha.dot(sym * out.alpha);
    return out;
  }
  // Work on M / lambda_max so the stopping tolerance and step size do not
  // depend on the scale of M.
  const Eigen::MatrixXd Q = sym / lambda_max;
  const double step = 0.5;  // 1 / L with L = 2 * lambda_max(Q)
  double f = out.alpha.dot(Q * out.alpha);
  int it = 0;
  while (it < options.max_iterations) {
    ++it;
    Eigen::VectorXd next = project_capped_simplex(out.alpha - step * 2.0 * (Q * out.alpha), upper);
    const double fn = next.dot(Q * next);
    const double improvement = f - fn;
    out.alpha = std::move(next);
    f = fn;
    if (improvement < options.tolerance) break;
  }
  Eigen::VectorXd polished = out.alpha;
  if (polish_on_free_set(Q, upper, polished) && polished.dot(Q * polished) <= f) out.alpha = polished;
  out.iterations = it;
  out.objective = out.alpha.dot(sym * out.alpha);
  return out;
}

TransferPlan plan_multi(const TransferProblem& problem, const PlanOptions& options) {
  problem.validate();
  const auto K = static_cast<Eigen::Index>(problem.caps.size());
  TransferPlan plan;
  const double no_transfer = 0.5 * problem.d / static_cast<double>(problem.N0);
  if (K == 0) {
    plan.predicted_proxy = plan.continuous_proxy = no_transfer;
    if (options.keep_curve) plan.curve = ProxyCurve{{{0, no_transfer}}, Regime::MonotoneDecreasing, kNaN};
    return plan;
  }

  const long total = problem.total_cap();
  const long steps = problem.stepnumber;
  std::vector<long> grid{0};
  for (long k = 1; k <= steps; ++k) {
    const long v = (2 * k * total + steps) / (2 * steps);  // round(k * total / steps), halves up
    if (v > grid.back()) grid.push_back(v);
  }

  std::vector<double> value(grid.size());
  std::vector<Eigen::VectorXd> alpha(grid.size());
  parallel_chunks(grid.size(), static_cast<std::size_t>(std::max(1, options.workers)), options.workers,
                  [&](std::size_t b, std::size_t e, std::size_t) {
                    for (std::size_t g = b; g < e; ++g) {
                      if (grid[g] == 0) {
                        value[g] = no_transfer;
                        alpha[g] = Eigen::VectorXd::Zero(K);
                        continue;
                      }
                      QpResult qp = solve_alpha_qp(problem.M, grid[g], problem.caps, options.qp);
                      value[g] = multi_proxy_value(problem.N0, problem.d, grid[g], qp.objective);
                      alpha[g] = std::move(qp.alpha);
                    }
                  });

  std::size_t best = 0;
  for (std::size_t g = 1; g < grid.size(); ++g)
    if (value[g] < value[best]) best = g;

  const long s = grid[best];
  plan.continuous_alpha = alpha[best];
  plan.continuous_proxy = value[best];
  if (best > 0) plan.grid_step_variation = std::abs(value[best] - value[best - 1]);
  if (best + 1 < grid.size())
    plan.grid_step_variation = std::max(plan.grid_step_variation, std::abs(value[best + 1] - value[best]));

  plan.s_star = s;
  plan.n_star.assign(static_cast<std::size_t>(K), 0);
  plan.alpha_star = Eigen::VectorXd::Zero(K);
  if (s > 0) {
    std::vector<double> frac(static_cast<std::size_t>(K));
    long assigned = 0;
    for (Eigen::Index i = 0; i < K; ++i) {
      const double raw = static_cast<double>(s) * alpha[best](i);
      const long whole = std::min(static_cast<long>(std::floor(raw)), problem.caps[i]);
      plan.n_star[i] = std::max(0L, whole);
      frac[i] = raw - std::floor(raw);
      assigned += plan.n_star[i];
    }
    std::vector<std::size_t> order(static_cast<std::size_t>(K));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
    long remaining = s - assigned;
    while (remaining > 0) {
      bool progressed = false;
      for (std::size_t i : order) {
        if (remaining == 0) break;
        if (plan.n_star[i] < problem.caps[i]) {
          ++plan.n_star[i];
          --remaining;
          progressed = true;
        }
      }
      if (!progressed) throw Infeasible("plan_multi: integerization ran out of cap headroom");
    }
    for (Eigen::Index i = 0; i < K; ++i)
      plan.alpha_star(i) = static_cast<double>(plan.n_star[i]) / static_cast<double>(s);
  }
  plan.predicted_proxy = proxy_multi(problem, s, plan.alpha_star);

  if (options.keep_curve) {
    ProxyCurve curve;
    curve.points.reserve(grid.size());
    for (std::size_t g = 0; g < grid.size(); ++g) curve.points.push_back({grid[g], value[g]});
    curve.regime = best + 1 == grid.size() ? Regime::MonotoneDecreasing : Regime::InteriorMinimum;
    curve.minimum_location = curve.regime == Regime::InteriorMinimum ? static_cast<double>(s) : kNaN;
    plan.curve = std::move(curve);
  }
  return plan;
}

ProxyCurve regime_curve(long N0, long N1, double t, int grid_points) {
  if (grid_points < 2) throw std::invalid_argument("regime_curve: grid_points must be at least 2");
  const SingleOptimum opt = optimal_single(N0, N1, t);
  ProxyCurve curve;
  curve.regime = opt.regime;
  curve.minimum_location = opt.regime == Regime::InteriorMinimum ? opt.stationary_point : kNaN;
  const long last = grid_points - 1;
  for (long k = 0; k <= last; ++k) {
    const long n1 = (2 * k * N1 + last) / (2 * last);
    if (!curve.points.empty() && n1 <= curve.points.back().quantity) continue;
    curve.points.push_back({n1, proxy_single(N0, n1, t)});
  }
  return curve;
}

}  // namespace tbudget
