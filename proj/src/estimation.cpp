#include "tbudget/estimation.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "tbudget/errors.hpp"
#include "tbudget/parallel.hpp"

namespace tbudget {

namespace {

std::size_t count_samples(std::span<const SampleSet* const> sets) {
  std::size_t n = 0;
  for (const SampleSet* s : sets) n += s->size();
  return n;
}

MleResult gaussian_mle(const Family& f, std::span<const SampleSet* const> sets) {
  const int d = f.dim();
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(d);
  std::size_t n = 0;
  for (const SampleSet* s : sets) {
    if (s->empty()) continue;
    if (s->width() != d) throw ShapeError("gaussian mle: sample width mismatch");
    const auto& r = s->reals();
    for (std::size_t i = 0; i < s->size(); ++i)
      for (int j = 0; j < d; ++j) sum(j) += r[i * d + j];
    n += s->size();
  }
  MleResult out;
  out.theta = sum / static_cast<double>(n);
  return out;
}

MleResult discrete_mle(const Family& f, std::span<const SampleSet* const> sets) {
  const int m = f.classes();
  std::vector<double> counts(static_cast<std::size_t>(m), 0.0);
  for (const SampleSet* s : sets)
    for (int label : s->labels()) {
      if (label < 0 || label >= m) throw InvalidSample(f.name() + ": label out of range");
      counts[static_cast<std::size_t>(label)] += 1.0;
    }
  MleResult out;
  if (std::any_of(counts.begin(), counts.end(), [](double c) { return c == 0.0; })) {
    for (double& c : counts) c += 0.5;
    out.smoothed = true;
  }
  if (f.kind() == FamilyKind::Bernoulli) {
    out.theta = ParamVector::Constant(1, std::log(counts[1]) - std::log(counts[0]));
  } else {
    out.theta.resize(m - 1);
    for (int k = 0; k + 1 < m; ++k) out.theta(k) = std::log(counts[k]) - std::log(counts[m - 1]);
  }
  return out;
}

MleResult softmax_mle(const Family& f, std::span<const SampleSet* const> sets, const MleOptions& opt) {
  MleResult out;
  ParamVector theta = opt.start ? *opt.start : ParamVector::Zero(f.dim());
  f.check_parameter(theta);
  Eigen::VectorXd grad(f.dim()), trial_grad(f.dim());
  double value = softmax_objective(f, theta, sets, &grad);
  double step = opt.initial_step;
  int it = 0;
  out.converged = false;
  while (it < opt.max_iterations) {
    if (grad.lpNorm<Eigen::Infinity>() < opt.grad_tol) {
      out.converged = true;
      break;
    }
    ++it;
    const ParamVector candidate = theta + step * grad;
    const double cand_value = softmax_objective(f, candidate, sets, &trial_grad);
    if (!std::isfinite(cand_value)) throw Diverged("softmax mle: non-finite objective");
    if (cand_value >= value) {
      theta = candidate;
      value = cand_value;
      grad = trial_grad;
    } else {
      step *= 0.5;
      if (step < 1e-300) break;
    }
  }
  if (!out.converged && grad.lpNorm<Eigen::Infinity>() < opt.grad_tol) out.converged = true;
  out.theta = std::move(theta);
  out.iterations = it;
  out.mean_log_likelihood = value;
  return out;
}

}  // namespace

std::size_t PooledDataset::total_size() const {
  std::size_t n = target.size();
  for (const auto& s : sources) n += s.size();
  return n;
}

void PooledDataset::validate() const {
  for (int tag : target.tasks())
    if (tag != 0) throw ShapeError("pooled dataset: target sample carries task tag " + std::to_string(tag));
  for (std::size_t i = 0; i < sources.size(); ++i) {
    for (int tag : sources[i].tasks())
      if (tag != static_cast<int>(i) + 1)
        throw ShapeError("pooled dataset: source " + std::to_string(i) + " sample carries task tag " +
                         std::to_string(tag));
    if (!caps.empty()) {
      if (caps.size() != sources.size()) throw ShapeError("pooled dataset: caps/sources length mismatch");
      if (static_cast<long>(sources[i].size()) > caps[i])
        throw ShapeError("pooled dataset: source " + std::to_string(i) + " exceeds its cap");
    }
  }
}

double softmax_objective(const Family& f, const ParamVector& theta, std::span<const SampleSet* const> sets,
                         Eigen::VectorXd* gradient) {
  const int F = f.feature_dim();
  const int C = f.classes();
  const std::size_t n = count_samples(sets);
  if (gradient) gradient->setZero(f.dim());
  if (n == 0) return 0.0;
  const Eigen::Map<const Eigen::MatrixXd> W(theta.data(), F, C);  // column c = class c weights
  Eigen::VectorXd eta(C);
  double total = 0.0;
  for (const SampleSet* s : sets) {
    const auto& r = s->reals();
    const auto& labels = s->labels();
    for (std::size_t i = 0; i < s->size(); ++i) {
      const Eigen::Map<const Eigen::VectorXd> z(r.data() + i * F, F);
      eta.noalias() = W.transpose() * z;
      const double mx = eta.maxCoeff();
      eta = (eta.array() - mx).exp();
      const double sum = eta.sum();
      const int y = labels[i];
      total += std::log(eta(y) / sum);
      if (gradient) {
        eta /= sum;
        eta(y) -= 1.0;  // now p - e_y
        Eigen::Map<Eigen::MatrixXd> G(gradient->data(), F, C);
        G.noalias() -= z * eta.transpose();
      }
    }
  }
  if (gradient) *gradient /= static_cast<double>(n);
  return total / static_cast<double>(n);
}

MleResult fit_mle(const Family& family, std::span<const SampleSet* const> sets, const MleOptions& options) {
  if (count_samples(sets) == 0) throw InsufficientData("pooled mle: no samples");
  switch (family.kind()) {
    case FamilyKind::GaussianMean:
      return gaussian_mle(family, sets);
    case FamilyKind::Bernoulli:
    case FamilyKind::Categorical:
      return discrete_mle(family, sets);
    case FamilyKind::SoftmaxRegression:
      return softmax_mle(family, sets, options);
  }
  return {};
}

MleResult pooled_mle(const Family& family, const PooledDataset& data, const MleOptions& options) {
  data.validate();
  std::vector<const SampleSet*> sets;
  sets.reserve(data.sources.size() + 1);
  sets.push_back(&data.target);
  for (const auto& s : data.sources) sets.push_back(&s);
  return fit_mle(family, sets, options);
}

// ---------------------------------------------------------------------------

const char* to_string(FisherMode mode) {
  switch (mode) {
    case FisherMode::Analytic: return "analytic";
    case FisherMode::PerSampleOuterProduct: return "per_sample";
    case FisherMode::BatchGradientOuterProduct: return "batch";
  }
  return "?";
}

FisherEstimate FisherEstimate::analytic(Eigen::MatrixXd J) {
  if (J.rows() != J.cols()) throw ShapeError("fisher: matrix must be square");
  FisherEstimate f;
  f.mode_ = FisherMode::Analytic;
  f.dim_ = static_cast<int>(J.rows());
  f.matrix_ = std::move(J);
  return f;
}

FisherEstimate FisherEstimate::per_sample(Eigen::MatrixXd scores) {
  if (scores.rows() == 0) throw InsufficientData("empirical fisher: no samples");
  FisherEstimate f;
  f.mode_ = FisherMode::PerSampleOuterProduct;
  f.dim_ = static_cast<int>(scores.cols());
  f.sample_count_ = static_cast<std::size_t>(scores.rows());
  f.scores_ = std::move(scores);
  return f;
}

FisherEstimate FisherEstimate::batch(Eigen::VectorXd mean_gradient, std::size_t sample_count) {
  FisherEstimate f;
  f.mode_ = FisherMode::BatchGradientOuterProduct;
  f.dim_ = static_cast<int>(mean_gradient.size());
  f.sample_count_ = sample_count;
  f.mean_gradient_ = std::move(mean_gradient);
  return f;
}

double FisherEstimate::quad_form(const Eigen::VectorXd& v) const {
  if (v.size() != dim_) throw ShapeError("fisher quad_form: dimension mismatch");
  switch (mode_) {
    case FisherMode::Analytic:
      return v.dot(matrix_ * v);
    case FisherMode::PerSampleOuterProduct:
      return (scores_ * v).squaredNorm() / static_cast<double>(sample_count_);
    case FisherMode::BatchGradientOuterProduct: {
      const double a = mean_gradient_.dot(v);
      return a * a;
    }
  }
  return 0.0;
}

Eigen::MatrixXd FisherEstimate::dense() const {
  switch (mode_) {
    case FisherMode::Analytic:
      return matrix_;
    case FisherMode::PerSampleOuterProduct:
      return scores_.transpose() * scores_ / static_cast<double>(sample_count_);
    case FisherMode::BatchGradientOuterProduct:
      return mean_gradient_ * mean_gradient_.transpose();
  }
  return {};
}

FisherEstimate empirical_fisher(const Family& family, const ParamVector& theta, const SampleSet& samples,
                                FisherMode mode) {
  family.check_parameter(theta);
  if (mode == FisherMode::Analytic) return FisherEstimate::analytic(fisher_analytic(family, theta));
  if (samples.empty()) throw InsufficientData("empirical fisher: no samples");
  const int d = family.dim();
  const std::size_t n = samples.size();
  if (mode == FisherMode::PerSampleOuterProduct) {
    Eigen::MatrixXd G(static_cast<Eigen::Index>(n), d);
    Eigen::VectorXd g(d);
    for (std::size_t i = 0; i < n; ++i) {
      score_into(family, theta, samples[i], g);
      G.row(static_cast<Eigen::Index>(i)) = g.transpose();
    }
    return FisherEstimate::per_sample(std::move(G));
  }
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(d), g(d);
  for (std::size_t i = 0; i < n; ++i) {
    score_into(family, theta, samples[i], g);
    mean += g;
  }
  mean /= static_cast<double>(n);
  return FisherEstimate::batch(std::move(mean), n);
}

QuadFormMatrix quad_form_matrix(const FisherEstimate& fisher, const ParamVector& theta0,
                                std::span<const ParamVector> sources, int partitions, int workers) {
  const int d = fisher.dim();
  if (theta0.size() != d) throw ShapeError("quad_form_matrix: theta0 has wrong dimension");
  const auto K = static_cast<Eigen::Index>(sources.size());
  if (K < 1) throw ShapeError("quad_form_matrix: need at least one source");
  Eigen::MatrixXd Theta(d, K);
  QuadFormMatrix out;
  out.theta_diff_norms.reserve(sources.size());
  for (Eigen::Index k = 0; k < K; ++k) {
    if (sources[k].size() != d)
      throw ShapeError("quad_form_matrix: source " + std::to_string(k) + " has wrong dimension");
    Theta.col(k) = sources[k] - theta0;
    out.theta_diff_norms.push_back(Theta.col(k).norm());
  }

  switch (fisher.mode()) {
    case FisherMode::Analytic:
      out.M = Theta.transpose() * fisher.dense() * Theta;
      break;
    case FisherMode::BatchGradientOuterProduct: {
      const Eigen::VectorXd v = Theta.transpose() * fisher.mean_gradient();
      out.M = v * v.transpose();
      break;
    }
    case FisherMode::PerSampleOuterProduct: {
      const Eigen::MatrixXd& G = fisher.scores();
      const std::size_t n = fisher.sample_count();
      const std::size_t blocks = static_cast<std::size_t>(std::max(1, partitions));
      std::vector<Eigen::MatrixXd> partial(blocks, Eigen::MatrixXd::Zero(K, K));
      parallel_chunks(n, blocks, workers, [&](std::size_t b, std::size_t e, std::size_t c) {
        Eigen::VectorXd v(K);
        for (std::size_t l = b; l < e; ++l) {
          v.noalias() = Theta.transpose() * G.row(static_cast<Eigen::Index>(l)).transpose();
          partial[c].noalias() += v * v.transpose();
        }
      });
      out.M = Eigen::MatrixXd::Zero(K, K);
      for (const auto& p : partial) out.M += p;
      out.M /= static_cast<double>(n);
      break;
    }
  }
  // Exact symmetry; the accumulation is symmetric up to summation order only.
  out.M = 0.5 * (out.M + out.M.transpose()).eval();
  return out;
}

double t_scalar_single(const FisherEstimate& fisher, const ParamVector& theta0, const ParamVector& theta1) {
  if (theta0.size() != fisher.dim() || theta1.size() != fisher.dim())
    throw ShapeError("t_scalar_single: dimension mismatch");
  return fisher.quad_form(theta1 - theta0) / static_cast<double>(fisher.dim());
}

}  // namespace tbudget
