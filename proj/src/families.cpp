#include "tbudget/families.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "tbudget/errors.hpp"

namespace tbudget {

namespace {

constexpr double kLogTwoPi = 1.8378770664093454835606594728112;
constexpr std::uint64_t kSoftmaxKlSeed = 0x6b6c2d736f66746dULL;

double log1p_exp(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Probabilities of the m classes for categorical logits (theta, 0).
Eigen::VectorXd categorical_probabilities(const ParamVector& theta) {
  const Eigen::Index m = theta.size() + 1;
  Eigen::VectorXd eta(m);
  eta.head(m - 1) = theta;
  eta(m - 1) = 0.0;
  const double mx = eta.maxCoeff();
  Eigen::VectorXd p = (eta.array() - mx).exp();
  return p / p.sum();
}

double log_sum_exp(const Eigen::VectorXd& eta) {
  const double mx = eta.maxCoeff();
  return mx + std::log((eta.array() - mx).exp().sum());
}

Eigen::VectorXd softmax_logits(const Family& f, const ParamVector& theta, std::span<const double> z) {
  const int F = f.feature_dim();
  const Eigen::Map<const Eigen::VectorXd> zv(z.data(), F);
  Eigen::VectorXd eta(f.classes());
  for (int c = 0; c < f.classes(); ++c) eta(c) = theta.segment(c * F, F).dot(zv);
  return eta;
}

double feature_log_marginal(const Family& f, std::span<const double> z) {
  const FeatureDistribution& fd = f.features();
  if (fd.kind == FeatureDistribution::Kind::FiniteSet) {
    const auto hit = std::find_if(fd.points.begin(), fd.points.end(), [&](const auto& p) {
      return std::equal(p.begin(), p.end(), z.begin(), z.end());
    });
    if (hit == fd.points.end()) throw InvalidSample("softmax: feature vector not in the finite feature set");
    return -std::log(static_cast<double>(fd.points.size()));
  }
  double acc = 0.0;
  const std::size_t first = fd.intercept ? 1 : 0;
  if (fd.intercept && z[0] != 1.0) throw InvalidSample("softmax: intercept coordinate must be 1");
  for (std::size_t j = first; j < z.size(); ++j) {
    const double u = z[j] / fd.scale;
    acc += -0.5 * kLogTwoPi - std::log(fd.scale) - 0.5 * u * u;
  }
  return acc;
}

void draw_features(const Family& f, RandomStream& rng, std::span<double> z) {
  const FeatureDistribution& fd = f.features();
  if (fd.kind == FeatureDistribution::Kind::FiniteSet) {
    const auto& p = fd.points[rng.below(fd.points.size())];
    std::copy(p.begin(), p.end(), z.begin());
    return;
  }
  std::size_t j = 0;
  if (fd.intercept) z[j++] = 1.0;
  for (; j < z.size(); ++j) z[j] = fd.scale * rng.normal();
}

int draw_class(const Eigen::VectorXd& p, RandomStream& rng) {
  const double u = rng.uniform();
  double cum = 0.0;
  for (Eigen::Index c = 0; c + 1 < p.size(); ++c) {
    cum += p(c);
    if (u < cum) return static_cast<int>(c);
  }
  return static_cast<int>(p.size() - 1);
}

void check_sample(const Family& f, const Sample& x) {
  if (static_cast<int>(x.reals.size()) != f.observation_width())
    throw InvalidSample("sample width does not match " + f.name());
  for (double v : x.reals)
    if (!std::isfinite(v)) throw InvalidSample("non-finite observation");
  switch (f.kind()) {
    case FamilyKind::GaussianMean:
      break;
    case FamilyKind::Bernoulli:
      if (x.label != 0 && x.label != 1) throw InvalidSample("bernoulli: label must be 0 or 1");
      break;
    case FamilyKind::Categorical:
    case FamilyKind::SoftmaxRegression:
      if (x.label < 0 || x.label >= f.classes())
        throw InvalidSample(f.name() + ": class index out of range");
      break;
  }
}

double categorical_kl(const Eigen::VectorXd& pa, const Eigen::VectorXd& pb) {
  double kl = 0.0;
  for (Eigen::Index c = 0; c < pa.size(); ++c)
    if (pa(c) > 0.0) kl += pa(c) * (std::log(pa(c)) - std::log(pb(c)));
  return std::max(kl, 0.0);
}

}  // namespace

// ---------------------------------------------------------------------------

Family Family::gaussian(double sigma, int dim) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw InvalidParameter("gaussian: sigma must be positive");
  if (dim < 1) throw InvalidParameter("gaussian: dim must be at least 1");
  Family f;
  f.kind_ = FamilyKind::GaussianMean;
  f.sigma_ = sigma;
  f.gauss_dim_ = dim;
  return f;
}

Family Family::bernoulli() {
  Family f;
  f.kind_ = FamilyKind::Bernoulli;
  f.classes_ = 2;
  return f;
}

Family Family::categorical(int classes) {
  if (classes < 2) throw InvalidParameter("categorical: need at least 2 classes");
  Family f;
  f.kind_ = FamilyKind::Categorical;
  f.classes_ = classes;
  return f;
}

Family Family::softmax(int feature_dim, int classes, FeatureDistribution features) {
  if (feature_dim < 1) throw InvalidParameter("softmax: feature_dim must be at least 1");
  if (classes < 2) throw InvalidParameter("softmax: need at least 2 classes");
  if (features.kind == FeatureDistribution::Kind::FiniteSet) {
    if (features.points.empty()) throw InvalidParameter("softmax: finite feature set is empty");
    for (const auto& p : features.points)
      if (static_cast<int>(p.size()) != feature_dim)
        throw InvalidParameter("softmax: feature point has wrong length");
  } else if (!(features.scale > 0.0)) {
    throw InvalidParameter("softmax: feature scale must be positive");
  }
  Family f;
  f.kind_ = FamilyKind::SoftmaxRegression;
  f.feature_dim_ = feature_dim;
  f.classes_ = classes;
  f.features_ = std::move(features);
  return f;
}

int Family::dim() const {
  switch (kind_) {
    case FamilyKind::GaussianMean: return gauss_dim_;
    case FamilyKind::Bernoulli: return 1;
    case FamilyKind::Categorical: return classes_ - 1;
    case FamilyKind::SoftmaxRegression: return feature_dim_ * classes_;
  }
  return 0;
}

int Family::observation_width() const {
  switch (kind_) {
    case FamilyKind::GaussianMean: return gauss_dim_;
    case FamilyKind::SoftmaxRegression: return feature_dim_;
    default: return 0;
  }
}

bool Family::has_analytic_fisher() const {
  return kind_ != FamilyKind::SoftmaxRegression ||
         features_.kind == FeatureDistribution::Kind::FiniteSet;
}

std::string Family::name() const {
  std::ostringstream os;
  switch (kind_) {
    case FamilyKind::GaussianMean: os << "gaussian(sigma=" << sigma_ << ",dim=" << gauss_dim_ << ")"; break;
    case FamilyKind::Bernoulli: os << "bernoulli"; break;
    case FamilyKind::Categorical: os << "categorical(m=" << classes_ << ")"; break;
    case FamilyKind::SoftmaxRegression:
      os << "softmax(features=" << feature_dim_ << ",classes=" << classes_ << ")";
      break;
  }
  return os.str();
}

void Family::check_parameter(const ParamVector& theta) const {
  if (theta.size() != dim())
    throw InvalidParameter(name() + ": expected " + std::to_string(dim()) + " parameters, got " +
                           std::to_string(theta.size()));
  if (!theta.allFinite()) throw InvalidParameter(name() + ": non-finite parameter");
}

// ---------------------------------------------------------------------------

void SampleSet::reserve(std::size_t n) {
  reals_.reserve(n * static_cast<std::size_t>(width_));
  labels_.reserve(n);
  tasks_.reserve(n);
}

void SampleSet::push_back(std::span<const double> reals, int label, int task) {
  if (static_cast<int>(reals.size()) != width_) throw ShapeError("SampleSet: width mismatch");
  reals_.insert(reals_.end(), reals.begin(), reals.end());
  labels_.push_back(label);
  tasks_.push_back(task);
}

void SampleSet::append(const SampleSet& other) {
  if (other.empty()) return;
  if (empty()) width_ = other.width_;
  if (other.width_ != width_) throw ShapeError("SampleSet: width mismatch on append");
  reals_.insert(reals_.end(), other.reals_.begin(), other.reals_.end());
  labels_.insert(labels_.end(), other.labels_.begin(), other.labels_.end());
  tasks_.insert(tasks_.end(), other.tasks_.begin(), other.tasks_.end());
}

void SampleSet::clear() {
  reals_.clear();
  labels_.clear();
  tasks_.clear();
}

// ---------------------------------------------------------------------------

Eigen::VectorXd softmax_probabilities(const Family& family, const ParamVector& theta,
                                      std::span<const double> features) {
  Eigen::VectorXd eta = softmax_logits(family, theta, features);
  eta.array() -= eta.maxCoeff();
  eta = eta.array().exp();
  return eta / eta.sum();
}

int softmax_predict(const Family& family, const ParamVector& theta, std::span<const double> features) {
  const Eigen::VectorXd eta = softmax_logits(family, theta, features);
  Eigen::Index best = 0;
  eta.maxCoeff(&best);
  return static_cast<int>(best);
}

double log_prob(const Family& family, const ParamVector& theta, const Sample& x) {
  family.check_parameter(theta);
  check_sample(family, x);
  switch (family.kind()) {
    case FamilyKind::GaussianMean: {
      const double s = family.sigma();
      double acc = 0.0;
      for (Eigen::Index j = 0; j < theta.size(); ++j) {
        const double u = (x.reals[j] - theta(j)) / s;
        acc += -0.5 * kLogTwoPi - std::log(s) - 0.5 * u * u;
      }
      return acc;
    }
    case FamilyKind::Bernoulli:
      return x.label * theta(0) - log1p_exp(theta(0));
    case FamilyKind::Categorical: {
      Eigen::VectorXd eta(theta.size() + 1);
      eta.head(theta.size()) = theta;
      eta(theta.size()) = 0.0;
      return eta(x.label) - log_sum_exp(eta);
    }
    case FamilyKind::SoftmaxRegression: {
      const Eigen::VectorXd eta = softmax_logits(family, theta, x.reals);
      return eta(x.label) - log_sum_exp(eta) + feature_log_marginal(family, x.reals);
    }
  }
  return 0.0;
}

void score_into(const Family& family, const ParamVector& theta, const Sample& x,
                Eigen::Ref<Eigen::VectorXd> out) {
  switch (family.kind()) {
    case FamilyKind::GaussianMean: {
      const double inv_var = 1.0 / (family.sigma() * family.sigma());
      for (Eigen::Index j = 0; j < theta.size(); ++j) out(j) = (x.reals[j] - theta(j)) * inv_var;
      return;
    }
    case FamilyKind::Bernoulli:
      out(0) = x.label - logistic(theta(0));
      return;
    case FamilyKind::Categorical: {
      const Eigen::VectorXd p = categorical_probabilities(theta);
      for (Eigen::Index k = 0; k < theta.size(); ++k) out(k) = (x.label == k ? 1.0 : 0.0) - p(k);
      return;
    }
    case FamilyKind::SoftmaxRegression: {
      const int F = family.feature_dim();
      const Eigen::VectorXd p = softmax_probabilities(family, theta, x.reals);
      const Eigen::Map<const Eigen::VectorXd> z(x.reals.data(), F);
      for (int c = 0; c < family.classes(); ++c)
        out.segment(c * F, F) = ((c == x.label ? 1.0 : 0.0) - p(c)) * z;
      return;
    }
  }
}

ParamVector score(const Family& family, const ParamVector& theta, const Sample& x) {
  family.check_parameter(theta);
  check_sample(family, x);
  ParamVector g(family.dim());
  score_into(family, theta, x, g);
  return g;
}

void sample_into(SampleSet& out, const Family& family, const ParamVector& theta, RandomStream& rng,
                 std::size_t n, int task) {
  family.check_parameter(theta);
  if (out.empty() && out.width() != family.observation_width()) out = SampleSet(family.observation_width());
  if (out.width() != family.observation_width()) throw ShapeError("sample_into: width mismatch");
  out.reserve(out.size() + n);
  switch (family.kind()) {
    case FamilyKind::GaussianMean: {
      std::vector<double> x(static_cast<std::size_t>(theta.size()));
      for (std::size_t i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < theta.size(); ++j) x[j] = theta(j) + family.sigma() * rng.normal();
        out.push_back(x, 0, task);
      }
      return;
    }
    case FamilyKind::Bernoulli: {
      const double p = logistic(theta(0));
      for (std::size_t i = 0; i < n; ++i) out.push_back({}, rng.uniform() < p ? 1 : 0, task);
      return;
    }
    case FamilyKind::Categorical: {
      const Eigen::VectorXd p = categorical_probabilities(theta);
      for (std::size_t i = 0; i < n; ++i) out.push_back({}, draw_class(p, rng), task);
      return;
    }
    case FamilyKind::SoftmaxRegression: {
      std::vector<double> z(static_cast<std::size_t>(family.feature_dim()));
      for (std::size_t i = 0; i < n; ++i) {
        draw_features(family, rng, z);
        const Eigen::VectorXd p = softmax_probabilities(family, theta, z);
        out.push_back(z, draw_class(p, rng), task);
      }
      return;
    }
  }
}

SampleSet sample(const Family& family, const ParamVector& theta, RandomStream& rng, std::size_t n,
                 int task) {
  SampleSet out(family.observation_width());
  sample_into(out, family, theta, rng, n, task);
  return out;
}

Eigen::MatrixXd fisher_analytic(const Family& family, const ParamVector& theta) {
  family.check_parameter(theta);
  const int d = family.dim();
  switch (family.kind()) {
    case FamilyKind::GaussianMean:
      return Eigen::MatrixXd::Identity(d, d) / (family.sigma() * family.sigma());
    case FamilyKind::Bernoulli: {
      const double p = logistic(theta(0));
      return Eigen::MatrixXd::Constant(1, 1, p * (1.0 - p));
    }
    case FamilyKind::Categorical: {
      const Eigen::VectorXd p = categorical_probabilities(theta).head(d);
      Eigen::MatrixXd J = -p * p.transpose();
      J.diagonal() += p;
      return J;
    }
    case FamilyKind::SoftmaxRegression: {
      if (!family.has_analytic_fisher())
        throw NotAvailable("softmax: no closed-form Fisher for a continuous feature marginal");
      const int F = family.feature_dim();
      const int C = family.classes();
      const auto& points = family.features().points;
      Eigen::MatrixXd J = Eigen::MatrixXd::Zero(d, d);
      for (const auto& pt : points) {
        const Eigen::Map<const Eigen::VectorXd> z(pt.data(), F);
        const Eigen::VectorXd p = softmax_probabilities(family, theta, pt);
        const Eigen::MatrixXd zz = z * z.transpose();
        for (int a = 0; a < C; ++a)
          for (int b = 0; b < C; ++b)
            J.block(a * F, b * F, F, F) += ((a == b ? p(a) : 0.0) - p(a) * p(b)) * zz;
      }
      return J / static_cast<double>(points.size());
    }
  }
  return {};
}

KlValue kl_divergence(const Family& family, const ParamVector& theta_a, const ParamVector& theta_b) {
  family.check_parameter(theta_a);
  family.check_parameter(theta_b);
  if (theta_a == theta_b) return {};
  switch (family.kind()) {
    case FamilyKind::GaussianMean:
      return {(theta_a - theta_b).squaredNorm() / (2.0 * family.sigma() * family.sigma()), 0.0, false};
    case FamilyKind::Bernoulli: {
      const double pa = logistic(theta_a(0));
      const double pb = logistic(theta_b(0));
      const Eigen::Vector2d va(1.0 - pa, pa), vb(1.0 - pb, pb);
      return {categorical_kl(va, vb), 0.0, false};
    }
    case FamilyKind::Categorical:
      return {categorical_kl(categorical_probabilities(theta_a), categorical_probabilities(theta_b)), 0.0,
              false};
    case FamilyKind::SoftmaxRegression: {
      const auto conditional = [&](std::span<const double> z) {
        return categorical_kl(softmax_probabilities(family, theta_a, z),
                              softmax_probabilities(family, theta_b, z));
      };
      if (family.features().kind == FeatureDistribution::Kind::FiniteSet) {
        double acc = 0.0;
        for (const auto& pt : family.features().points) acc += conditional(pt);
        return {acc / static_cast<double>(family.features().points.size()), 0.0, false};
      }
      RandomStream rng(kSoftmaxKlSeed);
      std::vector<double> z(static_cast<std::size_t>(family.feature_dim()));
      double sum = 0.0, sum_sq = 0.0;
      for (int i = 0; i < kSoftmaxKlDraws; ++i) {
        draw_features(family, rng, z);
        const double v = conditional(z);
        sum += v;
        sum_sq += v * v;
      }
      const double n = kSoftmaxKlDraws;
      const double mean = sum / n;
      const double var = std::max(0.0, (sum_sq - n * mean * mean) / (n - 1.0));
      return {mean, std::sqrt(var / n), true};
    }
  }
  return {};
}

}  // namespace tbudget
