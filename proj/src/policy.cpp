#include "offirl/policy.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace offirl {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
const double kLogSqrt2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

double gaussian_log_density(const Vec& x, const Vec& mean, const Vec& scale) {
  double lp = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double z = (x[i] - mean[i]) / scale[i];
    lp += -0.5 * z * z - std::log(scale[i]) - kLogSqrt2Pi;
  }
  return lp;
}
}  // namespace

TabularPolicy::TabularPolicy(Mat probs) : probs_(std::move(probs)) {
  if (probs_.rows() == 0 || probs_.cols() == 0) throw InvalidParameter("tabular policy: empty table");
  for (Eigen::Index s = 0; s < probs_.rows(); ++s) {
    if ((probs_.row(s).array() < 0.0).any() || std::abs(probs_.row(s).sum() - 1.0) > 1e-12)
      throw InvalidParameter("tabular policy: row " + std::to_string(s) + " is not a distribution");
  }
}

TabularPolicy TabularPolicy::uniform(int n_states, int n_actions) {
  return TabularPolicy(Mat::Constant(n_states, n_actions, 1.0 / n_actions));
}

TabularPolicy TabularPolicy::greedy(const Mat& q) {
  Mat p = Mat::Zero(q.rows(), q.cols());
  for (Eigen::Index s = 0; s < q.rows(); ++s) {
    Eigen::Index a;
    q.row(s).minCoeff(&a);
    p(s, a) = 1.0;
  }
  return TabularPolicy(std::move(p));
}

TabularPolicy TabularPolicy::softmin(const Mat& q, double temperature) {
  if (!(temperature > 0.0)) return greedy(q);
  Mat p(q.rows(), q.cols());
  for (Eigen::Index s = 0; s < q.rows(); ++s) {
    const double m = q.row(s).minCoeff();
    p.row(s) = (-(q.row(s).array() - m) / temperature).exp();
    p.row(s) /= p.row(s).sum();
  }
  return TabularPolicy(std::move(p));
}

Vec TabularPolicy::sample(const Vec& state, Rng& rng) const {
  const int s = as_index(state);
  Vec row = probs_.row(s).transpose();
  return index_vec(static_cast<int>(categorical(rng, row.data(), row.size())));
}

Vec TabularPolicy::mode(const Vec& state) const {
  Eigen::Index a;
  probs_.row(as_index(state)).maxCoeff(&a);
  return index_vec(static_cast<int>(a));
}

double TabularPolicy::log_prob(const Vec& state, const Vec& action) const {
  const double p = probs_(as_index(state), as_index(action));
  return p > 0.0 ? std::log(p) : kNegInf;
}

GaussianMlpPolicy::GaussianMlpPolicy(Mlp net, int action_dim) : net_(std::move(net)) {
  if (net_.spec().head != Head::gaussian || net_.spec().output_dim != action_dim)
    throw InvalidParameter("gaussian policy: network must have a gaussian head of the action dimension");
}

GaussianMlpPolicy GaussianMlpPolicy::make(int state_dim, int action_dim, const std::vector<int>& hidden, Rng& rng) {
  MlpSpec spec;
  spec.input_dim = state_dim;
  spec.output_dim = action_dim;
  spec.hidden = hidden;
  spec.head = Head::gaussian;
  return GaussianMlpPolicy(Mlp(spec, rng), action_dim);
}

Vec GaussianMlpPolicy::sample(const Vec& state, Rng& rng) const {
  const Forward fw = net_.forward(Mat(state));
  Vec a(fw.value.rows());
  for (Eigen::Index i = 0; i < a.size(); ++i) a[i] = fw.value(i, 0) + fw.scale(i, 0) * standard_normal(rng);
  return a;
}

Vec GaussianMlpPolicy::mode(const Vec& state) const { return net_.predict(Mat(state)).col(0); }

double GaussianMlpPolicy::log_prob(const Vec& state, const Vec& action) const {
  const Forward fw = net_.forward(Mat(state));
  return gaussian_log_density(action, fw.value.col(0), fw.scale.col(0));
}

LinearGaussianPolicy::LinearGaussianPolicy(Mat gain, double noise_std, double action_bound)
    : gain_(std::move(gain)), noise_std_(noise_std), action_bound_(action_bound) {
  if (!(noise_std_ > 0.0)) throw InvalidParameter("linear gaussian policy: noise_std must be positive");
}

Vec LinearGaussianPolicy::mode(const Vec& state) const {
  return (-gain_ * state).cwiseMax(-action_bound_).cwiseMin(action_bound_);
}

Vec LinearGaussianPolicy::sample(const Vec& state, Rng& rng) const {
  Vec a = mode(state);
  for (Eigen::Index i = 0; i < a.size(); ++i) a[i] += noise_std_ * standard_normal(rng);
  return a;
}

double LinearGaussianPolicy::log_prob(const Vec& state, const Vec& action) const {
  return gaussian_log_density(action, mode(state), Vec::Constant(action.size(), noise_std_));
}

EpsilonUniformPolicy::EpsilonUniformPolicy(PolicyPtr base, double eps, int action_dim, double action_bound)
    : base_(std::move(base)), eps_(eps), action_dim_(action_dim), action_bound_(action_bound) {
  if (!(eps_ >= 0.0 && eps_ <= 1.0)) throw InvalidParameter("epsilon policy: eps outside [0,1]");
}

Vec EpsilonUniformPolicy::sample(const Vec& state, Rng& rng) const {
  if (uniform01(rng) < eps_) {
    Vec a(action_dim_);
    for (int i = 0; i < action_dim_; ++i) a[i] = action_bound_ * (2.0 * uniform01(rng) - 1.0);
    return a;
  }
  return base_->sample(state, rng);
}

double EpsilonUniformPolicy::log_prob(const Vec& state, const Vec& action) const {
  const bool inside = action.cwiseAbs().maxCoeff() <= action_bound_;
  const double uniform_density = inside ? std::pow(2.0 * action_bound_, -action_dim_) : 0.0;
  return std::log(eps_ * uniform_density + (1.0 - eps_) * std::exp(base_->log_prob(state, action)));
}

double ModePolicy::log_prob(const Vec& state, const Vec& action) const {
  return (base_->mode(state) - action).cwiseAbs().maxCoeff() == 0.0 ? 0.0 : kNegInf;
}

TabularPolicy tabulate(const Environment& env, const Policy& policy) {
  if (auto* t = dynamic_cast<const TabularPolicy*>(&policy)) return *t;
  const auto& m = env.finite();
  Mat p(m.n_states, m.n_actions);
  for (int s = 0; s < m.n_states; ++s) {
    for (int a = 0; a < m.n_actions; ++a) p(s, a) = std::exp(policy.log_prob(index_vec(s), index_vec(a)));
    p.row(s) /= p.row(s).sum();
  }
  return TabularPolicy(std::move(p));
}

PolicyPtr greedy_view(const Environment& env, const PolicyPtr& policy) {
  if (env.is_finite()) {
    const TabularPolicy t = tabulate(env, *policy);
    Mat p = Mat::Zero(t.n_states(), t.n_actions());
    for (int s = 0; s < t.n_states(); ++s) p(s, as_index(t.mode(index_vec(s)))) = 1.0;
    return std::make_shared<TabularPolicy>(std::move(p));
  }
  return std::make_shared<ModePolicy>(policy);
}

}  // namespace offirl
