#include "offirl/dynamics.hpp"

#include <algorithm>
#include <numeric>

namespace offirl {

void DynamicsConfig::validate() const {
  if (trained_members <= 0 || kept_members <= 0 || kept_members > trained_members)
    throw InvalidParameter("dynamics: need 0 < kept_members <= trained_members");
  if (train_steps < 0 || batch <= 0) throw InvalidParameter("dynamics: bad training schedule");
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0))
    throw InvalidParameter("dynamics: validation_fraction must lie in (0,1)");
}

const Environment& DynamicsEnsemble::env() const {
  if (!env_) throw NotTrained("dynamics ensemble has not been fitted");
  return *env_;
}

namespace {

Vec as_vec(const std::vector<double>& v) { return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size())); }

Vec column_std(const Mat& m, const Vec& mean) {
  Vec sd(m.rows());
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const double var = (m.row(r).array() - mean[r]).square().mean();
    sd[r] = std::max(std::sqrt(var), 1e-3);
  }
  return sd;
}

}  // namespace

DynamicsEnsemble fit_ensemble(const Environment& env, const TrajectoryDataset& dataset, const DynamicsConfig& config,
                              std::uint64_t seed) {
  config.validate();
  if (dataset.size() < config.min_transitions)
    throw EmptyDataset("fit_ensemble: need at least " + std::to_string(config.min_transitions) + " transitions, got " +
                       std::to_string(dataset.size()));
  const auto n = static_cast<Eigen::Index>(dataset.size());
  const int out_dim = env.state_features();

  Mat x(env.state_features() + env.action_features(), n);
  Mat y(out_dim, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = dataset.records[static_cast<std::size_t>(i)];
    const Vec s = as_vec(r.state), a = as_vec(r.action), s2 = as_vec(r.next_state);
    x.col(i) = env.encode_pair(s, a);
    if (env.is_finite())
      y.col(i) = env.encode_state(s2);
    else
      y.col(i) = s2 - s;
  }

  DynamicsEnsemble ens;
  ens.env_ = env;
  if (env.is_finite()) {
    ens.in_mean_ = Vec::Zero(x.rows());
    ens.in_std_ = Vec::Ones(x.rows());
    ens.out_mean_ = Vec::Zero(out_dim);
    ens.out_std_ = Vec::Ones(out_dim);
  } else {
    ens.in_mean_ = x.rowwise().mean();
    ens.in_std_ = column_std(x, ens.in_mean_);
    ens.out_mean_ = y.rowwise().mean();
    ens.out_std_ = column_std(y, ens.out_mean_);
  }
  x = (x.colwise() - ens.in_mean_).array().colwise() / ens.in_std_.array();
  y = (y.colwise() - ens.out_mean_).array().colwise() / ens.out_std_.array();

  // Shared 90/10 split.
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  Rng split_rng = make_rng(seed, 0);
  for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[uniform_index(split_rng, i)]);
  const auto n_val = std::max<Eigen::Index>(1, static_cast<Eigen::Index>(std::lround(config.validation_fraction * n)));
  const Eigen::Index n_train = n - n_val;
  Mat x_val(x.rows(), n_val), y_val(out_dim, n_val);
  for (Eigen::Index i = 0; i < n_val; ++i) {
    x_val.col(i) = x.col(perm[static_cast<std::size_t>(n_train + i)]);
    y_val.col(i) = y.col(perm[static_cast<std::size_t>(n_train + i)]);
  }

  MlpSpec spec;
  spec.input_dim = static_cast<int>(x.rows());
  spec.output_dim = out_dim;
  spec.hidden = config.hidden;
  spec.activation = Activation::relu;
  spec.head = Head::gaussian;
  spec.init_scale = 0.1;

  std::vector<Mlp> trained;
  std::vector<double> scores;
  const int b = config.batch;
  Mat xb(x.rows(), b), yb(out_dim, b);
  for (int m = 0; m < config.trained_members; ++m) {
    Rng init_rng = make_rng(seed, 100 + static_cast<std::uint64_t>(m));
    Rng batch_rng = make_rng(seed, 200 + static_cast<std::uint64_t>(m));
    Mlp net(spec, init_rng);
    Optimizer opt({OptimizerKind::adam, config.lr});
    Vec grad(net.n_params());
    for (int step = 0; step < config.train_steps; ++step) {
      for (int j = 0; j < b; ++j) {
        const Eigen::Index idx = perm[uniform_index(batch_rng, static_cast<std::size_t>(n_train))];
        xb.col(j) = x.col(idx);
        yb.col(j) = y.col(idx);
      }
      const Forward fw = net.forward(xb);
      // Gaussian NLL: 0.5 ((y-m)/σ)² + log σ, averaged over the batch.
      const Mat err = fw.value - yb;
      const Mat inv_var = fw.scale.array().square().inverse();
      const Mat d_mean = (err.array() * inv_var.array()) / b;
      const Mat d_scale = (fw.scale.array().inverse() - err.array().square() * inv_var.array() / fw.scale.array()) / b;
      grad.setZero();
      net.backward(fw, d_mean, &d_scale, grad);
      opt.step(net.params(), grad);
    }
    const Mat pred = net.predict(x_val);
    scores.push_back((pred - y_val).array().square().mean());
    trained.push_back(std::move(net));
  }

  std::vector<std::size_t> order(trained.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b2) { return scores[a] < scores[b2]; });
  for (int k = 0; k < config.kept_members; ++k) {
    ens.members_.push_back(trained[order[static_cast<std::size_t>(k)]]);
    ens.kept_scores_.push_back(scores[order[static_cast<std::size_t>(k)]]);
  }
  ens.all_scores_ = std::move(scores);
  return ens;
}

Mat DynamicsEnsemble::member_forward(std::size_t member, const Vec& s, const Vec& a, Mat* scale) const {
  if (!fitted()) throw NotTrained("dynamics ensemble has not been fitted");
  const Vec in = ((env_->encode_pair(s, a) - in_mean_).array() / in_std_.array()).matrix();
  Forward fw = members_.at(member).forward(Mat(in));
  if (scale) *scale = fw.scale;
  return fw.value;
}

Vec DynamicsEnsemble::predict(std::size_t member, const Vec& s, const Vec& a) const {
  const Vec mean = member_forward(member, s, a, nullptr).col(0);
  if (env_->is_finite()) return env_->decode_state(mean.data());
  const Vec delta = mean.cwiseProduct(out_std_) + out_mean_;
  return env_->decode_state(Vec(s + delta).data());
}

Vec DynamicsEnsemble::sample_next(std::size_t member, const Vec& s, const Vec& a, Rng& rng) const {
  Mat scale;
  const Vec mean = member_forward(member, s, a, &scale).col(0);
  if (env_->is_finite()) {
    const Vec p = mean.cwiseMax(0.0);
    if (!(p.sum() > 0.0)) return env_->decode_state(mean.data());
    return index_vec(static_cast<int>(categorical(rng, p.data(), static_cast<std::size_t>(p.size()))));
  }
  Vec delta(mean.size());
  for (Eigen::Index i = 0; i < delta.size(); ++i)
    delta[i] = (mean[i] + scale(i, 0) * standard_normal(rng)) * out_std_[i] + out_mean_[i];
  return env_->decode_state(Vec(s + delta).data());
}

TrajectoryDataset rollout(const DynamicsEnsemble& ensemble, const Policy& policy, const std::vector<Vec>& starts, int k,
                          std::uint64_t seed, std::vector<int>* members_used) {
  if (!ensemble.fitted()) throw NotTrained("rollout: dynamics ensemble has not been fitted");
  if (k < 1 || k > kMaxRolloutHorizon)
    throw InvalidParameter("rollout: horizon must lie in [1, " + std::to_string(kMaxRolloutHorizon) + "]");
  TrajectoryDataset out;
  out.env_name = ensemble.env().name();
  out.tag = DatasetTag::synthetic;
  out.records.reserve(starts.size() * static_cast<std::size_t>(k));
  Rng rng = make_rng(seed, 0);
  for (std::size_t e = 0; e < starts.size(); ++e) {
    Vec s = starts[e];
    for (int t = 0; t < k; ++t) {
      const Vec a = policy.sample(s, rng);
      const auto m = uniform_index(rng, ensemble.size());
      if (members_used) members_used->push_back(static_cast<int>(m));
      const Vec next = ensemble.sample_next(m, s, a, rng);
      TransitionRecord r;
      r.episode_id = static_cast<int>(e);
      r.t = t;
      r.state.assign(s.data(), s.data() + s.size());
      r.action.assign(a.data(), a.data() + a.size());
      r.next_state.assign(next.data(), next.data() + next.size());
      r.terminal = t + 1 == k;
      out.records.push_back(std::move(r));
      s = next;
    }
  }
  return out;
}

}  // namespace offirl
