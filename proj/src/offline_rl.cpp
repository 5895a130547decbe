#include "offirl/offline_rl.hpp"

#include <cmath>
#include <numbers>

#include "offirl/generate.hpp"

namespace offirl {

CostFn tabulated_cost(const Environment& env, const CostFn& fn) {
  if (!env.is_finite()) return fn;
  Mat table(env.n_states(), env.n_actions());
  for (int s = 0; s < env.n_states(); ++s)
    for (int a = 0; a < env.n_actions(); ++a) table(s, a) = fn(index_vec(s), index_vec(a));
  return [table](const Vec& s, const Vec& a) { return table(as_index(s), as_index(a)); };
}

CostFn true_cost(const Environment& env) {
  return [env](const Vec& s, const Vec& a) { return env.cost(s, a); };
}

void ComboConfig::validate() const {
  if (!(beta >= 0.0)) throw InvalidParameter("combo: beta must be >= 0");
  if (!(f >= 0.0 && f <= 1.0)) throw InvalidParameter("combo: f must lie in [0,1]");
  if (gamma >= 1.0) throw InvalidParameter("combo: gamma must be < 1");
  if (rollout_horizon < 1 || rollout_horizon > kMaxRolloutHorizon)
    throw InvalidParameter("combo: rollout_horizon must lie in [1, " + std::to_string(kMaxRolloutHorizon) + "]");
  if (batch <= 0 || steps < 0 || rollout_starts <= 0 || rollout_every <= 0 || eval_every <= 0)
    throw InvalidParameter("combo: schedule values must be positive");
  if (!(temperature >= 0.0)) throw InvalidParameter("combo: temperature must be >= 0");
}

Critic Critic::tabular(int n_states, int n_actions) {
  Critic c;
  c.table_ = Mat::Zero(n_states, n_actions);
  return c;
}

Critic Critic::network(int input_dim, const std::vector<int>& hidden, int members, Rng& rng, Activation activation) {
  if (members <= 0) throw InvalidParameter("critic: members must be positive");
  MlpSpec spec;
  spec.input_dim = input_dim;
  spec.output_dim = 1;
  spec.hidden = hidden;
  spec.activation = activation;
  spec.head = Head::scalar_linear;
  spec.init_scale = 0.15;
  Critic c;
  for (int m = 0; m < members; ++m) c.nets_.emplace_back(spec, rng);
  return c;
}

Eigen::Index Critic::n_params() const {
  if (is_tabular()) return table_.size();
  Eigen::Index n = 0;
  for (const auto& net : nets_) n += net.n_params();
  return n;
}

Vec Critic::flat_params() const {
  Vec p(n_params());
  if (is_tabular()) {
    for (Eigen::Index s = 0; s < table_.rows(); ++s)
      for (Eigen::Index a = 0; a < table_.cols(); ++a) p[s * table_.cols() + a] = table_(s, a);
    return p;
  }
  Eigen::Index off = 0;
  for (const auto& net : nets_) {
    p.segment(off, net.n_params()) = net.params().values;
    off += net.n_params();
  }
  return p;
}

void Critic::set_flat_params(const Vec& p) {
  if (p.size() != n_params()) throw DimensionMismatch("critic: parameter size mismatch");
  if (is_tabular()) {
    for (Eigen::Index s = 0; s < table_.rows(); ++s)
      for (Eigen::Index a = 0; a < table_.cols(); ++a) table_(s, a) = p[s * table_.cols() + a];
    return;
  }
  Eigen::Index off = 0;
  for (auto& net : nets_) {
    net.params().values = p.segment(off, net.n_params());
    off += net.n_params();
  }
}

Mat Critic::values(const Environment& env, const std::vector<Vec>& s, const std::vector<Vec>& a) const {
  const auto b = static_cast<Eigen::Index>(s.size());
  if (is_tabular()) {
    Mat v(1, b);
    for (Eigen::Index j = 0; j < b; ++j) v(0, j) = table_(as_index(s[j]), as_index(a[j]));
    return v;
  }
  const Mat x = encode_pairs(env, s, a);
  Mat v(members(), b);
  for (int m = 0; m < members(); ++m) v.row(m) = nets_[m].predict(x);
  return v;
}

Vec Critic::min_values(const Environment& env, const std::vector<Vec>& s, const std::vector<Vec>& a) const {
  return values(env, s, a).colwise().minCoeff().transpose();
}

double Critic::value(const Environment& env, const Vec& s, const Vec& a) const {
  return min_values(env, {s}, {a})[0];
}

Vec Critic::backprop(const Environment& env, const std::vector<Vec>& s, const std::vector<Vec>& a,
                     const Mat& d) const {
  Vec grad = Vec::Zero(n_params());
  if (is_tabular()) {
    for (std::size_t j = 0; j < s.size(); ++j)
      grad[as_index(s[j]) * table_.cols() + as_index(a[j])] += d(0, static_cast<Eigen::Index>(j));
    return grad;
  }
  const Mat x = encode_pairs(env, s, a);
  Eigen::Index off = 0;
  for (int m = 0; m < members(); ++m) {
    const Forward fw = nets_[m].forward(x);
    Vec g = Vec::Zero(nets_[m].n_params());
    nets_[m].backward(fw, d.row(m), nullptr, g);
    grad.segment(off, g.size()) = g;
    off += g.size();
  }
  return grad;
}

std::vector<Vec> Critic::action_gradient(const Environment& env, const std::vector<Vec>& s,
                                         const std::vector<Vec>& a) const {
  if (is_tabular()) throw InvalidParameter("critic: action gradients need a network critic");
  const Mat x = encode_pairs(env, s, a);
  const auto b = x.cols();
  std::vector<Forward> fws;
  Mat v(members(), b);
  for (int m = 0; m < members(); ++m) {
    fws.push_back(nets_[m].forward(x));
    v.row(m) = fws.back().value;
  }
  Mat dx_total = Mat::Zero(x.rows(), b);
  for (int m = 0; m < members(); ++m) {
    Mat d = Mat::Zero(1, b);
    for (Eigen::Index j = 0; j < b; ++j) {
      Eigen::Index arg;
      v.col(j).minCoeff(&arg);
      if (arg == m) d(0, j) = 1.0;
    }
    Vec g = Vec::Zero(nets_[m].n_params());
    Mat dx;
    nets_[m].backward(fws[m], d, nullptr, g, &dx);
    dx_total += dx;
  }
  std::vector<Vec> out;
  const int ds = env.state_features();
  for (Eigen::Index j = 0; j < b; ++j) out.push_back(dx_total.col(j).segment(ds, env.action_features()));
  return out;
}

double sampled_bellman_target(const Environment& env, const Critic& critic, const CostFn& cost, const Vec& s,
                              const Vec& a, const Vec& s_next, const Policy& policy, double gamma, Rng& rng,
                              double temperature) {
  const double c = cost(s, a);
  if (gamma == 0.0) return c;
  const Vec a_next = policy.sample(s_next, rng);
  const double q = critic.value(env, s_next, a_next);
  const double lp = temperature > 0.0 ? temperature * policy.log_prob(s_next, a_next) : 0.0;
  return c + gamma * (q + lp);
}

LossGrad bellman_regression_loss(const Environment& env, const Critic& critic, const CriticBatch& batch) {
  const auto b = static_cast<double>(batch.reg_s.size());
  if (batch.reg_s.empty()) throw EmptyDataset("critic loss: empty regression batch");
  const Mat v = critic.values(env, batch.reg_s, batch.reg_a);
  const Mat err = v.rowwise() - batch.target.transpose();
  LossGrad out;
  out.value = 0.5 * err.array().square().sum() / b;
  out.grad = critic.backprop(env, batch.reg_s, batch.reg_a, err / b);
  return out;
}

LossGrad combo_critic_loss(const Environment& env, const Critic& critic, double beta, const CriticBatch& batch) {
  LossGrad out = bellman_regression_loss(env, critic, batch);
  if (beta == 0.0) return out;
  if (batch.data_s.empty() || batch.synth_s.empty())
    throw EmptyDataset("critic loss: the conservative penalty needs dataset and synthetic pairs");
  const int m = critic.members();
  const Mat vd = critic.values(env, batch.data_s, batch.data_a);
  const Mat vs = critic.values(env, batch.synth_s, batch.synth_a);
  const double nd = static_cast<double>(batch.data_s.size()), ns = static_cast<double>(batch.synth_s.size());
  out.value += beta * (vd.sum() / nd - vs.sum() / ns);
  out.grad += critic.backprop(env, batch.data_s, batch.data_a, Mat::Constant(m, vd.cols(), beta / nd));
  out.grad += critic.backprop(env, batch.synth_s, batch.synth_a, Mat::Constant(m, vs.cols(), -beta / ns));
  return out;
}

double combo_critic_update(const Environment& env, Critic& critic, Optimizer& opt, const ComboConfig& config,
                           const CriticBatch& batch) {
  if (config.f < 1.0 && batch.n_from_data == batch.reg_s.size() && batch.synth_s.empty())
    throw EmptyDataset("combo update: empty synthetic batch with f < 1");
  const LossGrad lg = combo_critic_loss(env, critic, config.beta, batch);
  if (!lg.grad.allFinite()) throw NumericalError("combo update: non-finite critic gradient");
  if (critic.is_tabular()) {
    critic.set_flat_params(critic.flat_params() - config.tabular_lr * lg.grad);
  } else {
    ParamBlock p{critic.flat_params(), 0};
    opt.step(p, lg.grad);
    critic.set_flat_params(p.values);
  }
  return lg.value;
}

TabularPolicy policy_improvement(const Critic& critic, double temperature) {
  if (!critic.is_tabular()) throw InvalidParameter("policy_improvement: tabular critic required");
  return TabularPolicy::softmin(critic.table(), temperature);
}

LossGrad actor_loss(const Environment& env, const GaussianMlpPolicy& actor, const Critic& critic,
                    const std::vector<Vec>& states, const Mat& noise, double temperature) {
  const auto b = static_cast<Eigen::Index>(states.size());
  if (b == 0) throw EmptyDataset("actor loss: empty state batch");
  Mat x(env.state_dim(), b);
  for (Eigen::Index j = 0; j < b; ++j) x.col(j) = states[static_cast<std::size_t>(j)];
  const Forward fw = actor.net().forward(x);
  if (noise.rows() != fw.value.rows() || noise.cols() != b) throw DimensionMismatch("actor loss: noise shape");
  const Mat act = fw.value + fw.scale.cwiseProduct(noise);
  std::vector<Vec> actions;
  for (Eigen::Index j = 0; j < b; ++j) actions.push_back(act.col(j));
  const Vec q = critic.min_values(env, states, actions);
  const auto dq = critic.action_gradient(env, states, actions);

  static const double kLogSqrt2Pi = 0.5 * std::log(2.0 * std::numbers::pi);
  LossGrad out;
  double total = q.sum();
  Mat d_mean(fw.value.rows(), b), d_scale(fw.value.rows(), b);
  for (Eigen::Index j = 0; j < b; ++j) {
    for (Eigen::Index i = 0; i < fw.value.rows(); ++i) {
      const double sd = fw.scale(i, j), eps = noise(i, j);
      total += temperature * (-0.5 * eps * eps - std::log(sd) - kLogSqrt2Pi);
      d_mean(i, j) = dq[static_cast<std::size_t>(j)][i] / static_cast<double>(b);
      d_scale(i, j) = (dq[static_cast<std::size_t>(j)][i] * eps - temperature / sd) / static_cast<double>(b);
    }
  }
  out.value = total / static_cast<double>(b);
  out.grad = Vec::Zero(actor.net().n_params());
  actor.net().backward(fw, d_mean, &d_scale, out.grad);
  return out;
}

double policy_improvement_step(const Environment& env, GaussianMlpPolicy& actor, Optimizer& opt,
                               const Critic& critic, const std::vector<Vec>& states, const Mat& noise,
                               double temperature) {
  const LossGrad lg = actor_loss(env, actor, critic, states, noise, temperature);
  opt.step(actor.net().params(), lg.grad);
  return lg.value;
}

double greedy_return(const Environment& env, const PolicyPtr& policy, int episodes, std::uint64_t seed) {
  return evaluate_policy(env, *greedy_view(env, policy), episodes, seed);
}

namespace {
Vec as_vec(const std::vector<double>& v) { return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size())); }
}  // namespace

OfflineRlAgent::OfflineRlAgent(Environment env, const TrajectoryDataset& dataset, ComboConfig config,
                               std::uint64_t seed, std::shared_ptr<const DynamicsEnsemble> ensemble)
    : env_(std::move(env)),
      config_(std::move(config)),
      ensemble_(std::move(ensemble)),
      critic_opt_(config_.critic_opt),
      actor_opt_(config_.actor_opt),
      rng_(make_rng(seed, 1)),
      seed_(seed) {
  config_.validate();
  if (dataset.empty()) throw EmptyDataset("offline RL: empty dataset");
  gamma_ = config_.gamma < 0.0 ? env_.gamma() : config_.gamma;
  data_ = dataset.records;
  for (const auto& r : data_) data_states_.push_back(as_vec(r.state));
  const bool needs_model = config_.f < 1.0 || config_.beta > 0.0;
  if (needs_model && !ensemble_)
    ensemble_ = std::make_shared<DynamicsEnsemble>(fit_ensemble(env_, dataset, config_.dynamics, derive_seed(seed, 7)));
  Rng init = make_rng(seed, 2);
  if (env_.is_finite()) {
    critic_ = Critic::tabular(env_.n_states(), env_.n_actions());
    tab_policy_ = std::make_shared<TabularPolicy>(TabularPolicy::uniform(env_.n_states(), env_.n_actions()));
  } else {
    critic_ = Critic::network(env_.state_features() + env_.action_features(), config_.critic_hidden, 2, init);
    actor_ = std::make_shared<GaussianMlpPolicy>(
        GaussianMlpPolicy::make(env_.state_dim(), env_.action_dim(), config_.actor_hidden, init));
  }
  target_ = critic_;
}

PolicyPtr OfflineRlAgent::current_policy() const {
  if (tab_policy_) return tab_policy_;
  return actor_;
}

PolicyPtr OfflineRlAgent::policy() const {
  if (tab_policy_) return std::make_shared<TabularPolicy>(*tab_policy_);
  return std::make_shared<GaussianMlpPolicy>(*actor_);
}

void OfflineRlAgent::refresh_rollouts() {
  if (!ensemble_) return;
  std::vector<Vec> starts;
  for (int i = 0; i < config_.rollout_starts; ++i) starts.push_back(data_states_[uniform_index(rng_, data_states_.size())]);
  const auto synth = rollout(*ensemble_, *current_policy(), starts, config_.rollout_horizon,
                             derive_seed(seed_, 1000 + static_cast<std::uint64_t>(rollouts_done_++)));
  for (const auto& r : synth.records) {
    synthetic_.push_back(r);
    if (synthetic_.size() > config_.synthetic_capacity) synthetic_.pop_front();
  }
}

CriticBatch OfflineRlAgent::make_batch(const CostFn& cost) {
  const int b = config_.batch;
  const auto n_data = static_cast<int>(std::lround(config_.f * b));
  if (n_data < b && synthetic_.empty()) throw EmptyDataset("combo: no synthetic transitions with f < 1");
  const auto pi = current_policy();
  CriticBatch batch;
  batch.target.resize(b);
  for (int j = 0; j < b; ++j) {
    const TransitionRecord& r =
        j < n_data ? data_[uniform_index(rng_, data_.size())] : synthetic_[uniform_index(rng_, synthetic_.size())];
    const Vec s = as_vec(r.state), a = as_vec(r.action), s2 = as_vec(r.next_state);
    batch.target[j] = sampled_bellman_target(env_, target_, cost, s, a, s2, *pi, gamma_, rng_, config_.temperature);
    batch.reg_s.push_back(s);
    batch.reg_a.push_back(a);
  }
  batch.n_from_data = static_cast<std::size_t>(n_data);
  if (config_.beta > 0.0) {
    for (int j = 0; j < b; ++j) {
      const auto& r = data_[uniform_index(rng_, data_.size())];
      batch.data_s.push_back(as_vec(r.state));
      batch.data_a.push_back(as_vec(r.action));
      const Vec s = as_vec(synthetic_[uniform_index(rng_, synthetic_.size())].state);
      batch.synth_s.push_back(s);
      batch.synth_a.push_back(pi->sample(s, rng_));
    }
  }
  return batch;
}

void OfflineRlAgent::train(int steps, const CostFn& cost) {
  for (int i = 0; i < steps; ++i) {
    if (ensemble_ && steps_done_ % config_.rollout_every == 0) refresh_rollouts();
    const CriticBatch batch = make_batch(cost);
    last_.critic_loss = combo_critic_update(env_, critic_, critic_opt_, config_, batch);
    if (!batch.data_s.empty())
      last_.conservative_gap = critic_.min_values(env_, batch.data_s, batch.data_a).mean() -
                               critic_.min_values(env_, batch.synth_s, batch.synth_a).mean();
    if (critic_.is_tabular()) {
      *tab_policy_ = policy_improvement(critic_, config_.temperature);
      target_ = critic_;
    } else {
      std::vector<Vec> states;
      for (int j = 0; j < config_.batch; ++j) states.push_back(data_states_[uniform_index(rng_, data_states_.size())]);
      Mat noise(env_.action_dim(), config_.batch);
      for (Eigen::Index k = 0; k < noise.size(); ++k) noise.data()[k] = standard_normal(rng_);
      policy_improvement_step(env_, *actor_, actor_opt_, critic_, states, noise, config_.temperature);
      const Vec p = critic_.flat_params(), tp = target_.flat_params();
      target_.set_flat_params(config_.target_tau * p + (1.0 - config_.target_tau) * tp);
    }
    ++steps_done_;
  }
  last_.step = steps_done_;
}

OfflineRlResult solve_offline_rl(const Environment& env, const TrajectoryDataset& dataset, const CostFn& cost,
                                 const ComboConfig& config, std::uint64_t seed,
                                 std::shared_ptr<const DynamicsEnsemble> ensemble) {
  OfflineRlAgent agent(env, dataset, config, seed, std::move(ensemble));
  const CostFn c = tabulated_cost(env, cost);
  OfflineRlResult out;
  out.policy = agent.policy();
  out.critic = agent.critic();
  const std::uint64_t eval_seed = derive_seed(seed, 3);
  if (config.steps == 0) {
    out.best_return = greedy_return(env, out.policy, config.eval_episodes, eval_seed);
    return out;
  }
  bool have_best = false;
  while (agent.steps_done() < config.steps) {
    agent.train(std::min(config.eval_every, config.steps - agent.steps_done()), c);
    const auto pi = agent.policy();
    RlCurveRow row = agent.last();
    row.eval_return = greedy_return(env, pi, config.eval_episodes, eval_seed);
    out.curve.push_back(row);
    if (!have_best || row.eval_return < out.best_return) {
      have_best = true;
      out.best_return = row.eval_return;
      out.policy = pi;
      out.critic = agent.critic();
    }
  }
  return out;
}

}  // namespace offirl
