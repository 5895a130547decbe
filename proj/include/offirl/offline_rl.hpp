#pragma once

#include <deque>
#include <functional>
#include <memory>

#include "offirl/dataset.hpp"
#include "offirl/dynamics.hpp"
#include "offirl/env.hpp"
#include "offirl/nn.hpp"
#include "offirl/policy.hpp"

namespace offirl {

using CostFn = std::function<double(const Vec& state, const Vec& action)>;

// Precomputes a finite environment's cost into a table lookup; returns fn
// unchanged for continuous environments.
CostFn tabulated_cost(const Environment& env, const CostFn& fn);
CostFn true_cost(const Environment& env);

struct LossGrad {
  double value = 0.0;
  Vec grad;
};

struct ComboConfig {
  double beta = 5.0;
  double f = 0.5;
  double gamma = -1.0;  // < 0: use the environment discount
  double temperature = 1.0;
  int rollout_horizon = kDefaultRolloutHorizon;
  int rollout_starts = 32;
  int rollout_every = 50;
  std::size_t synthetic_capacity = 20'000;
  int batch = 256;
  int steps = 2000;
  // Q-tables take plain SGD steps on the batch-mean loss.
  double tabular_lr = 0.5;
  OptimizerConfig critic_opt{OptimizerKind::adam, 1e-3};
  OptimizerConfig actor_opt{OptimizerKind::adam, 1e-3};
  std::vector<int> critic_hidden{64, 64, 64};
  std::vector<int> actor_hidden{64, 64, 64};
  double target_tau = 0.005;
  int eval_every = 500;
  int eval_episodes = 10;
  DynamicsConfig dynamics;

  void validate() const;
};

// Q-table for finite environments, or twin MLP critics over pair features.
class Critic {
 public:
  static Critic tabular(int n_states, int n_actions);
  static Critic network(int input_dim, const std::vector<int>& hidden, int members, Rng& rng,
                        Activation activation = Activation::relu);

  bool is_tabular() const { return nets_.empty(); }
  int members() const { return is_tabular() ? 1 : static_cast<int>(nets_.size()); }
  Mat& table() { return table_; }
  const Mat& table() const { return table_; }
  std::vector<Mlp>& nets() { return nets_; }
  const std::vector<Mlp>& nets() const { return nets_; }

  Eigen::Index n_params() const;
  Vec flat_params() const;
  void set_flat_params(const Vec& p);

  // members x B
  Mat values(const Environment& env, const std::vector<Vec>& s, const std::vector<Vec>& a) const;
  Vec min_values(const Environment& env, const std::vector<Vec>& s, const std::vector<Vec>& a) const;
  double value(const Environment& env, const Vec& s, const Vec& a) const;
  // Gradient of Σ d(m,j)·Q_m(s_j,a_j) with respect to flat_params().
  Vec backprop(const Environment& env, const std::vector<Vec>& s, const std::vector<Vec>& a, const Mat& d) const;
  // Gradient of min_m Q_m at each pair with respect to the action.
  std::vector<Vec> action_gradient(const Environment& env, const std::vector<Vec>& s,
                                   const std::vector<Vec>& a) const;

 private:
  Mat table_;
  std::vector<Mlp> nets_;
};

// c(s,a) + γ·(Q(s',a') + T·log π(a'|s')), a' ~ π(·|s').
double sampled_bellman_target(const Environment& env, const Critic& critic, const CostFn& cost, const Vec& s,
                              const Vec& a, const Vec& s_next, const Policy& policy, double gamma, Rng& rng,
                              double temperature = 1.0);

struct CriticBatch {
  std::vector<Vec> reg_s, reg_a;  // regression pairs drawn from d_f
  Vec target;
  std::size_t n_from_data = 0;  // leading regression pairs that came from the dataset
  std::vector<Vec> data_s, data_a;    // dataset side of the penalty
  std::vector<Vec> synth_s, synth_a;  // model-rollout side, actions from π
};

// ½·mean (Q − y)² summed over critic members.
LossGrad bellman_regression_loss(const Environment& env, const Critic& critic, const CriticBatch& batch);
// Regression plus β·(E_𝒟[Q] − E_ρ̂[Q]).
LossGrad combo_critic_loss(const Environment& env, const Critic& critic, double beta, const CriticBatch& batch);

// One descent step on combo_critic_loss. Q-tables use SGD at tabular_lr,
// networks the supplied optimizer.
double combo_critic_update(const Environment& env, Critic& critic, Optimizer& opt, const ComboConfig& config,
                           const CriticBatch& batch);

// Tabular improvement: π(·|s) = softmin(Q(s,·), temperature).
TabularPolicy policy_improvement(const Critic& critic, double temperature);

// Reparameterised actor loss mean_j [min_m Q_m(s_j, μ+σ⊙ε_j) + T·log π(a_j|s_j)].
// noise holds ε column-wise (action_dim x B).
LossGrad actor_loss(const Environment& env, const GaussianMlpPolicy& actor, const Critic& critic,
                    const std::vector<Vec>& states, const Mat& noise, double temperature);
double policy_improvement_step(const Environment& env, GaussianMlpPolicy& actor, Optimizer& opt,
                               const Critic& critic, const std::vector<Vec>& states, const Mat& noise,
                               double temperature);

struct RlCurveRow {
  int step = 0;
  double critic_loss = 0.0;
  double conservative_gap = 0.0;  // mean_𝒟 Q − mean_ρ̂ Q
  double eval_return = 0.0;
};

// Persistent actor-critic state so CAMERON can interleave RL steps with
// cost updates.
class OfflineRlAgent {
 public:
  OfflineRlAgent(Environment env, const TrajectoryDataset& dataset, ComboConfig config, std::uint64_t seed,
                 std::shared_ptr<const DynamicsEnsemble> ensemble = nullptr);

  // Runs `steps` critic/actor updates under the given cost.
  void train(int steps, const CostFn& cost);
  PolicyPtr policy() const;
  const Critic& critic() const { return critic_; }
  const DynamicsEnsemble& ensemble() const { return *ensemble_; }
  std::shared_ptr<const DynamicsEnsemble> shared_ensemble() const { return ensemble_; }
  const Environment& env() const { return env_; }
  const ComboConfig& config() const { return config_; }
  int steps_done() const { return steps_done_; }
  const RlCurveRow& last() const { return last_; }

  // Builds a batch for the current policy (exposed for tests).
  CriticBatch make_batch(const CostFn& cost);

 private:
  void refresh_rollouts();
  PolicyPtr current_policy() const;

  Environment env_;
  ComboConfig config_;
  double gamma_;
  std::vector<TransitionRecord> data_;
  std::vector<Vec> data_states_;
  std::shared_ptr<const DynamicsEnsemble> ensemble_;
  std::deque<TransitionRecord> synthetic_;
  Critic critic_, target_;
  Optimizer critic_opt_, actor_opt_;
  std::shared_ptr<TabularPolicy> tab_policy_;
  std::shared_ptr<GaussianMlpPolicy> actor_;
  Rng rng_;
  std::uint64_t seed_;
  int steps_done_ = 0;
  int rollouts_done_ = 0;
  RlCurveRow last_;
};

struct OfflineRlResult {
  PolicyPtr policy;  // best soft policy by greedy evaluation
  Critic critic;
  double best_return = 0.0;
  std::vector<RlCurveRow> curve;
};

OfflineRlResult solve_offline_rl(const Environment& env, const TrajectoryDataset& dataset, const CostFn& cost,
                                 const ComboConfig& config, std::uint64_t seed,
                                 std::shared_ptr<const DynamicsEnsemble> ensemble = nullptr);

// Greedy/mode evaluation used for model selection everywhere.
double greedy_return(const Environment& env, const PolicyPtr& policy, int episodes, std::uint64_t seed);

}  // namespace offirl
