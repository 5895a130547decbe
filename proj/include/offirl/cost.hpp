#pragma once

#include "offirl/dataset.hpp"
#include "offirl/env.hpp"
#include "offirl/nn.hpp"
#include "offirl/offline_rl.hpp"
#include "offirl/policy.hpp"

namespace offirl {

struct PairBatch {
  std::vector<Vec> s, a;

  std::size_t size() const { return s.size(); }
  static PairBatch from_records(const std::vector<TransitionRecord>& records);
  static PairBatch from_future(const std::vector<FutureSample>& xs);
};

struct CostModelConfig {
  std::vector<int> hidden{32, 32};
  Activation activation = Activation::tanh;
  OptimizerConfig opt{OptimizerKind::adam, 1e-3};
};

// c(s,a) in [kSigmoidFloor, kSigmoidCeil]; lower means more expert-like.
class CostModel {
 public:
  CostModel() = default;
  static CostModel make(const Environment& env, const CostModelConfig& config, Rng& rng);

  Mlp& net() { return net_; }
  const Mlp& net() const { return net_; }
  ParamBlock& params() { return net_.params(); }
  const ParamBlock& params() const { return net_.params(); }

  double value(const Vec& s, const Vec& a) const;
  Vec values(const PairBatch& batch) const;
  // Σ_j pos_j·log c_j + neg_j·log(1 − c_j); gradient accumulated into grad.
  double log_likelihood(const PairBatch& batch, const Vec& pos, const Vec& neg, Vec* grad) const;
  // Snapshot of the current parameters as a cost function.
  CostFn as_cost_fn() const;

  std::string serialize() const;
  static CostModel deserialize(const Environment& env, const std::string& text);

 private:
  std::shared_ptr<const Environment> env_;
  Mlp net_;
};

// Objectives below are maximised; grad is the ascent direction.

// mean_policy log c + mean_expert log(1 − c)
LossGrad cameron_discrimination(const CostModel& cost, const PairBatch& policy_side, const PairBatch& expert_side);

// Adam ascent on cameron_discrimination with batches drawn uniformly from
// the buffer and the expert future samples. Returns the last objective.
double cameron_cost_update(CostModel& cost, Optimizer& opt, const CostReplayBuffer& buffer,
                           const std::vector<FutureSample>& expert_future, int steps, std::size_t batch,
                           std::uint64_t seed);

struct BaselineConfig {
  double oril_phi = 0.5;
  int tgr_t0 = 50;

  void validate() const;
};

// φ·mean_E log(1−c) + mean_U log c − φ·mean_E log c
LossGrad oril_pu_loss(const CostModel& cost, const PairBatch& expert, const PairBatch& unlabeled, double phi);

// mean_{E, t≥t0} log(1−c) + mean_X log c + mean_{E, t<t0} log c; an empty
// group contributes nothing. Records with t < 0 carry no time index.
LossGrad tgr_loss(const CostModel& cost, const std::vector<TransitionRecord>& expert,
                  const PairBatch& exploratory, int t0);

// Future pairs of the expert's μ: a record at time t is picked with weight
// γ^t, then the pair k ~ Geometric(δ) steps later in the same episode
// (truncated at the episode end). cond is the episode's first state.
std::vector<FutureSample> sample_expert_future(const TrajectoryDataset& expert, double gamma, double delta,
                                               std::size_t n, Rng& rng);

struct BcConfig {
  int steps = 2000;
  std::size_t batch = 256;
  std::vector<int> hidden{64, 64};
  OptimizerConfig opt{OptimizerKind::adam, 1e-2};
};

// mean_j log softmax(logits(s_j))[a_j] over an S x A logit table.
LossGrad bc_log_likelihood(const Mat& logits, const PairBatch& batch);
// mean_j log π(a_j|s_j) for a Gaussian MLP policy.
LossGrad bc_log_likelihood(const Environment& env, const GaussianMlpPolicy& policy, const PairBatch& batch);

// Maximum-likelihood fit of the expert actions: softmax table on finite
// environments, Gaussian MLP otherwise. steps = 0 returns the initial policy.
PolicyPtr bc_baseline(const Environment& env, const TrajectoryDataset& expert, const BcConfig& config,
                      std::uint64_t seed);

}  // namespace offirl
