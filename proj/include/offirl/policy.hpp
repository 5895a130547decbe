#pragma once

#include <memory>

#include "offirl/env.hpp"
#include "offirl/nn.hpp"

namespace offirl {

// States and actions are raw vectors (index vectors for finite spaces).
class Policy {
 public:
  virtual ~Policy() = default;
  virtual Vec sample(const Vec& state, Rng& rng) const = 0;
  virtual Vec mode(const Vec& state) const = 0;
  virtual double log_prob(const Vec& state, const Vec& action) const = 0;
  virtual std::unique_ptr<Policy> clone() const = 0;
};

using PolicyPtr = std::shared_ptr<const Policy>;

class TabularPolicy final : public Policy {
 public:
  explicit TabularPolicy(Mat probs);
  static TabularPolicy uniform(int n_states, int n_actions);
  // Deterministic argmin of a cost-to-go table (ties to the lowest index).
  static TabularPolicy greedy(const Mat& q);
  // π(a|s) ∝ exp(−q(s,a)/temperature)
  static TabularPolicy softmin(const Mat& q, double temperature);

  const Mat& probs() const { return probs_; }
  double prob(int s, int a) const { return probs_(s, a); }
  int n_states() const { return static_cast<int>(probs_.rows()); }
  int n_actions() const { return static_cast<int>(probs_.cols()); }

  Vec sample(const Vec& state, Rng& rng) const override;
  Vec mode(const Vec& state) const override;
  double log_prob(const Vec& state, const Vec& action) const override;
  std::unique_ptr<Policy> clone() const override { return std::make_unique<TabularPolicy>(*this); }

 private:
  Mat probs_;
};

// Diagonal Gaussian over actions, mean and scale from an MLP over the
// state features. Actions are not squashed; environments clip them.
class GaussianMlpPolicy final : public Policy {
 public:
  GaussianMlpPolicy(Mlp net, int action_dim);
  static GaussianMlpPolicy make(int state_dim, int action_dim, const std::vector<int>& hidden, Rng& rng);

  const Mlp& net() const { return net_; }
  Mlp& net() { return net_; }

  Vec sample(const Vec& state, Rng& rng) const override;
  Vec mode(const Vec& state) const override;
  double log_prob(const Vec& state, const Vec& action) const override;
  std::unique_ptr<Policy> clone() const override { return std::make_unique<GaussianMlpPolicy>(*this); }

 private:
  Mlp net_;
};

// a = clip(−K s) + N(0, σ²): the pointmass expert.
class LinearGaussianPolicy final : public Policy {
 public:
  LinearGaussianPolicy(Mat gain, double noise_std, double action_bound);
  Vec sample(const Vec& state, Rng& rng) const override;
  Vec mode(const Vec& state) const override;
  double log_prob(const Vec& state, const Vec& action) const override;
  std::unique_ptr<Policy> clone() const override { return std::make_unique<LinearGaussianPolicy>(*this); }

 private:
  Mat gain_;
  double noise_std_;
  double action_bound_;
};

// With probability eps a uniform action on the box [−b, b]^d, otherwise the
// base policy.
class EpsilonUniformPolicy final : public Policy {
 public:
  EpsilonUniformPolicy(PolicyPtr base, double eps, int action_dim, double action_bound);
  Vec sample(const Vec& state, Rng& rng) const override;
  Vec mode(const Vec& state) const override { return base_->mode(state); }
  double log_prob(const Vec& state, const Vec& action) const override;
  std::unique_ptr<Policy> clone() const override { return std::make_unique<EpsilonUniformPolicy>(*this); }

 private:
  PolicyPtr base_;
  double eps_;
  int action_dim_;
  double action_bound_;
};

// Always plays the base policy's mode. Used for evaluation.
class ModePolicy final : public Policy {
 public:
  explicit ModePolicy(PolicyPtr base) : base_(std::move(base)) {}
  Vec sample(const Vec& state, Rng&) const override { return base_->mode(state); }
  Vec mode(const Vec& state) const override { return base_->mode(state); }
  double log_prob(const Vec& state, const Vec& action) const override;
  std::unique_ptr<Policy> clone() const override { return std::make_unique<ModePolicy>(*this); }

 private:
  PolicyPtr base_;
};

// Tabular view of any policy on a finite environment: the row for s is
// exp(log_prob(s, a)) over actions. Throws for continuous environments.
TabularPolicy tabulate(const Environment& env, const Policy& policy);
PolicyPtr greedy_view(const Environment& env, const PolicyPtr& policy);

}  // namespace offirl
