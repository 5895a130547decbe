#pragma once

#include <optional>

#include "offirl/dataset.hpp"
#include "offirl/env.hpp"
#include "offirl/nn.hpp"
#include "offirl/policy.hpp"

namespace offirl {

inline constexpr int kDefaultRolloutHorizon = 5;
inline constexpr int kMaxRolloutHorizon = 10;

struct DynamicsConfig {
  int trained_members = 7;
  int kept_members = 5;
  std::vector<int> hidden{64, 64};
  int train_steps = 1500;
  int batch = 64;
  double lr = 1e-3;
  double validation_fraction = 0.1;
  std::size_t min_transitions = 100;

  void validate() const;
};

// Gaussian next-state models. Finite environments regress the one-hot
// successor (mean = transition row); continuous ones regress the
// standardised state delta.
class DynamicsEnsemble {
 public:
  bool fitted() const { return !members_.empty(); }
  std::size_t size() const { return members_.size(); }
  const Mlp& member(std::size_t i) const { return members_.at(i); }
  // Held-out mean squared error of the kept members, ascending.
  const std::vector<double>& validation_scores() const { return kept_scores_; }
  // Scores of all trained members in training order.
  const std::vector<double>& all_validation_scores() const { return all_scores_; }
  const Environment& env() const;

  // Greedy prediction: nearest vertex of the mean (finite) or the mean.
  Vec predict(std::size_t member, const Vec& s, const Vec& a) const;
  // Finite: categorical draw from the clipped, renormalised mean row.
  // Continuous: Gaussian draw clipped to the state box.
  Vec sample_next(std::size_t member, const Vec& s, const Vec& a, Rng& rng) const;

  friend DynamicsEnsemble fit_ensemble(const Environment& env, const TrajectoryDataset& dataset,
                                       const DynamicsConfig& config, std::uint64_t seed);

 private:
  Mat member_forward(std::size_t member, const Vec& s, const Vec& a, Mat* scale) const;

  std::optional<Environment> env_;
  std::vector<Mlp> members_;
  std::vector<double> kept_scores_, all_scores_;
  Vec in_mean_, in_std_, out_mean_, out_std_;
};

DynamicsEnsemble fit_ensemble(const Environment& env, const TrajectoryDataset& dataset, const DynamicsConfig& config,
                              std::uint64_t seed);

// k-step rollouts in the learned model, one episode per start state. Each
// step draws a uniformly random member; the chosen indices are appended to
// members_used when given. Records carry no cost and the synthetic tag.
TrajectoryDataset rollout(const DynamicsEnsemble& ensemble, const Policy& policy, const std::vector<Vec>& starts,
                          int k, std::uint64_t seed, std::vector<int>* members_used = nullptr);

}  // namespace offirl
