#pragma once

#include <array>
#include <functional>

#include "offirl/dataset.hpp"
#include "offirl/dynamics.hpp"
#include "offirl/idle.hpp"

namespace offirl {

// Start states for μ sampling: p0 on finite environments, episode-initial
// dataset states otherwise.
std::vector<Vec> draw_mu_starts(const Environment& env, const TrajectoryDataset& dataset, std::size_t n, Rng& rng);

// (s,a) ~ G_γ(·|s0), then (s₊,a₊) ~ G_δ(·|s). Start states are drawn
// uniformly from `starts`. Generators that never took an update throw NotTrained.
std::vector<FutureSample> sample_mu_idle(const Generator& gen_gamma, const Generator& gen_delta,
                                         const std::vector<Vec>& starts, std::size_t n, std::uint64_t seed);

struct RolloutSamplerConfig {
  double delta = 0.9;
  int horizon = kDefaultRolloutHorizon;
  int pool_factor = 4;  // candidate pairs per requested sample
};

// Intermediate pairs are dataset pairs resampled ∝ E/(1−E)(·|s0); each one
// seeds a `horizon`-step model rollout under the policy and one pair of it
// is kept at t ~ Geometric(δ) truncated to 0..horizon.
std::vector<FutureSample> sample_mu_rollout(const EvaluationFunction& e_gamma, const DynamicsEnsemble& ensemble,
                                            const Policy& policy, const TrajectoryDataset& dataset,
                                            const RolloutSamplerConfig& config, std::size_t n, std::uint64_t seed);

// A source yields n future samples from the given stream.
using FutureSource = std::function<std::vector<FutureSample>(std::size_t n, Rng& rng)>;

struct CostSources {
  FutureSource data, idle, rollout;
};

// Dataset pairs, conditioned on the start state of their episode.
FutureSource dataset_source(TrajectoryDataset dataset);

// Draws a source per entry with the mixture probabilities, then pushes the
// entries in draw order. Returns the number of entries per source.
std::array<std::size_t, 3> fill_cost_buffer(CostReplayBuffer& buffer, const MixtureWeights& weights,
                                            const CostSources& sources, std::size_t n, std::uint64_t seed);

}  // namespace offirl
