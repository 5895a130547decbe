#pragma once

#include <optional>

#include "offirl/cost.hpp"
#include "offirl/future_sampler.hpp"
#include "offirl/idle.hpp"
#include "offirl/offline_rl.hpp"

namespace offirl {

enum class Algorithm { cameron, oril, tgr, bc, combo };
std::string to_string(Algorithm a);
// Throws InvalidParameter listing the valid names.
Algorithm parse_algorithm(const std::string& s);
std::vector<std::string> algorithm_names();

// Desk-scale schedule: the per-iteration counts of the reference schedule
// divided by 10.
struct CameronConfig {
  int iterations = 150;
  int idle_updates = 100;
  int rl_steps = 50;
  int cost_steps = 3;
  std::size_t cost_batch = 256;
  std::size_t fill_per_iteration = 256;
  std::size_t buffer_capacity = CostReplayBuffer::kDefaultCapacity;
  std::size_t expert_pool = 5000;  // expert future samples drawn once
  double gamma = 0.99;
  double delta = 0.9;
  MixtureWeights mixture;
  RolloutSamplerConfig rollout;  // its delta is overwritten by `delta`
  IdleConfig idle;               // its gamma is overwritten per instance
  ComboConfig combo;
  CostModelConfig cost;
  BaselineConfig baseline;
  BcConfig bc;
  int eval_every = 10;  // iterations between policy evaluations

  void validate() const;
};

struct IterationMetrics {
  int iteration = 0;
  double cost_loss = 0.0;
  double eval_return = 0.0;  // NaN when not evaluated this iteration
  double normalized = 0.0;   // NaN likewise
  std::size_t n_data = 0, n_idle = 0, n_rollout = 0;
  std::size_t buffer_size = 0;
};

struct ReturnAnchors {
  double random = 0.0;
  double expert = 0.0;
};
// Greedy-evaluation returns of the uniform and the reference expert policy.
ReturnAnchors return_anchors(const Environment& env, int episodes, std::uint64_t seed);

struct IrlResult {
  Algorithm algorithm = Algorithm::cameron;
  PolicyPtr policy;  // best by periodic evaluation
  std::optional<CostModel> cost;
  double best_return = 0.0;
  double best_normalized = 0.0;
  std::vector<IterationMetrics> metrics;
};

// Needs both datasets non-empty; the offline RL step trains on their union.
IrlResult cameron_run(const Environment& env, const TrajectoryDataset& expert, const TrajectoryDataset& exploratory,
                      const CameronConfig& config, std::uint64_t seed);

// ORIL / TGR learn their cost once and then run the same offline RL
// schedule; combo uses the true cost; bc clones the expert data.
IrlResult baseline_run(Algorithm algorithm, const Environment& env, const TrajectoryDataset& expert,
                       const TrajectoryDataset& exploratory, const CameronConfig& config, std::uint64_t seed);

IrlResult run_algorithm(Algorithm algorithm, const Environment& env, const TrajectoryDataset& expert,
                        const TrajectoryDataset& exploratory, const CameronConfig& config, std::uint64_t seed);

void write_metrics_csv(const std::vector<IterationMetrics>& metrics, const std::string& path);

}  // namespace offirl
