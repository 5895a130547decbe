#pragma once

#include <string>

#include "offirl/dataset.hpp"
#include "offirl/env.hpp"
#include "offirl/policy.hpp"

namespace offirl {

enum class Quality { expert, medium, random };
std::string to_string(Quality q);
Quality parse_quality(const std::string& s);

inline constexpr double kMediumEpsilon = 0.5;

// Expert: value-iteration greedy policy (finite) or a noisy LQR controller
// (continuous). Medium: expert mixed with uniform actions at ε = 0.5.
// Random: uniform actions.
PolicyPtr reference_policy(const Environment& env, Quality q);

TrajectoryDataset rollout_dataset(const Environment& env, const Policy& policy, int episodes, int steps,
                                  std::uint64_t seed, DatasetTag tag);

// steps < 0 uses the environment horizon.
TrajectoryDataset generate_dataset(const Environment& env, Quality q, int episodes, std::uint64_t seed,
                                   int steps = -1);

struct ReturnEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  double half_width = 0.0;  // 95% normal interval
};

// Mean discounted cost over seeded episodes. Finite environments run until
// γ^T < 1e-12 so the estimate targets the infinite-horizon value;
// continuous ones use their episode horizon.
ReturnEstimate policy_eval_return(const Environment& env, const Policy& policy, int episodes, std::uint64_t seed,
                                  int horizon = -1);

// Exact value for finite environments, Monte-Carlo otherwise.
double evaluate_policy(const Environment& env, const Policy& policy, int episodes, std::uint64_t seed);

}  // namespace offirl
