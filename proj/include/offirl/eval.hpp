#pragma once

#include <string>
#include <vector>

#include "offirl/dataset.hpp"
#include "offirl/env.hpp"
#include "offirl/idle.hpp"
#include "offirl/policy.hpp"

namespace offirl {

// k(x,y) = exp(−‖x−y‖²/d), d the coordinate dimension.
double rbf_kernel(const Eigen::Ref<const Vec>& x, const Eigen::Ref<const Vec>& y);

// Unbiased MMD² between column-wise sample sets; both need ≥ 2 columns.
double mmd_unbiased(const Mat& x, const Mat& y);

// 100·(raw − random)/(expert − random). Costs are minimised, so the expert
// anchor is the lower one and still maps to 100.
double normalized_return(double raw, double random_anchor, double expert_anchor);

// [enc(s0); enc(s₊); enc(a₊)] per column.
Mat embed_future_samples(const Environment& env, const std::vector<FutureSample>& xs);

// Draws (s₊,a₊) ~ ρ̄(·|s0) from the normalised oracle occupancy, s0 given.
std::vector<FutureSample> sample_oracle_occupancy(const Environment& env, const TabularPolicy& policy, double gamma,
                                                  const std::vector<Vec>& starts, Rng& rng);

struct MmdCurvePoint {
  double gamma = 0.0;
  int iteration = 0;
  double mmd2 = 0.0;    // averaged over policies
  double stderr_ = 0.0;
};

struct MmdCurveConfig {
  std::vector<double> gammas{0.5, 0.9, 0.99};
  int iterations = 5000;
  int eval_every = 250;
  int samples = 500;  // per side of each MMD estimate
  IdleConfig idle;
};

struct MmdCurveResult {
  std::vector<MmdCurvePoint> points;
  // Per γ: final/initial ratio of the policy-averaged curve.
  std::vector<std::pair<double, double>> final_over_initial;
  // Per γ: MMD² between two independent oracle sample sets (the floor).
  std::vector<std::pair<double, double>> reference;
};

// Trains one Idle instance per (policy, γ) and tracks MMD² between
// generator samples and oracle (finite) or on-policy (continuous) samples.
MmdCurveResult mmd_curve_experiment(const Environment& env, const std::vector<PolicyPtr>& policies,
                                    const TrajectoryDataset& dataset, const MmdCurveConfig& config,
                                    std::uint64_t seed);

void write_mmd_curve_csv(const MmdCurveResult& result, const std::string& path);

}  // namespace offirl
