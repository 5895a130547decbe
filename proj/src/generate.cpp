#include "offirl/generate.hpp"

#include <cmath>

#include "offirl/oracle.hpp"

namespace offirl {

std::string to_string(Quality q) {
  switch (q) {
    case Quality::expert: return "expert";
    case Quality::medium: return "medium";
    case Quality::random: return "random";
  }
  return "?";
}

Quality parse_quality(const std::string& s) {
  if (s == "expert") return Quality::expert;
  if (s == "medium") return Quality::medium;
  if (s == "random") return Quality::random;
  throw InvalidParameter("unknown dataset quality '" + s + "' (valid: expert, medium, random)");
}

namespace {

// Discrete-time LQR gain from Riccati iteration.
Mat lqr_gain(const ContinuousEnvSpec& e) {
  const Mat q = e.state_cost_weights.asDiagonal();
  const Mat r = e.action_cost_weights.asDiagonal();
  const Mat& a = e.a_matrix;
  const Mat& b = e.b_matrix;
  Mat p = q;
  Mat k;
  for (int it = 0; it < 5000; ++it) {
    k = (r + b.transpose() * p * b).ldlt().solve(b.transpose() * p * a);
    Mat p2 = q + a.transpose() * p * (a - b * k);
    const double diff = (p2 - p).cwiseAbs().maxCoeff();
    p = 0.5 * (p2 + p2.transpose());
    if (diff < 1e-12) break;
  }
  return k;
}

}  // namespace

PolicyPtr reference_policy(const Environment& env, Quality q) {
  if (env.is_finite()) {
    const auto& m = env.finite();
    const TabularPolicy expert = TabularPolicy::greedy(value_iteration(m, m.cost, m.gamma));
    const TabularPolicy uniform = TabularPolicy::uniform(m.n_states, m.n_actions);
    switch (q) {
      case Quality::expert: return std::make_shared<TabularPolicy>(expert);
      case Quality::medium:
        return std::make_shared<TabularPolicy>(
            Mat((1.0 - kMediumEpsilon) * expert.probs() + kMediumEpsilon * uniform.probs()));
      case Quality::random: return std::make_shared<TabularPolicy>(uniform);
    }
  }
  const auto& c = env.continuous();
  auto expert = std::make_shared<LinearGaussianPolicy>(lqr_gain(c), 0.1, c.action_bound);
  switch (q) {
    case Quality::expert: return expert;
    case Quality::medium:
      return std::make_shared<EpsilonUniformPolicy>(expert, kMediumEpsilon, c.action_dim, c.action_bound);
    case Quality::random: return std::make_shared<EpsilonUniformPolicy>(expert, 1.0, c.action_dim, c.action_bound);
  }
  throw InvalidParameter("reference_policy: bad quality");
}

TrajectoryDataset rollout_dataset(const Environment& env, const Policy& policy, int episodes, int steps,
                                  std::uint64_t seed, DatasetTag tag) {
  if (episodes <= 0) throw EmptyDataset("generate_dataset: episodes must be positive");
  if (steps <= 0) throw InvalidParameter("generate_dataset: steps must be positive");
  TrajectoryDataset ds;
  ds.env_name = env.name();
  ds.tag = tag;
  ds.records.reserve(static_cast<std::size_t>(episodes) * steps);
  for (int ep = 0; ep < episodes; ++ep) {
    Rng rng = make_rng(seed, static_cast<std::uint64_t>(ep));
    Vec s = env.reset(rng);
    for (int t = 0; t < steps; ++t) {
      const Vec a = policy.sample(s, rng);
      const Vec next = env.step(s, a, rng);
      TransitionRecord r;
      r.episode_id = ep;
      r.t = t;
      r.state.assign(s.data(), s.data() + s.size());
      r.action.assign(a.data(), a.data() + a.size());
      r.next_state.assign(next.data(), next.data() + next.size());
      r.cost = env.cost(s, a);
      r.terminal = t + 1 == steps;
      ds.records.push_back(std::move(r));
      s = next;
    }
  }
  return ds;
}

TrajectoryDataset generate_dataset(const Environment& env, Quality q, int episodes, std::uint64_t seed, int steps) {
  const auto policy = reference_policy(env, q);
  return rollout_dataset(env, *policy, episodes, steps < 0 ? env.horizon() : steps, seed,
                         q == Quality::expert ? DatasetTag::expert : DatasetTag::exploratory);
}

ReturnEstimate policy_eval_return(const Environment& env, const Policy& policy, int episodes, std::uint64_t seed,
                                  int horizon) {
  if (episodes < 1) throw InvalidParameter("policy_eval_return: episodes must be >= 1");
  const double gamma = env.gamma();
  int steps = horizon;
  if (steps < 0) {
    if (env.is_finite())
      steps = gamma > 0.0 ? static_cast<int>(std::ceil(std::log(1e-12) / std::log(gamma))) : 1;
    else
      steps = env.horizon();
  }
  std::vector<double> totals(static_cast<std::size_t>(episodes));
  for (int ep = 0; ep < episodes; ++ep) {
    Rng rng = make_rng(seed, static_cast<std::uint64_t>(ep));
    Vec s = env.reset(rng);
    double disc = 1.0, total = 0.0;
    for (int t = 0; t < steps; ++t) {
      const Vec a = policy.sample(s, rng);
      total += disc * env.cost(s, a);
      s = env.step(s, a, rng);
      disc *= gamma;
    }
    totals[static_cast<std::size_t>(ep)] = total;
  }
  ReturnEstimate r;
  for (double x : totals) r.mean += x;
  r.mean /= episodes;
  if (episodes > 1) {
    double var = 0.0;
    for (double x : totals) var += (x - r.mean) * (x - r.mean);
    var /= (episodes - 1);
    r.std_error = std::sqrt(var / episodes);
  }
  r.half_width = 1.96 * r.std_error;
  return r;
}

double evaluate_policy(const Environment& env, const Policy& policy, int episodes, std::uint64_t seed) {
  if (env.is_finite()) return exact_return(env.finite(), tabulate(env, policy), env.gamma());
  return policy_eval_return(env, policy, episodes, seed).mean;
}

}  // namespace offirl
