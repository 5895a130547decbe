#include "offirl/cameron.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>

#include "offirl/eval.hpp"
#include "offirl/generate.hpp"

namespace offirl {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

const std::vector<std::pair<Algorithm, std::string>>& algorithm_table() {
  static const std::vector<std::pair<Algorithm, std::string>> t{{Algorithm::cameron, "cameron"},
                                                                {Algorithm::oril, "oril"},
                                                                {Algorithm::tgr, "tgr"},
                                                                {Algorithm::bc, "bc"},
                                                                {Algorithm::combo, "combo"}};
  return t;
}

// Shared offline-RL loop: `iterations` blocks of rl_steps under `cost_at(i)`,
// greedy evaluation every eval_every blocks, best policy kept.
class RlLoop {
 public:
  RlLoop(const Environment& env, const TrajectoryDataset& data, const CameronConfig& config, std::uint64_t seed)
      : env_(env),
        config_(config),
        agent_(env, data, config.combo, derive_seed(seed, 1)),
        anchors_(return_anchors(env, config.combo.eval_episodes, derive_seed(seed, 2))),
        eval_seed_(derive_seed(seed, 3)) {}

  OfflineRlAgent& agent() { return agent_; }

  void step(int iteration, const CostFn& cost, IterationMetrics& row, IrlResult& out) {
    agent_.train(config_.rl_steps, tabulated_cost(env_, cost));
    row.iteration = iteration;
    row.eval_return = row.normalized = kNaN;
    const bool last = iteration + 1 == config_.iterations;
    if ((iteration + 1) % config_.eval_every == 0 || last) {
      const PolicyPtr pi = agent_.policy();
      row.eval_return = greedy_return(env_, pi, config_.combo.eval_episodes, eval_seed_);
      row.normalized = normalized_return(row.eval_return, anchors_.random, anchors_.expert);
      if (!out.policy || row.eval_return < out.best_return) {
        out.policy = pi;
        out.best_return = row.eval_return;
        out.best_normalized = row.normalized;
      }
    }
    out.metrics.push_back(row);
  }

 private:
  const Environment& env_;
  const CameronConfig& config_;
  OfflineRlAgent agent_;
  ReturnAnchors anchors_;
  std::uint64_t eval_seed_;
};

TrajectoryDataset union_of(const TrajectoryDataset& expert, const TrajectoryDataset& exploratory) {
  return merge_datasets({&expert, &exploratory}, DatasetTag::mixed);
}

void check_inputs(const TrajectoryDataset& expert, const TrajectoryDataset& exploratory) {
  if (expert.empty()) throw EmptyDataset("missing expert data");
  if (exploratory.empty()) throw EmptyDataset("missing exploratory data");
}

}  // namespace

std::string to_string(Algorithm a) {
  for (const auto& [k, v] : algorithm_table())
    if (k == a) return v;
  return "?";
}

std::vector<std::string> algorithm_names() {
  std::vector<std::string> out;
  for (const auto& [k, v] : algorithm_table()) out.push_back(v);
  return out;
}

Algorithm parse_algorithm(const std::string& s) {
  for (const auto& [k, v] : algorithm_table())
    if (v == s) return k;
  std::string names;
  for (const auto& n : algorithm_names()) names += (names.empty() ? "" : ", ") + n;
  throw InvalidParameter("unknown algorithm '" + s + "' (valid: " + names + ")");
}

void CameronConfig::validate() const {
  if (iterations < 1 || idle_updates < 0 || rl_steps < 0 || cost_steps < 0 || eval_every < 1)
    throw InvalidParameter("cameron: schedule counts must be non-negative (iterations, eval_every positive)");
  if (cost_batch == 0 || fill_per_iteration == 0 || buffer_capacity == 0 || expert_pool == 0)
    throw InvalidParameter("cameron: batch and buffer sizes must be positive");
  if (!(gamma >= 0.0 && gamma < 1.0) || !(delta >= 0.0 && delta < 1.0))
    throw InvalidParameter("cameron: gamma and delta must lie in [0,1)");
  mixture.validate();
  idle.validate();
  combo.validate();
  baseline.validate();
}

ReturnAnchors return_anchors(const Environment& env, int episodes, std::uint64_t seed) {
  // The random anchor keeps the uniform policy stochastic: its greedy view
  // would play action 0 everywhere.
  ReturnAnchors a;
  a.random = evaluate_policy(env, *reference_policy(env, Quality::random), episodes, seed);
  a.expert = greedy_return(env, reference_policy(env, Quality::expert), episodes, seed);
  return a;
}

IrlResult cameron_run(const Environment& env, const TrajectoryDataset& expert, const TrajectoryDataset& exploratory,
                      const CameronConfig& config, std::uint64_t seed) {
  config.validate();
  check_inputs(expert, exploratory);
  const TrajectoryDataset all = union_of(expert, exploratory);
  IrlResult out;
  out.algorithm = Algorithm::cameron;
  RlLoop loop(env, all, config, seed);

  Rng init = make_rng(seed, 4);
  CostModel cost = CostModel::make(env, config.cost, init);
  Optimizer cost_opt(config.cost.opt);
  CostReplayBuffer buffer(config.buffer_capacity);
  Rng expert_rng = make_rng(seed, 5);
  const auto expert_future = sample_expert_future(expert, config.gamma, config.delta, config.expert_pool, expert_rng);

  const bool need_idle_gamma = config.mixture.f_idle > 0.0 || config.mixture.f_rollout > 0.0;
  const bool need_idle_delta = config.mixture.f_idle > 0.0;
  IdleConfig ic = config.idle;
  ic.gamma = config.gamma;
  IdleTrainer idle_gamma(env, ic, derive_seed(seed, 6));
  ic.gamma = config.delta;
  IdleTrainer idle_delta(env, ic, derive_seed(seed, 7));
  if (config.mixture.f_rollout > 0.0 && !loop.agent().shared_ensemble())
    throw InvalidParameter("cameron: roll-out samples need a dynamics model (beta > 0 or f < 1)");
  RolloutSamplerConfig rcfg = config.rollout;
  rcfg.delta = config.delta;

  const FutureSource data_src = dataset_source(exploratory);
  for (int it = 0; it < config.iterations; ++it) {
    const PolicyPtr pi = loop.agent().policy();
    if (need_idle_gamma) idle_gamma.train(all, *pi, config.idle_updates);
    if (need_idle_delta) idle_delta.train(all, *pi, config.idle_updates);

    CostSources src;
    src.data = data_src;
    if (need_idle_delta)
      src.idle = [&](std::size_t n, Rng& rng) {
        const auto starts = draw_mu_starts(env, all, n, rng);
        return sample_mu_idle(idle_gamma.generator(), idle_delta.generator(), starts, n, rng());
      };
    if (config.mixture.f_rollout > 0.0)
      src.rollout = [&](std::size_t n, Rng& rng) {
        return sample_mu_rollout(idle_gamma.evaluation(), loop.agent().ensemble(), *pi, all, rcfg, n, rng());
      };
    const auto counts =
        fill_cost_buffer(buffer, config.mixture, src, config.fill_per_iteration, derive_seed(seed, 1000 + it));

    IterationMetrics row;
    row.n_data = counts[0];
    row.n_idle = counts[1];
    row.n_rollout = counts[2];
    row.buffer_size = buffer.size();
    // The RL step sees the cost from the previous discriminator update.
    const CostFn c = cost.as_cost_fn();
    row.cost_loss = cameron_cost_update(cost, cost_opt, buffer, expert_future, config.cost_steps, config.cost_batch,
                                        derive_seed(seed, 5000 + it));
    loop.step(it, c, row, out);
  }
  out.cost = std::move(cost);
  return out;
}

IrlResult baseline_run(Algorithm algorithm, const Environment& env, const TrajectoryDataset& expert,
                       const TrajectoryDataset& exploratory, const CameronConfig& config, std::uint64_t seed) {
  config.validate();
  check_inputs(expert, exploratory);
  IrlResult out;
  out.algorithm = algorithm;
  if (algorithm == Algorithm::cameron) throw InvalidParameter("baseline_run: use cameron_run");
  if (algorithm == Algorithm::bc) {
    out.policy = bc_baseline(env, expert, config.bc, derive_seed(seed, 8));
    const auto anchors = return_anchors(env, config.combo.eval_episodes, derive_seed(seed, 2));
    IterationMetrics row;
    row.eval_return = greedy_return(env, out.policy, config.combo.eval_episodes, derive_seed(seed, 3));
    row.normalized = normalized_return(row.eval_return, anchors.random, anchors.expert);
    out.best_return = row.eval_return;
    out.best_normalized = row.normalized;
    out.metrics.push_back(row);
    return out;
  }

  const TrajectoryDataset all = union_of(expert, exploratory);
  CostFn cost_fn;
  double cost_loss = 0.0;
  if (algorithm == Algorithm::combo) {
    cost_fn = true_cost(env);
  } else {
    Rng init = make_rng(seed, 4);
    CostModel cost = CostModel::make(env, config.cost, init);
    Optimizer opt(config.cost.opt);
    Rng rng = make_rng(seed, 9);
    const int steps = config.cost_steps * config.iterations;
    for (int k = 0; k < steps; ++k) {
      std::vector<TransitionRecord> e, x;
      for (auto i : sample_indices(expert, config.cost_batch, rng)) e.push_back(expert.records[i]);
      for (auto i : sample_indices(exploratory, config.cost_batch, rng)) x.push_back(exploratory.records[i]);
      const LossGrad lg = algorithm == Algorithm::oril
                              ? oril_pu_loss(cost, PairBatch::from_records(e), PairBatch::from_records(x),
                                             config.baseline.oril_phi)
                              : tgr_loss(cost, e, PairBatch::from_records(x), config.baseline.tgr_t0);
      opt.step(cost.params(), -lg.grad);
      cost_loss = lg.value;
    }
    cost_fn = cost.as_cost_fn();
    out.cost = std::move(cost);
  }
  RlLoop loop(env, all, config, seed);
  for (int it = 0; it < config.iterations; ++it) {
    IterationMetrics row;
    row.cost_loss = cost_loss;
    loop.step(it, cost_fn, row, out);
  }
  return out;
}

IrlResult run_algorithm(Algorithm algorithm, const Environment& env, const TrajectoryDataset& expert,
                        const TrajectoryDataset& exploratory, const CameronConfig& config, std::uint64_t seed) {
  return algorithm == Algorithm::cameron ? cameron_run(env, expert, exploratory, config, seed)
                                         : baseline_run(algorithm, env, expert, exploratory, config, seed);
}

void write_metrics_csv(const std::vector<IterationMetrics>& metrics, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << std::setprecision(17)
      << "iteration,cost_loss,eval_return,normalized_return,n_data,n_idle,n_rollout,buffer_size\n";
  auto num = [&](double v) -> std::ostream& {
    if (!std::isnan(v)) out << v;
    return out;
  };
  for (const auto& m : metrics) {
    out << m.iteration << ',' << m.cost_loss << ',';
    num(m.eval_return) << ',';
    num(m.normalized) << ',' << m.n_data << ',' << m.n_idle << ',' << m.n_rollout << ',' << m.buffer_size << '\n';
  }
}

}  // namespace offirl
