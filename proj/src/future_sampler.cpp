#include "offirl/future_sampler.hpp"

#include <map>

namespace offirl {

namespace {

Vec record_state(const std::vector<double>& v) { return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size())); }

}  // namespace

std::vector<Vec> draw_mu_starts(const Environment& env, const TrajectoryDataset& dataset, std::size_t n, Rng& rng) {
  std::vector<Vec> out;
  out.reserve(n);
  if (env.is_finite()) {
    const Vec& p0 = env.finite().p0;
    for (std::size_t j = 0; j < n; ++j)
      out.push_back(index_vec(static_cast<int>(categorical(rng, p0.data(), static_cast<std::size_t>(p0.size())))));
    return out;
  }
  const auto starts = dataset.episode_starts();
  if (starts.empty()) throw EmptyDataset("draw_mu_starts: dataset has no episodes");
  for (std::size_t j = 0; j < n; ++j) out.push_back(record_state(dataset.records[starts[uniform_index(rng, starts.size())]].state));
  return out;
}

std::vector<FutureSample> sample_mu_idle(const Generator& gen_gamma, const Generator& gen_delta,
                                         const std::vector<Vec>& starts, std::size_t n, std::uint64_t seed) {
  if (gen_gamma.updates() == 0 || gen_delta.updates() == 0)
    throw NotTrained("sample_mu_idle: both generators need training");
  if (n == 0) return {};
  if (starts.empty()) throw InvalidParameter("sample_mu_idle: no start states");
  Rng rng = make_rng(seed, 0);
  std::vector<Vec> s0;
  s0.reserve(n);
  for (std::size_t j = 0; j < n; ++j) s0.push_back(starts[uniform_index(rng, starts.size())]);
  const auto mid = gen_gamma.sample(s0, rng);
  std::vector<Vec> mid_states;
  mid_states.reserve(n);
  for (const auto& x : mid) mid_states.push_back(x.state);
  auto out = gen_delta.sample(mid_states, rng);
  for (std::size_t j = 0; j < n; ++j) out[j].cond = s0[j];
  return out;
}

std::vector<FutureSample> sample_mu_rollout(const EvaluationFunction& e_gamma, const DynamicsEnsemble& ensemble,
                                            const Policy& policy, const TrajectoryDataset& dataset,
                                            const RolloutSamplerConfig& config, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw InvalidParameter("sample_mu_rollout: N must be positive");
  if (config.horizon < 1 || config.horizon > kMaxRolloutHorizon)
    throw InvalidParameter("sample_mu_rollout: horizon must lie in [1, " + std::to_string(kMaxRolloutHorizon) + "]");
  if (!(config.delta >= 0.0 && config.delta < 1.0)) throw InvalidParameter("sample_mu_rollout: delta must lie in [0,1)");
  if (config.pool_factor < 1) throw InvalidParameter("sample_mu_rollout: pool_factor must be positive");
  if (dataset.empty()) throw EmptyDataset("sample_mu_rollout: dataset is empty");
  if (!ensemble.fitted()) throw NotTrained("sample_mu_rollout: dynamics ensemble has not been fitted");
  const Environment& env = ensemble.env();
  Rng rng = make_rng(seed, 0);

  const auto starts = draw_mu_starts(env, dataset, n, rng);
  const auto pool_idx = sample_indices(dataset, n * static_cast<std::size_t>(config.pool_factor), rng);
  std::vector<Vec> pool_s, pool_a;
  for (auto i : pool_idx) {
    pool_s.push_back(record_state(dataset.records[i].state));
    pool_a.push_back(record_state(dataset.records[i].action));
  }

  // Resampling weights depend on s0 only through E, so they are computed
  // once per distinct start state.
  auto key = [](const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  std::map<std::vector<double>, Vec> weights;
  for (const Vec& s0 : starts) {
    auto [it, fresh] = weights.try_emplace(key(s0));
    if (!fresh) continue;
    std::vector<FutureSample> xs;
    xs.reserve(pool_s.size());
    for (std::size_t k = 0; k < pool_s.size(); ++k) xs.push_back({s0, pool_s[k], pool_a[k]});
    it->second = e_gamma.probs(xs).unaryExpr([](double p) { return density_ratio(p); });
  }

  const std::vector<double> eta = eta_weights(TimeWeighting::geometric(config.delta), config.horizon);
  std::vector<FutureSample> out;
  out.reserve(n);
  for (const Vec& s0 : starts) {
    const Vec& w = weights.at(key(s0));
    const auto k = categorical(rng, w.data(), static_cast<std::size_t>(w.size()));
    const auto t = static_cast<int>(categorical(rng, eta));
    Vec s = pool_s[k], a = pool_a[k];
    for (int step = 0; step < t; ++step) {
      s = ensemble.sample_next(uniform_index(rng, ensemble.size()), s, a, rng);
      a = policy.sample(s, rng);
    }
    out.push_back({s0, s, a});
  }
  return out;
}

FutureSource dataset_source(TrajectoryDataset dataset) {
  if (dataset.empty()) throw EmptyDataset("dataset_source: dataset is empty");
  auto data = std::make_shared<const TrajectoryDataset>(std::move(dataset));
  // Start state of the episode each record belongs to.
  std::vector<std::size_t> first(data->size());
  for (std::size_t i = 0; i < data->size(); ++i)
    first[i] = (i == 0 || data->records[i].episode_id != data->records[i - 1].episode_id) ? i : first[i - 1];
  return [data, first = std::move(first)](std::size_t n, Rng& rng) {
    std::vector<FutureSample> out;
    out.reserve(n);
    for (auto i : sample_indices(*data, n, rng)) {
      const auto& r = data->records[i];
      out.push_back({record_state(data->records[first[i]].state), record_state(r.state), record_state(r.action)});
    }
    return out;
  };
}

std::array<std::size_t, 3> fill_cost_buffer(CostReplayBuffer& buffer, const MixtureWeights& weights,
                                            const CostSources& sources, std::size_t n, std::uint64_t seed) {
  weights.validate();
  const std::array<double, 3> f{weights.f_data, weights.f_idle, weights.f_rollout};
  const std::array<const FutureSource*, 3> src{&sources.data, &sources.idle, &sources.rollout};
  const std::array<const char*, 3> names{"data", "idle", "rollout"};
  for (std::size_t i = 0; i < 3; ++i)
    if (f[i] > 0.0 && !*src[i]) throw InvalidParameter(std::string("fill_cost_buffer: no ") + names[i] + " source");

  Rng rng = make_rng(seed, 0);
  std::vector<int> tags(n);
  std::array<std::size_t, 3> counts{};
  for (auto& t : tags) {
    t = static_cast<int>(categorical(rng, f.data(), 3));
    ++counts[static_cast<std::size_t>(t)];
  }
  std::array<std::vector<FutureSample>, 3> drawn;
  for (std::size_t i = 0; i < 3; ++i) {
    if (counts[i] == 0) continue;
    Rng src_rng = make_rng(seed, 1 + i);
    drawn[i] = (*src[i])(counts[i], src_rng);
    if (drawn[i].size() != counts[i]) throw Error(std::string("fill_cost_buffer: ") + names[i] + " source returned too few samples");
  }
  std::array<std::size_t, 3> used{};
  for (int t : tags) {
    const auto i = static_cast<std::size_t>(t);
    buffer.push({std::move(drawn[i][used[i]++]), static_cast<SourceTag>(t)});
  }
  return counts;
}

}  // namespace offirl
