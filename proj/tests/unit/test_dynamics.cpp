#include <doctest.h>

#include <boost/math/distributions/chi_squared.hpp>

#include "offirl/dynamics.hpp"
#include "offirl/generate.hpp"

using namespace offirl;

namespace {

// chain5 without slip: every action has a single successor.
Environment deterministic_chain() {
  FiniteMdp m = builtin_env("chain5").finite();
  m.transition.setZero();
  for (int s = 0; s < 5; ++s) {
    m.transition(s * 2 + 0, std::max(s - 1, 0)) = 1.0;
    m.transition(s * 2 + 1, std::min(s + 1, 4)) = 1.0;
  }
  m.p0 = Vec::Constant(5, 0.2);
  return Environment("chain5-det", m);
}

DynamicsConfig small_config() {
  DynamicsConfig c;
  c.train_steps = 800;
  return c;
}

}  // namespace

TEST_CASE("ensemble keeps the best 5 of 7 members") {
  const auto env = builtin_env("chain5");
  const auto ds = generate_dataset(env, Quality::random, 20, 3, 20);
  const auto ens = fit_ensemble(env, ds, small_config(), 1);
  CHECK(ens.size() == 5);
  REQUIRE(ens.all_validation_scores().size() == 7);
  auto sorted = ens.all_validation_scores();
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 5; ++i) CHECK(ens.validation_scores()[i] == sorted[i]);

  const auto again = fit_ensemble(env, ds, small_config(), 1);
  CHECK(again.all_validation_scores() == ens.all_validation_scores());
}

TEST_CASE("fit_ensemble rejects small datasets") {
  const auto env = builtin_env("chain5");
  const auto ds = generate_dataset(env, Quality::random, 2, 3, 20);
  CHECK_THROWS_AS(fit_ensemble(env, ds, {}, 1), EmptyDataset);
}

TEST_CASE("deterministic tabular successors are learned") {
  const auto env = deterministic_chain();
  const auto train = generate_dataset(env, Quality::random, 50, 4, 20);
  const auto ens = fit_ensemble(env, train, small_config(), 2);
  const auto held_out = generate_dataset(env, Quality::random, 20, 99, 20);
  int hits = 0;
  for (const auto& r : held_out.records) {
    const Vec s = index_vec(static_cast<int>(r.state[0])), a = index_vec(static_cast<int>(r.action[0]));
    if (as_index(ens.predict(0, s, a)) == static_cast<int>(r.next_state[0])) ++hits;
  }
  CHECK(hits >= 0.99 * held_out.size());
}

TEST_CASE("rollout length, tags and errors") {
  const auto env = builtin_env("chain5");
  const auto pi = TabularPolicy::uniform(5, 2);
  CHECK_THROWS_AS(rollout(DynamicsEnsemble{}, pi, {index_vec(0)}, 5, 1), NotTrained);
  const auto ens = fit_ensemble(env, generate_dataset(env, Quality::random, 20, 3, 20), small_config(), 1);
  const auto out = rollout(ens, pi, {index_vec(0)}, kDefaultRolloutHorizon, 7);
  CHECK(out.size() == 5);
  CHECK(out.tag == DatasetTag::synthetic);
  CHECK_NOTHROW(out.validate());
  for (const auto& r : out.records) CHECK_FALSE(r.cost.has_value());
  CHECK_THROWS_AS(rollout(ens, pi, {index_vec(0)}, 0, 1), InvalidParameter);
  CHECK_THROWS_AS(rollout(ens, pi, {index_vec(0)}, kMaxRolloutHorizon + 1, 1), InvalidParameter);
  CHECK(rollout(ens, pi, {index_vec(1), index_vec(2)}, 3, 5) == rollout(ens, pi, {index_vec(1), index_vec(2)}, 3, 5));

  auto expert = generate_dataset(env, Quality::expert, 2, 1, 5);
  CHECK_THROWS_AS(merge_datasets({&expert, &out}, DatasetTag::expert), ValidationError);
}

TEST_CASE("member selection is uniform") {
  const auto env = builtin_env("chain5");
  const auto ens = fit_ensemble(env, generate_dataset(env, Quality::random, 20, 3, 20), small_config(), 1);
  std::vector<int> used;
  const std::vector<Vec> starts(10000, index_vec(2));
  rollout(ens, TabularPolicy::uniform(5, 2), starts, 10, 3, &used);
  REQUIRE(used.size() == 100000);
  std::vector<double> counts(5, 0.0);
  for (int m : used) counts[static_cast<std::size_t>(m)] += 1.0;
  double stat = 0.0;
  for (double c : counts) stat += (c - 20000.0) * (c - 20000.0) / 20000.0;
  boost::math::chi_squared dist(4);
  CHECK(boost::math::cdf(boost::math::complement(dist, stat)) > 0.01);
}

TEST_CASE("model rollouts match true-MDP visitation on chain5") {
  const auto env = builtin_env("chain5");
  const auto data = generate_dataset(env, Quality::random, 100, 11, 20);
  DynamicsConfig cfg;
  const auto ens = fit_ensemble(env, data, cfg, 5);
  const auto pi = TabularPolicy::uniform(5, 2);
  const int n = 10000, k = 5;
  std::vector<Vec> starts;
  Rng rng = make_rng(8);
  for (int i = 0; i < n; ++i) starts.push_back(index_vec(static_cast<int>(uniform_index(rng, 5))));
  const auto synth = rollout(ens, pi, starts, k, 12);

  Vec model = Vec::Zero(5), truth = Vec::Zero(5);
  for (const auto& r : synth.records) model[static_cast<int>(r.next_state[0])] += 1.0;
  for (int i = 0; i < n; ++i) {
    Vec s = starts[static_cast<std::size_t>(i)];
    for (int t = 0; t < k; ++t) {
      s = env.step(s, pi.sample(s, rng), rng);
      truth[as_index(s)] += 1.0;
    }
  }
  const double tv = 0.5 * (model / model.sum() - truth / truth.sum()).cwiseAbs().sum();
  INFO("tv " << tv);
  CHECK(tv <= 0.1);
}

TEST_CASE("continuous ensemble produces valid finite states") {
  const auto env = builtin_env("pointmass2d");
  const auto data = generate_dataset(env, Quality::medium, 5, 2, 100);
  const auto ens = fit_ensemble(env, data, small_config(), 3);
  const auto pi = reference_policy(env, Quality::medium);
  const auto out = rollout(ens, *pi, {Vec::Zero(4), Vec::Constant(4, 1.0)}, 10, 2);
  CHECK(out.size() == 20);
  for (const auto& r : out.records) {
    const Vec s = Eigen::Map<const Vec>(r.next_state.data(), 4);
    CHECK(env.continuous().valid_state(s));
  }
  // One-step mean prediction tracks the true drift.
  double err = 0.0;
  for (std::size_t i = 0; i < 100; ++i) {
    const auto& r = data.records[i];
    const Vec s = Eigen::Map<const Vec>(r.state.data(), 4), a = Eigen::Map<const Vec>(r.action.data(), 2);
    err += (ens.predict(0, s, a) - Eigen::Map<const Vec>(r.next_state.data(), 4)).norm();
  }
  CHECK(err / 100 < 0.1);
}
