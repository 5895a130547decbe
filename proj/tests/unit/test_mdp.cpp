#include <doctest.h>

#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>

#include "offirl/generate.hpp"
#include "offirl/oracle.hpp"

using namespace offirl;

namespace {

double chi2_pvalue(const std::vector<double>& observed, const std::vector<double>& expected) {
  double stat = 0.0;
  int df = -1;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    if (expected[i] <= 0.0) continue;
    stat += (observed[i] - expected[i]) * (observed[i] - expected[i]) / expected[i];
    ++df;
  }
  boost::math::chi_squared dist(df);
  return boost::math::cdf(boost::math::complement(dist, stat));
}

FiniteMdp self_loop(double cost) {
  FiniteMdp m;
  m.n_states = 1;
  m.n_actions = 1;
  m.transition = Mat::Ones(1, 1);
  m.cost = Mat::Constant(1, 1, cost);
  m.p0 = Vec::Ones(1);
  m.gamma = 0.9;
  return m;
}

}  // namespace

TEST_CASE("eta weights") {
  auto d = eta_weights(TimeWeighting::dirac0(), 3);
  CHECK(d == std::vector<double>{1, 0, 0, 0});

  const auto g = TimeWeighting::geometric(0.9);
  CHECK(eta(g, 0) == doctest::Approx(0.1));
  CHECK(eta(g, 1) == doctest::Approx(0.09));
  CHECK(eta(g, 2) == doctest::Approx(0.081));

  auto w = eta_weights(g, 2);
  REQUIRE(w.size() == 3);
  CHECK(w[0] == doctest::Approx(0.3690).epsilon(1e-4));
  CHECK(w[1] == doctest::Approx(0.3321).epsilon(1e-4));
  CHECK(w[2] == doctest::Approx(0.2989).epsilon(1e-4));

  CHECK_THROWS_AS(eta_weights(TimeWeighting::geometric(1.0), 3), InvalidParameter);
  CHECK_THROWS_AS(eta_weights(TimeWeighting::geometric(-0.1), 3), InvalidParameter);
  CHECK_THROWS_AS(eta_weights(g, -1), InvalidParameter);
}

TEST_CASE("eta weights always sum to one") {
  Rng rng = make_rng(5);
  for (int i = 0; i < 200; ++i) {
    const double delta = 0.999 * uniform01(rng);
    const int h = static_cast<int>(uniform_index(rng, 300));
    double total = 0.0;
    for (double x : eta_weights(TimeWeighting::geometric(delta), h)) {
      CHECK(x >= 0.0);
      total += x;
    }
    CHECK(std::abs(total - 1.0) <= 1e-9);
  }
}

TEST_CASE("builtin environments") {
  const auto chain = builtin_env("chain5");
  CHECK(chain.is_finite());
  CHECK(chain.n_states() == 5);
  CHECK(chain.n_actions() == 2);
  const auto grid = builtin_env("gridworld4x4");
  CHECK(grid.n_states() == 16);
  CHECK(grid.n_actions() == 4);
  const auto pm = builtin_env("pointmass2d");
  CHECK_FALSE(pm.is_finite());
  CHECK(pm.continuous().state_dim == 4);
  CHECK(pm.continuous().action_dim == 2);
  try {
    builtin_env("mountaincar");
    FAIL("expected an error");
  } catch (const InvalidParameter& e) {
    const std::string msg = e.what();
    CHECK(msg.find("chain5") != std::string::npos);
    CHECK(msg.find("gridworld4x4") != std::string::npos);
    CHECK(msg.find("pointmass2d") != std::string::npos);
  }
}

TEST_CASE("finite mdp validation") {
  FiniteMdp m = self_loop(1.0);
  m.transition(0, 0) = 0.9;
  CHECK_THROWS_AS(m.validate(), ValidationError);
  m = self_loop(1.5);
  CHECK_THROWS_AS(m.validate(), ValidationError);
}

TEST_CASE("continuous steps keep states valid") {
  const auto pm = builtin_env("pointmass2d");
  const auto& spec = pm.continuous();
  Rng rng = make_rng(9);
  Vec s = pm.reset(rng);
  for (int t = 0; t < 2000; ++t) {
    Vec a(2);
    a << 10.0 * standard_normal(rng), 10.0 * standard_normal(rng);
    s = pm.step(s, a, rng);
    REQUIRE(spec.valid_state(s));
    const double c = pm.cost(s, a);
    CHECK(c >= 0.0);
    CHECK(c <= 1.0);
  }
}

TEST_CASE("tabular sampling frequencies follow the row distribution") {
  Mat p(2, 3);
  p << 0.2, 0.5, 0.3, 0.05, 0.05, 0.9;
  const TabularPolicy pi(p);
  Rng rng = make_rng(21);
  for (int s = 0; s < 2; ++s) {
    std::vector<double> counts(3, 0.0), expected(3);
    for (int i = 0; i < 10000; ++i) {
      const Vec a = pi.sample(index_vec(s), rng);
      CHECK(std::isfinite(pi.log_prob(index_vec(s), a)));
      counts[as_index(a)] += 1.0;
    }
    for (int a = 0; a < 3; ++a) expected[a] = 10000.0 * p(s, a);
    CHECK(chi2_pvalue(counts, expected) > 0.01);
  }
}

TEST_CASE("tabular policy rows must be distributions") {
  Mat p(1, 2);
  p << 0.5, 0.6;
  CHECK_THROWS_AS(TabularPolicy{p}, InvalidParameter);
}

TEST_CASE("sampled actions have finite log-probability for every policy kind") {
  Rng rng = make_rng(4);
  for (const auto& name : builtin_env_names()) {
    const auto env = builtin_env(name);
    for (Quality q : {Quality::expert, Quality::medium, Quality::random}) {
      const auto pi = reference_policy(env, q);
      Vec s = env.reset(rng);
      for (int t = 0; t < 200; ++t) {
        const Vec a = pi->sample(s, rng);
        REQUIRE(std::isfinite(pi->log_prob(s, a)));
        s = env.step(s, a, rng);
      }
    }
  }
  const auto pm = builtin_env("pointmass2d");
  const auto actor = GaussianMlpPolicy::make(4, 2, {8, 8}, rng);
  const Vec s = pm.reset(rng);
  for (int i = 0; i < 100; ++i) CHECK(std::isfinite(actor.log_prob(s, actor.sample(s, rng))));
}

TEST_CASE("generate_dataset counts, structure and reproducibility") {
  const auto env = builtin_env("chain5");
  const auto ds = generate_dataset(env, Quality::random, 100, 1, 20);
  CHECK(ds.size() == 2000);
  CHECK_NOTHROW(ds.validate());
  CHECK(ds.tag == DatasetTag::exploratory);
  for (std::size_t i = 0; i < ds.size(); ++i) CHECK(ds.records[i].t == static_cast<int>(i % 20));
  CHECK(generate_dataset(env, Quality::random, 100, 1, 20) == ds);
  CHECK_FALSE(generate_dataset(env, Quality::random, 100, 2, 20) == ds);
  CHECK_THROWS_AS(generate_dataset(env, Quality::expert, 0, 1), EmptyDataset);

  const auto pm = builtin_env("pointmass2d");
  const auto c1 = generate_dataset(pm, Quality::medium, 3, 8);
  CHECK(c1.size() == 600);
  CHECK(c1 == generate_dataset(pm, Quality::medium, 3, 8));
  CHECK_NOTHROW(c1.validate());
}

TEST_CASE("policy_eval_return reference values") {
  const Environment one("loop", self_loop(1.0));
  const auto pi = TabularPolicy::uniform(1, 1);
  const auto r = policy_eval_return(one, pi, 5, 0);
  CHECK(r.mean == doctest::Approx(10.0).epsilon(1e-9));
  CHECK(r.half_width == 0.0);

  const Environment zero("loop0", self_loop(0.0));
  CHECK(policy_eval_return(zero, pi, 3, 0).mean == 0.0);
  CHECK_THROWS_AS(policy_eval_return(zero, pi, 0, 0), InvalidParameter);
}

TEST_CASE("Monte-Carlo return agrees with the oracle on chain5") {
  const auto env = builtin_env("chain5");
  const auto uniform = TabularPolicy::uniform(5, 2);
  const auto mc = policy_eval_return(env, uniform, 2000, 17);
  const double exact = exact_regularized_loss(env.finite(), uniform, env.finite().cost, env.gamma(),
                                              TimeWeighting::dirac0(), false);
  CHECK(std::abs(mc.mean - exact) <= 2.0 * mc.std_error);
  CHECK(policy_eval_return(env, uniform, 50, 3).mean == policy_eval_return(env, uniform, 50, 3).mean);
}

TEST_CASE("medium data sits strictly between random and expert") {
  for (const auto& name : builtin_env_names()) {
    const auto env = builtin_env(name);
    const auto e = policy_eval_return(env, *reference_policy(env, Quality::expert), 200, 1);
    const auto m = policy_eval_return(env, *reference_policy(env, Quality::medium), 200, 2);
    const auto r = policy_eval_return(env, *reference_policy(env, Quality::random), 200, 3);
    INFO(name << ": expert " << e.mean << " medium " << m.mean << " random " << r.mean);
    CHECK(e.mean < m.mean);
    CHECK(m.mean < r.mean);
  }
}
