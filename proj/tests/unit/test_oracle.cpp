#include <doctest.h>

#include <cmath>
#include <limits>

#include "offirl/oracle.hpp"

using namespace offirl;

namespace {

FiniteMdp one_state() {
  FiniteMdp m;
  m.n_states = 1;
  m.n_actions = 1;
  m.transition = Mat::Ones(1, 1);
  m.cost = Mat::Ones(1, 1);
  m.p0 = Vec::Ones(1);
  return m;
}

FiniteMdp two_cycle() {
  FiniteMdp m;
  m.n_states = 2;
  m.n_actions = 1;
  m.transition = Mat::Zero(2, 2);
  m.transition(0, 1) = 1.0;
  m.transition(1, 0) = 1.0;
  m.cost = Mat::Ones(2, 1);
  m.p0 = (Vec(2) << 1.0, 0.0).finished();
  return m;
}

TabularPolicy random_policy(int ns, int na, Rng& rng) {
  Mat p(ns, na);
  for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = 0.05 + uniform01(rng);
  for (int s = 0; s < ns; ++s) p.row(s) /= p.row(s).sum();
  // exact renormalisation so the 1e-12 row check holds
  for (int s = 0; s < ns; ++s) p(s, na - 1) = 1.0 - p.row(s).head(na - 1).sum();
  return TabularPolicy(p);
}

Mat random_cost(int ns, int na, Rng& rng) {
  Mat c(ns, na);
  for (Eigen::Index i = 0; i < c.size(); ++i) c.data()[i] = uniform01(rng);
  return c;
}

// State-to-state kernel under π and the expected per-state integrand.
Mat state_kernel(const FiniteMdp& m, const TabularPolicy& pi) {
  Mat k = Mat::Zero(m.n_states, m.n_states);
  for (int s = 0; s < m.n_states; ++s)
    for (int a = 0; a < m.n_actions; ++a) k.row(s) += pi.prob(s, a) * m.transition.row(s * m.n_actions + a);
  return k;
}

// Test-side brute force: Σ_t γ^t p0ᵀ K^t f with f(s) = Σ_a π(a|s)(c + log π).
double loss_series(const FiniteMdp& m, const TabularPolicy& pi, const Mat& c, double gamma) {
  const Mat k = state_kernel(m, pi);
  Vec f = Vec::Zero(m.n_states);
  for (int s = 0; s < m.n_states; ++s)
    for (int a = 0; a < m.n_actions; ++a) f[s] += pi.prob(s, a) * (c(s, a) + std::log(pi.prob(s, a)));
  Eigen::RowVectorXd d = m.p0.transpose();
  double total = 0.0, disc = 1.0;
  while (disc > 1e-16) {
    total += disc * d.dot(f);
    d = d * k;
    disc *= gamma;
  }
  return total;
}

// Σ_t Σ_k γ^t δ^k p(s0)ᵀ K^{t+k} g, by an explicit double loop.
Vec mu_cost_double_series(const FiniteMdp& m, const TabularPolicy& pi, const Mat& c, double gamma, double delta,
                          int horizon) {
  const Mat k = state_kernel(m, pi);
  Vec g = Vec::Zero(m.n_states);
  for (int s = 0; s < m.n_states; ++s)
    for (int a = 0; a < m.n_actions; ++a) g[s] += pi.prob(s, a) * c(s, a);
  std::vector<Mat> powers{Mat::Identity(m.n_states, m.n_states)};
  for (int n = 1; n <= 2 * horizon; ++n) powers.push_back(powers.back() * k);
  Vec out = Vec::Zero(m.n_states);
  for (int t = 0; t <= horizon; ++t)
    for (int j = 0; j <= horizon; ++j) out += std::pow(gamma, t) * std::pow(delta, j) * (powers[t + j] * g);
  return out;
}

}  // namespace

TEST_CASE("occupancy reference values") {
  const auto m = one_state();
  const auto pi = TabularPolicy::uniform(1, 1);
  CHECK(exact_occupancy(m, pi, 0.9).at(0, 0, 0) == doctest::Approx(10.0).epsilon(1e-12));

  const auto c = two_cycle();
  const auto r = exact_occupancy(c, TabularPolicy::uniform(2, 1), 0.5);
  CHECK(r.at(0, 0, 0) == doctest::Approx(4.0 / 3.0).epsilon(1e-12));
  CHECK(r.at(0, 1, 0) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  const auto rs = occupancy_series(c, TabularPolicy::uniform(2, 1), 0.5);
  CHECK((rs.values - r.values).cwiseAbs().maxCoeff() <= 1e-12);

  const auto chain = builtin_env("chain5").finite();
  Rng rng = make_rng(1);
  const auto p = random_policy(5, 2, rng);
  const auto r0 = exact_occupancy(chain, p, 0.0);
  for (int s0 = 0; s0 < 5; ++s0)
    for (int s = 0; s < 5; ++s)
      for (int a = 0; a < 2; ++a) CHECK(r0.at(s0, s, a) == doctest::Approx(s == s0 ? p.prob(s0, a) : 0.0));

  CHECK_THROWS_AS(exact_occupancy(chain, p, 1.0), InvalidParameter);
}

TEST_CASE("mu reference values") {
  const auto m = one_state();
  const auto pi = TabularPolicy::uniform(1, 1);
  CHECK(exact_mu(m, pi, 0.9, 0.9).at(0, 0, 0) == doctest::Approx(100.0).epsilon(1e-12));

  const auto chain = builtin_env("chain5").finite();
  Rng rng = make_rng(2);
  const auto p = random_policy(5, 2, rng);
  CHECK((exact_mu(chain, p, 0.7, 0.0).values - exact_occupancy(chain, p, 0.7).values).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((exact_mu(chain, p, 0.0, 0.6).values - exact_occupancy(chain, p, 0.6).values).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("occupancy and mu masses, composition identity") {
  const double discounts[] = {0.0, 0.5, 0.9, 0.99};
  for (const char* name : {"chain5", "gridworld4x4"}) {
    const auto m = builtin_env(name).finite();
    Rng rng = make_rng(3);
    const auto p = random_policy(m.n_states, m.n_actions, rng);
    for (double g : discounts) {
      const auto rho = exact_occupancy(m, p, g);
      CHECK((rho.mass().array() - 1.0 / (1.0 - g)).abs().maxCoeff() <= 1e-9);
      for (double d : discounts) {
        INFO(name << " gamma " << g << " delta " << d);
        const auto mu = exact_mu(m, p, g, d);
        CHECK((mu.mass().array() - 1.0 / ((1.0 - g) * (1.0 - d))).abs().maxCoeff() <= 1e-9);
        const auto series = mu_series(m, p, g, d);
        CHECK((series.values - mu.values).cwiseAbs().maxCoeff() <= 1e-9);
      }
    }
  }
}

TEST_CASE("q_delta") {
  const auto chain = builtin_env("chain5").finite();
  Rng rng = make_rng(4);
  const auto p = random_policy(5, 2, rng);
  CHECK((exact_q_delta(chain, p, Mat::Ones(5, 2), 0.9).array() - 10.0).abs().maxCoeff() <= 1e-12);
  const Mat c = random_cost(5, 2, rng);
  CHECK((exact_q_delta(chain, p, c, 0.0) - c).cwiseAbs().maxCoeff() == 0.0);
  Mat hand(5, 2);
  hand << 1, 0.5, 0.2, 0.9, 0, 1, 0.3, 0.3, 0.7, 0;
  CHECK((exact_q_delta(chain, p, hand, 0.9) - q_delta_series(chain, p, hand, 0.9, 500)).cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("regularised loss") {
  const auto m = one_state();
  CHECK(exact_regularized_loss(m, TabularPolicy::uniform(1, 1), Mat::Ones(1, 1), 0.9, TimeWeighting::dirac0()) ==
        doctest::Approx(10.0).epsilon(1e-12));

  FiniteMdp two = one_state();
  two.n_actions = 2;
  two.transition = Mat::Ones(2, 1);
  two.cost = Mat::Zero(1, 2);
  CHECK(exact_regularized_loss(two, TabularPolicy::uniform(1, 2), Mat::Zero(1, 2), 0.5, TimeWeighting::dirac0()) ==
        doctest::Approx(-2.0 * std::log(2.0)).epsilon(1e-12));
  CHECK(-2.0 * std::log(2.0) == doctest::Approx(-1.3863).epsilon(1e-4));
}

TEST_CASE("L with Dirac0 equals the brute-force regularised loss on random instances") {
  for (int i = 0; i < 20; ++i) {
    const auto m = builtin_env(i % 2 ? "chain5" : "gridworld4x4").finite();
    Rng rng = make_rng(100 + i);
    const auto p = random_policy(m.n_states, m.n_actions, rng);
    const Mat c = random_cost(m.n_states, m.n_actions, rng);
    const double g = 0.5 + 0.45 * uniform01(rng);
    CHECK(std::abs(exact_regularized_loss(m, p, c, g, TimeWeighting::dirac0()) - loss_series(m, p, c, g)) <= 1e-9);
  }
}

TEST_CASE("geometric weighting matches a double series") {
  const auto m = builtin_env("chain5").finite();
  Rng rng = make_rng(7);
  const auto p = random_policy(5, 2, rng);
  const Mat c = random_cost(5, 2, rng);
  // The entropy-free geometric loss is (1−δ) p0ᵀ Σ γ^t δ^k K^{t+k} c.
  const double lhs = exact_regularized_loss(m, p, c, 0.8, TimeWeighting::geometric(0.6), false);
  const double rhs = (1.0 - 0.6) * m.p0.dot(mu_cost_double_series(m, p, c, 0.8, 0.6, 150));
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-9));
}

TEST_CASE("divergence") {
  const auto m = builtin_env("chain5").finite();
  Rng rng = make_rng(8);
  const auto a = random_policy(5, 2, rng);
  const auto b = random_policy(5, 2, rng);
  const Mat c = random_cost(5, 2, rng);
  CHECK(exact_divergence(m, a, a, c, 0.9, 0.5).cwiseAbs().maxCoeff() == 0.0);
  CHECK(exact_divergence(m, a, b, Mat::Constant(5, 2, 0.37), 0.9, 0.5).cwiseAbs().maxCoeff() <= 1e-9);

  Mat ind = Mat::Zero(5, 2);
  ind(4, 1) = 1.0;
  const Vec d = exact_divergence(m, a, b, ind, 0.9, 0.5);
  const Vec brute = mu_cost_double_series(m, a, ind, 0.9, 0.5, 300) - mu_cost_double_series(m, b, ind, 0.9, 0.5, 300);
  CHECK((d - brute).cwiseAbs().maxCoeff() <= 1e-6);
  CHECK((divergence_series(m, a, b, ind, 0.9, 0.5) - d).cwiseAbs().maxCoeff() <= 1e-9);
}

TEST_CASE("optimal classifier") {
  const auto m = builtin_env("chain5").finite();
  Rng rng = make_rng(9);
  const auto p = random_policy(5, 2, rng);
  const double g = 0.9;
  const auto rho = exact_occupancy(m, p, g);

  // Data distribution equal to ρ(·|s0=0): C* = 0.5 on that row.
  Mat pd(5, 2);
  for (int s = 0; s < 5; ++s)
    for (int a = 0; a < 2; ++a) pd(s, a) = rho.at(0, s, a);
  const auto c = optimal_classifier(m, p, g, pd);
  for (int s = 0; s < 5; ++s)
    for (int a = 0; a < 2; ++a) CHECK(c.at(0, s, a) == doctest::Approx(0.5).epsilon(1e-12));

  const Mat uniform = Mat::Constant(5, 2, 0.1);
  const auto cu = optimal_classifier(m, p, g, uniform);
  for (int s0 = 0; s0 < 5; ++s0)
    for (int s = 0; s < 5; ++s)
      for (int a = 0; a < 2; ++a) {
        const double x = cu.at(s0, s, a);
        CHECK(std::abs(x / (1.0 - x) - rho.at(s0, s, a) / 0.1) <= 1e-9 * std::max(1.0, rho.at(s0, s, a) / 0.1));
      }

  // γ = 0 leaves ρ zero off the start state: C* = 0 there.
  const auto c0 = optimal_classifier(m, p, 0.0, uniform);
  CHECK(c0.at(0, 3, 1) == 0.0);
  // ρ/P_D = 3 → 0.75, using a deterministic policy at γ = 0: ρ = 1 at (s0, a).
  const auto det = TabularPolicy::greedy(Mat::Zero(5, 2));
  Mat third = Mat::Constant(5, 2, 1.0 / 3.0);
  CHECK(optimal_classifier(m, det, 0.0, third).at(2, 2, 0) == doctest::Approx(0.75));

  Mat hole = uniform;
  hole(4, 1) = 0.0;
  CHECK_THROWS_AS(optimal_classifier(m, p, g, hole), InvalidParameter);
}

TEST_CASE("psi g") {
  CHECK(psi_g(-std::log(2.0)) == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-12));
  CHECK(psi_g(0.0) == std::numeric_limits<double>::infinity());
  CHECK(psi_g(3.0) == std::numeric_limits<double>::infinity());
  CHECK(psi_g(-10.0) == doctest::Approx(10.0000454).epsilon(1e-9));
  for (double x = -30.0; x < 0.0; x += 0.37) CHECK(psi_g(x) > 0.0);
  CHECK(std::abs(psi_g(-10.0) - 10.0) / 10.0 < 1e-4);
}

TEST_CASE("value iteration finds the best deterministic policy on chain5") {
  const auto m = builtin_env("chain5").finite();
  const auto greedy = TabularPolicy::greedy(value_iteration(m, m.cost, m.gamma));
  const double best = exact_return(m, greedy, m.gamma);
  for (int mask = 0; mask < 32; ++mask) {
    Mat p = Mat::Zero(5, 2);
    for (int s = 0; s < 5; ++s) p(s, (mask >> s) & 1) = 1.0;
    CHECK(exact_return(m, TabularPolicy(p), m.gamma) >= best - 1e-9);
  }
}
