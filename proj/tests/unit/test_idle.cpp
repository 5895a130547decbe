#include <doctest.h>

#include <cmath>

#include "offirl/generate.hpp"
#include "offirl/idle.hpp"
#include "offirl/oracle.hpp"

using namespace offirl;

namespace {

const double kLogHalf = std::log(0.5);

TabularPolicy random_policy(int ns, int na, Rng& rng) {
  Mat p(ns, na);
  for (int s = 0; s < ns; ++s) {
    for (int a = 0; a < na; ++a) p(s, a) = 0.05 + uniform01(rng);
    p.row(s) /= p.row(s).sum();
  }
  return TabularPolicy(p);
}

IdleBatch finite_batch(const Environment& env, int n, Rng& rng) {
  const int ns = env.n_states(), na = env.n_actions();
  IdleBatch b;
  b.outer.resize(n);
  for (int j = 0; j < n; ++j) {
    auto st = [&] { return index_vec(static_cast<int>(uniform_index(rng, static_cast<std::size_t>(ns)))); };
    auto ac = [&] { return index_vec(static_cast<int>(uniform_index(rng, static_cast<std::size_t>(na)))); };
    b.s.push_back(st());
    b.a.push_back(ac());
    b.s_next.push_back(st());
    b.a_pi_now.push_back(ac());
    b.a_pi_next.push_back(ac());
    b.outer[j] = 0.1 + 0.9 * uniform01(rng);
    b.future_s.push_back(st());
    b.future_a.push_back(ac());
  }
  return b;
}

std::vector<FutureSample> finite_samples(const Environment& env, int n, Rng& rng) {
  std::vector<FutureSample> out;
  for (int j = 0; j < n; ++j)
    out.push_back({index_vec(static_cast<int>(uniform_index(rng, static_cast<std::size_t>(env.n_states())))),
                   index_vec(static_cast<int>(uniform_index(rng, static_cast<std::size_t>(env.n_states())))),
                   index_vec(static_cast<int>(uniform_index(rng, static_cast<std::size_t>(env.n_actions()))))});
  return out;
}

// Perturbs a network E away from its near-constant initialisation.
EvaluationFunction small_network(const Environment& env, Rng& rng) {
  EvaluationFunction e = EvaluationFunction::network(env, {8, 8}, rng, Activation::tanh);
  for (Eigen::Index i = 0; i < e.params().values.size(); ++i) e.params().values[i] = 0.5 * standard_normal(rng);
  return e;
}

// Test-side classifier value with w held at the given constants, so its
// total derivative is what classifier_loss reports under stop-gradient.
double frozen_classifier_value(const EvaluationFunction& e, const IdleBatch& b, double gamma, IdleLossForm form,
                               const Vec& w) {
  const double first_scale = form == IdleLossForm::occupancy ? 1.0 : 1.0 - gamma;
  const double boot_scale = form == IdleLossForm::as_written ? 1.0 : gamma;
  double total = 0.0;
  for (std::size_t j = 0; j < b.s.size(); ++j) {
    const FutureSample first = form == IdleLossForm::occupancy ? FutureSample{b.s[j], b.s[j], b.a_pi_now[j]}
                                                               : FutureSample{b.s[j], b.s_next[j], b.a_pi_next[j]};
    const double ex = e.prob({b.s[j], b.future_s[j], b.future_a[j]});
    const auto jj = static_cast<Eigen::Index>(j);
    total += b.outer[jj] * (first_scale * std::log(e.prob(first)) + boot_scale * w[jj] * std::log(ex) +
                            std::log(1.0 - ex));
  }
  return total / static_cast<double>(b.s.size());
}

Vec boot_weights(const EvaluationFunction& e, const IdleBatch& b) {
  Vec w(static_cast<Eigen::Index>(b.s.size()));
  for (std::size_t j = 0; j < b.s.size(); ++j) {
    const double p = e.prob({b.s_next[j], b.future_s[j], b.future_a[j]});
    w[static_cast<Eigen::Index>(j)] = p / (1.0 - p);
  }
  return w;
}

double fd_check(EvaluationFunction e, const std::function<LossGrad(const EvaluationFunction&)>& f) {
  const LossGrad lg = f(e);
  const Vec theta = e.params().values;
  const Vec numeric = numeric_gradient(
      [&](const Vec& p) {
        e.params().values = p;
        return f(e).value;
      },
      theta);
  return relative_error(lg.grad, numeric);
}

}  // namespace

TEST_CASE("density ratio") {
  CHECK(density_ratio(0.5) == doctest::Approx(1.0));
  CHECK(density_ratio(0.75) == doctest::Approx(3.0));
  const double top = density_ratio(kSigmoidCeil);
  CHECK(std::isfinite(top));
  CHECK(top == doctest::Approx(1e6).epsilon(1e-5));

  const auto env = builtin_env("chain5");
  auto e = EvaluationFunction::tabular(env);
  e.params().values.setConstant(100.0);
  CHECK(density_ratio(e, index_vec(1), index_vec(0), index_vec(2)) == doctest::Approx(top));
}

TEST_CASE("constant E gives the closed-form classifier value") {
  const auto env = builtin_env("chain5");
  Rng rng = make_rng(3);
  IdleBatch b = finite_batch(env, 16, rng);
  b.outer.setOnes();
  const auto e = EvaluationFunction::tabular(env);
  for (double gamma : {0.0, 0.5, 0.9, 0.99}) {
    CHECK(classifier_loss(e, b, gamma, IdleLossForm::as_written).value == doctest::Approx((3.0 - gamma) * kLogHalf));
    CHECK(classifier_loss(e, b, gamma, IdleLossForm::occupancy).value == doctest::Approx((2.0 + gamma) * kLogHalf));
  }
}

TEST_CASE("classifier gradient vanishes at the oracle classifier") {
  const auto env = builtin_env("chain5");
  const FiniteMdp& mdp = env.finite();
  Rng rng = make_rng(11);
  const Vec d = Vec::Constant(5, 0.2);
  const Mat beta = Mat::Constant(5, 2, 0.5);
  Mat data_dist(5, 2);
  for (int s = 0; s < 5; ++s) data_dist.row(s) = d[s] * beta.row(s);
  for (double gamma : {0.5, 0.9, 0.99}) {
    const TabularPolicy pi = random_policy(5, 2, rng);
    const OccupancyTable cstar = optimal_classifier(mdp, pi, gamma, data_dist);
    auto e = EvaluationFunction::tabular(env);
    Eigen::Map<Mat>(e.params().values.data(), 5, 10) = cstar.values.unaryExpr([](double c) {
      return std::log(c / (1.0 - c));
    });
    const LossGrad at_star = expected_classifier_loss(mdp, pi, d, beta, e, gamma, IdleLossForm::occupancy);
    INFO("gamma " << gamma);
    CHECK(at_star.grad.norm() <= 1e-3);
    // The bootstrap with unit weight has no fixed point at C*.
    const LossGrad written = expected_classifier_loss(mdp, pi, d, beta, e, gamma, IdleLossForm::as_written);
    INFO("as_written gradient norm " << written.grad.norm());
    CHECK(written.grad.norm() > 100.0 * std::max(at_star.grad.norm(), 1e-6));
  }
}

TEST_CASE("importance weights carry no gradient") {
  // Conditioning states {0,1} and successor states {3,4} never overlap, so
  // the logits read only through w must receive an exactly zero gradient
  // even though the value depends on them.
  const auto env = builtin_env("chain5");
  Rng rng = make_rng(5);
  IdleBatch b = finite_batch(env, 12, rng);
  for (int j = 0; j < 12; ++j) {
    b.s[j] = index_vec(j % 2);
    b.s_next[j] = index_vec(3 + j % 2);
  }
  auto e = EvaluationFunction::tabular(env);
  for (Eigen::Index i = 0; i < e.params().values.size(); ++i) e.params().values[i] = standard_normal(rng);
  const LossGrad lg = classifier_loss(e, b, 0.9, IdleLossForm::occupancy);
  const Eigen::Map<const Mat> g(lg.grad.data(), 5, 10);
  CHECK(g.row(3).norm() == 0.0);
  CHECK(g.row(4).norm() == 0.0);
  CHECK(g.row(0).norm() > 0.0);

  auto shifted = e;
  Eigen::Map<Mat>(shifted.params().values.data(), 5, 10).row(3).array() += 0.7;
  CHECK(classifier_loss(shifted, b, 0.9, IdleLossForm::occupancy).value != doctest::Approx(lg.value));
}

TEST_CASE("GAN score closed forms") {
  const auto env = builtin_env("chain5");
  Rng rng = make_rng(2);
  const auto d = EvaluationFunction::tabular(env);
  const auto pos = finite_samples(env, 10, rng), gen = finite_samples(env, 7, rng);
  Vec w(10);
  for (int j = 0; j < 10; ++j) w[j] = 3.0 * uniform01(rng);
  CHECK(gan_score(d, w, pos, gen).value == doctest::Approx((w.mean() + 1.0) * kLogHalf));

  auto d2 = EvaluationFunction::tabular(env);
  for (Eigen::Index i = 0; i < d2.params().values.size(); ++i) d2.params().values[i] = standard_normal(rng);
  double expect = 0.0;
  for (const auto& g : gen) expect += std::log(1.0 - d2.prob(g)) / 7.0;
  CHECK(gan_score(d2, Vec::Zero(10), pos, gen).value == doctest::Approx(expect));
}

TEST_CASE("joint objective reduces to the classifier loss at lambda = 0") {
  const auto env = builtin_env("chain5");
  Rng rng = make_rng(8);
  const auto e = small_network(env, rng);
  const IdleBatch b = finite_batch(env, 20, rng);
  GanBatch gan{finite_samples(env, 20, rng), finite_samples(env, 20, rng)};
  IdleConfig cfg;
  cfg.gamma = 0.9;
  cfg.lambda = 0.0;
  const LossGrad j = joint_objective(e, b, gan, cfg);
  const LossGrad c = classifier_loss(e, b, cfg.gamma, cfg.form);
  CHECK(j.value == c.value);
  CHECK((j.grad.array() == c.grad.array()).all());
  cfg.lambda = 0.03;
  CHECK(joint_objective(e, b, gan, cfg).value != c.value);
}

TEST_CASE("Idle gradients match finite differences") {
  const auto env = builtin_env("chain5");
  for (int inst = 0; inst < 20; ++inst) {
    Rng rng = make_rng(100 + static_cast<std::uint64_t>(inst));
    const auto e = small_network(env, rng);
    const IdleBatch b = finite_batch(env, 6, rng);
    const double gamma = 0.3 + 0.6 * uniform01(rng);
    const Vec w_boot = boot_weights(e, b);
    for (auto form : {IdleLossForm::occupancy, IdleLossForm::as_written, IdleLossForm::c_learning}) {
      const LossGrad lg = classifier_loss(e, b, gamma, form);
      CHECK(lg.value == doctest::Approx(frozen_classifier_value(e, b, gamma, form, w_boot)).epsilon(1e-12));
      auto probe = e;
      const Vec numeric = numeric_gradient(
          [&](const Vec& p) {
            probe.params().values = p;
            return frozen_classifier_value(probe, b, gamma, form, w_boot);
          },
          e.params().values);
      CHECK(relative_error(lg.grad, numeric) <= 1e-4);
    }

    const auto pos = finite_samples(env, 6, rng), gen = finite_samples(env, 5, rng);
    Vec w(6);
    for (int j = 0; j < 6; ++j) w[j] = 2.0 * uniform01(rng);
    CHECK(fd_check(e, [&](const EvaluationFunction& x) { return gan_score(x, w, pos, gen); }) <= 1e-4);

    IdleConfig cfg;
    cfg.gamma = gamma;
    cfg.lambda = 0.5;
    const GanBatch gan{pos, gen};
    // Joint objective: frozen-weight classifier plus λ·V with frozen weights.
    const Vec frozen = gan_weights(e, pos, gamma);
    const LossGrad jo = joint_objective(e, b, gan, cfg);
    auto probe = e;
    const Vec numeric = numeric_gradient(
        [&](const Vec& p) {
          probe.params().values = p;
          return frozen_classifier_value(probe, b, gamma, cfg.form, w_boot) +
                 cfg.lambda * gan_score(probe, frozen, pos, gen).value;
        },
        e.params().values);
    CHECK(relative_error(jo.grad, numeric) <= 1e-4);
    LossGrad manual = classifier_loss(e, b, gamma, cfg.form);
    manual.grad += cfg.lambda * gan_score(e, frozen, pos, gen).grad;
    CHECK(relative_error(jo.grad, manual.grad) <= 1e-12);
  }
}

TEST_CASE("exact expectation agrees with an enumerated batch") {
  // Every (s, a, s', a_now, a_next, x) tuple enters once, weighted through
  // the outer factor, so the sampled objective becomes the expectation.
  const auto env = builtin_env("chain5");
  const FiniteMdp& mdp = env.finite();
  for (int inst = 0; inst < 6; ++inst) {
    Rng rng = make_rng(300 + static_cast<std::uint64_t>(inst));
    const TabularPolicy pi = random_policy(5, 2, rng), beta = random_policy(5, 2, rng);
    Vec d(5);
    for (int s = 0; s < 5; ++s) d[s] = 0.1 + uniform01(rng);
    d /= d.sum();
    auto e = EvaluationFunction::tabular(env);
    for (Eigen::Index i = 0; i < e.params().values.size(); ++i) e.params().values[i] = standard_normal(rng);
    const auto form = static_cast<IdleLossForm>(inst % 3);
    const double gamma = 0.5 + 0.08 * inst;

    IdleBatch b;
    std::vector<double> weight;
    for (int s = 0; s < 5; ++s)
      for (int a = 0; a < 2; ++a)
        for (int s2 = 0; s2 < 5; ++s2) {
          const double pt = d[s] * beta.probs()(s, a) * mdp.transition(s * 2 + a, s2);
          if (pt == 0.0) continue;
          for (int an = 0; an < 2; ++an)
            for (int ax = 0; ax < 2; ++ax)
              for (int xs = 0; xs < 5; ++xs)
                for (int xa = 0; xa < 2; ++xa) {
                  b.s.push_back(index_vec(s));
                  b.a.push_back(index_vec(a));
                  b.s_next.push_back(index_vec(s2));
                  b.a_pi_now.push_back(index_vec(an));
                  b.a_pi_next.push_back(index_vec(ax));
                  b.future_s.push_back(index_vec(xs));
                  b.future_a.push_back(index_vec(xa));
                  weight.push_back(pt * pi.probs()(s, a) * pi.probs()(s, an) * pi.probs()(s2, ax) * d[xs] *
                                   beta.probs()(xs, xa));
                }
        }
    b.outer = Eigen::Map<const Vec>(weight.data(), static_cast<Eigen::Index>(weight.size())) *
              static_cast<double>(weight.size());
    // The enumerated weights put π(a_now|s) and π(a_next|s') inside outer; the
    // first term in each form reads only one of them, the other sums to one.
    const LossGrad sampled = classifier_loss(e, b, gamma, form);
    const LossGrad exact = expected_classifier_loss(mdp, pi, d, beta.probs(), e, gamma, form);
    INFO("form " << to_string(form));
    CHECK(sampled.value == doctest::Approx(exact.value).epsilon(1e-10));
    CHECK(relative_error(sampled.grad, exact.grad) <= 1e-10);
  }
}

TEST_CASE("generator objectives match finite differences") {
  const auto chain = builtin_env("chain5");
  const auto point = builtin_env("pointmass2d");
  for (int inst = 0; inst < 20; ++inst) {
    Rng rng = make_rng(500 + static_cast<std::uint64_t>(inst));
    {
      const auto e = small_network(chain, rng);
      Generator g = Generator::make(chain, {8}, rng, Activation::tanh, GeneratorKind::categorical);
      for (Eigen::Index i = 0; i < g.net().params().values.size(); ++i)
        g.net().params().values[i] = 0.5 * standard_normal(rng);
      std::vector<Vec> cond;
      for (int j = 0; j < 4; ++j) cond.push_back(index_vec(static_cast<int>(uniform_index(rng, 5))));
      const LossGrad lg = generator_objective(e, g, cond, Mat());
      const Vec numeric = numeric_gradient(
          [&](const Vec& p) {
            Generator probe = g;
            probe.net().params().values = p;
            return generator_objective(e, probe, cond, Mat()).value;
          },
          g.net().params().values);
      CHECK(relative_error(lg.grad, numeric) <= 1e-4);
    }
    {
      EvaluationFunction e = EvaluationFunction::network(point, {8, 8}, rng, Activation::tanh);
      for (Eigen::Index i = 0; i < e.params().values.size(); ++i) e.params().values[i] = 0.5 * standard_normal(rng);
      Generator g = Generator::make(point, {8}, rng, Activation::tanh);
      std::vector<Vec> cond;
      for (int j = 0; j < 4; ++j) cond.push_back(Vec::Random(4) * 0.5);
      // Small noise keeps every sample strictly inside the boxes, where the
      // clip is the identity.
      const Mat noise = 0.2 * Mat::Random(g.raw_dim(), 4);
      const LossGrad lg = generator_objective(e, g, cond, noise);
      const Vec numeric = numeric_gradient(
          [&](const Vec& p) {
            Generator probe = g;
            probe.net().params().values = p;
            return generator_objective(e, probe, cond, noise).value;
          },
          g.net().params().values);
      CHECK(relative_error(lg.grad, numeric) <= 1e-4);
    }
  }
}

TEST_CASE("generators produce valid samples") {
  const auto chain = builtin_env("chain5");
  Rng rng = make_rng(4);
  for (auto kind : {GeneratorKind::gaussian, GeneratorKind::categorical}) {
    const Generator g = Generator::make(chain, {16}, rng, Activation::relu, kind);
    std::vector<Vec> cond(200, index_vec(2));
    for (const auto& x : g.sample(cond, rng)) {
      CHECK(as_index(x.state) >= 0);
      CHECK(as_index(x.state) < 5);
      CHECK(as_index(x.action) >= 0);
      CHECK(as_index(x.action) < 2);
    }
  }
  const Generator cat = Generator::make(chain, {16}, rng, Activation::relu, GeneratorKind::categorical);
  const Mat p = cat.pair_probs({index_vec(0), index_vec(4)});
  CHECK(p.colwise().sum().isApprox(Eigen::RowVector2d::Ones().cast<double>(), 1e-12));
  CHECK_THROWS_AS(Generator::make(builtin_env("pointmass2d"), {8}, rng, Activation::relu, GeneratorKind::categorical),
                  InvalidParameter);

  const Generator gauss = Generator::make(chain, {16}, rng);
  Vec raw = Vec::Zero(10);
  raw[7] = 1.0;  // pair (3, 1)
  const FutureSample x = gauss.project(index_vec(0), raw);
  CHECK(as_index(x.state) == 3);
  CHECK(as_index(x.action) == 1);
  Vec d_pair = Vec::Zero(7);
  d_pair[3] = 2.0;  // state 3
  d_pair[6] = 0.5;  // action 1
  const Vec st = gauss.straight_through(d_pair);
  CHECK(st[7] == 2.5);
  CHECK(st[6] == 2.0);
  CHECK(st[1] == 0.5);

  const auto point = builtin_env("pointmass2d");
  const Generator gp = Generator::make(point, {16}, rng);
  std::vector<Vec> cond(100, Vec::Zero(4));
  Mat noise = 10.0 * Mat::Random(6, 100);
  Forward fw;
  const Mat raw_c = gp.raw_samples(cond, noise, &fw);
  CHECK((fw.scale.array() > 0.0).all());
  for (Eigen::Index j = 0; j < 100; ++j) {
    const FutureSample y = gp.project(cond[0], raw_c.col(j));
    CHECK(point.continuous().valid_state(y.state));
    CHECK(y.state.allFinite());
  }
}

TEST_CASE("best-response discriminator against oracle samples sits at one half") {
  const auto env = builtin_env("chain5");
  const FiniteMdp& mdp = env.finite();
  Rng rng = make_rng(21);
  const TabularPolicy pi = random_policy(5, 2, rng);
  const double gamma = 0.9;
  const Mat data_dist = Mat::Constant(5, 2, 0.1);
  const OccupancyTable cstar = optimal_classifier(mdp, pi, gamma, data_dist);
  const OccupancyTable rho = exact_occupancy(mdp, pi, gamma);
  auto oracle_e = EvaluationFunction::tabular(env);
  Eigen::Map<Mat>(oracle_e.params().values.data(), 5, 10) =
      cstar.values.unaryExpr([](double c) { return std::log(c / (1.0 - c)); });

  auto d = EvaluationFunction::tabular(env);
  Optimizer opt({OptimizerKind::adam, 0.02});
  const int steps = 3000, batch = 512;
  Vec avg = Vec::Zero(d.n_params());
  for (int it = 0; it < steps; ++it) {
    std::vector<FutureSample> pos, gen;
    for (int j = 0; j < batch; ++j) {
      const Vec s0 = index_vec(static_cast<int>(uniform_index(rng, 5)));
      const auto k = static_cast<int>(uniform_index(rng, 10));
      pos.push_back({s0, index_vec(k / 2), index_vec(k % 2)});
      const Vec row = rho.values.row(as_index(s0)).transpose();
      const auto g = static_cast<int>(categorical(rng, row.data(), 10));
      gen.push_back({s0, index_vec(g / 2), index_vec(g % 2)});
    }
    const LossGrad v = gan_score(d, gan_weights(oracle_e, pos, gamma), pos, gen);
    opt.step(d.params(), -v.grad);
    if (it >= steps / 2) avg += d.params().values / (steps / 2);
  }
  d.params().values = avg;
  double worst = 0.0;
  for (int s0 = 0; s0 < 5; ++s0)
    for (int k = 0; k < 10; ++k)
      if (rho.values(s0, k) > 1e-3) worst = std::max(worst, std::abs(d.prob({index_vec(s0), index_vec(k / 2), index_vec(k % 2)}) - 0.5));
  INFO("max |D - 1/2| " << worst);
  CHECK(worst <= 0.05);
}

TEST_CASE("idle_train contract") {
  const auto env = builtin_env("chain5");
  const auto ds = generate_dataset(env, Quality::random, 10, 3, 20);
  const auto pi = TabularPolicy::uniform(5, 2);
  IdleConfig cfg;
  cfg.hidden = {16, 16};
  cfg.iterations = 0;
  const IdleResult none = idle_train(env, ds, pi, cfg, 7);
  const IdleTrainer fresh(env, cfg, 7);
  CHECK((none.evaluation.params().values.array() == fresh.evaluation().params().values.array()).all());
  CHECK((none.generator.net().params().values.array() == fresh.generator().net().params().values.array()).all());

  cfg.iterations = 20;
  cfg.batch = 32;
  const IdleResult a = idle_train(env, ds, pi, cfg, 9), b = idle_train(env, ds, pi, cfg, 9);
  CHECK((a.evaluation.params().values.array() == b.evaluation.params().values.array()).all());
  CHECK((a.generator.net().params().values.array() == b.generator.net().params().values.array()).all());
  CHECK(a.curve.size() == 20);
  CHECK_FALSE((a.evaluation.params().values.array() == fresh.evaluation().params().values.array()).all());

  TrajectoryDataset empty;
  CHECK_THROWS_AS(idle_train(env, empty, pi, cfg, 1), EmptyDataset);
  cfg.gamma = 1.0;
  CHECK_THROWS_AS(idle_train(env, ds, pi, cfg, 1), InvalidParameter);
}

TEST_CASE("checkpoints round-trip") {
  const auto env = builtin_env("chain5");
  Rng rng = make_rng(1);
  const auto e = small_network(env, rng);
  const auto back = EvaluationFunction::deserialize(env, e.serialize());
  CHECK((back.params().values.array() == e.params().values.array()).all());
  auto t = EvaluationFunction::tabular(env);
  t.params().values.setRandom();
  CHECK((EvaluationFunction::deserialize(env, t.serialize()).params().values.array() == t.params().values.array()).all());
  for (auto kind : {GeneratorKind::gaussian, GeneratorKind::categorical}) {
    const Generator g = Generator::make(env, {8}, rng, Activation::relu, kind);
    const Generator h = Generator::deserialize(env, g.serialize());
    CHECK(h.kind() == kind);
    CHECK((h.net().params().values.array() == g.net().params().values.array()).all());
  }
  CHECK_THROWS_AS(EvaluationFunction::deserialize(env, "{not json"), ParseError);
}
