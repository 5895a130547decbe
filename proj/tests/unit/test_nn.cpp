#include <doctest.h>

#include <limits>

#include "offirl/nn.hpp"
#include "offirl/tape.hpp"

using namespace offirl;

namespace {

MlpSpec spec_for(Head head, Activation act, int in, int out) {
  MlpSpec s;
  s.input_dim = in;
  s.output_dim = out;
  s.hidden = {5, 4};
  s.activation = act;
  s.head = head;
  s.init_scale = 0.8;
  return s;
}

Mat random_mat(Eigen::Index r, Eigen::Index c, Rng& rng) {
  Mat m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = standard_normal(rng);
  return m;
}

// Random linear functional of every head output: loss = Σ u⊙value + Σ v⊙scale.
struct Probe {
  Mat u, v;
  double operator()(const Mlp& net, const Mat& x) const {
    const Forward fw = net.forward(x);
    double l = (u.array() * fw.value.array()).sum();
    if (fw.scale.size()) l += (v.array() * fw.scale.array()).sum();
    return l;
  }
};

}  // namespace

TEST_CASE("zero networks evaluate to the head's neutral value") {
  const Mat x = Mat::Constant(3, 2, 0.7);
  CHECK(Mlp::zeros(spec_for(Head::scalar_linear, Activation::tanh, 3, 1)).forward(x).value.cwiseAbs().maxCoeff() ==
        0.0);
  const Mat sig = Mlp::zeros(spec_for(Head::scalar_sigmoid, Activation::tanh, 3, 1)).forward(x).value;
  CHECK(sig(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
  const Forward g = Mlp::zeros(spec_for(Head::gaussian, Activation::relu, 3, 2)).forward(x);
  CHECK(g.value.cwiseAbs().maxCoeff() == 0.0);
  CHECK(g.scale(0, 0) == doctest::Approx(0.6931).epsilon(1e-4));
  CHECK(g.scale(1, 1) == doctest::Approx(std::log(2.0)).epsilon(1e-5));
}

TEST_CASE("forward rejects a wrong input dimension") {
  Rng rng = make_rng(1);
  Mlp net(spec_for(Head::scalar_linear, Activation::tanh, 3, 1), rng);
  CHECK_THROWS_AS(net.forward(Mat::Zero(2, 4)), DimensionMismatch);
}

TEST_CASE("parameter gradients match central differences for every head") {
  for (Head head : {Head::scalar_linear, Head::scalar_sigmoid, Head::gaussian}) {
    for (Activation act : {Activation::tanh, Activation::relu}) {
      for (int inst = 0; inst < 20; ++inst) {
        Rng rng = make_rng(100 + inst, static_cast<int>(head) * 2 + static_cast<int>(act));
        const int out = head == Head::gaussian ? 2 : 1;
        Mlp net(spec_for(head, act, 3, out), rng);
        const Mat x = random_mat(3, 4, rng);
        Probe probe{random_mat(out, 4, rng), random_mat(out, 4, rng)};
        const Forward fw = net.forward(x);
        Vec grad = Vec::Zero(net.n_params());
        net.backward(fw, probe.u, head == Head::gaussian ? &probe.v : nullptr, grad);
        const Vec theta = net.params().values;
        const Vec numeric = numeric_gradient(
            [&](const Vec& p) {
              Mlp copy = net;
              copy.params().values = p;
              return probe(copy, x);
            },
            theta);
        INFO("head " << to_string(head) << " act " << to_string(act) << " instance " << inst);
        CHECK(relative_error(grad, numeric) <= 1e-4);
      }
    }
  }
}

TEST_CASE("input gradients match central differences") {
  Rng rng = make_rng(7);
  Mlp net(spec_for(Head::gaussian, Activation::tanh, 3, 2), rng);
  const Mat x = random_mat(3, 1, rng);
  Probe probe{random_mat(2, 1, rng), random_mat(2, 1, rng)};
  Vec grad = Vec::Zero(net.n_params());
  Mat dx;
  net.backward(net.forward(x), probe.u, &probe.v, grad, &dx);
  const Vec numeric = numeric_gradient([&](const Vec& xi) { return probe(net, Mat(xi)); }, x.col(0));
  CHECK(relative_error(dx.col(0), numeric) <= 1e-6);
}

TEST_CASE("sigmoid outputs stay strictly inside (0,1)") {
  Rng rng = make_rng(3);
  auto s = spec_for(Head::scalar_sigmoid, Activation::relu, 2, 1);
  s.init_scale = 50.0;
  Mlp net(s, rng);
  const Mat v = net.forward(random_mat(2, 200, rng) * 100.0).value;
  CHECK(v.minCoeff() >= kSigmoidFloor);
  CHECK(v.maxCoeff() <= kSigmoidCeil);
  CHECK(v.minCoeff() > 0.0);
  CHECK(v.maxCoeff() < 1.0);
}

TEST_CASE("tape gradients and the stop-gradient contract") {
  ad::Tape tape;
  auto w = tape.leaf(0.0);
  auto loss = ad::square(w - 1.0);
  CHECK(tape.backward(loss)[w.id] == doctest::Approx(-2.0));

  ad::Tape t2;
  auto w3 = t2.leaf(3.0);
  auto l2 = t2.stop_gradient(w3) * w3;
  CHECK(l2.value() == 9.0);
  CHECK(t2.backward(l2)[w3.id] == 3.0);
}

TEST_CASE("optimizer steps") {
  ParamBlock p;
  p.values = Vec::Zero(1);
  Optimizer sgd({OptimizerKind::sgd, 0.5});
  const Vec g = Vec::Constant(1, 2.0 * (p.values[0] - 1.0));
  opt_step(p, g, sgd);
  CHECK(p.values[0] == doctest::Approx(1.0));
  CHECK(p.steps == 1);

  ParamBlock q;
  q.values = Vec::Constant(3, 0.25);
  Optimizer zero({OptimizerKind::adam, 0.0});
  opt_step(q, Vec::Constant(3, 5.0), zero);
  CHECK(q.values == Vec::Constant(3, 0.25));

  CHECK(OptimizerConfig{}.lr == 1e-4);
  CHECK(OptimizerConfig{}.beta1 == 0.9);
  CHECK(OptimizerConfig{}.beta2 == 0.999);
  CHECK(OptimizerConfig{}.eps == 1e-8);

  // Adam's first step moves every coordinate by lr in the descent direction.
  ParamBlock r;
  r.values = Vec::Zero(2);
  Optimizer adam({OptimizerKind::adam, 1e-3});
  opt_step(r, (Vec(2) << 4.0, -0.01).finished(), adam);
  CHECK(r.values[0] == doctest::Approx(-1e-3).epsilon(1e-6));
  CHECK(r.values[1] == doctest::Approx(1e-3).epsilon(1e-3));
}

TEST_CASE("non-finite gradients are rejected without touching the parameters") {
  ParamBlock p;
  p.values = Vec::Constant(2, 1.5);
  Optimizer adam;
  Vec g = Vec::Constant(2, 1.0);
  g[1] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(opt_step(p, g, adam), NumericalError);
  CHECK(p.values == Vec::Constant(2, 1.5));
  CHECK(p.steps == 0);
  g[1] = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(opt_step(p, g, adam), NumericalError);
}

TEST_CASE("checkpoint round trip is exact") {
  Rng rng = make_rng(11);
  Mlp net(spec_for(Head::gaussian, Activation::relu, 4, 2), rng);
  net.params().steps = 17;
  const Mlp back = Mlp::deserialize(net.serialize());
  CHECK(back.params().values == net.params().values);
  CHECK(back.params().steps == 17);
  CHECK(back.spec().hidden == net.spec().hidden);
  CHECK(back.spec().head == Head::gaussian);
  CHECK_THROWS_AS(Mlp::deserialize("{\"version\": 2}"), ParseError);
}
