#include "offirl/cost.hpp"

#include <cmath>
#include <numbers>

#include <json.hpp>

namespace offirl {

using json = nlohmann::json;

namespace {

Vec to_vec(const std::vector<double>& v) { return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size())); }

Vec log_softmax(const Eigen::Ref<const Vec>& z) {
  const double m = z.maxCoeff();
  return z.array() - m - std::log((z.array() - m).exp().sum());
}

}  // namespace

PairBatch PairBatch::from_records(const std::vector<TransitionRecord>& records) {
  PairBatch b;
  b.s.reserve(records.size());
  b.a.reserve(records.size());
  for (const auto& r : records) {
    b.s.push_back(to_vec(r.state));
    b.a.push_back(to_vec(r.action));
  }
  return b;
}

PairBatch PairBatch::from_future(const std::vector<FutureSample>& xs) {
  PairBatch b;
  b.s.reserve(xs.size());
  b.a.reserve(xs.size());
  for (const auto& x : xs) {
    b.s.push_back(x.state);
    b.a.push_back(x.action);
  }
  return b;
}

// ---------------------------------------------------------------- model

CostModel CostModel::make(const Environment& env, const CostModelConfig& config, Rng& rng) {
  MlpSpec spec;
  spec.input_dim = env.state_features() + env.action_features();
  spec.output_dim = 1;
  spec.hidden = config.hidden;
  spec.activation = config.activation;
  spec.head = Head::scalar_sigmoid;
  CostModel c;
  c.env_ = std::make_shared<const Environment>(env);
  c.net_ = Mlp(spec, rng);
  return c;
}

double CostModel::value(const Vec& s, const Vec& a) const { return net_.predict_one(env_->encode_pair(s, a)); }

Vec CostModel::values(const PairBatch& batch) const {
  return net_.predict(encode_pairs(*env_, batch.s, batch.a)).row(0).transpose();
}

double CostModel::log_likelihood(const PairBatch& batch, const Vec& pos, const Vec& neg, Vec* grad) const {
  const auto n = static_cast<Eigen::Index>(batch.size());
  if (pos.size() != n || neg.size() != n) throw DimensionMismatch("cost log_likelihood: coefficient length mismatch");
  if (n == 0) return 0.0;
  const Forward fw = net_.forward(encode_pairs(*env_, batch.s, batch.a));
  double value = 0.0;
  Mat d_value(1, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const double c = fw.value(0, j);
    value += pos[j] * std::log(c) + neg[j] * std::log1p(-c);
    d_value(0, j) = pos[j] / c - neg[j] / (1.0 - c);
  }
  if (!std::isfinite(value)) throw NumericalError("cost log_likelihood: non-finite value");
  if (grad) {
    if (grad->size() != net_.n_params()) *grad = Vec::Zero(net_.n_params());
    net_.backward(fw, d_value, nullptr, *grad);
  }
  return value;
}

CostFn CostModel::as_cost_fn() const {
  auto snapshot = std::make_shared<const CostModel>(*this);
  return [snapshot](const Vec& s, const Vec& a) { return snapshot->value(s, a); };
}

std::string CostModel::serialize() const {
  json j;
  j["format"] = "offirl-cost";
  j["version"] = 1;
  j["mlp"] = json::parse(net_.serialize());
  return j.dump();
}

CostModel CostModel::deserialize(const Environment& env, const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& ex) {
    throw ParseError(std::string("cost checkpoint: ") + ex.what());
  }
  if (!j.is_object() || j.value("format", "") != "offirl-cost") throw ParseError("cost checkpoint: wrong format tag");
  CostModel c;
  c.env_ = std::make_shared<const Environment>(env);
  c.net_ = Mlp::deserialize(j.at("mlp").dump());
  if (c.net_.spec().input_dim != env.state_features() + env.action_features())
    throw DimensionMismatch("cost checkpoint: input width");
  return c;
}

// ---------------------------------------------------------------- losses

namespace {

// Concatenates groups of pairs, each with its own (pos, neg) coefficient.
struct Assembled {
  PairBatch pairs;
  Vec pos, neg;
};

Assembled assemble(std::initializer_list<std::tuple<const PairBatch*, double, double>> groups) {
  Assembled out;
  std::size_t total = 0;
  for (const auto& [b, p, q] : groups) total += b->size();
  out.pos = Vec::Zero(static_cast<Eigen::Index>(total));
  out.neg = out.pos;
  Eigen::Index at = 0;
  for (const auto& [b, p, q] : groups) {
    if (b->size() == 0) continue;
    const double inv = 1.0 / static_cast<double>(b->size());
    for (std::size_t j = 0; j < b->size(); ++j, ++at) {
      out.pairs.s.push_back(b->s[j]);
      out.pairs.a.push_back(b->a[j]);
      out.pos[at] = p * inv;
      out.neg[at] = q * inv;
    }
  }
  return out;
}

LossGrad evaluate(const CostModel& cost, const Assembled& x) {
  LossGrad out;
  out.grad = Vec::Zero(cost.net().n_params());
  out.value = cost.log_likelihood(x.pairs, x.pos, x.neg, &out.grad);
  return out;
}

}  // namespace

LossGrad cameron_discrimination(const CostModel& cost, const PairBatch& policy_side, const PairBatch& expert_side) {
  if (policy_side.size() == 0 || expert_side.size() == 0) throw EmptyDataset("cameron_discrimination: empty batch");
  return evaluate(cost, assemble({{&policy_side, 1.0, 0.0}, {&expert_side, 0.0, 1.0}}));
}

double cameron_cost_update(CostModel& cost, Optimizer& opt, const CostReplayBuffer& buffer,
                           const std::vector<FutureSample>& expert_future, int steps, std::size_t batch,
                           std::uint64_t seed) {
  if (buffer.empty() || expert_future.empty()) throw EmptyDataset("cameron_cost_update: empty buffer or expert samples");
  if (steps < 0 || batch == 0) throw InvalidParameter("cameron_cost_update: bad schedule");
  Rng rng = make_rng(seed, 0);
  double last = 0.0;
  for (int it = 0; it < steps; ++it) {
    PairBatch pol, exp;
    for (std::size_t j = 0; j < batch; ++j) {
      const auto& x = buffer[uniform_index(rng, buffer.size())].sample;
      pol.s.push_back(x.state);
      pol.a.push_back(x.action);
      const auto& y = expert_future[uniform_index(rng, expert_future.size())];
      exp.s.push_back(y.state);
      exp.a.push_back(y.action);
    }
    const LossGrad lg = cameron_discrimination(cost, pol, exp);
    opt.step(cost.params(), -lg.grad);
    last = lg.value;
  }
  return last;
}

void BaselineConfig::validate() const {
  if (!(oril_phi > 0.0 && oril_phi < 1.0)) throw InvalidParameter("oril_phi must lie in (0,1)");
  if (tgr_t0 < 0) throw InvalidParameter("tgr_t0 must be non-negative");
}

LossGrad oril_pu_loss(const CostModel& cost, const PairBatch& expert, const PairBatch& unlabeled, double phi) {
  if (!(phi > 0.0 && phi <= 1.0)) throw InvalidParameter("oril_pu_loss: phi must lie in (0,1]");
  if (expert.size() == 0 || unlabeled.size() == 0) throw EmptyDataset("oril_pu_loss: empty batch");
  return evaluate(cost, assemble({{&expert, -phi, phi}, {&unlabeled, 1.0, 0.0}}));
}

LossGrad tgr_loss(const CostModel& cost, const std::vector<TransitionRecord>& expert, const PairBatch& exploratory,
                  int t0) {
  if (expert.empty() || exploratory.size() == 0) throw EmptyDataset("tgr_loss: empty batch");
  std::vector<TransitionRecord> early, late;
  for (const auto& r : expert) {
    if (r.t < 0) throw ValidationError("tgr_loss: expert record without a time index");
    (r.t < t0 ? early : late).push_back(r);
  }
  const PairBatch e = PairBatch::from_records(early), l = PairBatch::from_records(late);
  return evaluate(cost, assemble({{&l, 0.0, 1.0}, {&exploratory, 1.0, 0.0}, {&e, 1.0, 0.0}}));
}

std::vector<FutureSample> sample_expert_future(const TrajectoryDataset& expert, double gamma, double delta,
                                               std::size_t n, Rng& rng) {
  if (expert.empty()) throw EmptyDataset("sample_expert_future: expert dataset is empty");
  if (!(gamma >= 0.0 && gamma < 1.0) || !(delta >= 0.0 && delta < 1.0))
    throw InvalidParameter("sample_expert_future: discounts must lie in [0,1)");
  const auto& recs = expert.records;
  std::vector<std::size_t> first(recs.size()), last(recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i)
    first[i] = (i == 0 || recs[i].episode_id != recs[i - 1].episode_id) ? i : first[i - 1];
  for (std::size_t i = recs.size(); i-- > 0;)
    last[i] = (i + 1 == recs.size() || recs[i].episode_id != recs[i + 1].episode_id) ? i : last[i + 1];
  std::vector<double> w(recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i) w[i] = std::pow(gamma, static_cast<double>(i - first[i]));

  std::vector<FutureSample> out;
  out.reserve(n);
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t i = categorical(rng, w);
    const auto span = static_cast<int>(last[i] - i);
    const std::vector<double> eta = eta_weights(TimeWeighting::geometric(delta), span);
    const std::size_t k = i + categorical(rng, eta);
    out.push_back({to_vec(recs[first[i]].state), to_vec(recs[k].state), to_vec(recs[k].action)});
  }
  return out;
}

// ---------------------------------------------------------------- behaviour cloning

LossGrad bc_log_likelihood(const Mat& logits, const PairBatch& batch) {
  if (batch.size() == 0) throw EmptyDataset("bc_log_likelihood: empty batch");
  const double inv = 1.0 / static_cast<double>(batch.size());
  LossGrad out;
  out.grad = Vec::Zero(logits.size());
  Eigen::Map<Mat> g(out.grad.data(), logits.rows(), logits.cols());
  for (std::size_t j = 0; j < batch.size(); ++j) {
    const int s = as_index(batch.s[j]), a = as_index(batch.a[j]);
    const Vec lp = log_softmax(logits.row(s).transpose());
    out.value += inv * lp[a];
    g.row(s) -= inv * lp.array().exp().matrix().transpose();
    g(s, a) += inv;
  }
  return out;
}

LossGrad bc_log_likelihood(const Environment& env, const GaussianMlpPolicy& policy, const PairBatch& batch) {
  if (batch.size() == 0) throw EmptyDataset("bc_log_likelihood: empty batch");
  const auto n = static_cast<Eigen::Index>(batch.size());
  const Forward fw = policy.net().forward(encode_states(env, batch.s));
  const double inv = 1.0 / static_cast<double>(n);
  const double log_sqrt_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  Mat d_mean(fw.value.rows(), n), d_scale(fw.scale.rows(), n);
  LossGrad out;
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < fw.value.rows(); ++i) {
      const double sd = fw.scale(i, j), z = (batch.a[static_cast<std::size_t>(j)][i] - fw.value(i, j)) / sd;
      out.value += inv * (-0.5 * z * z - std::log(sd) - log_sqrt_2pi);
      d_mean(i, j) = inv * z / sd;
      d_scale(i, j) = inv * (z * z - 1.0) / sd;
    }
  out.grad = Vec::Zero(policy.net().n_params());
  policy.net().backward(fw, d_mean, &d_scale, out.grad);
  return out;
}

namespace {

TabularPolicy softmax_policy(const Mat& logits) {
  Mat p(logits.rows(), logits.cols());
  for (Eigen::Index s = 0; s < logits.rows(); ++s)
    p.row(s) = log_softmax(logits.row(s).transpose()).array().exp().transpose();
  return TabularPolicy(p);
}

}  // namespace

PolicyPtr bc_baseline(const Environment& env, const TrajectoryDataset& expert, const BcConfig& config,
                      std::uint64_t seed) {
  if (expert.empty()) throw EmptyDataset("bc_baseline: expert dataset is empty");
  if (config.steps < 0 || config.batch == 0) throw InvalidParameter("bc_baseline: bad schedule");
  Rng rng = make_rng(seed, 0);
  Optimizer opt(config.opt);
  if (env.is_finite()) {
    ParamBlock logits;
    logits.values = Vec::Zero(static_cast<Eigen::Index>(env.n_states()) * env.n_actions());
    for (int it = 0; it < config.steps; ++it) {
      const auto idx = sample_indices(expert, config.batch, rng);
      std::vector<TransitionRecord> recs;
      for (auto i : idx) recs.push_back(expert.records[i]);
      const Eigen::Map<const Mat> table(logits.values.data(), env.n_states(), env.n_actions());
      opt.step(logits, -bc_log_likelihood(Mat(table), PairBatch::from_records(recs)).grad);
    }
    return std::make_shared<TabularPolicy>(
        softmax_policy(Eigen::Map<const Mat>(logits.values.data(), env.n_states(), env.n_actions())));
  }
  Rng init = make_rng(seed, 1);
  auto actor = std::make_shared<GaussianMlpPolicy>(
      GaussianMlpPolicy::make(env.state_features(), env.action_dim(), config.hidden, init));
  for (int it = 0; it < config.steps; ++it) {
    const auto idx = sample_indices(expert, config.batch, rng);
    std::vector<TransitionRecord> recs;
    for (auto i : idx) recs.push_back(expert.records[i]);
    opt.step(actor->net().params(), -bc_log_likelihood(env, *actor, PairBatch::from_records(recs)).grad);
  }
  return actor;
}

}  // namespace offirl
