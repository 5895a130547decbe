#include "offirl/idle.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

namespace offirl {

using nlohmann::json;

std::string to_string(IdleLossForm f) {
  switch (f) {
    case IdleLossForm::occupancy: return "occupancy";
    case IdleLossForm::as_written: return "as_written";
    case IdleLossForm::c_learning: return "c_learning";
  }
  return "occupancy";
}

IdleLossForm parse_idle_loss_form(const std::string& s) {
  if (s == "occupancy") return IdleLossForm::occupancy;
  if (s == "as_written") return IdleLossForm::as_written;
  if (s == "c_learning") return IdleLossForm::c_learning;
  throw InvalidParameter("unknown idle loss form '" + s + "' (valid: occupancy, as_written, c_learning)");
}

std::string to_string(GeneratorKind k) { return k == GeneratorKind::gaussian ? "gaussian" : "categorical"; }

GeneratorKind parse_generator_kind(const std::string& s) {
  if (s == "gaussian") return GeneratorKind::gaussian;
  if (s == "categorical") return GeneratorKind::categorical;
  throw InvalidParameter("unknown generator kind '" + s + "' (valid: gaussian, categorical)");
}

void IdleConfig::validate() const {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw InvalidParameter("idle: gamma must lie in [0,1)");
  if (!(lambda >= 0.0)) throw InvalidParameter("idle: lambda must be >= 0");
  if (iterations < 0) throw InvalidParameter("idle: iterations must be >= 0");
  if (batch <= 0) throw InvalidParameter("idle: batch must be positive");
  if (!(e_opt.lr > 0.0) || !(g_opt.lr > 0.0)) throw InvalidParameter("idle: learning rates must be positive");
}

namespace {

Vec to_vec(const std::vector<double>& v) { return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size())); }

double clamp_prob(double z) { return std::clamp(sigmoid(z), kSigmoidFloor, kSigmoidCeil); }

bool clamped(double p) { return p <= kSigmoidFloor || p >= kSigmoidCeil; }

}  // namespace

// ---------------------------------------------------------------- E

EvaluationFunction EvaluationFunction::network(const Environment& env, const std::vector<int>& hidden, Rng& rng,
                                               Activation activation) {
  EvaluationFunction e;
  e.env_ = std::make_shared<const Environment>(env);
  e.input_dim_ = 2 * env.state_features() + env.action_features();
  MlpSpec spec;
  spec.input_dim = e.input_dim_;
  spec.output_dim = 1;
  spec.hidden = hidden;
  spec.activation = activation;
  spec.head = Head::scalar_sigmoid;
  e.net_ = Mlp(spec, rng);
  return e;
}

EvaluationFunction EvaluationFunction::tabular(const Environment& env) {
  if (!env.is_finite()) throw InvalidParameter("tabular evaluation function needs a finite environment");
  EvaluationFunction e;
  e.env_ = std::make_shared<const Environment>(env);
  e.input_dim_ = 2 * env.state_features() + env.action_features();
  const int s = env.n_states(), a = env.n_actions();
  e.logits_.values = Vec::Zero(static_cast<Eigen::Index>(s) * s * a);
  return e;
}

const Environment& EvaluationFunction::env() const {
  if (!env_) throw NotTrained("evaluation function is not initialised");
  return *env_;
}

const Mlp& EvaluationFunction::net() const {
  if (!net_) throw InvalidParameter("tabular evaluation function has no network");
  return *net_;
}

Eigen::Map<const Mat> EvaluationFunction::logit_table() const {
  if (net_) throw InvalidParameter("logit_table: network evaluation function");
  const int s = env().n_states();
  return {logits_.values.data(), s, static_cast<Eigen::Index>(s) * env().n_actions()};
}

Mat EvaluationFunction::encode(const std::vector<FutureSample>& xs) const {
  const Environment& en = env();
  const int sf = en.state_features(), af = en.action_features();
  Mat out(input_dim_, static_cast<Eigen::Index>(xs.size()));
  for (std::size_t j = 0; j < xs.size(); ++j) {
    double* col = out.col(static_cast<Eigen::Index>(j)).data();
    en.encode_state(xs[j].state, col);
    en.encode_action(xs[j].action, col + sf);
    en.encode_state(xs[j].cond, col + sf + af);
  }
  return out;
}

namespace {

Eigen::Index table_index(const Environment& env, const FutureSample& x) {
  const int s = env.n_states(), a = env.n_actions();
  const int cond = as_index(x.cond), sp = as_index(x.state), ap = as_index(x.action);
  if (cond < 0 || cond >= s || sp < 0 || sp >= s || ap < 0 || ap >= a)
    throw InvalidParameter("evaluation function: index out of range");
  return cond + static_cast<Eigen::Index>(s) * (sp * a + ap);
}

}  // namespace

Vec EvaluationFunction::probs(const std::vector<FutureSample>& xs) const {
  if (net_) return net_->predict(encode(xs)).row(0).transpose();
  Vec out(static_cast<Eigen::Index>(xs.size()));
  for (std::size_t j = 0; j < xs.size(); ++j)
    out[static_cast<Eigen::Index>(j)] = clamp_prob(logits_.values[table_index(env(), xs[j])]);
  return out;
}

double EvaluationFunction::prob(const FutureSample& x) const { return probs({x})[0]; }

void EvaluationFunction::backprop(const std::vector<FutureSample>& xs, const Vec& d_prob, Vec& grad,
                                  Mat* d_input) const {
  if (d_prob.size() != static_cast<Eigen::Index>(xs.size()))
    throw DimensionMismatch("evaluation backprop: gradient length differs from batch");
  if (grad.size() != n_params()) grad = Vec::Zero(n_params());
  if (net_) {
    const Forward fw = net_->forward(encode(xs));
    net_->backward(fw, d_prob.transpose(), nullptr, grad, d_input);
    return;
  }
  if (d_input) throw InvalidParameter("tabular evaluation function has no input gradient");
  for (std::size_t j = 0; j < xs.size(); ++j) {
    const Eigen::Index k = table_index(env(), xs[j]);
    const double p = clamp_prob(logits_.values[k]);
    if (!clamped(p)) grad[k] += d_prob[static_cast<Eigen::Index>(j)] * p * (1.0 - p);
  }
}

double EvaluationFunction::log_likelihood(const std::vector<FutureSample>& xs, const Vec& pos, const Vec& neg,
                                          Vec* grad, Mat* d_input) const {
  const auto n = static_cast<Eigen::Index>(xs.size());
  if (pos.size() != n || neg.size() != n) throw DimensionMismatch("log_likelihood: coefficient length mismatch");
  Forward fw;
  Vec p;
  if (net_) {
    fw = net_->forward(encode(xs));
    p = fw.value.row(0).transpose();
  } else {
    p = probs(xs);
  }
  double value = 0.0;
  Vec d_prob(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    value += pos[j] * std::log(p[j]) + neg[j] * std::log1p(-p[j]);
    d_prob[j] = pos[j] / p[j] - neg[j] / (1.0 - p[j]);
  }
  if (!std::isfinite(value)) throw NumericalError("log_likelihood: non-finite value");
  if (!grad && !d_input) return value;
  if (net_) {
    Vec scratch;
    Vec& g = grad ? *grad : scratch;
    if (g.size() != n_params()) g = Vec::Zero(n_params());
    net_->backward(fw, d_prob.transpose(), nullptr, g, d_input);
  } else {
    if (d_input) throw InvalidParameter("tabular evaluation function has no input gradient");
    if (grad->size() != n_params()) *grad = Vec::Zero(n_params());
    for (Eigen::Index j = 0; j < n; ++j) {
      const Eigen::Index k = table_index(env(), xs[static_cast<std::size_t>(j)]);
      if (!clamped(p[j])) (*grad)[k] += d_prob[j] * p[j] * (1.0 - p[j]);
    }
  }
  return value;
}

std::string EvaluationFunction::serialize() const {
  json j;
  j["format"] = "offirl-evaluation";
  j["version"] = 1;
  if (net_) {
    j["kind"] = "network";
    j["mlp"] = json::parse(net_->serialize());
  } else {
    j["kind"] = "tabular";
    j["logits"] = std::vector<double>(logits_.values.data(), logits_.values.data() + logits_.values.size());
  }
  return j.dump();
}

EvaluationFunction EvaluationFunction::deserialize(const Environment& env, const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& ex) {
    throw ParseError(std::string("evaluation checkpoint: ") + ex.what());
  }
  if (!j.is_object() || j.value("format", "") != "offirl-evaluation") throw ParseError("evaluation checkpoint: wrong format tag");
  EvaluationFunction e;
  e.env_ = std::make_shared<const Environment>(env);
  e.input_dim_ = 2 * env.state_features() + env.action_features();
  if (j.value("kind", "") == "network") {
    e.net_ = Mlp::deserialize(j.at("mlp").dump());
    if (e.net_->spec().input_dim != e.input_dim_) throw DimensionMismatch("evaluation checkpoint: input width");
  } else {
    const auto v = j.at("logits").get<std::vector<double>>();
    e.logits_.values = to_vec(v);
    const auto want = static_cast<Eigen::Index>(env.n_states()) * env.n_states() * env.n_actions();
    if (e.logits_.values.size() != want) throw DimensionMismatch("evaluation checkpoint: table size");
  }
  return e;
}

double density_ratio(const EvaluationFunction& e, const Vec& s_plus, const Vec& a_plus, const Vec& cond) {
  return density_ratio(e.prob({cond, s_plus, a_plus}));
}

// ---------------------------------------------------------------- G

Generator Generator::make(const Environment& env, const std::vector<int>& hidden, Rng& rng, Activation activation,
                          GeneratorKind kind) {
  if (kind == GeneratorKind::categorical && !env.is_finite())
    throw InvalidParameter("categorical generator needs a finite environment");
  Generator g;
  g.env_ = std::make_shared<const Environment>(env);
  g.kind_ = kind;
  g.raw_dim_ = env.is_finite() ? env.n_states() * env.n_actions() : env.state_dim() + env.action_dim();
  MlpSpec spec;
  spec.input_dim = env.state_features();
  spec.output_dim = g.raw_dim_;
  spec.hidden = hidden;
  spec.activation = activation;
  spec.head = kind == GeneratorKind::gaussian ? Head::gaussian : Head::linear;
  g.net_ = Mlp(spec, rng);
  return g;
}

const Environment& Generator::env() const {
  if (!env_) throw NotTrained("generator is not initialised");
  return *env_;
}

Mat Generator::raw_samples(const std::vector<Vec>& cond, const Mat& noise, Forward* fw) const {
  if (kind_ != GeneratorKind::gaussian) throw InvalidParameter("raw_samples: categorical generator");
  if (noise.rows() != raw_dim_ || noise.cols() != static_cast<Eigen::Index>(cond.size()))
    throw DimensionMismatch("generator: noise must be raw_dim x batch");
  Forward local = net_.forward(encode_states(env(), cond));
  Mat raw = local.value + local.scale.cwiseProduct(noise);
  if (fw) *fw = std::move(local);
  return raw;
}

FutureSample Generator::project(const Vec& cond, const Eigen::Ref<const Vec>& raw) const {
  const Environment& en = env();
  if (en.is_finite()) {
    Eigen::Index k = 0;
    raw.maxCoeff(&k);
    const int a = en.n_actions();
    return {cond, index_vec(static_cast<int>(k) / a), index_vec(static_cast<int>(k) % a)};
  }
  const auto& spec = en.continuous();
  const Vec s = raw.head(spec.state_dim).cwiseMax(-spec.state_bound).cwiseMin(spec.state_bound);
  return {cond, s, spec.clip_action(raw.tail(spec.action_dim))};
}

Vec Generator::straight_through(const Eigen::Ref<const Vec>& d_pair) const {
  const Environment& en = env();
  if (!en.is_finite()) return d_pair;
  const int s = en.n_states(), a = en.n_actions();
  Vec out(raw_dim_);
  for (int k = 0; k < raw_dim_; ++k) out[k] = d_pair[k / a] + d_pair[s + k % a];
  return out;
}

Mat Generator::pair_probs(const std::vector<Vec>& cond, Forward* fw) const {
  if (kind_ != GeneratorKind::categorical) throw InvalidParameter("pair_probs: gaussian generator");
  Forward local = net_.forward(encode_states(env(), cond));
  Mat p = local.value;
  for (Eigen::Index j = 0; j < p.cols(); ++j) {
    p.col(j) = (p.col(j).array() - p.col(j).maxCoeff()).exp().matrix();
    p.col(j) /= p.col(j).sum();
  }
  if (fw) *fw = std::move(local);
  return p;
}

std::vector<FutureSample> Generator::sample(const std::vector<Vec>& cond, Rng& rng) const {
  if (kind_ == GeneratorKind::categorical) {
    const Mat p = pair_probs(cond);
    const int a = env().n_actions();
    std::vector<FutureSample> out;
    out.reserve(cond.size());
    for (std::size_t j = 0; j < cond.size(); ++j) {
      const auto k = static_cast<int>(categorical(rng, p.col(static_cast<Eigen::Index>(j)).data(),
                                                  static_cast<std::size_t>(p.rows())));
      out.push_back({cond[j], index_vec(k / a), index_vec(k % a)});
    }
    return out;
  }
  Mat noise(raw_dim_, static_cast<Eigen::Index>(cond.size()));
  for (Eigen::Index j = 0; j < noise.cols(); ++j)
    for (Eigen::Index i = 0; i < noise.rows(); ++i) noise(i, j) = standard_normal(rng);
  const Mat raw = raw_samples(cond, noise);
  std::vector<FutureSample> out;
  out.reserve(cond.size());
  for (std::size_t j = 0; j < cond.size(); ++j) out.push_back(project(cond[j], raw.col(static_cast<Eigen::Index>(j))));
  return out;
}

std::string Generator::serialize() const {
  json j;
  j["format"] = "offirl-generator";
  j["version"] = 1;
  j["kind"] = to_string(kind_);
  j["mlp"] = json::parse(net_.serialize());
  return j.dump();
}

Generator Generator::deserialize(const Environment& env, const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& ex) {
    throw ParseError(std::string("generator checkpoint: ") + ex.what());
  }
  if (!j.is_object() || j.value("format", "") != "offirl-generator") throw ParseError("generator checkpoint: wrong format tag");
  Generator g;
  g.env_ = std::make_shared<const Environment>(env);
  g.kind_ = parse_generator_kind(j.value("kind", "gaussian"));
  g.net_ = Mlp::deserialize(j.at("mlp").dump());
  g.raw_dim_ = g.net_.spec().output_dim;
  const int want = env.is_finite() ? env.n_states() * env.n_actions() : env.state_dim() + env.action_dim();
  if (g.raw_dim_ != want || g.net_.spec().input_dim != env.state_features())
    throw DimensionMismatch("generator checkpoint does not match the environment");
  return g;
}

// ---------------------------------------------------------------- objectives

IdleBatch make_idle_batch(const Environment& env, const TrajectoryDataset& dataset, const Policy& policy,
                          std::size_t n, Rng& rng) {
  (void)env;
  if (dataset.empty()) throw EmptyDataset("idle: dataset is empty");
  IdleBatch b;
  const auto idx = sample_indices(dataset, n, rng);
  const auto fut = sample_indices(dataset, n, rng);
  b.outer.resize(static_cast<Eigen::Index>(n));
  for (std::size_t j = 0; j < n; ++j) {
    const auto& r = dataset.records[idx[j]];
    b.s.push_back(to_vec(r.state));
    b.a.push_back(to_vec(r.action));
    b.s_next.push_back(to_vec(r.next_state));
    b.a_pi_now.push_back(policy.sample(b.s.back(), rng));
    b.a_pi_next.push_back(policy.sample(b.s_next.back(), rng));
    b.outer[static_cast<Eigen::Index>(j)] = std::exp(policy.log_prob(b.s.back(), b.a.back()));
    const auto& f = dataset.records[fut[j]];
    b.future_s.push_back(to_vec(f.state));
    b.future_a.push_back(to_vec(f.action));
  }
  return b;
}

LossGrad classifier_loss(const EvaluationFunction& e, const IdleBatch& b, double gamma, IdleLossForm form) {
  const std::size_t n = b.s.size();
  if (n == 0) throw EmptyDataset("classifier_loss: empty batch");
  if (b.s_next.size() != n || b.future_s.size() != n || b.outer.size() != static_cast<Eigen::Index>(n))
    throw DimensionMismatch("classifier_loss: batch fields differ in length");

  std::vector<FutureSample> boot;
  boot.reserve(n);
  for (std::size_t j = 0; j < n; ++j) boot.push_back({b.s_next[j], b.future_s[j], b.future_a[j]});
  const Vec w = e.probs(boot).unaryExpr([](double p) { return density_ratio(p); });
  if (!w.allFinite()) throw NumericalError("classifier_loss: non-finite importance weight");

  const double boot_scale = form == IdleLossForm::as_written ? 1.0 : gamma;
  const double first_scale = form == IdleLossForm::occupancy ? 1.0 : 1.0 - gamma;
  std::vector<FutureSample> xs;
  xs.reserve(2 * n);
  Vec pos = Vec::Zero(static_cast<Eigen::Index>(2 * n)), neg = pos;
  const double inv = 1.0 / static_cast<double>(n);
  for (std::size_t j = 0; j < n; ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    if (form == IdleLossForm::occupancy)
      xs.push_back({b.s[j], b.s[j], b.a_pi_now[j]});
    else
      xs.push_back({b.s[j], b.s_next[j], b.a_pi_next[j]});
    pos[jj] = inv * b.outer[jj] * first_scale;
  }
  for (std::size_t j = 0; j < n; ++j) {
    const auto jj = static_cast<Eigen::Index>(n + j);
    xs.push_back({b.s[j], b.future_s[j], b.future_a[j]});
    pos[jj] = inv * b.outer[static_cast<Eigen::Index>(j)] * boot_scale * w[static_cast<Eigen::Index>(j)];
    neg[jj] = inv * b.outer[static_cast<Eigen::Index>(j)];
  }
  LossGrad out;
  out.grad = Vec::Zero(e.n_params());
  out.value = e.log_likelihood(xs, pos, neg, &out.grad);
  return out;
}

Vec gan_weights(const EvaluationFunction& e, const std::vector<FutureSample>& positives, double gamma) {
  return (1.0 - gamma) * e.probs(positives).unaryExpr([](double p) { return density_ratio(p); });
}

LossGrad gan_score(const EvaluationFunction& d, const Vec& weights, const std::vector<FutureSample>& positives,
                   const std::vector<FutureSample>& generated) {
  const auto np = static_cast<Eigen::Index>(positives.size()), ng = static_cast<Eigen::Index>(generated.size());
  if (np == 0 || ng == 0) throw EmptyDataset("gan_score: empty batch");
  if (weights.size() != np) throw DimensionMismatch("gan_score: one weight per positive sample");
  std::vector<FutureSample> xs = positives;
  xs.insert(xs.end(), generated.begin(), generated.end());
  Vec pos = Vec::Zero(np + ng), neg = Vec::Zero(np + ng);
  pos.head(np) = weights / static_cast<double>(np);
  neg.tail(ng).setConstant(1.0 / static_cast<double>(ng));
  LossGrad out;
  out.grad = Vec::Zero(d.n_params());
  out.value = d.log_likelihood(xs, pos, neg, &out.grad);
  return out;
}

LossGrad joint_objective(const EvaluationFunction& e, const IdleBatch& batch, const GanBatch& gan,
                         const IdleConfig& config) {
  LossGrad out = classifier_loss(e, batch, config.gamma, config.form);
  if (config.lambda == 0.0) return out;
  const LossGrad v = gan_score(e, gan_weights(e, gan.positives, config.gamma), gan.positives, gan.generated);
  out.value += config.lambda * v.value;
  out.grad += config.lambda * v.grad;
  return out;
}

LossGrad generator_objective(const EvaluationFunction& e, const Generator& g, const std::vector<Vec>& cond,
                             const Mat& noise) {
  const auto n = static_cast<Eigen::Index>(cond.size());
  if (n == 0) throw EmptyDataset("generator_objective: empty batch");
  if (g.kind() == GeneratorKind::categorical) {
    // J = mean_j Σ_k p_k(s_j)·log E(k|s_j); ∂J/∂logit_k = p_k·(log E_k − Σ p log E)/n.
    const auto k = static_cast<Eigen::Index>(g.raw_dim());
    const int na = static_cast<int>(k) / static_cast<int>(g.net().spec().input_dim);
    Forward fw;
    const Mat p = g.pair_probs(cond, &fw);
    std::vector<FutureSample> xs;
    xs.reserve(static_cast<std::size_t>(n * k));
    for (Eigen::Index j = 0; j < n; ++j)
      for (int c = 0; c < static_cast<int>(k); ++c)
        xs.push_back({cond[static_cast<std::size_t>(j)], index_vec(c / na), index_vec(c % na)});
    const Vec log_flat = e.probs(xs).array().log();
    const Eigen::Map<const Mat> log_e_copy(log_flat.data(), k, n);
    Mat d_logits(k, n);
    LossGrad out;
    const double inv = 1.0 / static_cast<double>(n);
    for (Eigen::Index j = 0; j < n; ++j) {
      const double mean = p.col(j).dot(log_e_copy.col(j));
      out.value += inv * mean;
      d_logits.col(j) = inv * p.col(j).cwiseProduct((log_e_copy.col(j).array() - mean).matrix());
    }
    out.grad = Vec::Zero(g.net().n_params());
    g.net().backward(fw, d_logits, nullptr, out.grad);
    return out;
  }
  if (e.is_tabular()) throw InvalidParameter("generator training needs a network evaluation function");
  Forward fw;
  const Mat raw = g.raw_samples(cond, noise, &fw);
  std::vector<FutureSample> xs;
  xs.reserve(cond.size());
  for (Eigen::Index j = 0; j < n; ++j) xs.push_back(g.project(cond[static_cast<std::size_t>(j)], raw.col(j)));
  Mat d_input;
  LossGrad out;
  out.value = e.log_likelihood(xs, Vec::Constant(n, 1.0 / static_cast<double>(n)), Vec::Zero(n), nullptr, &d_input);
  // E's input is [pair features; conditioning features]; G reads the latter.
  Mat d_raw(g.raw_dim(), n);
  const Eigen::Index pair_dim = d_input.rows() - fw.activations[0].rows();
  for (Eigen::Index j = 0; j < n; ++j) d_raw.col(j) = g.straight_through(d_input.col(j).head(pair_dim));
  const Mat d_scale = d_raw.cwiseProduct(noise);
  out.grad = Vec::Zero(g.net().n_params());
  g.net().backward(fw, d_raw, &d_scale, out.grad);
  return out;
}

LossGrad expected_classifier_loss(const FiniteMdp& mdp, const TabularPolicy& policy, const Vec& state_dist,
                                  const Mat& behaviour, const EvaluationFunction& e, double gamma,
                                  IdleLossForm form) {
  if (!e.is_tabular()) throw InvalidParameter("expected_classifier_loss needs a tabular evaluation function");
  const int ns = mdp.n_states, na = mdp.n_actions, np = ns * na;
  if (state_dist.size() != ns || behaviour.rows() != ns || behaviour.cols() != na)
    throw DimensionMismatch("expected_classifier_loss: distribution shapes");
  const Eigen::Map<const Mat> logits = e.logit_table();
  const Mat prob = logits.unaryExpr([](double z) { return clamp_prob(z); });
  const Mat ratio = prob.unaryExpr([](double p) { return density_ratio(p); });
  const Mat& pi = policy.probs();

  Vec p_data(np);
  for (int s = 0; s < ns; ++s)
    for (int a = 0; a < na; ++a) p_data[s * na + a] = state_dist[s] * behaviour(s, a);

  // q(s'|s) = d(s)·Σ_a β(a|s)·π(a|s)·P(s'|s,a);  c(s) = Σ_s' q(s'|s)
  Mat q = Mat::Zero(ns, ns);
  for (int s = 0; s < ns; ++s)
    for (int a = 0; a < na; ++a) q.row(s) += state_dist[s] * behaviour(s, a) * pi(s, a) * mdp.transition.row(s * na + a);
  const Vec c = q.rowwise().sum();

  const double boot_scale = form == IdleLossForm::as_written ? 1.0 : gamma;
  Mat pos = Mat::Zero(ns, np), neg = Mat::Zero(ns, np);
  // Bootstrap: P_D(x)·Σ_s' q(s'|s)·w(x|s')
  const Mat boot = q * ratio;
  for (int s = 0; s < ns; ++s) {
    pos.row(s) = boot_scale * boot.row(s).cwiseProduct(p_data.transpose());
    neg.row(s) = c[s] * p_data.transpose();
    if (form == IdleLossForm::occupancy) {
      for (int a = 0; a < na; ++a) pos(s, s * na + a) += c[s] * pi(s, a);
    } else {
      for (int s2 = 0; s2 < ns; ++s2)
        for (int a = 0; a < na; ++a) pos(s, s2 * na + a) += (1.0 - gamma) * q(s, s2) * pi(s2, a);
    }
  }
  LossGrad out;
  out.grad = Vec::Zero(e.n_params());
  Eigen::Map<Mat> g(out.grad.data(), ns, np);
  for (int s = 0; s < ns; ++s)
    for (int k = 0; k < np; ++k) {
      const double p = prob(s, k);
      out.value += pos(s, k) * std::log(p) + neg(s, k) * std::log1p(-p);
      if (!clamped(p)) g(s, k) = pos(s, k) * (1.0 - p) - neg(s, k) * p;
    }
  return out;
}

// ---------------------------------------------------------------- training

IdleTrainer::IdleTrainer(Environment env, IdleConfig config, std::uint64_t seed)
    : env_(std::move(env)), config_(std::move(config)), e_opt_(config_.e_opt), g_opt_(config_.g_opt),
      rng_(make_rng(seed, 0)) {
  config_.validate();
  Rng e_rng = make_rng(seed, 1), g_rng = make_rng(seed, 2);
  e_ = EvaluationFunction::network(env_, config_.hidden, e_rng, config_.activation);
  const GeneratorKind kind = env_.is_finite() ? config_.finite_generator : GeneratorKind::gaussian;
  g_ = Generator::make(env_, config_.hidden, g_rng, config_.activation, kind);
}

void IdleTrainer::set_observer(Observer obs, int every) {
  if (every <= 0) throw InvalidParameter("idle observer interval must be positive");
  observer_ = std::move(obs);
  observe_every_ = every;
}

std::vector<Vec> IdleTrainer::conditioning_states(std::size_t n, Rng& rng) const {
  std::vector<Vec> out;
  out.reserve(n);
  for (std::size_t j = 0; j < n; ++j) {
    if (env_.is_finite())
      out.push_back(index_vec(static_cast<int>(uniform_index(rng, static_cast<std::size_t>(env_.n_states())))));
    else
      out.push_back(data_states_[uniform_index(rng, data_states_.size())]);
  }
  return out;
}

void IdleTrainer::train(const TrajectoryDataset& dataset, const Policy& policy, int iterations) {
  if (dataset.empty()) throw EmptyDataset("idle_train: dataset is empty");
  if (iterations < 0) throw InvalidParameter("idle_train: iterations must be >= 0");
  data_states_.clear();
  data_states_.reserve(dataset.size());
  for (const auto& r : dataset.records) data_states_.push_back(to_vec(r.state));

  if (observer_ && done_ == 0 && curve_.empty()) {
    IdleCurveRow row;
    row.mmd = observer_(0, e_, g_);
    curve_.push_back(row);
  }
  const auto b = static_cast<std::size_t>(config_.batch);
  for (int it = 0; it < iterations; ++it) {
    const IdleBatch batch = make_idle_batch(env_, dataset, policy, b, rng_);
    GanBatch gan;
    const auto cond = conditioning_states(b, rng_);
    const auto pos_idx = sample_indices(dataset, b, rng_);
    for (std::size_t j = 0; j < b; ++j) {
      const auto& r = dataset.records[pos_idx[j]];
      gan.positives.push_back({cond[j], to_vec(r.state), to_vec(r.action)});
    }
    gan.generated = g_.sample(cond, rng_);

    LossGrad l = classifier_loss(e_, batch, config_.gamma, config_.form);
    IdleCurveRow row;
    row.iteration = done_ + 1;
    row.classifier_loss = l.value;
    if (config_.lambda > 0.0) {
      const LossGrad v =
          gan_score(e_, gan_weights(e_, gan.positives, config_.gamma), gan.positives, gan.generated);
      row.constraint = v.value;
      l.grad += config_.lambda * v.grad;
    }
    e_opt_.step(e_.params(), -l.grad);

    LossGrad go;
    if (g_.kind() == GeneratorKind::categorical) {
      // Exact expectation over uniform conditioning states as well.
      std::vector<Vec> all;
      for (int s = 0; s < env_.n_states(); ++s) all.push_back(index_vec(s));
      go = generator_objective(e_, g_, all, Mat());
    } else {
      const auto g_cond = conditioning_states(b, rng_);
      Mat noise(g_.raw_dim(), static_cast<Eigen::Index>(b));
      for (Eigen::Index j = 0; j < noise.cols(); ++j)
        for (Eigen::Index i = 0; i < noise.rows(); ++i) noise(i, j) = standard_normal(rng_);
      go = generator_objective(e_, g_, g_cond, noise);
    }
    g_opt_.step(g_.net().params(), -go.grad);

    ++done_;
    if (observer_ && done_ % observe_every_ == 0) row.mmd = observer_(done_, e_, g_);
    curve_.push_back(row);
  }
}

IdleResult idle_train(const Environment& env, const TrajectoryDataset& dataset, const Policy& policy,
                      const IdleConfig& config, std::uint64_t seed) {
  if (dataset.empty()) throw EmptyDataset("idle_train: dataset is empty");
  IdleTrainer trainer(env, config, seed);
  trainer.train(dataset, policy, config.iterations);
  return {trainer.evaluation(), trainer.generator(), trainer.curve()};
}

}  // namespace offirl
