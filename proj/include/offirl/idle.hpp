#pragma once

#include <functional>
#include <memory>
#include <optional>

#include "offirl/dataset.hpp"
#include "offirl/env.hpp"
#include "offirl/nn.hpp"
#include "offirl/offline_rl.hpp"
#include "offirl/policy.hpp"

namespace offirl {

// Which bootstrap objective trains the classifier.
//   occupancy:  log E(s_t,a^π_t|s_t) + γ·w·log E(x|s_t) + log(1−E(x|s_t))
//   as_written: (1−γ)·log E(s_{t+1},a^π_{t+1}|s_t) + w·log E(x|s_t) + log(1−E(x|s_t))
//   c_learning: as_written with γ·w on the bootstrap term
// w = E/(1−E) at (x|s_{t+1}) under stop-gradient; x ~ dataset pairs.
enum class IdleLossForm { occupancy, as_written, c_learning };
std::string to_string(IdleLossForm f);
IdleLossForm parse_idle_loss_form(const std::string& s);

// Finite environments may use a softmax over the S·A pairs instead of the
// argmax-projected Gaussian; its objective is then an exact expectation.
enum class GeneratorKind { gaussian, categorical };
std::string to_string(GeneratorKind k);
GeneratorKind parse_generator_kind(const std::string& s);

struct IdleConfig {
  double gamma = 0.99;
  double lambda = 0.03;
  int iterations = 1000;
  int batch = 256;
  IdleLossForm form = IdleLossForm::occupancy;
  std::vector<int> hidden{64, 64, 64};
  Activation activation = Activation::relu;
  GeneratorKind finite_generator = GeneratorKind::gaussian;
  OptimizerConfig e_opt{OptimizerKind::adam, 1e-4};
  OptimizerConfig g_opt{OptimizerKind::adam, 1e-4};

  void validate() const;
};

// E(s₊, a₊ | s) in [kSigmoidFloor, kSigmoidCeil]. Networks read
// [pair features; conditioning-state features]; the tabular form keeps one
// logit per (s, s₊, a₊) and exists for exact-expectation checks.
class EvaluationFunction {
 public:
  EvaluationFunction() = default;
  static EvaluationFunction network(const Environment& env, const std::vector<int>& hidden, Rng& rng,
                                    Activation activation = Activation::relu);
  static EvaluationFunction tabular(const Environment& env);

  bool is_tabular() const { return !net_; }
  int input_dim() const { return input_dim_; }
  ParamBlock& params() { return net_ ? net_->params() : logits_; }
  const ParamBlock& params() const { return net_ ? net_->params() : logits_; }
  Eigen::Index n_params() const { return params().values.size(); }
  const Mlp& net() const;
  // Tabular only: logits as an S x (S·A) matrix view, row = conditioning state.
  Eigen::Map<const Mat> logit_table() const;

  Mat encode(const std::vector<FutureSample>& xs) const;
  double prob(const FutureSample& x) const;
  Vec probs(const std::vector<FutureSample>& xs) const;
  // Gradient of Σ_j d_prob(j)·E(x_j) added to grad. d_input receives the
  // gradient with respect to the encoded input columns (networks only).
  void backprop(const std::vector<FutureSample>& xs, const Vec& d_prob, Vec& grad, Mat* d_input = nullptr) const;
  // Σ_j pos_j·log E(x_j) + neg_j·log(1 − E(x_j)) with one forward pass;
  // gradients are accumulated when requested.
  double log_likelihood(const std::vector<FutureSample>& xs, const Vec& pos, const Vec& neg, Vec* grad,
                        Mat* d_input = nullptr) const;

  std::string serialize() const;
  static EvaluationFunction deserialize(const Environment& env, const std::string& text);

 private:
  const Environment& env() const;
  std::shared_ptr<const Environment> env_;
  std::optional<Mlp> net_;
  ParamBlock logits_;
  int input_dim_ = 0;
};

inline double density_ratio(double e) { return e / (1.0 - e); }
double density_ratio(const EvaluationFunction& e, const Vec& s_plus, const Vec& a_plus, const Vec& cond);

// Gaussian kind: conditional Gaussian over a raw vector, the joint (s₊,a₊)
// one-hot of width S·A on finite environments (projected to its argmax
// pair) or [s₊; a₊] on continuous ones (clipped to the boxes).
// Categorical kind: softmax over the S·A pairs of a finite environment.
class Generator {
 public:
  Generator() = default;
  static Generator make(const Environment& env, const std::vector<int>& hidden, Rng& rng,
                        Activation activation = Activation::relu, GeneratorKind kind = GeneratorKind::gaussian);

  GeneratorKind kind() const { return kind_; }
  int raw_dim() const { return raw_dim_; }
  Mlp& net() { return net_; }
  const Mlp& net() const { return net_; }
  long updates() const { return net_.params().steps; }

  // μ + σ⊙ε column-wise; noise is raw_dim x B.
  Mat raw_samples(const std::vector<Vec>& cond, const Mat& noise, Forward* fw = nullptr) const;
  FutureSample project(const Vec& cond, const Eigen::Ref<const Vec>& raw) const;
  // Maps a gradient with respect to E's pair-feature rows back to raw coordinates.
  Vec straight_through(const Eigen::Ref<const Vec>& d_pair_features) const;
  // Categorical kind: pair probabilities, S·A x B (column k = s₊·A + a₊).
  Mat pair_probs(const std::vector<Vec>& cond, Forward* fw = nullptr) const;
  std::vector<FutureSample> sample(const std::vector<Vec>& cond, Rng& rng) const;

  std::string serialize() const;
  static Generator deserialize(const Environment& env, const std::string& text);

 private:
  const Environment& env() const;
  std::shared_ptr<const Environment> env_;
  Mlp net_;
  GeneratorKind kind_ = GeneratorKind::gaussian;
  int raw_dim_ = 0;
};

// Everything one classifier step consumes.
struct IdleBatch {
  std::vector<Vec> s, a, s_next;  // dataset transitions
  std::vector<Vec> a_pi_now;      // a^π_t ~ π(·|s_t)
  std::vector<Vec> a_pi_next;     // a^π_{t+1} ~ π(·|s_{t+1})
  Vec outer;                      // π(a_t|s_t)
  std::vector<Vec> future_s, future_a;  // x_j ~ dataset pairs
};

IdleBatch make_idle_batch(const Environment& env, const TrajectoryDataset& dataset, const Policy& policy,
                          std::size_t n, Rng& rng);

// Objectives are maximised; grad is the ascent direction.
LossGrad classifier_loss(const EvaluationFunction& e, const IdleBatch& batch, double gamma, IdleLossForm form);

// mean_j w_j·log D(x_j) + mean_j log(1 − D(g_j)). weights are constants.
LossGrad gan_score(const EvaluationFunction& d, const Vec& weights, const std::vector<FutureSample>& positives,
                   const std::vector<FutureSample>& generated);
// w_g = (1−γ)·E/(1−E) on the positives, from the current E.
Vec gan_weights(const EvaluationFunction& e, const std::vector<FutureSample>& positives, double gamma);

struct GanBatch {
  std::vector<FutureSample> positives;  // dataset pair conditioned on a drawn state
  std::vector<FutureSample> generated;  // G(s) on the same conditioning states
};

// L + λ·V with V's weights taken from e under stop-gradient.
LossGrad joint_objective(const EvaluationFunction& e, const IdleBatch& batch, const GanBatch& gan,
                         const IdleConfig& config);

// Non-saturating generator objective mean_j log E(G(s_j)|s_j) and its
// gradient with respect to G's parameters: reparameterised (straight-through
// through the argmax on finite environments) for the Gaussian kind, an exact
// sum over pairs for the categorical kind, which ignores noise.
LossGrad generator_objective(const EvaluationFunction& e, const Generator& g, const std::vector<Vec>& cond,
                             const Mat& noise);

// Exact expectation of classifier_loss on a finite MDP for a tabular E:
// transitions s ~ state_dist, a ~ behaviour, s' ~ P; x ~ state_dist·behaviour.
LossGrad expected_classifier_loss(const FiniteMdp& mdp, const TabularPolicy& policy, const Vec& state_dist,
                                  const Mat& behaviour, const EvaluationFunction& e, double gamma,
                                  IdleLossForm form);

struct IdleCurveRow {
  int iteration = 0;
  double classifier_loss = 0.0;
  double constraint = 0.0;
  double mmd = -1.0;  // < 0 when no oracle is attached
};

// Persistent E/G pair with their optimisers so training can resume.
class IdleTrainer {
 public:
  IdleTrainer(Environment env, IdleConfig config, std::uint64_t seed);

  // Runs `iterations` E/G updates against the given data and policy.
  void train(const TrajectoryDataset& dataset, const Policy& policy, int iterations);

  const EvaluationFunction& evaluation() const { return e_; }
  const Generator& generator() const { return g_; }
  const IdleConfig& config() const { return config_; }
  const Environment& env() const { return env_; }
  int iterations_done() const { return done_; }
  const std::vector<IdleCurveRow>& curve() const { return curve_; }

  // Called after every `every` iterations (and once before the first).
  using Observer = std::function<double(int iteration, const EvaluationFunction&, const Generator&)>;
  void set_observer(Observer obs, int every);

 private:
  std::vector<Vec> conditioning_states(std::size_t n, Rng& rng) const;

  Environment env_;
  IdleConfig config_;
  EvaluationFunction e_;
  Generator g_;
  Optimizer e_opt_, g_opt_;
  Rng rng_;
  int done_ = 0;
  std::vector<IdleCurveRow> curve_;
  std::vector<Vec> data_states_;
  Observer observer_;
  int observe_every_ = 0;
};

struct IdleResult {
  EvaluationFunction evaluation;
  Generator generator;
  std::vector<IdleCurveRow> curve;
};

IdleResult idle_train(const Environment& env, const TrajectoryDataset& dataset, const Policy& policy,
                      const IdleConfig& config, std::uint64_t seed);

}  // namespace offirl
