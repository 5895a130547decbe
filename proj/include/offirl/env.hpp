#pragma once

#include <string>
#include <variant>
#include <vector>

#include "offirl/common.hpp"

namespace offirl {

struct FiniteMdp {
  int n_states = 0;
  int n_actions = 0;
  Mat transition;  // row s*n_actions + a, column s'
  Mat cost;        // n_states x n_actions, values in [0,1]
  Vec p0;
  double gamma = 0.9;
  int horizon = 100;  // episode length used when generating data

  double p(int s, int a, int s_next) const { return transition(s * n_actions + a, s_next); }
  // Throws ValidationError when a row or p0 is not a distribution.
  void validate() const;
};

// Linear dynamics with additive Gaussian noise, clipped to a box.
struct ContinuousEnvSpec {
  int state_dim = 0;
  int action_dim = 0;
  Mat a_matrix;
  Mat b_matrix;
  double noise_std = 0.0;
  double state_bound = 1.0;
  double action_bound = 1.0;
  Vec init_low, init_high;
  Vec state_cost_weights;   // diagonal
  Vec action_cost_weights;  // diagonal
  double gamma = 0.99;
  int horizon = 200;

  Vec step(const Vec& s, const Vec& a, Rng& rng) const;
  // 1 - exp(-q/2) with q the weighted squared norm: bounded in [0,1).
  double cost(const Vec& s, const Vec& a) const;
  Vec sample_initial(Rng& rng) const;
  Vec clip_action(const Vec& a) const;
  bool valid_state(const Vec& s) const;
  void validate() const;
};

// An environment plus the feature encoding used by approximators:
// one-hot for finite spaces, identity for continuous ones. Raw finite
// states/actions are length-1 vectors holding the index.
class Environment {
 public:
  Environment(std::string name, FiniteMdp mdp);
  Environment(std::string name, ContinuousEnvSpec spec);

  const std::string& name() const { return name_; }
  bool is_finite() const { return std::holds_alternative<FiniteMdp>(model_); }
  const FiniteMdp& finite() const;
  const ContinuousEnvSpec& continuous() const;

  double gamma() const;
  int horizon() const;
  int state_dim() const;
  int action_dim() const;
  int state_features() const;
  int action_features() const;
  int n_states() const { return finite().n_states; }
  int n_actions() const { return finite().n_actions; }

  Vec reset(Rng& rng) const;
  Vec step(const Vec& s, const Vec& a, Rng& rng) const;
  double cost(const Vec& s, const Vec& a) const;

  void encode_state(const Vec& s, double* out) const;
  void encode_action(const Vec& a, double* out) const;
  Vec encode_state(const Vec& s) const;
  Vec encode_pair(const Vec& s, const Vec& a) const;
  // Nearest valid point: argmax vertex for finite spaces, clipping otherwise.
  Vec decode_state(const double* features) const;
  Vec decode_action(const double* features) const;

 private:
  std::string name_;
  std::variant<FiniteMdp, ContinuousEnvSpec> model_;
};

inline int as_index(const Vec& v) { return static_cast<int>(v[0]); }
inline Vec index_vec(int i) { return Vec::Constant(1, static_cast<double>(i)); }

// Column-per-sample feature matrices.
Mat encode_states(const Environment& env, const std::vector<Vec>& states);
Mat encode_pairs(const Environment& env, const std::vector<Vec>& states, const std::vector<Vec>& actions);

std::vector<std::string> builtin_env_names();
// Throws InvalidParameter listing the valid names for unknown ones.
Environment builtin_env(const std::string& name);

// Time weighting η over t = 0, 1, ...
struct TimeWeighting {
  enum class Kind { dirac0, geometric };
  Kind kind = Kind::dirac0;
  double delta = 0.0;

  static TimeWeighting dirac0() { return {}; }
  static TimeWeighting geometric(double delta) { return {Kind::geometric, delta}; }
};

// Untruncated η(t).
double eta(const TimeWeighting& w, int t);
// η(0..horizon) renormalised over the truncated support.
std::vector<double> eta_weights(const TimeWeighting& w, int horizon);

}  // namespace offirl
