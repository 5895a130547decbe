#include "offirl/env.hpp"

#include <algorithm>
#include <cmath>

namespace offirl {

void FiniteMdp::validate() const {
  if (n_states <= 0 || n_actions <= 0) throw ValidationError("finite mdp: empty state or action set");
  if (transition.rows() != n_states * n_actions || transition.cols() != n_states)
    throw ValidationError("finite mdp: transition table has wrong shape");
  if (cost.rows() != n_states || cost.cols() != n_actions)
    throw ValidationError("finite mdp: cost table has wrong shape");
  for (Eigen::Index r = 0; r < transition.rows(); ++r) {
    if ((transition.row(r).array() < 0.0).any())
      throw ValidationError("finite mdp: negative transition probability in row " + std::to_string(r));
    if (std::abs(transition.row(r).sum() - 1.0) > 1e-12)
      throw ValidationError("finite mdp: transition row " + std::to_string(r) + " does not sum to 1");
  }
  if (p0.size() != n_states || (p0.array() < 0.0).any() || std::abs(p0.sum() - 1.0) > 1e-12)
    throw ValidationError("finite mdp: p0 is not a distribution");
  if ((cost.array() < 0.0).any() || (cost.array() > 1.0).any())
    throw ValidationError("finite mdp: costs must lie in [0,1]");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ValidationError("finite mdp: gamma outside [0,1)");
  if (horizon <= 0) throw ValidationError("finite mdp: horizon must be positive");
}

Vec ContinuousEnvSpec::clip_action(const Vec& a) const {
  return a.cwiseMax(-action_bound).cwiseMin(action_bound);
}

Vec ContinuousEnvSpec::step(const Vec& s, const Vec& a, Rng& rng) const {
  Vec next = a_matrix * s + b_matrix * clip_action(a);
  for (Eigen::Index i = 0; i < next.size(); ++i) next[i] += noise_std * standard_normal(rng);
  return next.cwiseMax(-state_bound).cwiseMin(state_bound);
}

double ContinuousEnvSpec::cost(const Vec& s, const Vec& a) const {
  const Vec ac = clip_action(a);
  const double q = s.cwiseProduct(s).dot(state_cost_weights) + ac.cwiseProduct(ac).dot(action_cost_weights);
  return 1.0 - std::exp(-0.5 * q);
}

Vec ContinuousEnvSpec::sample_initial(Rng& rng) const {
  Vec s(state_dim);
  for (int i = 0; i < state_dim; ++i) s[i] = init_low[i] + (init_high[i] - init_low[i]) * uniform01(rng);
  return s;
}

bool ContinuousEnvSpec::valid_state(const Vec& s) const {
  return s.size() == state_dim && s.allFinite() && s.cwiseAbs().maxCoeff() <= state_bound;
}

void ContinuousEnvSpec::validate() const {
  if (state_dim <= 0 || action_dim <= 0) throw ValidationError("continuous env: dims must be positive");
  if (horizon <= 0) throw ValidationError("continuous env: horizon must be positive");
  if (a_matrix.rows() != state_dim || a_matrix.cols() != state_dim || b_matrix.rows() != state_dim ||
      b_matrix.cols() != action_dim)
    throw ValidationError("continuous env: dynamics matrices have wrong shape");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ValidationError("continuous env: gamma outside [0,1)");
}

Environment::Environment(std::string name, FiniteMdp mdp) : name_(std::move(name)), model_(std::move(mdp)) {
  finite().validate();
}
Environment::Environment(std::string name, ContinuousEnvSpec spec)
    : name_(std::move(name)), model_(std::move(spec)) {
  continuous().validate();
}

const FiniteMdp& Environment::finite() const {
  if (!is_finite()) throw InvalidParameter("environment '" + name_ + "' is not finite");
  return std::get<FiniteMdp>(model_);
}
const ContinuousEnvSpec& Environment::continuous() const {
  if (is_finite()) throw InvalidParameter("environment '" + name_ + "' is not continuous");
  return std::get<ContinuousEnvSpec>(model_);
}

double Environment::gamma() const { return is_finite() ? finite().gamma : continuous().gamma; }
int Environment::horizon() const { return is_finite() ? finite().horizon : continuous().horizon; }
int Environment::state_dim() const { return is_finite() ? 1 : continuous().state_dim; }
int Environment::action_dim() const { return is_finite() ? 1 : continuous().action_dim; }
int Environment::state_features() const { return is_finite() ? finite().n_states : continuous().state_dim; }
int Environment::action_features() const { return is_finite() ? finite().n_actions : continuous().action_dim; }

Vec Environment::reset(Rng& rng) const {
  if (is_finite()) {
    const auto& m = finite();
    return index_vec(static_cast<int>(categorical(rng, m.p0.data(), m.n_states)));
  }
  return continuous().sample_initial(rng);
}

Vec Environment::step(const Vec& s, const Vec& a, Rng& rng) const {
  if (is_finite()) {
    const auto& m = finite();
    const int row = as_index(s) * m.n_actions + as_index(a);
    Vec p = m.transition.row(row).transpose();
    return index_vec(static_cast<int>(categorical(rng, p.data(), m.n_states)));
  }
  return continuous().step(s, a, rng);
}

double Environment::cost(const Vec& s, const Vec& a) const {
  if (is_finite()) return finite().cost(as_index(s), as_index(a));
  return continuous().cost(s, a);
}

void Environment::encode_state(const Vec& s, double* out) const {
  if (is_finite()) {
    std::fill(out, out + finite().n_states, 0.0);
    out[as_index(s)] = 1.0;
  } else {
    std::copy(s.data(), s.data() + s.size(), out);
  }
}

void Environment::encode_action(const Vec& a, double* out) const {
  if (is_finite()) {
    std::fill(out, out + finite().n_actions, 0.0);
    out[as_index(a)] = 1.0;
  } else {
    std::copy(a.data(), a.data() + a.size(), out);
  }
}

Vec Environment::encode_state(const Vec& s) const {
  Vec out(state_features());
  encode_state(s, out.data());
  return out;
}

Vec Environment::encode_pair(const Vec& s, const Vec& a) const {
  Vec out(state_features() + action_features());
  encode_state(s, out.data());
  encode_action(a, out.data() + state_features());
  return out;
}

Vec Environment::decode_state(const double* f) const {
  if (is_finite()) return index_vec(static_cast<int>(std::max_element(f, f + finite().n_states) - f));
  const auto& c = continuous();
  Vec s = Eigen::Map<const Vec>(f, c.state_dim);
  return s.cwiseMax(-c.state_bound).cwiseMin(c.state_bound);
}

Vec Environment::decode_action(const double* f) const {
  if (is_finite()) return index_vec(static_cast<int>(std::max_element(f, f + finite().n_actions) - f));
  const auto& c = continuous();
  return c.clip_action(Eigen::Map<const Vec>(f, c.action_dim));
}

namespace {

// Stochastic chain: action 1 moves right, 0 moves left, with probability
// 0.1 the opposite move happens. Ends are clamped; the right end is the
// only cost-free state.
FiniteMdp make_chain5() {
  FiniteMdp m;
  m.n_states = 5;
  m.n_actions = 2;
  m.transition = Mat::Zero(10, 5);
  for (int s = 0; s < 5; ++s) {
    for (int a = 0; a < 2; ++a) {
      const int d = a == 1 ? 1 : -1;
      m.transition(s * 2 + a, std::clamp(s + d, 0, 4)) += 0.9;
      m.transition(s * 2 + a, std::clamp(s - d, 0, 4)) += 0.1;
    }
  }
  m.cost = Mat::Ones(5, 2);
  m.cost.row(4).setZero();
  m.p0 = Vec::Zero(5);
  m.p0[0] = 1.0;
  m.gamma = 0.9;
  m.horizon = 100;
  return m;
}

// Deterministic 4x4 grid; actions up/down/left/right; the corner (3,3)
// is absorbing and free, every other step costs 1. Starts uniformly on
// non-goal cells.
FiniteMdp make_gridworld4x4() {
  constexpr int n = 4;
  FiniteMdp m;
  m.n_states = n * n;
  m.n_actions = 4;
  m.transition = Mat::Zero(n * n * 4, n * n);
  m.cost = Mat::Zero(n * n, 4);
  const int dr[4] = {-1, 1, 0, 0};
  const int dc[4] = {0, 0, -1, 1};
  const int goal = n * n - 1;
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      const int s = r * n + c;
      for (int a = 0; a < 4; ++a) {
        if (s == goal) {
          m.transition(s * 4 + a, s) = 1.0;
          continue;
        }
        const int rr = std::clamp(r + dr[a], 0, n - 1);
        const int cc = std::clamp(c + dc[a], 0, n - 1);
        m.transition(s * 4 + a, rr * n + cc) = 1.0;
        m.cost(s, a) = 1.0;
      }
    }
  }
  m.p0 = Vec::Constant(n * n, 1.0 / (n * n - 1));
  m.p0[goal] = 0.0;
  m.gamma = 0.95;
  m.horizon = 100;
  return m;
}

// Planar double integrator: state (px, py, vx, vy), acceleration action.
ContinuousEnvSpec make_pointmass2d() {
  constexpr double dt = 0.1;
  ContinuousEnvSpec e;
  e.state_dim = 4;
  e.action_dim = 2;
  e.a_matrix = Mat::Identity(4, 4);
  e.a_matrix(0, 2) = dt;
  e.a_matrix(1, 3) = dt;
  e.b_matrix = Mat::Zero(4, 2);
  e.b_matrix(2, 0) = dt;
  e.b_matrix(3, 1) = dt;
  e.noise_std = 0.01;
  e.state_bound = 5.0;
  e.action_bound = 1.0;
  e.init_low = Vec::Constant(4, 0.0);
  e.init_high = Vec::Constant(4, 0.0);
  e.init_low.head(2).setConstant(-2.0);
  e.init_high.head(2).setConstant(2.0);
  e.state_cost_weights = (Vec(4) << 1.0, 1.0, 0.1, 0.1).finished();
  e.action_cost_weights = Vec::Constant(2, 0.01);
  e.gamma = 0.99;
  e.horizon = 200;
  return e;
}

}  // namespace

Mat encode_states(const Environment& env, const std::vector<Vec>& states) {
  Mat out(env.state_features(), static_cast<Eigen::Index>(states.size()));
  for (std::size_t i = 0; i < states.size(); ++i) env.encode_state(states[i], out.col(static_cast<Eigen::Index>(i)).data());
  return out;
}

Mat encode_pairs(const Environment& env, const std::vector<Vec>& states, const std::vector<Vec>& actions) {
  if (states.size() != actions.size()) throw DimensionMismatch("encode_pairs: batch sizes differ");
  const int ds = env.state_features();
  Mat out(ds + env.action_features(), static_cast<Eigen::Index>(states.size()));
  for (std::size_t i = 0; i < states.size(); ++i) {
    double* col = out.col(static_cast<Eigen::Index>(i)).data();
    env.encode_state(states[i], col);
    env.encode_action(actions[i], col + ds);
  }
  return out;
}

std::vector<std::string> builtin_env_names() { return {"chain5", "gridworld4x4", "pointmass2d"}; }

Environment builtin_env(const std::string& name) {
  if (name == "chain5") return {name, make_chain5()};
  if (name == "gridworld4x4") return {name, make_gridworld4x4()};
  if (name == "pointmass2d") return {name, make_pointmass2d()};
  std::string valid;
  for (const auto& n : builtin_env_names()) valid += (valid.empty() ? "" : ", ") + n;
  throw InvalidParameter("unknown environment '" + name + "' (valid: " + valid + ")");
}

double eta(const TimeWeighting& w, int t) {
  if (t < 0) return 0.0;
  if (w.kind == TimeWeighting::Kind::dirac0) return t == 0 ? 1.0 : 0.0;
  if (!(w.delta >= 0.0 && w.delta < 1.0)) throw InvalidParameter("eta: delta outside [0,1)");
  return (1.0 - w.delta) * std::pow(w.delta, t);
}

std::vector<double> eta_weights(const TimeWeighting& w, int horizon) {
  if (horizon < 0) throw InvalidParameter("eta_weights: horizon must be >= 0");
  std::vector<double> out(static_cast<std::size_t>(horizon) + 1, 0.0);
  if (w.kind == TimeWeighting::Kind::dirac0) {
    out[0] = 1.0;
    return out;
  }
  if (!(w.delta >= 0.0 && w.delta < 1.0)) throw InvalidParameter("eta_weights: delta outside [0,1)");
  double total = 0.0;
  double p = 1.0 - w.delta;
  for (auto& x : out) {
    x = p;
    total += p;
    p *= w.delta;
  }
  for (auto& x : out) x /= total;
  return out;
}

}  // namespace offirl
