#include "offirl/oracle.hpp"

#include <cmath>
#include <limits>

namespace offirl {

namespace {

void check_discount(double x, const char* what) {
  if (!(x >= 0.0 && x < 1.0)) throw InvalidParameter(std::string(what) + " outside [0,1)");
}

void check_shapes(const FiniteMdp& mdp, const TabularPolicy& policy) {
  if (policy.n_states() != mdp.n_states || policy.n_actions() != mdp.n_actions)
    throw DimensionMismatch("policy table does not match the mdp");
}

// X with X (I − γ P) = B, i.e. B (I − γP)^{-1}.
Mat right_resolvent(const Mat& b, const Mat& p, double gamma) {
  const Eigen::Index n = p.rows();
  const Mat m = Mat::Identity(n, n) - gamma * p;
  Eigen::PartialPivLU<Mat> lu(m.transpose());
  Mat x = lu.solve(b.transpose()).transpose();
  if (!x.allFinite()) throw NumericalError("occupancy: singular resolvent");
  return x;
}

// Maps a pair (s,a) to its state s.
Mat pair_to_state(const FiniteMdp& mdp) {
  Mat sel = Mat::Zero(mdp.n_states * mdp.n_actions, mdp.n_states);
  for (int s = 0; s < mdp.n_states; ++s)
    for (int a = 0; a < mdp.n_actions; ++a) sel(s * mdp.n_actions + a, s) = 1.0;
  return sel;
}

int series_length(double rate, double tol = 1e-13) {
  if (rate <= 0.0) return 1;
  // Smallest T with rate^T (T + 1) / (1 − rate) below tol.
  int t = 1;
  while (std::pow(rate, t) * (t + 1) / (1.0 - rate) > tol) ++t;
  return t;
}

Vec flatten(const Mat& table) {
  Vec v(table.size());
  for (Eigen::Index s = 0; s < table.rows(); ++s)
    for (Eigen::Index a = 0; a < table.cols(); ++a) v[s * table.cols() + a] = table(s, a);
  return v;
}

Mat unflatten(const Vec& v, int n_states, int n_actions) {
  Mat m(n_states, n_actions);
  for (int s = 0; s < n_states; ++s)
    for (int a = 0; a < n_actions; ++a) m(s, a) = v[s * n_actions + a];
  return m;
}

}  // namespace

Mat pair_transition(const FiniteMdp& mdp, const TabularPolicy& policy) {
  check_shapes(mdp, policy);
  const int na = mdp.n_actions;
  Mat p(mdp.n_states * na, mdp.n_states * na);
  for (int row = 0; row < mdp.n_states * na; ++row)
    for (int s2 = 0; s2 < mdp.n_states; ++s2)
      for (int a2 = 0; a2 < na; ++a2) p(row, s2 * na + a2) = mdp.transition(row, s2) * policy.prob(s2, a2);
  return p;
}

Mat start_pairs(const FiniteMdp& mdp, const TabularPolicy& policy) {
  check_shapes(mdp, policy);
  Mat st = Mat::Zero(mdp.n_states, mdp.n_states * mdp.n_actions);
  for (int s = 0; s < mdp.n_states; ++s)
    for (int a = 0; a < mdp.n_actions; ++a) st(s, s * mdp.n_actions + a) = policy.prob(s, a);
  return st;
}

OccupancyTable exact_occupancy(const FiniteMdp& mdp, const TabularPolicy& policy, double gamma) {
  check_discount(gamma, "gamma");
  OccupancyTable t{OccupancyTable::Kind::rho, mdp.n_states, mdp.n_actions, gamma, 0.0, {}};
  t.values = right_resolvent(start_pairs(mdp, policy), pair_transition(mdp, policy), gamma);
  return t;
}

OccupancyTable exact_mu(const FiniteMdp& mdp, const TabularPolicy& policy, double gamma, double delta) {
  check_discount(gamma, "gamma");
  check_discount(delta, "delta");
  const Mat rho_g = exact_occupancy(mdp, policy, gamma).values;
  const Mat rho_d = exact_occupancy(mdp, policy, delta).values;
  OccupancyTable t{OccupancyTable::Kind::mu, mdp.n_states, mdp.n_actions, gamma, delta, {}};
  t.values = rho_g * pair_to_state(mdp) * rho_d;
  return t;
}

OccupancyTable occupancy_series(const FiniteMdp& mdp, const TabularPolicy& policy, double gamma) {
  check_discount(gamma, "gamma");
  const Mat p = pair_transition(mdp, policy);
  Mat term = start_pairs(mdp, policy);
  OccupancyTable t{OccupancyTable::Kind::rho, mdp.n_states, mdp.n_actions, gamma, 0.0, term};
  const int n = series_length(gamma);
  for (int k = 1; k <= n; ++k) {
    term = gamma * (term * p);
    t.values += term;
  }
  return t;
}

OccupancyTable mu_series(const FiniteMdp& mdp, const TabularPolicy& policy, double gamma, double delta) {
  check_discount(gamma, "gamma");
  check_discount(delta, "delta");
  const Mat p = pair_transition(mdp, policy);
  Mat dist = start_pairs(mdp, policy);  // P^n from each s0
  OccupancyTable t{OccupancyTable::Kind::mu, mdp.n_states, mdp.n_actions, gamma, delta, dist};
  // coefficient of P^n is Σ_{t+k=n} γ^t δ^k, built by the recursion
  // c_n = δ c_{n-1} + γ^n.
  double c = 1.0, gpow = 1.0;
  const int n = series_length(std::max(gamma, delta));
  for (int k = 1; k <= n; ++k) {
    dist = dist * p;
    gpow *= gamma;
    c = delta * c + gpow;
    t.values += c * dist;
  }
  return t;
}

Mat exact_q_delta(const FiniteMdp& mdp, const TabularPolicy& policy, const Mat& cost, double delta) {
  check_discount(delta, "delta");
  const Mat p = pair_transition(mdp, policy);
  const Eigen::Index n = p.rows();
  const Vec q = (Mat::Identity(n, n) - delta * p).partialPivLu().solve(flatten(cost));
  if (!q.allFinite()) throw NumericalError("q_delta: singular system");
  return unflatten(q, mdp.n_states, mdp.n_actions);
}

Mat q_delta_series(const FiniteMdp& mdp, const TabularPolicy& policy, const Mat& cost, double delta, int horizon) {
  const Mat p = pair_transition(mdp, policy);
  Vec term = flatten(cost);
  Vec q = term;
  for (int t = 1; t <= horizon; ++t) {
    term = delta * (p * term);
    q += term;
  }
  return unflatten(q, mdp.n_states, mdp.n_actions);
}

double exact_regularized_loss(const FiniteMdp& mdp, const TabularPolicy& policy, const Mat& cost, double gamma,
                              const TimeWeighting& weighting, bool include_entropy) {
  check_discount(gamma, "gamma");
  Mat integrand = cost;
  if (include_entropy) {
    for (int s = 0; s < mdp.n_states; ++s)
      for (int a = 0; a < mdp.n_actions; ++a) {
        const double p = policy.prob(s, a);
        integrand(s, a) += p > 0.0 ? std::log(p) : 0.0;  // 0·log 0 = 0 under the occupancy weight
      }
  }
  const Vec f = flatten(integrand);
  const Mat rho = exact_occupancy(mdp, policy, gamma).values;
  // P^η(x|s) over pairs, with rows indexed by the conditioning pair's state.
  Mat future;
  if (weighting.kind == TimeWeighting::Kind::dirac0) {
    future = start_pairs(mdp, policy);
  } else {
    check_discount(weighting.delta, "delta");
    future = (1.0 - weighting.delta) * exact_occupancy(mdp, policy, weighting.delta).values;
  }
  const Vec per_s0 = rho * pair_to_state(mdp) * future * f;
  return mdp.p0.dot(per_s0);
}

double exact_return(const FiniteMdp& mdp, const TabularPolicy& policy, double gamma) {
  return exact_regularized_loss(mdp, policy, mdp.cost, gamma, TimeWeighting::dirac0(), false);
}

Vec exact_divergence(const FiniteMdp& mdp, const TabularPolicy& a, const TabularPolicy& b, const Mat& cost,
                     double gamma, double delta) {
  const Vec c = flatten(cost);
  return (exact_mu(mdp, a, gamma, delta).values - exact_mu(mdp, b, gamma, delta).values) * c;
}

Vec divergence_series(const FiniteMdp& mdp, const TabularPolicy& a, const TabularPolicy& b, const Mat& cost,
                      double gamma, double delta) {
  const Vec c = flatten(cost);
  return (mu_series(mdp, a, gamma, delta).values - mu_series(mdp, b, gamma, delta).values) * c;
}

OccupancyTable optimal_classifier(const FiniteMdp& mdp, const TabularPolicy& policy, double gamma,
                                  const Mat& data_dist) {
  if (data_dist.rows() != mdp.n_states || data_dist.cols() != mdp.n_actions)
    throw DimensionMismatch("optimal_classifier: data distribution shape");
  OccupancyTable t = exact_occupancy(mdp, policy, gamma);
  const Vec pd = flatten(data_dist);
  for (Eigen::Index s0 = 0; s0 < t.values.rows(); ++s0) {
    for (Eigen::Index x = 0; x < t.values.cols(); ++x) {
      const double rho = t.values(s0, x);
      if (rho > 0.0 && !(pd[x] > 0.0))
        throw InvalidParameter("optimal_classifier: data distribution is zero where the occupancy is positive");
      t.values(s0, x) = rho > 0.0 ? rho / (rho + pd[x]) : 0.0;
    }
  }
  return t;
}

double psi_g(double x) {
  if (x >= 0.0 || std::isnan(x)) return std::numeric_limits<double>::infinity();
  return -x - std::log1p(-std::exp(x));
}

Mat value_iteration(const FiniteMdp& mdp, const Mat& cost, double gamma, double tol) {
  check_discount(gamma, "gamma");
  Mat q = Mat::Zero(mdp.n_states, mdp.n_actions);
  for (int it = 0; it < 100000; ++it) {
    const Vec v = q.rowwise().minCoeff();
    const Vec next = mdp.transition * v;
    Mat q2 = cost + gamma * unflatten(next, mdp.n_states, mdp.n_actions);
    const double diff = (q2 - q).cwiseAbs().maxCoeff();
    q = std::move(q2);
    if (diff < tol) break;
  }
  return q;
}

}  // namespace offirl
