#pragma once

#include "offirl/env.hpp"
#include "offirl/policy.hpp"

namespace offirl {

// Table over (s0, s, a); row s0, column s*n_actions + a.
struct OccupancyTable {
  enum class Kind { rho, mu };
  Kind kind = Kind::rho;
  int n_states = 0;
  int n_actions = 0;
  double gamma = 0.0;
  double delta = 0.0;
  Mat values;

  double at(int s0, int s, int a) const { return values(s0, s * n_actions + a); }
  Vec mass() const { return values.rowwise().sum(); }
};

// (s,a) -> (s',a') transition matrix under π.
Mat pair_transition(const FiniteMdp& mdp, const TabularPolicy& policy);
// Row s0 holds 1{s=s0}·π(a|s0).
Mat start_pairs(const FiniteMdp& mdp, const TabularPolicy& policy);

OccupancyTable exact_occupancy(const FiniteMdp& mdp, const TabularPolicy& policy, double gamma);
// Composition ρ^γ∘ρ^δ.
OccupancyTable exact_mu(const FiniteMdp& mdp, const TabularPolicy& policy, double gamma, double delta);

// Brute-force cross-checks, truncated where the tail is below ~1e-12.
OccupancyTable occupancy_series(const FiniteMdp& mdp, const TabularPolicy& policy, double gamma);
OccupancyTable mu_series(const FiniteMdp& mdp, const TabularPolicy& policy, double gamma, double delta);

// Q^δ(s,a) = Σ_t δ^t E[c(s_t,a_t) | s_0=s, a_0=a]; no entropy inside.
Mat exact_q_delta(const FiniteMdp& mdp, const TabularPolicy& policy, const Mat& cost, double delta);
Mat q_delta_series(const FiniteMdp& mdp, const TabularPolicy& policy, const Mat& cost, double delta, int horizon);

// L^η(π,c) averaged over p0. With include_entropy = false the log π term
// is dropped (plain discounted cost under Dirac0).
double exact_regularized_loss(const FiniteMdp& mdp, const TabularPolicy& policy, const Mat& cost, double gamma,
                              const TimeWeighting& weighting, bool include_entropy = true);

// Discounted expected cost from p0 with the MDP's own cost.
double exact_return(const FiniteMdp& mdp, const TabularPolicy& policy, double gamma);

// Per-s0 Σ c·(μ_A − μ_B).
Vec exact_divergence(const FiniteMdp& mdp, const TabularPolicy& a, const TabularPolicy& b, const Mat& cost,
                     double gamma, double delta);
Vec divergence_series(const FiniteMdp& mdp, const TabularPolicy& a, const TabularPolicy& b, const Mat& cost,
                      double gamma, double delta);

// C* = ρ/(ρ + P_D); data_dist is S x A. Throws when P_D vanishes where ρ > 0.
OccupancyTable optimal_classifier(const FiniteMdp& mdp, const TabularPolicy& policy, double gamma,
                                  const Mat& data_dist);

// g(x) = −x − log(1 − e^x) for x < 0, +inf otherwise.
double psi_g(double x);

// Optimal cost-to-go table by value iteration.
Mat value_iteration(const FiniteMdp& mdp, const Mat& cost, double gamma, double tol = 1e-12);

}  // namespace offirl
