#pragma once

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <vector>

#include "twistpf/fk_model.hpp"
#include "twistpf/twist.hpp"

namespace twistpf {

// Finite-state Feynman-Kac model: initial probability vector, row-stochastic
// transition matrices M_1..M_n and positive potential vectors G_0..G_n.
// Everything about it can be computed exactly with dense linear algebra,
// which is the whole point: it is the ground truth the samplers are tested
// against. Dense only; oracle-scale state counts.
struct DiscreteFK {
  Eigen::VectorXd m0;
  std::vector<Eigen::MatrixXd> trans;  // trans[p-1] is M_p
  std::vector<Eigen::VectorXd> pot;    // pot[p] is G_p

  int num_states() const { return static_cast<int>(m0.size()); }
  int terminal_time() const { return static_cast<int>(trans.size()); }

  void validate() const;
};

// Exact marginal recursion output, all indexed by time 0..n.
struct DiscreteMarginals {
  std::vector<Eigen::VectorXd> gamma;      // predictive measures
  std::vector<Eigen::VectorXd> eta;        // normalized predictive
  std::vector<Eigen::VectorXd> gamma_hat;  // updated measures
  std::vector<Eigen::VectorXd> eta_hat;    // normalized updated
  std::vector<double> z_pred;              // gamma_p(1)
  std::vector<double> z_hat;               // gammahat_p(1)

  double log_z_hat() const;
};

DiscreteMarginals exact_marginals(const DiscreteFK& model);

// Normalizing constant by exhaustive summation over all K^(n+1) paths.
// Exponential cost; exists purely as an independent check on the recursion.
double brute_force_z_hat(const DiscreteFK& model);

// The psi-twisted model with exact M_p(psi_p) sums in kernels and potentials.
DiscreteFK exact_twisted_model(const DiscreteFK& model,
                               const std::vector<Eigen::VectorXd>& psi);

// Average rejection-sampler acceptance rates alpha_0..alpha_n computed two
// ways: (i) directly in the omega-twisted model as etahat_{p-1}^omega applied
// to M_p(omega)/M_p(rho), and (ii) through the psi-twisted reference model.
// The two must agree identically; `assert_equal` throws when they differ by
// more than `tol`.
struct DiscreteAcceptanceRates {
  std::vector<double> direct;
  std::vector<double> via_psi;
};
DiscreteAcceptanceRates exact_acceptance_rates(const DiscreteFK& model,
                                               const std::vector<Eigen::VectorXd>& psi,
                                               const std::vector<Eigen::VectorXd>& omega,
                                               const std::vector<Eigen::VectorXd>& rho,
                                               bool assert_equal = true, double tol = 1e-12);

// Q_p = diag(G_{p-1}) M_p and the products Q_{p,n} = Q_{p+1} ... Q_n.
struct DiscreteQKernels {
  std::vector<Eigen::MatrixXd> q;       // q[p-1] = Q_p, p in 1..n
  std::vector<Eigen::MatrixXd> q_to_n;  // q_to_n[p] = Q_{p,n}, p in 0..n (identity at n)
};
DiscreteQKernels exact_q_kernels(const DiscreteFK& model);

// Relative-second-moment profile of a random-weight model plus a sampler for
// the randomized log potential. s[p](x) = var(Gbar_p(x)/G_p(x)) + 1; the
// terminal potential must be exact, i.e. s[n] identically one.
struct RandomWeightSpec {
  std::vector<Eigen::VectorXd> s;
  std::function<double(int p, int state, Rng&)> log_potential_bar;

  void validate(const DiscreteFK& model) const;
};

// Two-point randomization Gbar = G * (1 +/- delta) with equal probability at
// p < n, exact at p = n. Gives s_p = 1 + delta^2 exactly.
RandomWeightSpec make_two_point_spec(const DiscreteFK& model, double delta);

// Asymptotic variance of gamma_n^N(phi)/gamma_n(1) for the always-resampling
// filter: sum over p of gamma_p(1) gamma_p(s_p Q_{p,n}(phi)^2) / gamma_n(1)^2
// - eta_n(phi)^2. Without `rw` the exact-weight variance (s identically one).
double asymptotic_variance(const DiscreteFK& model, const Eigen::VectorXd& phi,
                           const RandomWeightSpec* rw = nullptr);

// Exact optimal twist tables psi*_n = G_n, psi*_p = G_p . (M_{p+1} psi*_{p+1}),
// each normalized by its maximum so the values can be used as acceptance
// probabilities directly.
std::vector<Eigen::VectorXd> discrete_optimal_twists(const DiscreteFK& model);

// Sampling adapter: the discrete model as a FeynmanKacModel<int>. When `rw`
// is given, potentials are replaced by its randomized estimates.
FeynmanKacModel<int> make_fk_model(const DiscreteFK& model,
                                   std::shared_ptr<SimCounters> counters = nullptr,
                                   const RandomWeightSpec* rw = nullptr);

// Tabular twist schedule from per-time value tables (interpreted as the
// effective twist, expected to lie in (0, 1]). With `exact_m` the schedule
// carries the exact M_p(psi_p) sums so twisted potentials are deterministic.
TwistSchedule<int> make_tabular_schedule(const DiscreteFK& model,
                                         const std::vector<Eigen::VectorXd>& psi_values,
                                         bool exact_m, int n_tilde);

}  // namespace twistpf
