#pragma once

#include <memory>
#include <utility>
#include <vector>

#include "twistpf/fk_model.hpp"
#include "twistpf/twist.hpp"

namespace twistpf {

// Square-root stochastic volatility model. Returns R_t = sqrt(X_t) Z_t with
// Z_t ~ N(0, sigma^2); the variance X_t follows a square-root diffusion whose
// exact unit-increment transition has a compound Poisson-Gamma form:
// shape q+1, Poisson mean u(x) and rate c, with
//   c = 2 phi2 / (phi3^2 (1 - e^{-phi2})), q = 2 phi1 / phi3^2 - 1,
//   u(x) = c x e^{-phi2}.
struct SvParams {
  double phi1 = 0.1;
  double phi2 = 0.5;
  double phi3 = 0.1;
  double sigma = 0.25;
  int terminal_time = 0;        // n; returns r_1..r_n
  std::vector<double> returns;  // returns[t-1] is r_t

  double rate_c() const;
  double shape_q() const;
  double poisson_u(double x) const;

  // CIR stationary law Gamma(2 phi1/phi3^2, rate 2 phi2/phi3^2), used as M_0.
  double stationary_shape() const { return 2.0 * phi1 / (phi3 * phi3); }
  double stationary_rate() const { return 2.0 * phi2 / (phi3 * phi3); }

  void validate(bool with_returns = true) const;
};

// One draw from the exponentially tilted compound Poisson-Gamma law with
// density proportional to exp(-tilt_b * y) times CPG(alpha, eta, rate):
// V ~ Pois(eta * rate / (rate + tilt_b)), Y | V ~ Gamma(alpha + V, rate + tilt_b).
// tilt_b = 0 recovers the untilted kernel. Requires rate + tilt_b > 0.
double cpg_sample(double alpha, double eta, double rate, double tilt_b, Rng& rng);

// Normalizing constant of the tilt: E exp(-tilt_b Y) under the untilted law.
double cpg_log_normalizer(double alpha, double eta, double rate, double tilt_b);

// E(Y) of the tilted law: alpha/(rate+b) + eta*rate/(rate+b)^2.
double cpg_mean(double alpha, double eta, double rate, double tilt_b);

struct SvSim {
  std::vector<double> variance;  // x_0..x_n
  std::vector<double> returns;   // r_1..r_n
};

SvSim sv_simulate(const SvParams& params, int n, double x0, Rng& rng);

// G_t(x) = Normal density of r_t under N(0, sigma^2 x); t in 1..n, x > 0.
double sv_log_potential(int t, double x, const SvParams& params);
double sv_potential(int t, double x, const SvParams& params);

// Twist of the form  phi(x) = clamp(phi_q(x), ...) * exp(b_l x)  with
// phi_q(x) = exp(a x^2 + b_q x + c). The quadratic factor is capped at q_max
// (so the fitted coefficient may be positive) and normalized by it; after
// normalization the acceptance probability of the rejection step is floored
// at alpha_min. The log-linear part exp(b_l x) is absorbed analytically into
// the proposal kernel.
struct SvTwist {
  double a = 0.0;
  double b_q = 0.0;
  double c = 0.0;
  double b_l = 0.0;
  double q_max = 1.0;
  double alpha_min = 5e-4;

  double log_quad(double x) const { return (a * x + b_q) * x + c; }

  // log of the normalized acceptance factor, in [log alpha_min, 0]
  double log_accept(double x) const;

  // log of the full effective twist value
  double log_effective(double x) const { return log_accept(x) + b_l * x; }

  TwistFunction<double> as_twist_function() const;
};

// One twisted-kernel draw by rejection: propose from the exponentially
// tilted transition (exact sampler for the exp(b_l x)-twisted kernel) and
// accept with the clamped-normalized quadratic factor.
std::pair<double, long long> sv_tilted_kernel(const SvParams& params, double x_prev,
                                              const SvTwist& twist, Rng& rng,
                                              long long max_trials = 0);

// log M_p(exp(b_l .))(x_prev): the tilt normalizer of the transition kernel.
double sv_log_m_tilt(const SvParams& params, double x_prev, double b_l);
// Same for the initial Gamma law.
double sv_log_m0_tilt(const SvParams& params, double b_l);

// Proposal object for twist schedules: exact samplers for the tilted kernel
// and tilted initial law, with log rho(x) = b_l * x.
TwistProposal<double> sv_make_proposal(const SvParams& params, double b_l);

// Admissible tilt range (b_l below the kernel and initial rates).
double sv_max_tilt(const SvParams& params);

FeynmanKacModel<double> make_fk_model(const SvParams& params,
                                      std::shared_ptr<SimCounters> counters = nullptr);

}  // namespace twistpf
