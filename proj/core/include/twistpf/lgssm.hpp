#pragma once

#include <Eigen/Dense>
#include <memory>
#include <vector>

#include "twistpf/fk_model.hpp"
#include "twistpf/twist.hpp"

namespace twistpf {

// Linear Gaussian state space model: X_0 ~ N(mu0, sigma0^2 I),
// X_p ~ N(A X_{p-1}, sigmaM^2 I), potentials G_p(x) = N(y_p; x, sigmaG^2 I).
struct LgssmParams {
  int dim = 1;
  int terminal_time = 0;  // n; observations y_0..y_n
  Eigen::VectorXd mu0;
  double sigma0_sq = 1.0;
  double sigma_m_sq = 1.0;
  double sigma_g_sq = 1.0;
  Eigen::MatrixXd transition;           // A
  std::vector<Eigen::VectorXd> obs;     // y_0..y_n

  // A_ij = a^(|i-j| + 1)
  static Eigen::MatrixXd banded_transition(int dim, double a);

  void validate(bool with_obs = true) const;
};

struct LgssmSim {
  std::vector<Eigen::VectorXd> latent;
  std::vector<Eigen::VectorXd> obs;
};

LgssmSim lgssm_simulate(const LgssmParams& params, Rng& rng);

// Exact log evidence of y_0..y_n via the Kalman predict/update recursion.
double kalman_log_evidence(const LgssmParams& params);

// Gaussian log density helper.
double log_gaussian_isotropic(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                              double variance);

// Closed-form log M_p(psi)(x) of an exponential-quadratic twist against the
// model's Gaussian kernel (p >= 1) or initial distribution (p == 0, x
// ignored). The twist is taken as exp(beta * q(x) + shift); clamps are
// outside the analytic class and must be inactive.
double log_gaussian_m_psi_exact(int p, const Eigen::VectorXd& x, const LgssmParams& params,
                                const TwistFunction<Eigen::VectorXd>& psi);
double gaussian_m_psi_exact(int p, const Eigen::VectorXd& x, const LgssmParams& params,
                            const TwistFunction<Eigen::VectorXd>& psi);

// Coefficients of log G_p as an exponential-quadratic in x.
TwistCoeffs lgssm_potential_coeffs(const LgssmParams& params, int p);

// Coefficient-level Gaussian integration: coefficients of
// log integral N(z; A x, sigma^2 I) exp(q(z)) dz as a quadratic in x.
TwistCoeffs integrate_quadratic_through_kernel(const TwistCoeffs& q, const Eigen::MatrixXd& a,
                                               double sigma_sq);

// Exact optimal twist coefficients psi*_n = G_n, psi*_p = G_p M_{p+1}(psi*_{p+1}),
// in closed form (the class is closed under Gaussian integration).
std::vector<TwistCoeffs> lgssm_optimal_twists(const LgssmParams& params);

// Schedule running the analytic twists. `beta` tempers per time (empty means
// 1 everywhere); shifts are the analytic suprema so values stay in (0, 1].
// With `exact_m` the exact Gaussian integrals are plugged into the potentials
// (zero-variance configuration; requires no floor), otherwise the potentials
// use n_tilde-sample Monte Carlo estimates of the floored twist like any
// other twisted model.
TwistSchedule<Eigen::VectorXd> lgssm_optimal_schedule(const LgssmParams& params,
                                                      const std::vector<double>& beta = {},
                                                      double floor_log = kNegInf,
                                                      bool exact_m = true, int n_tilde = 1);

FeynmanKacModel<Eigen::VectorXd> make_fk_model(const LgssmParams& params,
                                               std::shared_ptr<SimCounters> counters = nullptr);

}  // namespace twistpf
