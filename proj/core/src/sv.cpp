#include "twistpf/sv.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "twistpf/errors.hpp"
#include "twistpf/rejection.hpp"

namespace twistpf {

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;
}

double SvParams::rate_c() const {
  return 2.0 * phi2 / (phi3 * phi3 * (1.0 - std::exp(-phi2)));
}

double SvParams::shape_q() const { return 2.0 * phi1 / (phi3 * phi3) - 1.0; }

double SvParams::poisson_u(double x) const { return rate_c() * x * std::exp(-phi2); }

void SvParams::validate(bool with_returns) const {
  if (phi1 <= 0 || phi2 <= 0 || phi3 <= 0 || sigma <= 0) {
    throw std::invalid_argument("SvParams: structural parameters must be positive");
  }
  if (2.0 * phi1 < phi3 * phi3) {
    throw std::invalid_argument("SvParams: requires 2 phi1 >= phi3^2");
  }
  if (with_returns && static_cast<int>(returns.size()) != terminal_time) {
    throw std::invalid_argument("SvParams: need n returns");
  }
}

double cpg_sample(double alpha, double eta, double rate, double tilt_b, Rng& rng) {
  if (rate + tilt_b <= 0.0) {
    throw std::domain_error("cpg_sample: inadmissible tilt, rate + b must be positive");
  }
  const double tilted_rate = rate + tilt_b;
  std::poisson_distribution<long> pois(eta * rate / tilted_rate);
  const long v = eta > 0.0 ? pois(rng) : 0;
  std::gamma_distribution<double> gamma(alpha + static_cast<double>(v), 1.0 / tilted_rate);
  return gamma(rng);
}

double cpg_log_normalizer(double alpha, double eta, double rate, double tilt_b) {
  if (rate + tilt_b <= 0.0) {
    throw std::domain_error("cpg_log_normalizer: inadmissible tilt");
  }
  return eta * rate / (rate + tilt_b) - eta - alpha * std::log1p(tilt_b / rate);
}

double cpg_mean(double alpha, double eta, double rate, double tilt_b) {
  const double r = rate + tilt_b;
  return alpha / r + eta * rate / (r * r);
}

SvSim sv_simulate(const SvParams& params, int n, double x0, Rng& rng) {
  params.validate(false);
  if (x0 <= 0.0) throw std::invalid_argument("sv_simulate: initial variance must be positive");
  SvSim sim;
  sim.variance.resize(n + 1);
  sim.returns.resize(n);
  sim.variance[0] = x0;
  const double alpha = params.shape_q() + 1.0;
  const double rate = params.rate_c();
  std::normal_distribution<double> normal(0.0, params.sigma);
  for (int t = 1; t <= n; ++t) {
    sim.variance[t] = cpg_sample(alpha, params.poisson_u(sim.variance[t - 1]), rate, 0.0, rng);
    sim.returns[t - 1] = std::sqrt(sim.variance[t]) * normal(rng);
  }
  return sim;
}

double sv_log_potential(int t, double x, const SvParams& params) {
  if (x <= 0.0) throw std::domain_error("sv_log_potential: variance must be positive");
  const double r = params.returns[t - 1];
  const double v = params.sigma * params.sigma * x;
  return -0.5 * (kLog2Pi + std::log(v)) - r * r / (2.0 * v);
}

double sv_potential(int t, double x, const SvParams& params) {
  return std::exp(sv_log_potential(t, x, params));
}

double SvTwist::log_accept(double x) const {
  double v = log_quad(x) - std::log(q_max);
  return std::min(0.0, std::max(std::log(alpha_min), v));
}

TwistFunction<double> SvTwist::as_twist_function() const {
  TwistFunction<double> t;
  const SvTwist copy = *this;
  t.eval_log = [copy](const double& x) { return copy.log_quad(x); };
  t.beta = 1.0;
  t.shift = -std::log(q_max);
  t.floor_log = std::log(alpha_min);
  if (b_l != 0.0) {
    const double bl = b_l;
    t.log_tilt = [bl](const double& x) { return bl * x; };
  }
  t.has_coeffs = true;
  t.coeffs = TwistCoeffs::iso(a, Eigen::VectorXd::Constant(1, b_q), c);
  t.coeffs.tilt = b_l;
  return t;
}

std::pair<double, long long> sv_tilted_kernel(const SvParams& params, double x_prev,
                                              const SvTwist& twist, Rng& rng,
                                              long long max_trials) {
  if (max_trials <= 0) max_trials = rejection_trial_cap(std::log(twist.alpha_min));
  const double alpha = params.shape_q() + 1.0;
  const double rate = params.rate_c();
  if (rate - twist.b_l <= 0.0) {
    throw std::domain_error("sv_tilted_kernel: tilt exceeds the kernel rate");
  }
  const double eta = params.poisson_u(x_prev);
  for (long long t = 1; t <= max_trials; ++t) {
    const double y = cpg_sample(alpha, eta, rate, -twist.b_l, rng);
    if (std::log(rng.uniform_open()) < twist.log_accept(y)) return {y, t};
  }
  throw RejectionOverflowError(-1, max_trials);
}

double sv_log_m_tilt(const SvParams& params, double x_prev, double b_l) {
  return cpg_log_normalizer(params.shape_q() + 1.0, params.poisson_u(x_prev), params.rate_c(),
                            -b_l);
}

double sv_log_m0_tilt(const SvParams& params, double b_l) {
  const double shape = params.stationary_shape();
  const double rate = params.stationary_rate();
  if (rate - b_l <= 0.0) throw std::domain_error("sv_log_m0_tilt: inadmissible tilt");
  // Gamma moment generating function at b_l
  return -shape * std::log1p(-b_l / rate);
}

TwistProposal<double> sv_make_proposal(const SvParams& params, double b_l) {
  auto shared = std::make_shared<SvParams>(params);
  TwistProposal<double> proposal;
  proposal.log_rho = [b_l](const double& x) { return b_l * x; };
  proposal.sample = [shared, b_l](const double& prev, Rng& rng) {
    return cpg_sample(shared->shape_q() + 1.0, shared->poisson_u(prev), shared->rate_c(), -b_l,
                      rng);
  };
  proposal.sample_initial = [shared, b_l](Rng& rng) {
    std::gamma_distribution<double> gamma(shared->stationary_shape(),
                                          1.0 / (shared->stationary_rate() - b_l));
    return gamma(rng);
  };
  proposal.log_normalizer = [shared, b_l](const double& prev) {
    return sv_log_m_tilt(*shared, prev, b_l);
  };
  proposal.log_normalizer0 = sv_log_m0_tilt(params, b_l);
  return proposal;
}

double sv_max_tilt(const SvParams& params) {
  return std::min(params.rate_c(), params.stationary_rate());
}

FeynmanKacModel<double> make_fk_model(const SvParams& params,
                                      std::shared_ptr<SimCounters> counters) {
  params.validate();
  if (!counters) counters = std::make_shared<SimCounters>();
  auto shared = std::make_shared<SvParams>(params);

  FeynmanKacModel<double> fk;
  fk.terminal_time = params.terminal_time;
  fk.state_dim = 1;
  fk.counters = counters;
  fk.sample_initial = [shared, counters](Rng& rng) {
    counters->kernel_draws += 1;
    std::gamma_distribution<double> gamma(shared->stationary_shape(),
                                          1.0 / shared->stationary_rate());
    return gamma(rng);
  };
  fk.sample_kernel = [shared, counters](int, const double& prev, Rng& rng) {
    counters->kernel_draws += 1;
    return cpg_sample(shared->shape_q() + 1.0, shared->poisson_u(prev), shared->rate_c(), 0.0,
                      rng);
  };
  fk.log_potential = [shared](int t, const double& x, Rng&) {
    if (t == 0) return 0.0;  // no observation at time zero
    return sv_log_potential(t, x, *shared);
  };
  return fk;
}

}  // namespace twistpf
