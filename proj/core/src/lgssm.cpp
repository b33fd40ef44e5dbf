#include "twistpf/lgssm.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace twistpf {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

Eigen::VectorXd sample_isotropic_gaussian(const Eigen::VectorXd& mean, double variance,
                                          Rng& rng) {
  std::normal_distribution<double> normal(0.0, std::sqrt(variance));
  Eigen::VectorXd x(mean.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = mean(i) + normal(rng);
  return x;
}

}  // namespace

Eigen::MatrixXd LgssmParams::banded_transition(int dim, double a) {
  Eigen::MatrixXd m(dim, dim);
  for (int i = 0; i < dim; ++i) {
    for (int j = 0; j < dim; ++j) m(i, j) = std::pow(a, std::abs(i - j) + 1);
  }
  return m;
}

void LgssmParams::validate(bool with_obs) const {
  if (dim < 1) throw std::invalid_argument("LgssmParams: dim must be positive");
  if (terminal_time < 0) throw std::invalid_argument("LgssmParams: negative terminal time");
  if (sigma0_sq <= 0 || sigma_m_sq <= 0 || sigma_g_sq <= 0) {
    throw std::invalid_argument("LgssmParams: variances must be positive");
  }
  if (mu0.size() != dim) throw std::invalid_argument("LgssmParams: mu0 has wrong dimension");
  if (transition.rows() != dim || transition.cols() != dim) {
    throw std::invalid_argument("LgssmParams: transition matrix has wrong shape");
  }
  if (with_obs) {
    if (static_cast<int>(obs.size()) != terminal_time + 1) {
      throw std::invalid_argument("LgssmParams: need n+1 observations");
    }
    for (const auto& y : obs) {
      if (y.size() != dim) throw std::invalid_argument("LgssmParams: observation dimension mismatch");
    }
  }
}

LgssmSim lgssm_simulate(const LgssmParams& params, Rng& rng) {
  params.validate(false);
  LgssmSim sim;
  const int n = params.terminal_time;
  sim.latent.resize(n + 1);
  sim.obs.resize(n + 1);
  for (int p = 0; p <= n; ++p) {
    const Eigen::VectorXd mean =
        p == 0 ? params.mu0 : (params.transition * sim.latent[p - 1]).eval();
    sim.latent[p] = sample_isotropic_gaussian(mean, p == 0 ? params.sigma0_sq : params.sigma_m_sq, rng);
    sim.obs[p] = sample_isotropic_gaussian(sim.latent[p], params.sigma_g_sq, rng);
  }
  return sim;
}

double log_gaussian_isotropic(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                              double variance) {
  const double d = static_cast<double>(x.size());
  return -0.5 * d * (kLog2Pi + std::log(variance)) - (x - mean).squaredNorm() / (2.0 * variance);
}

double kalman_log_evidence(const LgssmParams& params) {
  params.validate();
  const int d = params.dim;
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(d, d);

  Eigen::VectorXd mean = params.mu0;
  Eigen::MatrixXd cov = params.sigma0_sq * eye;
  double log_evidence = 0.0;

  for (int p = 0; p <= params.terminal_time; ++p) {
    if (p > 0) {
      mean = params.transition * mean;
      cov = params.transition * cov * params.transition.transpose() + params.sigma_m_sq * eye;
    }
    const Eigen::MatrixXd obs_cov = cov + params.sigma_g_sq * eye;
    const Eigen::LLT<Eigen::MatrixXd> llt(obs_cov);
    if (llt.info() != Eigen::Success) {
      throw std::runtime_error("kalman_log_evidence: predictive covariance not positive definite");
    }
    const Eigen::VectorXd resid = params.obs[p] - mean;
    const Eigen::VectorXd alpha = llt.solve(resid);
    double log_det = 0.0;
    for (int i = 0; i < d; ++i) log_det += 2.0 * std::log(llt.matrixL()(i, i));
    log_evidence += -0.5 * (d * kLog2Pi + log_det + resid.dot(alpha));

    const Eigen::MatrixXd gain = llt.solve(cov).transpose();
    mean += gain * resid;
    cov = (eye - gain) * cov;
    cov = 0.5 * (cov + cov.transpose()).eval();
  }
  return log_evidence;
}

namespace {

struct EffectiveQuadratic {
  Eigen::MatrixXd d_mat;
  Eigen::VectorXd e_vec;
  double f = 0.0;
};

EffectiveQuadratic effective_quadratic(const TwistFunction<Eigen::VectorXd>& psi, int dim) {
  if (!psi.has_coeffs) {
    throw std::invalid_argument("exact Gaussian integration needs coefficient twists");
  }
  EffectiveQuadratic q;
  q.d_mat = psi.beta * psi.coeffs.quad_matrix(dim);
  q.e_vec = psi.beta * (psi.coeffs.lin.size() == dim
                            ? psi.coeffs.lin
                            : Eigen::VectorXd::Zero(dim).eval());
  q.f = psi.beta * psi.coeffs.constant + psi.shift;
  return q;
}

// log integral N(z; mean, sigma^2 I) exp(z'Dz + e'z + f) dz
double log_gaussian_integral(const Eigen::VectorXd& mean, double sigma_sq,
                             const EffectiveQuadratic& q) {
  const int d = static_cast<int>(mean.size());
  const Eigen::MatrixXd lambda =
      Eigen::MatrixXd::Identity(d, d) / sigma_sq - 2.0 * q.d_mat;
  const Eigen::LLT<Eigen::MatrixXd> llt(lambda);
  if (llt.info() != Eigen::Success) {
    throw std::domain_error("gaussian_m_psi_exact: twist is not integrable against the kernel");
  }
  const Eigen::VectorXd h = mean / sigma_sq + q.e_vec;
  const Eigen::VectorXd lam_inv_h = llt.solve(h);
  double log_det_sigma_lambda = d * std::log(sigma_sq);
  for (int i = 0; i < d; ++i) log_det_sigma_lambda += 2.0 * std::log(llt.matrixL()(i, i));
  return -0.5 * log_det_sigma_lambda + 0.5 * h.dot(lam_inv_h) -
         mean.squaredNorm() / (2.0 * sigma_sq) + q.f;
}

}  // namespace

double log_gaussian_m_psi_exact(int p, const Eigen::VectorXd& x, const LgssmParams& params,
                                const TwistFunction<Eigen::VectorXd>& psi) {
  const EffectiveQuadratic q = effective_quadratic(psi, params.dim);
  if (p == 0) return log_gaussian_integral(params.mu0, params.sigma0_sq, q);
  return log_gaussian_integral(params.transition * x, params.sigma_m_sq, q);
}

double gaussian_m_psi_exact(int p, const Eigen::VectorXd& x, const LgssmParams& params,
                            const TwistFunction<Eigen::VectorXd>& psi) {
  return std::exp(log_gaussian_m_psi_exact(p, x, params, psi));
}

TwistCoeffs lgssm_potential_coeffs(const LgssmParams& params, int p) {
  const double s = params.sigma_g_sq;
  const Eigen::VectorXd& y = params.obs[p];
  const double d = static_cast<double>(params.dim);
  TwistCoeffs c = TwistCoeffs::full(-0.5 / s * Eigen::MatrixXd::Identity(params.dim, params.dim),
                                    y / s, -y.squaredNorm() / (2.0 * s) -
                                               0.5 * d * (kLog2Pi + std::log(s)));
  return c;
}

TwistCoeffs integrate_quadratic_through_kernel(const TwistCoeffs& q, const Eigen::MatrixXd& a,
                                               double sigma_sq) {
  const int d = static_cast<int>(a.rows());
  const Eigen::MatrixXd d_mat = q.quad_matrix(d);
  const Eigen::VectorXd e_vec = q.lin.size() == d ? q.lin : Eigen::VectorXd::Zero(d).eval();
  const Eigen::MatrixXd lambda = Eigen::MatrixXd::Identity(d, d) / sigma_sq - 2.0 * d_mat;
  const Eigen::LLT<Eigen::MatrixXd> llt(lambda);
  if (llt.info() != Eigen::Success) {
    throw std::domain_error("integrate_quadratic_through_kernel: not integrable");
  }
  const Eigen::MatrixXd lam_inv_a = llt.solve(a);
  double log_det_sigma_lambda = d * std::log(sigma_sq);
  for (int i = 0; i < d; ++i) log_det_sigma_lambda += 2.0 * std::log(llt.matrixL()(i, i));

  TwistCoeffs out;
  out.kind = TwistCoeffs::Kind::Full;
  out.quad = a.transpose() * lam_inv_a / (2.0 * sigma_sq * sigma_sq) -
             a.transpose() * a / (2.0 * sigma_sq);
  out.lin = a.transpose() * llt.solve(e_vec) / sigma_sq;
  out.constant = 0.5 * e_vec.dot(llt.solve(e_vec)) - 0.5 * log_det_sigma_lambda + q.constant;
  return out;
}

std::vector<TwistCoeffs> lgssm_optimal_twists(const LgssmParams& params) {
  params.validate();
  const int n = params.terminal_time;
  std::vector<TwistCoeffs> psi(n + 1);
  psi[n] = lgssm_potential_coeffs(params, n);
  for (int p = n - 1; p >= 0; --p) {
    const TwistCoeffs integrated =
        integrate_quadratic_through_kernel(psi[p + 1], params.transition, params.sigma_m_sq);
    psi[p] = add_coeffs(lgssm_potential_coeffs(params, p), 1.0, integrated, 1.0, params.dim);
  }
  return psi;
}

namespace {

// Supremum of x'Dx + e'x + c over R^d for negative definite D.
double quadratic_supremum(const TwistCoeffs& coeffs, int dim) {
  const Eigen::MatrixXd d_mat = coeffs.quad_matrix(dim);
  const Eigen::LLT<Eigen::MatrixXd> llt((-d_mat).eval());
  if (llt.info() != Eigen::Success) {
    throw std::domain_error("quadratic_supremum: quadratic term is not negative definite");
  }
  const Eigen::VectorXd e = coeffs.lin.size() == dim ? coeffs.lin : Eigen::VectorXd::Zero(dim).eval();
  const Eigen::VectorXd x_star = 0.5 * llt.solve(e);
  return coeffs.constant + 0.5 * e.dot(x_star);
}

}  // namespace

TwistSchedule<Eigen::VectorXd> lgssm_optimal_schedule(const LgssmParams& params,
                                                      const std::vector<double>& beta,
                                                      double floor_log, bool exact_m,
                                                      int n_tilde) {
  if (exact_m && floor_log > kNegInf) {
    throw std::invalid_argument(
        "lgssm_optimal_schedule: exact integrals require an unfloored twist");
  }
  const auto coeffs = lgssm_optimal_twists(params);
  const int n = params.terminal_time;
  auto shared_params = std::make_shared<LgssmParams>(params);

  TwistSchedule<Eigen::VectorXd> schedule;
  schedule.n_tilde = n_tilde;
  schedule.entries.resize(n + 1);
  for (int p = 0; p <= n; ++p) {
    const double b = beta.empty() ? 1.0 : beta[p];
    const double shift = -b * quadratic_supremum(coeffs[p], params.dim);
    auto& entry = schedule.entries[p];
    entry.psi = make_quadratic_twist(coeffs[p], b, shift, floor_log);
    // an unfloored twist has no epsilon acceptance guarantee, so its cap is a
    // generous runaway guard rather than the floored-twist formula
    entry.max_rejection_trials =
        floor_log > kNegInf ? rejection_trial_cap(floor_log) : 2000000;
    if (exact_m && p >= 1) {
      const TwistFunction<Eigen::VectorXd> psi_copy = entry.psi;
      entry.exact_log_m_psi = [shared_params, psi_copy, p](const Eigen::VectorXd& prev) {
        return log_gaussian_m_psi_exact(p, prev, *shared_params, psi_copy);
      };
    }
  }
  if (exact_m) {
    schedule.exact_log_m0_psi = log_gaussian_m_psi_exact(0, params.mu0 /*ignored*/, params,
                                                         schedule.entries[0].psi);
  }
  return schedule;
}

FeynmanKacModel<Eigen::VectorXd> make_fk_model(const LgssmParams& params,
                                               std::shared_ptr<SimCounters> counters) {
  params.validate();
  if (!counters) counters = std::make_shared<SimCounters>();
  auto shared = std::make_shared<LgssmParams>(params);

  FeynmanKacModel<Eigen::VectorXd> fk;
  fk.terminal_time = params.terminal_time;
  fk.state_dim = params.dim;
  fk.counters = counters;
  fk.sample_initial = [shared, counters](Rng& rng) {
    counters->kernel_draws += 1;
    return sample_isotropic_gaussian(shared->mu0, shared->sigma0_sq, rng);
  };
  fk.sample_kernel = [shared, counters](int, const Eigen::VectorXd& prev, Rng& rng) {
    counters->kernel_draws += 1;
    return sample_isotropic_gaussian(shared->transition * prev, shared->sigma_m_sq, rng);
  };
  fk.log_potential = [shared](int p, const Eigen::VectorXd& x, Rng&) {
    return log_gaussian_isotropic(shared->obs[p], x, shared->sigma_g_sq);
  };
  return fk;
}

}  // namespace twistpf
