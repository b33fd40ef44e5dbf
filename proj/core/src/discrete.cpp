#include "twistpf/discrete.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "twistpf/math.hpp"

namespace twistpf {

void DiscreteFK::validate() const {
  const int k = num_states();
  const int n = terminal_time();
  if (k < 1) throw std::invalid_argument("DiscreteFK: empty state space");
  if (static_cast<int>(pot.size()) != n + 1) {
    throw std::invalid_argument("DiscreteFK: need n+1 potential vectors");
  }
  for (const auto& m : trans) {
    if (m.rows() != k || m.cols() != k) throw std::invalid_argument("DiscreteFK: bad matrix shape");
    for (int i = 0; i < k; ++i) {
      if (std::abs(m.row(i).sum() - 1.0) > 1e-12) {
        throw std::invalid_argument("DiscreteFK: row " + std::to_string(i) + " not stochastic");
      }
      if ((m.row(i).array() < 0.0).any()) {
        throw std::invalid_argument("DiscreteFK: negative transition probability");
      }
    }
  }
  for (const auto& g : pot) {
    if (g.size() != k) throw std::invalid_argument("DiscreteFK: bad potential length");
    if ((g.array() <= 0.0).any()) throw std::invalid_argument("DiscreteFK: potentials must be positive");
  }
  if (std::abs(m0.sum() - 1.0) > 1e-12 || (m0.array() < 0.0).any()) {
    throw std::invalid_argument("DiscreteFK: m0 is not a probability vector");
  }
}

double DiscreteMarginals::log_z_hat() const { return std::log(z_hat.back()); }

DiscreteMarginals exact_marginals(const DiscreteFK& model) {
  const int n = model.terminal_time();
  DiscreteMarginals out;
  out.gamma.resize(n + 1);
  out.eta.resize(n + 1);
  out.gamma_hat.resize(n + 1);
  out.eta_hat.resize(n + 1);
  out.z_pred.resize(n + 1);
  out.z_hat.resize(n + 1);

  Eigen::VectorXd gamma = model.m0;
  for (int p = 0; p <= n; ++p) {
    if (p > 0) {
      gamma = model.trans[p - 1].transpose() * out.gamma_hat[p - 1];
    }
    out.gamma[p] = gamma;
    out.z_pred[p] = gamma.sum();
    out.eta[p] = gamma / out.z_pred[p];
    out.gamma_hat[p] = gamma.cwiseProduct(model.pot[p]);
    out.z_hat[p] = out.gamma_hat[p].sum();
    out.eta_hat[p] = out.gamma_hat[p] / out.z_hat[p];
  }
  return out;
}

double brute_force_z_hat(const DiscreteFK& model) {
  const int n = model.terminal_time();
  const int k = model.num_states();
  std::vector<int> path(static_cast<std::size_t>(n) + 1, 0);
  double total = 0.0;
  while (true) {
    double w = model.m0(path[0]) * model.pot[0](path[0]);
    for (int p = 1; p <= n; ++p) {
      w *= model.trans[p - 1](path[p - 1], path[p]) * model.pot[p](path[p]);
    }
    total += w;
    int pos = n;
    while (pos >= 0 && ++path[pos] == k) path[pos--] = 0;
    if (pos < 0) break;
  }
  return total;
}

DiscreteFK exact_twisted_model(const DiscreteFK& model,
                               const std::vector<Eigen::VectorXd>& psi) {
  const int n = model.terminal_time();
  if (static_cast<int>(psi.size()) != n + 1) {
    throw std::invalid_argument("exact_twisted_model: need n+1 twist vectors");
  }
  for (const auto& v : psi) {
    if ((v.array() <= 0.0).any()) {
      throw std::invalid_argument("exact_twisted_model: twists must be positive");
    }
  }

  DiscreteFK out;
  const double m0psi = model.m0.dot(psi[0]);
  out.m0 = model.m0.cwiseProduct(psi[0]) / m0psi;

  // m_psi[p] holds M_{p+1}(psi_{p+1}) as a function of the time-p state.
  std::vector<Eigen::VectorXd> m_psi(n);
  out.trans.resize(n);
  for (int p = 1; p <= n; ++p) {
    const Eigen::VectorXd mp = model.trans[p - 1] * psi[p];
    m_psi[p - 1] = mp;
    Eigen::MatrixXd twisted = model.trans[p - 1] * psi[p].asDiagonal();
    twisted.array().colwise() /= mp.array();
    out.trans[p - 1] = twisted;
  }

  out.pot.resize(n + 1);
  for (int p = 0; p <= n; ++p) {
    Eigen::VectorXd g = model.pot[p].cwiseQuotient(psi[p]);
    if (p < n) g = g.cwiseProduct(m_psi[p]);
    if (p == 0) g *= m0psi;
    out.pot[p] = g;
  }
  return out;
}

DiscreteAcceptanceRates exact_acceptance_rates(const DiscreteFK& model,
                                               const std::vector<Eigen::VectorXd>& psi,
                                               const std::vector<Eigen::VectorXd>& omega,
                                               const std::vector<Eigen::VectorXd>& rho,
                                               bool assert_equal, double tol) {
  const int n = model.terminal_time();
  for (int p = 0; p <= n; ++p) {
    const double worst = (omega[p].cwiseQuotient(rho[p])).maxCoeff();
    if (worst > 1.0 + 1e-9) {
      throw std::invalid_argument("exact_acceptance_rates: omega/rho exceeds 1 at time " +
                                  std::to_string(p));
    }
  }

  const DiscreteMarginals omega_marg = exact_marginals(exact_twisted_model(model, omega));
  const DiscreteMarginals psi_marg = exact_marginals(exact_twisted_model(model, psi));

  DiscreteAcceptanceRates out;
  out.direct.resize(n + 1);
  out.via_psi.resize(n + 1);

  out.direct[0] = model.m0.dot(omega[0]) / model.m0.dot(rho[0]);
  out.via_psi[0] = out.direct[0];

  for (int p = 1; p <= n; ++p) {
    const Eigen::VectorXd m_omega = model.trans[p - 1] * omega[p];
    const Eigen::VectorXd m_psi = model.trans[p - 1] * psi[p];
    const Eigen::VectorXd m_rho = model.trans[p - 1] * rho[p];

    // (i) conditional acceptance averaged over the omega-model's updated law
    out.direct[p] = omega_marg.eta_hat[p - 1].dot(m_omega.cwiseQuotient(m_rho));

    // (ii) the same expressed against the psi-twisted reference
    const Eigen::VectorXd num =
        m_omega.array().square() / (m_psi.array() * m_rho.array());
    const Eigen::VectorXd den = m_omega.cwiseQuotient(m_psi);
    out.via_psi[p] = psi_marg.eta_hat[p - 1].dot(num) / psi_marg.eta_hat[p - 1].dot(den);

    if (assert_equal && std::abs(out.direct[p] - out.via_psi[p]) >
                            tol * std::max(1.0, std::abs(out.direct[p]))) {
      throw std::runtime_error("exact_acceptance_rates: forms disagree at time " +
                               std::to_string(p));
    }
  }
  return out;
}

DiscreteQKernels exact_q_kernels(const DiscreteFK& model) {
  const int n = model.terminal_time();
  const int k = model.num_states();
  DiscreteQKernels out;
  out.q.resize(n);
  for (int p = 1; p <= n; ++p) {
    out.q[p - 1] = model.pot[p - 1].asDiagonal() * model.trans[p - 1];
  }
  out.q_to_n.assign(n + 1, Eigen::MatrixXd::Identity(k, k));
  for (int p = n - 1; p >= 0; --p) {
    out.q_to_n[p] = out.q[p] * out.q_to_n[p + 1];
  }
  return out;
}

void RandomWeightSpec::validate(const DiscreteFK& model) const {
  const int n = model.terminal_time();
  if (static_cast<int>(s.size()) != n + 1) {
    throw std::invalid_argument("RandomWeightSpec: need n+1 second-moment vectors");
  }
  for (const auto& v : s) {
    if ((v.array() < 1.0 - 1e-12).any()) {
      throw std::invalid_argument("RandomWeightSpec: s must be >= 1");
    }
  }
  if (((s[n].array() - 1.0).abs() > 1e-12).any()) {
    throw std::invalid_argument("RandomWeightSpec: terminal potential must be exact (s_n = 1)");
  }
}

RandomWeightSpec make_two_point_spec(const DiscreteFK& model, double delta) {
  const int n = model.terminal_time();
  const int k = model.num_states();
  RandomWeightSpec spec;
  spec.s.assign(n + 1, Eigen::VectorXd::Constant(k, 1.0 + delta * delta));
  spec.s[n] = Eigen::VectorXd::Ones(k);
  auto pot = model.pot;
  spec.log_potential_bar = [pot, delta, n](int p, int state, Rng& rng) {
    double g = pot[p](state);
    if (p < n) {
      g *= rng.uniform01() < 0.5 ? 1.0 - delta : 1.0 + delta;
    }
    return std::log(g);
  };
  return spec;
}

double asymptotic_variance(const DiscreteFK& model, const Eigen::VectorXd& phi,
                           const RandomWeightSpec* rw) {
  const int n = model.terminal_time();
  if (rw != nullptr) rw->validate(model);
  const DiscreteMarginals marg = exact_marginals(model);
  const DiscreteQKernels qk = exact_q_kernels(model);
  const double zn = marg.z_pred[n];
  const double eta_phi = marg.eta[n].dot(phi);

  double total = 0.0;
  for (int p = 0; p <= n; ++p) {
    const Eigen::VectorXd qphi = qk.q_to_n[p] * phi;
    Eigen::VectorXd sq = qphi.array().square();
    if (rw != nullptr) sq = sq.cwiseProduct(rw->s[p]);
    total += marg.z_pred[p] * marg.gamma[p].dot(sq) / (zn * zn) - eta_phi * eta_phi;
  }
  return total;
}

std::vector<Eigen::VectorXd> discrete_optimal_twists(const DiscreteFK& model) {
  const int n = model.terminal_time();
  std::vector<Eigen::VectorXd> psi(n + 1);
  psi[n] = model.pot[n] / model.pot[n].maxCoeff();
  for (int p = n - 1; p >= 0; --p) {
    Eigen::VectorXd v = model.pot[p].cwiseProduct(model.trans[p] * psi[p + 1]);
    psi[p] = v / v.maxCoeff();
  }
  return psi;
}

namespace {

int sample_row(const Eigen::VectorXd& probs, Rng& rng) {
  const double u = rng.uniform01() * probs.sum();
  double acc = 0.0;
  for (int i = 0; i < probs.size(); ++i) {
    acc += probs(i);
    if (u < acc) return i;
  }
  return static_cast<int>(probs.size()) - 1;
}

}  // namespace

FeynmanKacModel<int> make_fk_model(const DiscreteFK& model,
                                   std::shared_ptr<SimCounters> counters,
                                   const RandomWeightSpec* rw) {
  model.validate();
  if (!counters) counters = std::make_shared<SimCounters>();
  auto shared = std::make_shared<DiscreteFK>(model);

  FeynmanKacModel<int> fk;
  fk.terminal_time = model.terminal_time();
  fk.state_dim = 1;
  fk.counters = counters;
  fk.sample_initial = [shared, counters](Rng& rng) {
    counters->kernel_draws += 1;
    return sample_row(shared->m0, rng);
  };
  fk.sample_kernel = [shared, counters](int p, const int& prev, Rng& rng) {
    counters->kernel_draws += 1;
    return sample_row(shared->trans[p - 1].row(prev).transpose(), rng);
  };
  if (rw != nullptr) {
    rw->validate(model);
    auto bar = rw->log_potential_bar;
    fk.log_potential = [bar](int p, const int& x, Rng& rng) { return bar(p, x, rng); };
  } else {
    fk.log_potential = [shared](int p, const int& x, Rng&) {
      return std::log(shared->pot[p](x));
    };
  }
  return fk;
}

TwistSchedule<int> make_tabular_schedule(const DiscreteFK& model,
                                         const std::vector<Eigen::VectorXd>& psi_values,
                                         bool exact_m, int n_tilde) {
  const int n = model.terminal_time();
  if (static_cast<int>(psi_values.size()) != n + 1) {
    throw std::invalid_argument("make_tabular_schedule: need n+1 twist tables");
  }
  TwistSchedule<int> schedule;
  schedule.n_tilde = n_tilde;
  schedule.entries.resize(n + 1);
  for (int p = 0; p <= n; ++p) {
    auto table = std::make_shared<Eigen::VectorXd>(psi_values[p].array().log().matrix());
    auto& entry = schedule.entries[p];
    entry.psi.eval_log = [table](const int& x) { return (*table)(x); };
    entry.psi.beta = 1.0;
    entry.psi.shift = 0.0;
    entry.psi.floor_log = kNegInf;
    // test schedules are not floored at the production default, so the cap is
    // kept generous enough that it only fires on genuinely broken twists
    entry.max_rejection_trials =
        std::max<long long>(20000, rejection_trial_cap(std::log(psi_values[p].minCoeff())));
    if (exact_m && p >= 1) {
      auto mp = std::make_shared<Eigen::VectorXd>(
          (model.trans[p - 1] * psi_values[p]).array().log().matrix());
      entry.exact_log_m_psi = [mp](const int& prev) { return (*mp)(prev); };
    }
  }
  if (exact_m) {
    schedule.exact_log_m0_psi = std::log(model.m0.dot(psi_values[0]));
  }
  return schedule;
}

}  // namespace twistpf
