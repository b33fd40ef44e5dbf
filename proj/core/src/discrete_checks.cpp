#include "twistpf/discrete_checks.hpp"

#include <cmath>
#include <sstream>

#include "twistpf/filter.hpp"
#include "twistpf/twisted_model.hpp"

namespace twistpf {

namespace {

double uniform_in(Rng& rng, double lo, double hi) { return lo + (hi - lo) * rng.uniform01(); }

Eigen::VectorXd random_probability_vector(Rng& rng, int k) {
  Eigen::VectorXd v(k);
  for (int i = 0; i < k; ++i) v(i) = uniform_in(rng, 0.05, 1.0);
  return v / v.sum();
}

bool close(double a, double b, double tol) {
  return std::abs(a - b) <= tol * std::max({1.0, std::abs(a), std::abs(b)});
}

bool close_vec(const Eigen::VectorXd& a, const Eigen::VectorXd& b, double tol) {
  for (int i = 0; i < a.size(); ++i) {
    if (!close(a(i), b(i), tol)) return false;
  }
  return true;
}

struct CheckContext {
  OracleCheckOptions opt;
  std::vector<OracleCheck> results;

  void record(const std::string& name, bool pass, const std::string& detail = "") {
    results.push_back({name, pass, detail});
  }

  // Runs `body` over fuzz cases; reports the first failing case's seed.
  template <class Body>
  void fuzz(const std::string& name, Body&& body) {
    std::uint64_t master = opt.seed;
    for (int c = 0; c < opt.fuzz_cases; ++c) {
      const std::uint64_t case_seed = mix_key(master, static_cast<std::uint64_t>(c));
      Rng rng(case_seed);
      std::string detail;
      bool ok = false;
      try {
        ok = body(rng, detail);
      } catch (const std::exception& e) {
        detail = e.what();
      }
      if (!ok) {
        std::ostringstream os;
        os << "case " << c << " (seed " << case_seed << ")";
        if (!detail.empty()) os << ": " << detail;
        record(name, false, os.str());
        return;
      }
    }
    record(name, true);
  }
};

}  // namespace

DiscreteFK random_discrete_model(Rng& rng, int max_states, int max_time) {
  const int k = 2 + static_cast<int>(rng() % static_cast<std::uint64_t>(max_states - 1));
  const int n = 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(max_time));
  DiscreteFK model;
  model.m0 = random_probability_vector(rng, k);
  model.trans.resize(n);
  for (auto& m : model.trans) {
    m.resize(k, k);
    for (int i = 0; i < k; ++i) m.row(i) = random_probability_vector(rng, k).transpose();
  }
  model.pot.resize(n + 1);
  for (auto& g : model.pot) {
    g.resize(k);
    for (int i = 0; i < k; ++i) g(i) = uniform_in(rng, 0.1, 2.0);
  }
  model.validate();
  return model;
}

std::vector<Eigen::VectorXd> random_twist_tables(const DiscreteFK& model, Rng& rng, double lo,
                                                 double hi) {
  std::vector<Eigen::VectorXd> psi(model.terminal_time() + 1);
  for (auto& v : psi) {
    v.resize(model.num_states());
    for (int i = 0; i < v.size(); ++i) v(i) = uniform_in(rng, lo, hi);
  }
  return psi;
}

std::vector<OracleCheck> run_discrete_oracle_checks(const OracleCheckOptions& options) {
  CheckContext ctx{options, {}};
  const double tol = options.tol;

  // Hand-sized recursion check plus fuzz against exhaustive path enumeration.
  {
    DiscreteFK hand;
    hand.m0 = Eigen::Vector2d(0.5, 0.5);
    Eigen::MatrixXd m(2, 2);
    m << 0.9, 0.1, 0.2, 0.8;
    hand.trans = {m, m};
    hand.pot.assign(3, Eigen::Vector2d(1.0, 2.0));
    const double by_recursion = exact_marginals(hand).z_hat.back();
    const double by_paths = brute_force_z_hat(hand);
    ctx.record("marginal recursion matches path enumeration (hand case)",
               std::abs(by_recursion - by_paths) < 1e-14 * std::abs(by_paths));
  }
  ctx.fuzz("marginal recursion matches path enumeration (fuzz)", [&](Rng& rng, std::string&) {
    const DiscreteFK model = random_discrete_model(rng, options.max_states, 4);
    return close(exact_marginals(model).z_hat.back(), brute_force_z_hat(model), 1e-12);
  });

  ctx.fuzz("unit potentials give unit normalizing constant", [&](Rng& rng, std::string&) {
    DiscreteFK model = random_discrete_model(rng, options.max_states, options.max_time);
    for (auto& g : model.pot) g.setOnes();
    return close(exact_marginals(model).z_hat.back(), 1.0, tol);
  });

  // Twisted model: terminal preservation and the marginal-measure identities.
  ctx.fuzz("twisting preserves the terminal updated measure", [&](Rng& rng, std::string&) {
    const DiscreteFK model = random_discrete_model(rng, options.max_states, options.max_time);
    const auto psi = random_twist_tables(model, rng, 0.05, 1.0);
    const auto base = exact_marginals(model);
    const auto twisted = exact_marginals(exact_twisted_model(model, psi));
    const int n = model.terminal_time();
    return close(twisted.z_hat[n], base.z_hat[n], tol) &&
           close_vec(twisted.gamma_hat[n], base.gamma_hat[n], tol);
  });

  ctx.fuzz("twisted marginal identities", [&](Rng& rng, std::string& detail) {
    const DiscreteFK model = random_discrete_model(rng, options.max_states, options.max_time);
    const auto psi = random_twist_tables(model, rng, 0.05, 1.0);
    const auto base = exact_marginals(model);
    const auto twisted = exact_marginals(exact_twisted_model(model, psi));
    const int n = model.terminal_time();
    const double m0psi = model.m0.dot(psi[0]);
    if (!close_vec(twisted.gamma[0], base.gamma[0].cwiseProduct(psi[0]) / m0psi, tol)) {
      detail = "predictive identity fails at time 0";
      return false;
    }
    for (int p = 1; p <= n; ++p) {
      if (!close_vec(twisted.gamma[p], base.gamma[p].cwiseProduct(psi[p]), tol)) {
        detail = "predictive identity fails at time " + std::to_string(p);
        return false;
      }
    }
    for (int p = 0; p < n; ++p) {
      const Eigen::VectorXd mp = model.trans[p] * psi[p + 1];
      if (!close_vec(twisted.gamma_hat[p], base.gamma_hat[p].cwiseProduct(mp), tol)) {
        detail = "updated identity fails at time " + std::to_string(p);
        return false;
      }
    }
    return true;
  });

  // M_p(psi . phi) = M_p(psi) . M_p^psi(phi), elementwise over source states.
  ctx.fuzz("kernel twist factorization", [&](Rng& rng, std::string&) {
    const DiscreteFK model = random_discrete_model(rng, options.max_states, options.max_time);
    const auto psi = random_twist_tables(model, rng, 0.05, 1.0);
    const auto phi = random_twist_tables(model, rng, 0.05, 2.0);
    const DiscreteFK twisted = exact_twisted_model(model, psi);
    const double lhs0 = model.m0.dot(psi[0].cwiseProduct(phi[0]));
    const double rhs0 = model.m0.dot(psi[0]) * twisted.m0.dot(phi[0]);
    if (!close(lhs0, rhs0, tol)) return false;
    for (int p = 1; p <= model.terminal_time(); ++p) {
      const Eigen::VectorXd lhs = model.trans[p - 1] * psi[p].cwiseProduct(phi[p]);
      const Eigen::VectorXd rhs =
          (model.trans[p - 1] * psi[p]).cwiseProduct(twisted.trans[p - 1] * phi[p]);
      if (!close_vec(lhs, rhs, tol)) return false;
    }
    return true;
  });

  ctx.fuzz("twist composition", [&](Rng& rng, std::string&) {
    const DiscreteFK model = random_discrete_model(rng, options.max_states, options.max_time);
    const auto psi = random_twist_tables(model, rng, 0.05, 1.0);
    const auto phi = random_twist_tables(model, rng, 0.05, 1.0);
    const DiscreteFK two_step = exact_twisted_model(exact_twisted_model(model, psi), phi);
    std::vector<Eigen::VectorXd> prod(psi.size());
    for (std::size_t p = 0; p < psi.size(); ++p) prod[p] = psi[p].cwiseProduct(phi[p]);
    const DiscreteFK one_step = exact_twisted_model(model, prod);
    for (int p = 0; p < model.terminal_time(); ++p) {
      for (int i = 0; i < model.num_states(); ++i) {
        if (!close_vec(two_step.trans[p].row(i).transpose(),
                       one_step.trans[p].row(i).transpose(), tol)) {
          return false;
        }
      }
    }
    for (int p = 0; p <= model.terminal_time(); ++p) {
      if (!close_vec(two_step.pot[p], one_step.pot[p], tol)) return false;
    }
    return close_vec(two_step.m0, one_step.m0, tol);
  });

  ctx.fuzz("acceptance-rate identity (two forms)", [&](Rng& rng, std::string& detail) {
    const DiscreteFK model = random_discrete_model(rng, options.max_states, options.max_time);
    const auto psi = random_twist_tables(model, rng, 0.05, 1.0);
    const auto rho = random_twist_tables(model, rng, 0.2, 1.0);
    auto omega = random_twist_tables(model, rng, 0.05, 1.0);
    for (std::size_t p = 0; p < omega.size(); ++p) {
      // scale so sup omega/rho = 1
      omega[p] = omega[p].cwiseProduct(rho[p]);
      omega[p] /= omega[p].cwiseQuotient(rho[p]).maxCoeff();
    }
    const auto rates = exact_acceptance_rates(model, psi, omega, rho, false);
    for (std::size_t p = 0; p < rates.direct.size(); ++p) {
      if (!close(rates.direct[p], rates.via_psi[p], tol)) {
        detail = "forms disagree at time " + std::to_string(p);
        return false;
      }
    }
    return true;
  });

  ctx.fuzz("Q-kernel semigroup identity", [&](Rng& rng, std::string&) {
    const DiscreteFK model = random_discrete_model(rng, options.max_states, options.max_time);
    const auto marg = exact_marginals(model);
    const auto qk = exact_q_kernels(model);
    const int n = model.terminal_time();
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(model.num_states());
    if (!qk.q_to_n[n].isIdentity(1e-14)) return false;
    for (int p = 0; p <= n; ++p) {
      if (!close(marg.gamma[p].dot(qk.q_to_n[p] * ones), marg.z_pred[n], tol)) return false;
    }
    return true;
  });

  ctx.fuzz("variance formula reduces when weights are exact", [&](Rng& rng, std::string&) {
    const DiscreteFK model = random_discrete_model(rng, options.max_states, options.max_time);
    Eigen::VectorXd phi(model.num_states());
    for (int i = 0; i < phi.size(); ++i) phi(i) = uniform_in(rng, -1.0, 1.0);
    RandomWeightSpec unit_spec = make_two_point_spec(model, 0.0);
    return close(asymptotic_variance(model, phi, &unit_spec), asymptotic_variance(model, phi),
                 tol);
  });

  ctx.fuzz("random-weight variance bounds", [&](Rng& rng, std::string& detail) {
    const DiscreteFK model = random_discrete_model(rng, options.max_states, options.max_time);
    const int n = model.terminal_time();
    const int k = model.num_states();
    RandomWeightSpec spec;
    spec.s.resize(n + 1);
    double c_plus_one = 1.0;
    for (int p = 0; p <= n; ++p) {
      spec.s[p].resize(k);
      for (int i = 0; i < k; ++i) {
        spec.s[p](i) = p == n ? 1.0 : uniform_in(rng, 1.0, 2.5);
        c_plus_one = std::max(c_plus_one, spec.s[p](i));
      }
    }
    const double big_c = c_plus_one - 1.0;

    Eigen::VectorXd raw(k);
    for (int i = 0; i < k; ++i) raw(i) = uniform_in(rng, -1.0, 1.0);
    const auto marg = exact_marginals(model);
    const Eigen::VectorXd centered = raw.array() - marg.eta[n].dot(raw);

    const double slack = 1e-10;
    if (asymptotic_variance(model, centered, &spec) >
        c_plus_one * asymptotic_variance(model, centered) + slack) {
      detail = "centered bound fails";
      return false;
    }
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(k);
    if (asymptotic_variance(model, ones, &spec) >
        c_plus_one * asymptotic_variance(model, ones) + n * big_c + slack) {
      detail = "normalizing-constant bound fails";
      return false;
    }
    return true;
  });

  // Optimal twist with exact integrals: one particle already gives the exact
  // normalizing constant, on every seed.
  ctx.fuzz("single-particle exactness under the optimal twist", [&](Rng& rng, std::string& detail) {
    const DiscreteFK model = random_discrete_model(rng, options.max_states, options.max_time);
    const auto schedule = make_tabular_schedule(model, discrete_optimal_twists(model), true, 1);
    const auto fk = make_fk_model(model);
    const auto twisted = build_twisted_model(fk, schedule);
    const double exact = exact_marginals(model).log_z_hat();
    for (int s = 0; s < 5; ++s) {
      const auto streams = StreamSet::derive(rng(), 0);
      const auto run = run_filter(twisted, 1, ResamplingPolicy::always(), streams);
      if (!close(run.log_z_hat, exact, 1e-10)) {
        detail = "log Z mismatch: " + std::to_string(run.log_z_hat) + " vs " +
                 std::to_string(exact);
        return false;
      }
    }
    return true;
  });

  return ctx.results;
}

}  // namespace twistpf
