#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "test_support.hpp"
#include "twistpf/discrete_checks.hpp"
#include "twistpf/filter.hpp"
#include "twistpf/twisted_model.hpp"

using namespace twistpf;

TEST_CASE("hand-sized chain: recursion equals exhaustive path enumeration") {
  const auto model = testsup::small_chain();
  const auto marg = exact_marginals(model);
  const double paths = brute_force_z_hat(model);
  CHECK(marg.z_hat.back() == doctest::Approx(paths).epsilon(1e-14));
  // n = 0 slice: Zhat_0 = m0 . G_0
  CHECK(marg.z_hat[0] == doctest::Approx(model.m0.dot(model.pot[0])).epsilon(1e-14));
}

TEST_CASE("unit potentials normalize to one") {
  auto model = testsup::test_model(3, 5, 8);
  for (auto& g : model.pot) g.setOnes();
  CHECK(exact_marginals(model).z_hat.back() == doctest::Approx(1.0).epsilon(1e-13));
}

TEST_CASE("the full oracle property suite passes") {
  const auto checks = run_discrete_oracle_checks({});
  for (const auto& c : checks) {
    INFO(c.name, ": ", c.detail);
    CHECK(c.pass);
  }
}

TEST_CASE("twisted model validation") {
  const auto model = testsup::test_model(2, 2, 3);
  CHECK_THROWS(exact_twisted_model(model, testsup::constant_tables(2, 1, 1.0)));  // wrong length
  auto bad = testsup::constant_tables(2, 2, 1.0);
  bad[1](0) = 0.0;
  CHECK_THROWS(exact_twisted_model(model, bad));
}

TEST_CASE("acceptance-rate normalization is enforced") {
  const auto model = testsup::test_model(2, 2, 5);
  const auto unit = testsup::constant_tables(2, 2, 1.0);
  auto omega = testsup::constant_tables(2, 2, 1.0);
  omega[1](0) = 1.5;  // omega/rho above one
  CHECK_THROWS(exact_acceptance_rates(model, unit, omega, unit));
}

TEST_CASE("remark case: base-kernel proposal") {
  const auto model = testsup::test_model(3, 3, 12);
  Rng rng(9);
  const auto psi = random_twist_tables(model, rng, 0.2, 1.0);
  const auto omega = random_twist_tables(model, rng, 0.1, 1.0);
  const auto unit = testsup::constant_tables(3, 3, 1.0);
  const auto rates = exact_acceptance_rates(model, psi, omega, unit);
  // direct form with rho = 1 collapses to etahat^omega of M(omega)
  const auto omega_marg = exact_marginals(exact_twisted_model(model, omega));
  for (int p = 1; p <= 3; ++p) {
    const Eigen::VectorXd m_omega = model.trans[p - 1] * omega[p];
    CHECK(rates.direct[p] ==
          doctest::Approx(omega_marg.eta_hat[p - 1].dot(m_omega)).epsilon(1e-13));
  }
  // omega = psi with rho = 1: the two forms collapse onto each other
  const auto same = exact_acceptance_rates(model, psi, psi, unit);
  for (std::size_t p = 0; p < same.direct.size(); ++p) {
    CHECK(same.direct[p] == doctest::Approx(same.via_psi[p]).epsilon(1e-12));
  }
}

TEST_CASE("Q-kernel shapes and trivial identities") {
  const auto model = testsup::test_model(2, 1, 77);
  const auto qk = exact_q_kernels(model);
  REQUIRE(qk.q.size() == 1);
  const Eigen::MatrixXd expected = model.pot[0].asDiagonal() * model.trans[0];
  CHECK((qk.q_to_n[0] - expected).norm() < 1e-14);
  CHECK(qk.q_to_n[1].isIdentity(1e-14));
}

TEST_CASE("random-weight spec validation and two-point construction") {
  const auto model = testsup::test_model(2, 3, 21);
  const auto spec = make_two_point_spec(model, 0.5);
  spec.validate(model);
  CHECK(spec.s[0](0) == doctest::Approx(1.25));
  CHECK(spec.s[3](0) == doctest::Approx(1.0));

  RandomWeightSpec bad = spec;
  bad.s[3](0) = 1.3;  // terminal potential must stay exact
  CHECK_THROWS(bad.validate(model));

  // the sampler's first two moments match the declared profile
  Rng rng(17);
  std::vector<double> ratios(200000);
  const double g = model.pot[1](0);
  for (auto& r : ratios) r = std::exp(spec.log_potential_bar(1, 0, rng)) / g;
  const auto m = testsup::moments(ratios);
  CHECK(std::abs(m.mean - 1.0) <= 3.0 * m.se);
  const double second = m.sd * m.sd + m.mean * m.mean;
  CHECK(second == doctest::Approx(1.25).epsilon(0.01));
}

TEST_CASE("randomized potentials preserve the marginal measures in expectation") {
  const auto model = testsup::test_model(2, 3, 31);
  const auto marg = exact_marginals(model);
  const auto spec = make_two_point_spec(model, 0.5);
  const auto fk = make_fk_model(model, nullptr, &spec);

  const int reps = 100000;
  const int p = 2;
  const Eigen::Vector2d f(0.3, 1.7);
  std::vector<double> estimates(reps);
  for (int r = 0; r < reps; ++r) {
    const auto run = run_filter(fk, 16, ResamplingPolicy::always(), StreamSet::derive(515, r),
                                FilterOptions{true});
    const double eta_f =
        weighted_estimate(run, p, [&f](int s) { return f(s); }, EstimateKind::Predictive);
    estimates[r] = std::exp(run.log_z_pred[p]) * eta_f;
  }
  const auto m = testsup::moments(estimates);
  CHECK(std::abs(m.mean - marg.gamma[p].dot(f)) <= 4.0 * m.se);
}

TEST_CASE("asymptotic variance formula against an empirical filter variance") {
  // smaller-replication version of the acceptance-gate check
  const auto model = testsup::test_model(2, 3, 40);
  const auto marg = exact_marginals(model);
  const auto spec = make_two_point_spec(model, 0.5);
  const auto fk = make_fk_model(model, nullptr, &spec);
  const Eigen::Vector2d phi(0.4, 1.3);
  const double target = asymptotic_variance(model, phi, &spec);

  const int reps = 1500, n_particles = 512;
  std::vector<double> values(reps);
  for (int r = 0; r < reps; ++r) {
    const auto run = run_filter(fk, n_particles, ResamplingPolicy::always(),
                                StreamSet::derive(616, r), FilterOptions{true});
    const double eta_phi =
        weighted_estimate(run, 3, [&phi](int s) { return phi(s); }, EstimateKind::Predictive);
    values[r] = std::exp(run.log_z_pred[3]) * eta_phi / marg.z_pred[3];
  }
  const auto m = testsup::moments(values);
  const double empirical = n_particles * m.sd * m.sd;
  CHECK(std::abs(empirical - target) <= 0.15 * target);
}
