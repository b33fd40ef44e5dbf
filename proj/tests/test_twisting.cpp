#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "test_support.hpp"
#include "twistpf/discrete_checks.hpp"
#include "twistpf/discrete.hpp"
#include "twistpf/filter.hpp"
#include "twistpf/rejection.hpp"
#include "twistpf/twisted_model.hpp"

using namespace twistpf;

namespace {

TwistFunction<int> constant_twist(double value) {
  TwistFunction<int> t;
  t.eval_log = [v = std::log(value)](const int&) { return v; };
  return t;
}

std::function<int(int, const int&, Rng&)> three_state_kernel(const Eigen::MatrixXd& m) {
  return [m](int, const int& prev, Rng& rng) {
    const double u = rng.uniform01();
    double acc = 0.0;
    for (int j = 0; j < m.cols(); ++j) {
      acc += m(prev, j);
      if (u < acc) return j;
    }
    return static_cast<int>(m.cols()) - 1;
  };
}

}  // namespace

TEST_CASE("unit twist accepts the first proposal") {
  Rng rng(3);
  const auto kernel = [](int, const int& x, Rng&) { return x; };
  std::function<int(int, const int&, Rng&)> k = kernel;
  const auto twist = TwistFunction<int>::unit();
  for (int i = 0; i < 100; ++i) {
    const auto res = rejection_sample<int>(1, 0, k, twist, nullptr, 100, rng);
    CHECK(res.trials == 1);
  }
}

TEST_CASE("constant twist trial count is geometric") {
  const double eps = 0.2;
  Rng rng(5);
  std::function<int(int, const int&, Rng&)> k = [](int, const int& x, Rng&) { return x; };
  const auto twist = constant_twist(eps);
  std::vector<double> trials(100000);
  for (auto& t : trials) {
    t = static_cast<double>(rejection_sample<int>(1, 0, k, twist, nullptr, 100000, rng).trials);
  }
  const auto m = testsup::moments(trials);
  CHECK(std::abs(m.mean - 1.0 / eps) <= 3.0 * m.se);
}

TEST_CASE("accepted states follow the exact twisted kernel row") {
  Eigen::MatrixXd m(3, 3);
  m << 0.5, 0.3, 0.2, 0.1, 0.6, 0.3, 0.25, 0.5, 0.25;
  const Eigen::Vector3d omega(1.0, 0.5, 0.25);

  const auto kernel = three_state_kernel(m);
  TwistFunction<int> twist;
  auto w = std::make_shared<Eigen::Vector3d>(omega);
  twist.eval_log = [w](const int& s) { return std::log((*w)(s)); };

  const int draws = 100000;
  Rng rng(17);
  const int from = 0;
  Eigen::Vector3d counts = Eigen::Vector3d::Zero();
  for (int i = 0; i < draws; ++i) {
    counts(rejection_sample<int>(1, from, kernel, twist, nullptr, 100000, rng).state) += 1.0;
  }
  Eigen::Vector3d expected = m.row(from).transpose().cwiseProduct(omega);
  expected *= draws / expected.sum();
  double chi2 = 0.0;
  for (int j = 0; j < 3; ++j) {
    chi2 += (counts(j) - expected(j)) * (counts(j) - expected(j)) / expected(j);
  }
  CHECK(chi2 < testsup::chi2_crit_01(2));
}

TEST_CASE("estimate_m_psi on constants is exact") {
  const auto model = testsup::test_model(3, 3, 1);
  const auto fk = make_fk_model(model);
  Rng rng(8);
  CHECK(estimate_m_psi<int>(1, 0, fk, TwistFunction<int>::unit(), 7, rng) == doctest::Approx(1.0));
  CHECK(estimate_m_psi<int>(1, 0, fk, constant_twist(0.37), 5, rng) ==
        doctest::Approx(0.37).epsilon(1e-12));
}

TEST_CASE("estimate_m_psi is unbiased for a Gaussian integral") {
  // kernel N(0,1), psi(u) = exp(-u^2/2): integral = 1/sqrt(2)
  FeynmanKacModel<double> fk;
  fk.terminal_time = 1;
  fk.sample_initial = [](Rng& rng) { return rng.uniform01(); };
  fk.sample_kernel = [](int, const double&, Rng& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    return normal(rng);
  };
  fk.log_potential = [](int, const double&, Rng&) { return 0.0; };

  TwistFunction<double> psi;
  psi.eval_log = [](const double& u) { return -0.5 * u * u; };

  Rng rng(21);
  const int n_tilde = 10;
  const int reps = 10000;
  std::vector<double> est(reps);
  for (auto& e : est) e = estimate_m_psi<double>(1, 0.0, fk, psi, n_tilde, rng);
  const auto m = testsup::moments(est);
  CHECK(std::abs(m.mean - 1.0 / std::sqrt(2.0)) <= 3.0 * m.se);
}

TEST_CASE("unit schedule leaves kernels and potentials untouched") {
  const auto model = testsup::test_model(3, 4, 5);
  const auto fk = make_fk_model(model);
  const auto twisted = build_twisted_model(fk, TwistSchedule<int>::unit(4, 3));
  Rng setup(0);
  twisted.on_run_start(setup);
  Rng rng(9);
  for (int p = 0; p <= 4; ++p) {
    for (int s = 0; s < 3; ++s) {
      Rng r1(p * 10 + s), r2(p * 10 + s);
      CHECK(twisted.log_potential(p, s, r1) ==
            doctest::Approx(fk.log_potential(p, s, r2)).epsilon(1e-14));
    }
  }
  // kernels: single trial per draw under the unit twist
  for (int i = 0; i < 50; ++i) twisted.sample_kernel(2, 1, rng);
  CHECK(twisted.twist_stats->trials[2] == 50);
}

TEST_CASE("matching the terminal twist to the potential flattens it exactly") {
  auto model = testsup::test_model(2, 2, 13);
  model.pot[2] = Eigen::Vector2d(0.6, 0.9);  // keep G_n inside (0, 1]
  auto tables = testsup::constant_tables(2, 2, 1.0);
  tables[2] = model.pot[2];
  const auto schedule = make_tabular_schedule(model, tables, false, 2);
  const auto twisted = build_twisted_model(make_fk_model(model), schedule);
  Rng rng(2);
  CHECK(twisted.log_potential(2, 0, rng) == doctest::Approx(0.0));
  CHECK(twisted.log_potential(2, 1, rng) == doctest::Approx(0.0));
}

TEST_CASE("optimal tabular twist with exact integrals is a zero-variance filter") {
  const auto model = testsup::test_model(2, 3, 44);
  const auto schedule = make_tabular_schedule(model, discrete_optimal_twists(model), true, 1);
  const auto twisted = build_twisted_model(make_fk_model(model), schedule);
  const double exact = exact_marginals(model).log_z_hat();
  for (int seed = 0; seed < 20; ++seed) {
    const auto run =
        run_filter(twisted, 1, ResamplingPolicy::always(), StreamSet::derive(7000, seed));
    CHECK(run.log_z_hat == doctest::Approx(exact).epsilon(1e-12));
  }
}

TEST_CASE("twisted potentials are unbiased for the exact twisted values") {
  const auto model = testsup::test_model(3, 3, 23);
  Rng table_rng(555);
  const auto psi = random_twist_tables(model, table_rng, 0.2, 1.0);
  const auto exact = exact_twisted_model(model, psi);
  const auto schedule = make_tabular_schedule(model, psi, false, 3);
  const auto fk = make_fk_model(model);
  const auto twisted = build_twisted_model(fk, schedule);

  const int evals = 100000;
  SUBCASE("interior potential") {
    const int p = 1, x = 2;
    Rng rng(61);
    std::vector<double> vals(evals);
    for (auto& v : vals) v = std::exp(twisted.log_potential(p, x, rng));
    const auto m = testsup::moments(vals);
    CHECK(std::abs(m.mean - exact.pot[p](x)) <= 4.0 * m.se);
  }
  SUBCASE("initial potential (product of two independent estimates)") {
    const int x = 0;
    Rng rng(62);
    std::vector<double> vals(evals);
    for (auto& v : vals) {
      twisted.on_run_start(rng);  // fresh shared M~_0(psi_0) per evaluation
      v = std::exp(twisted.log_potential(0, x, rng));
    }
    const auto m = testsup::moments(vals);
    CHECK(std::abs(m.mean - exact.pot[0](x)) <= 4.0 * m.se);
  }
}

TEST_CASE("scaling the twists leaves the estimate distribution unchanged") {
  const auto model = testsup::test_model(2, 3, 202);
  Rng trng(73);
  auto psi = random_twist_tables(model, trng, 0.4, 1.0);
  auto scaled = psi;
  for (auto& v : scaled) v *= 0.55;

  const auto fk = make_fk_model(model);
  std::vector<double> base_z, scaled_z;
  for (int r = 0; r < 400; ++r) {
    base_z.push_back(run_filter(build_twisted_model(fk, make_tabular_schedule(model, psi, false, 2)),
                                32, ResamplingPolicy::always(), StreamSet::derive(811, r))
                         .log_z_hat);
    scaled_z.push_back(
        run_filter(build_twisted_model(fk, make_tabular_schedule(model, scaled, false, 2)), 32,
                   ResamplingPolicy::always(), StreamSet::derive(7333, r))
            .log_z_hat);
  }
  CHECK(testsup::ks_distance(base_z, scaled_z) <
        testsup::ks_crit_01(base_z.size(), scaled_z.size()));
}

TEST_CASE("floored twists keep the expected trial count below 1/eps") {
  const double eps = 0.05;
  auto model = testsup::test_model(3, 3, 99);
  Rng trng(13);
  auto psi = random_twist_tables(model, trng, 0.01, 1.0);  // raw values below the floor exist
  auto schedule = make_tabular_schedule(model, psi, false, 2);
  for (auto& e : schedule.entries) e.psi.floor_log = std::log(eps);

  const auto twisted = build_twisted_model(make_fk_model(model), schedule);
  const auto run =
      run_filter(twisted, 512, ResamplingPolicy::adaptive(0.5), StreamSet::derive(5150, 0));
  const auto trace = acceptance_trace(run);
  for (std::size_t p = 0; p < trace.mean_trials.size(); ++p) {
    // mean of 512+ geometric draws, each with mean <= 1/eps
    CHECK(trace.mean_trials[p] <= 1.0 / eps + 3.0 * (1.0 / eps) / std::sqrt(512.0));
  }
}

TEST_CASE("acceptance_trace reports ones for untwisted runs and the constant rate otherwise") {
  const auto model = testsup::test_model(2, 3, 3);
  const auto fk = make_fk_model(model);
  const auto plain = run_filter(fk, 64, ResamplingPolicy::always(), StreamSet::derive(4, 0));
  for (double t : acceptance_trace(plain).mean_trials) CHECK(t == doctest::Approx(1.0));

  const auto schedule =
      make_tabular_schedule(model, testsup::constant_tables(2, 3, 0.5), false, 1);
  const auto twisted = build_twisted_model(fk, schedule);
  const auto run =
      run_filter(twisted, 2000, ResamplingPolicy::always(), StreamSet::derive(4, 1));
  const auto trace = acceptance_trace(run);
  for (std::size_t p = 0; p < trace.rate.size(); ++p) {
    // Bernoulli(0.5) acceptance; N=2000 accepted draws per time
    CHECK(std::abs(trace.rate[p] - 0.5) <= 3.0 * 0.5 / std::sqrt(2000.0));
  }
}
