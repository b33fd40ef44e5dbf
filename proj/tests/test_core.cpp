#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "test_support.hpp"
#include "twistpf/discrete.hpp"
#include "twistpf/filter.hpp"
#include "twistpf/math.hpp"
#include "twistpf/resample.hpp"
#include "twistpf/rng.hpp"

using namespace twistpf;

TEST_CASE("substreams are deterministic and keyed") {
  const StreamSet s = StreamSet::derive(42, 0);
  Rng a = s.at(3, 7, StreamPurpose::Kernel);
  Rng b = s.at(3, 7, StreamPurpose::Kernel);
  CHECK(a() == b());
  Rng c = s.at(4, 7, StreamPurpose::Kernel);
  Rng d = s.at(3, 8, StreamPurpose::Kernel);
  Rng e = s.at(3, 7, StreamPurpose::Potential);
  const auto v = a();
  CHECK(v != c());
  CHECK(v != d());
  CHECK(v != e());
}

TEST_CASE("uniform01 stays in the unit interval") {
  Rng rng(1);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform01();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
}

TEST_CASE("log_sum_exp matches the naive sum on benign values") {
  const std::vector<double> v{-1.0, 0.5, 2.0, -3.0};
  double naive = 0.0;
  for (double x : v) naive += std::exp(x);
  CHECK(log_sum_exp(v) == doctest::Approx(std::log(naive)).epsilon(1e-14));
  CHECK(log_sum_exp(std::vector<double>{-1000.0, -1000.0}) ==
        doctest::Approx(-1000.0 + std::log(2.0)).epsilon(1e-14));
}

TEST_CASE("ess on the documented examples") {
  CHECK(ess(std::vector<double>{0.25, 0.25, 0.25, 0.25}) == doctest::Approx(4.0));
  CHECK(ess(std::vector<double>{1.0, 0.0, 0.0, 0.0}) == doctest::Approx(1.0));
  CHECK(ess(std::vector<double>{0.7, 0.2, 0.1}) == doctest::Approx(1.0 / 0.54).epsilon(1e-12));
  CHECK_THROWS_AS(ess(std::vector<double>{0.5, -0.1}), InvalidWeightsError);
  CHECK_THROWS_AS(ess(std::vector<double>{0.5, std::nan("")}), InvalidWeightsError);
}

TEST_CASE("categorical resampling") {
  Rng rng(7);
  SUBCASE("point mass maps every ancestor to its index") {
    const auto idx = resample_categorical(std::vector<double>{0.0, 1.0, 0.0}, 50, rng);
    for (auto i : idx) CHECK(i == 1);
  }
  SUBCASE("single particle") {
    const auto idx = resample_categorical(std::vector<double>{1.0}, 10, rng);
    for (auto i : idx) CHECK(i == 0);
  }
  SUBCASE("empirical frequency of a fair coin") {
    const auto idx = resample_categorical(std::vector<double>{0.5, 0.5}, 100000, rng);
    double ones = 0;
    for (auto i : idx) ones += i;
    const double freq = ones / 100000.0;
    CHECK(freq > 0.495);
    CHECK(freq < 0.505);
  }
  SUBCASE("all-zero weights are rejected") {
    CHECK_THROWS_AS(resample_categorical(std::vector<double>{0.0, 0.0}, 4, rng),
                    InvalidWeightsError);
  }
}

TEST_CASE("filter with no kernel steps averages the initial potential") {
  auto counters = std::make_shared<SimCounters>();
  FeynmanKacModel<double> model;
  model.terminal_time = 0;
  model.counters = counters;
  model.sample_initial = [counters](Rng& rng) {
    counters->kernel_draws += 1;
    return rng.uniform01();
  };
  model.sample_kernel = [](int, const double& x, Rng&) { return x; };
  model.log_potential = [](int, const double& x, Rng&) { return std::log(0.5 + x); };

  const auto streams = StreamSet::derive(11, 0);
  const auto run = run_filter(model, 256, ResamplingPolicy::always(), streams);

  // recompute the expected value from the same substreams
  std::vector<double> g(256);
  for (int i = 0; i < 256; ++i) {
    Rng rng = streams.at(i, 0, StreamPurpose::Init);
    g[i] = 0.5 + rng.uniform01();
  }
  double mean = 0.0;
  for (double x : g) mean += x;
  mean /= 256.0;
  CHECK(run.log_z_hat == doctest::Approx(std::log(mean)).epsilon(1e-13));
}

TEST_CASE("kappa = 1 adaptive reproduces always-resample exactly") {
  const auto model = testsup::test_model(3, 6, 99);
  const auto fk = make_fk_model(model);
  const auto streams = StreamSet::derive(5, 3);
  const auto a = run_filter(fk, 64, ResamplingPolicy::always(), streams, FilterOptions{true});
  const auto b =
      run_filter(fk, 64, ResamplingPolicy::adaptive(1.0), streams, FilterOptions{true});
  REQUIRE(a.log_z_hat == b.log_z_hat);
  for (int p = 0; p <= 6; ++p) {
    CHECK(a.resampled[p] == b.resampled[p]);
    for (int i = 0; i < 64; ++i) {
      CHECK(a.states[p][i] == b.states[p][i]);
      CHECK(a.weights[p][i] == b.weights[p][i]);
    }
  }
}

TEST_CASE("run invariants: normalized weights, ESS bounds, draw accounting") {
  const auto model = testsup::test_model(4, 8, 17);
  const auto fk = make_fk_model(model);
  const auto run = run_filter(fk, 128, ResamplingPolicy::adaptive(0.5),
                              StreamSet::derive(23, 0), FilterOptions{true});
  for (int p = 0; p <= 8; ++p) {
    double sum = 0.0;
    for (double w : run.weights[p]) sum += w;
    CHECK(std::abs(sum - 1.0) <= 1e-12);
    CHECK(run.ess_trace[p] >= 1.0);
    CHECK(run.ess_trace[p] <= 128.0);
  }
  CHECK(run.kernel_sim_count >= 128LL * 8);
  CHECK(run.rejection_trials[3] == 0.0);  // untwisted
}

TEST_CASE("weighted_estimate basics") {
  const auto model = testsup::test_model(3, 4, 31);
  const auto fk = make_fk_model(model);
  const auto run = run_filter(fk, 200, ResamplingPolicy::adaptive(0.5),
                              StreamSet::derive(29, 0), FilterOptions{true});
  CHECK(weighted_estimate(run, 2, [](int) { return 1.0; }) == doctest::Approx(1.0));
  CHECK(weighted_estimate(run, 2, [](int) { return 1.0; }, EstimateKind::Updated) ==
        doctest::Approx(1.0));
  CHECK_THROWS(weighted_estimate(run, 1, [](int x) { return x == 0 ? std::nan("") : 1.0; }));

  // single-state chain: every particle sits at the only state
  DiscreteFK point;
  point.m0 = Eigen::VectorXd::Ones(1);
  point.trans = {Eigen::MatrixXd::Ones(1, 1)};
  point.pot.assign(2, Eigen::VectorXd::Ones(1));
  const auto point_run = run_filter(make_fk_model(point), 32, ResamplingPolicy::always(),
                                    StreamSet::derive(1, 1), FilterOptions{true});
  CHECK(weighted_estimate(point_run, 1, [](int s) { return s == 0 ? 1.0 : 0.0; }) ==
        doctest::Approx(1.0));
}

TEST_CASE("large-N log normalizing constant sits inside the oracle error band") {
  const auto model = testsup::test_model(2, 3, 7);
  const auto marg = exact_marginals(model);
  const int n_particles = 100000;
  const auto run = run_filter(make_fk_model(model), n_particles, ResamplingPolicy::always(),
                              StreamSet::derive(2024, 0));
  // delta method: sd of log Zhat from the asymptotic variance of the updated
  // terminal measure
  const double sigma_sq = asymptotic_variance(model, model.pot[3]);
  const double scale = marg.z_pred[3] / marg.z_hat[3];
  const double sd_log = std::sqrt(sigma_sq / n_particles) * scale;
  CHECK(std::abs(run.log_z_hat - marg.log_z_hat()) <= 3.0 * sd_log);
}

TEST_CASE("normalizing constant estimate is unbiased over repetitions") {
  const auto model = testsup::test_model(2, 4, 55);
  const double exact = exact_marginals(model).z_hat.back();
  const auto fk = make_fk_model(model);
  for (const auto policy : {ResamplingPolicy::always(), ResamplingPolicy::adaptive(0.5)}) {
    std::vector<double> z(2000);
    for (int r = 0; r < 2000; ++r) {
      z[r] = std::exp(run_filter(fk, 64, policy, StreamSet::derive(909, r)).log_z_hat);
    }
    const auto m = testsup::moments(z);
    CHECK(std::abs(m.mean - exact) <= 4.0 * m.se);
  }
}

TEST_CASE("permuting particle substreams leaves the estimate law unchanged") {
  const auto model = testsup::test_model(2, 3, 77);
  const auto fk = make_fk_model(model);
  const int n_particles = 32;
  std::vector<std::uint32_t> perm(n_particles);
  for (int i = 0; i < n_particles; ++i) perm[i] = (i * 13 + 5) % n_particles;

  std::vector<double> plain, permuted;
  for (int r = 0; r < 500; ++r) {
    StreamSet streams = StreamSet::derive(31337, r);
    plain.push_back(
        run_filter(fk, n_particles, ResamplingPolicy::adaptive(0.5), streams).log_z_hat);
    streams.lane_permutation = &perm;
    permuted.push_back(
        run_filter(fk, n_particles, ResamplingPolicy::adaptive(0.5), streams).log_z_hat);
  }
  const double d = testsup::ks_distance(plain, permuted);
  CHECK(d < testsup::ks_crit_01(plain.size(), permuted.size()));
}

TEST_CASE("non-finite potential aborts with the failing time index") {
  FeynmanKacModel<double> model;
  model.terminal_time = 3;
  model.sample_initial = [](Rng& rng) { return rng.uniform01(); };
  model.sample_kernel = [](int, const double& x, Rng&) { return x; };
  model.log_potential = [](int p, const double&, Rng&) {
    return p == 2 ? std::numeric_limits<double>::infinity() : 0.0;
  };
  try {
    run_filter(model, 4, ResamplingPolicy::always(), StreamSet::derive(0, 0));
    FAIL("expected FilterError");
  } catch (const FilterError& e) {
    CHECK(e.time == 2);
  }
}
