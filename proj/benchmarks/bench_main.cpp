// Microbenchmarks for the hot paths: resampling, log-sum-exp, rejection
// sampling, Monte Carlo twisted integrals, kernel simulation and whole-filter
// runs at small sizes.

#include <benchmark/benchmark.h>

#include <random>

#include "twistpf/discrete.hpp"
#include "twistpf/filter.hpp"
#include "twistpf/learning.hpp"
#include "twistpf/lgssm.hpp"
#include "twistpf/sv.hpp"
#include "twistpf/twisted_model.hpp"

namespace {

using namespace twistpf;

LgssmParams bench_lgssm(int n) {
  LgssmParams params;
  params.dim = 3;
  params.terminal_time = n;
  params.mu0 = Eigen::VectorXd::Ones(3);
  params.sigma0_sq = params.sigma_m_sq = 1.0;
  params.sigma_g_sq = 0.25;
  params.transition = LgssmParams::banded_transition(3, 0.42);
  Rng rng(7);
  params.obs = lgssm_simulate(params, rng).obs;
  return params;
}

SvParams bench_sv(int n) {
  SvParams params;
  params.phi1 = 0.09;
  params.phi2 = 0.45;
  params.phi3 = 0.11;
  params.sigma = 0.25;
  SvParams generate = params;
  generate.phi1 = 0.1;
  generate.phi2 = 0.5;
  generate.phi3 = 0.1;
  Rng rng(11);
  params.returns = sv_simulate(generate, n, 0.2, rng).returns;
  params.terminal_time = n;
  return params;
}

void BM_LogSumExp(benchmark::State& state) {
  std::vector<double> v(state.range(0));
  Rng rng(3);
  for (auto& x : v) x = -50.0 * rng.uniform01();
  for (auto _ : state) {
    benchmark::DoNotOptimize(log_sum_exp(v));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_LogSumExp)->Arg(256)->Arg(4096);

void BM_ResampleCategorical(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  std::vector<double> w(n);
  Rng rng(5);
  double total = 0.0;
  for (auto& x : w) {
    x = rng.uniform01();
    total += x;
  }
  for (auto& x : w) x /= total;
  for (auto _ : state) {
    benchmark::DoNotOptimize(resample_categorical(w, n, rng));
  }
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_ResampleCategorical)->Arg(256)->Arg(4096);

void BM_RejectionSample(benchmark::State& state) {
  // acceptance around the given per-mille rate
  const double accept = static_cast<double>(state.range(0)) / 1000.0;
  std::function<double(int, const double&, Rng&)> kernel = [](int, const double&, Rng& r) {
    return r.uniform01();
  };
  TwistFunction<double> twist;
  twist.eval_log = [accept](const double&) { return std::log(accept); };
  Rng rng(9);
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        rejection_sample<double>(1, 0.5, kernel, twist, nullptr, 1 << 24, rng));
  }
}
BENCHMARK(BM_RejectionSample)->Arg(500)->Arg(50)->Arg(10);

void BM_EstimateMPsi(benchmark::State& state) {
  const auto params = bench_lgssm(4);
  const auto fk = make_fk_model(params);
  const auto coeffs = lgssm_optimal_twists(params);
  auto psi = make_quadratic_twist(coeffs[2], 1.0, 0.0, kNegInf);
  Eigen::VectorXd x = params.mu0;
  Rng rng(13);
  for (auto _ : state) {
    benchmark::DoNotOptimize(estimate_m_psi<Eigen::VectorXd>(2, x, fk, psi, 25, rng));
  }
}
BENCHMARK(BM_EstimateMPsi);

void BM_CpgSample(benchmark::State& state) {
  const auto params = bench_sv(4);
  Rng rng(17);
  const double alpha = params.shape_q() + 1.0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        cpg_sample(alpha, params.poisson_u(0.2), params.rate_c(), 0.0, rng));
  }
}
BENCHMARK(BM_CpgSample);

void BM_KalmanEvidence(benchmark::State& state) {
  const auto params = bench_lgssm(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(kalman_log_evidence(params));
  }
}
BENCHMARK(BM_KalmanEvidence)->Arg(50)->Arg(200);

void BM_BootstrapFilterLgssm(benchmark::State& state) {
  const auto params = bench_lgssm(50);
  const auto fk = make_fk_model(params);
  std::uint64_t rep = 0;
  for (auto _ : state) {
    const auto run = run_filter(fk, static_cast<int>(state.range(0)),
                                ResamplingPolicy::adaptive(0.5), StreamSet::derive(1, rep++));
    benchmark::DoNotOptimize(run.log_z_hat);
  }
}
BENCHMARK(BM_BootstrapFilterLgssm)->Arg(200)->Arg(1000)->Unit(benchmark::kMillisecond);

void BM_TwistedFilterDiscrete(benchmark::State& state) {
  DiscreteFK model;
  model.m0 = Eigen::Vector3d(0.5, 0.3, 0.2);
  Eigen::MatrixXd m(3, 3);
  m << 0.6, 0.3, 0.1, 0.2, 0.5, 0.3, 0.1, 0.4, 0.5;
  model.trans.assign(8, m);
  model.pot.assign(9, Eigen::Vector3d(0.8, 1.4, 0.5));
  const auto schedule = make_tabular_schedule(model, discrete_optimal_twists(model), false, 3);
  const auto twisted = build_twisted_model(make_fk_model(model), schedule);
  std::uint64_t rep = 0;
  for (auto _ : state) {
    const auto run = run_filter(twisted, 64, ResamplingPolicy::adaptive(0.5),
                                StreamSet::derive(2, rep++));
    benchmark::DoNotOptimize(run.log_z_hat);
  }
}
BENCHMARK(BM_TwistedFilterDiscrete)->Unit(benchmark::kMicrosecond);

void BM_AcceptanceTable(benchmark::State& state) {
  const auto params = bench_lgssm(4);
  const auto fk = make_fk_model(params);
  std::vector<Eigen::VectorXd> particles(200, params.mu0);
  std::function<Eigen::VectorXd(const Eigen::VectorXd&, Rng&)> kernel =
      [&fk](const Eigen::VectorXd& x, Rng& r) { return fk.sample_kernel(2, x, r); };
  const auto batch =
      make_draw_batch<Eigen::VectorXd>(particles, {}, kernel, 25, StreamSet::derive(3, 0), 2);
  const auto coeffs = lgssm_optimal_twists(params);
  std::function<double(const Eigen::VectorXd&)> log_psi = [](const Eigen::VectorXd&) {
    return 0.0;
  };
  std::function<double(const Eigen::VectorXd&)> log_target =
      [c = coeffs[2]](const Eigen::VectorXd& x) { return c.eval(x); };
  const auto table = make_acceptance_table<Eigen::VectorXd>(batch, log_psi, log_target);
  double beta = 0.5;
  for (auto _ : state) {
    benchmark::DoNotOptimize(table.alpha(beta));
    beta = beta == 0.5 ? 0.7 : 0.5;
  }
}
BENCHMARK(BM_AcceptanceTable);

}  // namespace

BENCHMARK_MAIN();
