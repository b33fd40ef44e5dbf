#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "twistpf/errors.hpp"
#include "twistpf/fk_model.hpp"
#include "twistpf/math.hpp"
#include "twistpf/resample.hpp"
#include "twistpf/rng.hpp"

namespace twistpf {

// Output of one particle filter run. Weight vectors are normalized; traces
// are indexed by time p in 0..n. When `has_history` is false only the
// terminal slice of states/weights is kept.
template <class State>
struct ParticleRun {
  int terminal_time = 0;
  int num_particles = 0;
  bool has_history = false;

  // states[p] are the mutated particles at time p; pred_weights[p] are the
  // normalized weights before the time-p potential (the predictive measure),
  // weights[p] after it (the updated measure). Without history each holds
  // only the terminal slice.
  std::vector<std::vector<State>> states;
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> pred_weights;

  std::vector<double> log_z_pred;     // log Z_p^N, before the time-p potential
  std::vector<double> log_z_updated;  // log Zhat_p^N, after it
  double log_z_hat = 0.0;             // log Zhat_n^N

  std::vector<double> ess_trace;        // ESS of the updated weights at each time
  std::vector<std::uint8_t> resampled;  // 1 if resampling preceded the time-p mutation
  std::vector<double> rejection_trials; // mean rejection trials per accepted draw (0 if untwisted)
  long long kernel_sim_count = 0;       // base-kernel draws consumed by the run

  int resample_count() const {
    int c = 0;
    for (auto f : resampled) c += f;
    return c;
  }
};

struct FilterOptions {
  bool store_history = false;
};

namespace detail {

inline bool should_resample(const ResamplingPolicy& policy, double ess_value, int num_particles) {
  if (policy.mode == ResampleMode::Always) return true;
  // kappa == 1 is "always": an exactly-uniform weight vector has ESS == N and
  // must still trigger for the two policies to coincide trajectory-for-trajectory.
  if (policy.kappa >= 1.0) return true;
  return ess_value < policy.kappa * static_cast<double>(num_particles);
}

}  // namespace detail

// Bootstrap particle filter, generalized with ESS-triggered resampling.
// Between resampling events the unnormalized log weights accumulate
// multiplicatively; the normalizing constant picks up an increment of
// log-mean-weight at every resampling event and at the terminal step. With
// ResampleMode::Always this reproduces the textbook product of weighted
// potential means exactly.
template <class State>
ParticleRun<State> run_filter(const FeynmanKacModel<State>& model, int num_particles,
                              const ResamplingPolicy& policy, const StreamSet& streams,
                              const FilterOptions& options = {}) {
  if (num_particles < 1) throw std::invalid_argument("run_filter: need at least one particle");
  if (policy.kappa < 0.0 || policy.kappa > 1.0) {
    throw std::invalid_argument("run_filter: kappa must lie in [0, 1]");
  }
  const int n = model.terminal_time;
  const std::size_t N = static_cast<std::size_t>(num_particles);

  const long long sims_before = model.counters ? model.counters->kernel_draws : 0;
  if (model.on_run_start) {
    Rng setup = streams.shared(0, StreamPurpose::RunSetup);
    model.on_run_start(setup);
  }

  ParticleRun<State> run;
  run.terminal_time = n;
  run.num_particles = num_particles;
  run.has_history = options.store_history;
  run.log_z_pred.resize(n + 1);
  run.log_z_updated.resize(n + 1);
  run.ess_trace.resize(n + 1);
  run.resampled.assign(n + 1, 0);
  if (options.store_history) {
    run.states.resize(n + 1);
    run.weights.resize(n + 1);
    run.pred_weights.resize(n + 1);
  }

  std::vector<State> particles(N);
  for (std::size_t i = 0; i < N; ++i) {
    Rng rng = streams.at(i, 0, StreamPurpose::Init);
    particles[i] = model.sample_initial(rng);
  }

  std::vector<double> log_w(N, 0.0);  // unnormalized, since the last resampling
  double log_z_settled = 0.0;
  const double log_n = std::log(static_cast<double>(N));

  for (int p = 0; p <= n; ++p) {
    if (p > 0) {
      const std::vector<double> w = normalized_weights(log_w);
      if (detail::should_resample(policy, ess(w), num_particles)) {
        log_z_settled += log_sum_exp(log_w) - log_n;
        Rng rng = streams.shared(static_cast<std::uint64_t>(p), StreamPurpose::Resample);
        const auto ancestors = resample_categorical(w, N, rng);
        std::vector<State> next(N);
        for (std::size_t i = 0; i < N; ++i) next[i] = particles[ancestors[i]];
        particles = std::move(next);
        log_w.assign(N, 0.0);
        run.resampled[p] = 1;
      }
      for (std::size_t i = 0; i < N; ++i) {
        Rng rng = streams.at(i, static_cast<std::uint64_t>(p), StreamPurpose::Kernel);
        particles[i] = model.sample_kernel(p, particles[i], rng);
      }
    }

    run.log_z_pred[p] = log_z_settled + log_sum_exp(log_w) - log_n;
    std::vector<double> pred_w = normalized_weights(log_w);

    for (std::size_t i = 0; i < N; ++i) {
      Rng rng = streams.at(i, static_cast<std::uint64_t>(p), StreamPurpose::Potential);
      const double g = model.log_potential(p, particles[i], rng);
      if (!std::isfinite(g)) {
        throw FilterError(p, "log potential evaluated to " + std::to_string(g) +
                                 " on particle " + std::to_string(i));
      }
      log_w[i] += g;
    }

    std::vector<double> upd_w = normalized_weights(log_w);
    if (std::abs(kahan_sum(upd_w) - 1.0) > 1e-12) {
      throw FilterError(p, "weights failed to normalize");
    }
    const double e = ess(upd_w);
    if (e < 1.0 - 1e-9 || e > static_cast<double>(N) * (1.0 + 1e-9)) {
      throw FilterError(p, "ESS out of bounds: " + std::to_string(e));
    }

    run.ess_trace[p] = e;
    run.log_z_updated[p] = log_z_settled + log_sum_exp(log_w) - log_n;

    if (options.store_history) {
      run.states[p] = particles;
      run.weights[p] = std::move(upd_w);
      run.pred_weights[p] = std::move(pred_w);
    } else if (p == n) {
      run.states.assign(1, particles);
      run.weights.assign(1, std::move(upd_w));
      run.pred_weights.assign(1, std::move(pred_w));
    }
  }

  run.log_z_hat = run.log_z_updated[n];
  run.kernel_sim_count = model.counters ? model.counters->kernel_draws - sims_before : 0;

  run.rejection_trials.assign(n + 1, 0.0);
  if (model.twist_stats) {
    for (int p = 0; p <= n; ++p) {
      const auto& st = *model.twist_stats;
      if (p < static_cast<int>(st.accepts.size()) && st.accepts[p] > 0) {
        run.rejection_trials[p] =
            static_cast<double>(st.trials[p]) / static_cast<double>(st.accepts[p]);
      }
    }
  }
  return run;
}

enum class EstimateKind { Predictive, Updated };

// Weighted particle estimate eta_p^N(f) or etahat_p^N(f) at time p.
template <class State, class F>
double weighted_estimate(const ParticleRun<State>& run, int p, F&& f,
                         EstimateKind kind = EstimateKind::Predictive) {
  if (p < 0 || p > run.terminal_time) {
    throw std::out_of_range("weighted_estimate: time index out of range");
  }
  std::size_t slot = static_cast<std::size_t>(p);
  if (!run.has_history) {
    if (p != run.terminal_time) {
      throw std::logic_error("weighted_estimate: run was made without history");
    }
    slot = 0;
  }
  const auto& states = run.states[slot];
  const auto& w = kind == EstimateKind::Updated ? run.weights[slot] : run.pred_weights[slot];
  double acc = 0.0;
  for (std::size_t i = 0; i < states.size(); ++i) {
    const double v = f(states[i]);
    if (!std::isfinite(v)) {
      throw std::runtime_error("weighted_estimate: non-finite functional value on particle " +
                               std::to_string(i));
    }
    acc += w[i] * v;
  }
  return acc;
}

}  // namespace twistpf
