#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "twistpf/rng.hpp"

namespace twistpf {

// Running total of base-kernel simulations (initial draws included). Shared
// between a base model and any twisted wrapper built on top of it, so the
// count covers rejected proposals and Monte Carlo potential draws too.
struct SimCounters {
  long long kernel_draws = 0;
};

// Per-run rejection sampling tallies, filled in by twisted kernels.
struct TwistRunStats {
  std::vector<long long> trials;   // proposals consumed, per time index
  std::vector<long long> accepts;  // accepted draws, per time index

  void reset(int terminal_time) {
    trials.assign(static_cast<std::size_t>(terminal_time) + 1, 0);
    accepts.assign(static_cast<std::size_t>(terminal_time) + 1, 0);
  }
};

// A Feynman-Kac model: initial sampler, Markov kernel samplers for p in 1..n,
// and log potentials for p in 0..n. The potential may be stochastic as long
// as exp(log_potential) is an unbiased estimate of the potential value; with
// a fixed generator state every contract is deterministic.
template <class State>
struct FeynmanKacModel {
  int terminal_time = 0;  // n
  int state_dim = 1;

  std::function<State(Rng&)> sample_initial;
  std::function<State(int p, const State& prev, Rng&)> sample_kernel;
  std::function<double(int p, const State& x, Rng&)> log_potential;

  // Optional per-run setup, invoked by run_filter before any sampling with a
  // dedicated substream. Twisted models use it to draw shared per-run
  // estimates and reset their rejection tallies.
  std::function<void(Rng&)> on_run_start;

  std::shared_ptr<SimCounters> counters;
  std::shared_ptr<TwistRunStats> twist_stats;
};

}  // namespace twistpf
