#pragma once

#include <cmath>
#include <functional>
#include <utility>

#include "twistpf/errors.hpp"
#include "twistpf/twist.hpp"

namespace twistpf {

template <class State>
struct RejectionResult {
  State state;
  long long trials = 0;
};

namespace detail {

// Core accept/reject loop. `propose` draws candidates from the proposal
// kernel; a candidate X' is accepted with probability
// psi_eff(X') / rho(X'), which the twist/proposal pairing keeps within (0, 1].
template <class State, class Propose>
RejectionResult<State> rejection_loop(int p, Propose&& propose, const TwistFunction<State>& twist,
                                      const std::function<double(const State&)>* log_rho,
                                      long long max_trials, Rng& rng) {
  for (long long t = 1; t <= max_trials; ++t) {
    State candidate = propose(rng);
    double log_accept = twist.log_effective(candidate);
    if (log_rho != nullptr) log_accept -= (*log_rho)(candidate);
    if (log_accept > 0.0) log_accept = 0.0;  // guard rounding; ratios are <= 1 by construction
    if (std::log(rng.uniform_open()) < log_accept) {
      return {std::move(candidate), t};
    }
  }
  throw RejectionOverflowError(p, max_trials);
}

}  // namespace detail

// Draw one state exactly distributed as the twisted kernel M_p^omega(prev, .)
// by rejection. Candidates come from the base kernel, or from the proposal's
// exact M_p^rho sampler when one is supplied (partial analytical twisting).
// Returns the accepted state and the number of trials consumed.
template <class State>
RejectionResult<State> rejection_sample(int p, const State& prev,
                                        const std::function<State(int, const State&, Rng&)>& base_kernel,
                                        const TwistFunction<State>& twist,
                                        const TwistProposal<State>* proposal, long long max_trials,
                                        Rng& rng) {
  const std::function<double(const State&)>* no_rho = nullptr;
  if (proposal != nullptr && proposal->sample) {
    return detail::rejection_loop(
        p, [&](Rng& r) { return proposal->sample(prev, r); }, twist, &proposal->log_rho,
        max_trials, rng);
  }
  return detail::rejection_loop(
      p, [&](Rng& r) { return base_kernel(p, prev, r); }, twist, no_rho, max_trials, rng);
}

// Same, for the initial distribution M_0^omega.
template <class State>
RejectionResult<State> rejection_sample_initial(const std::function<State(Rng&)>& base_initial,
                                                const TwistFunction<State>& twist,
                                                const TwistProposal<State>* proposal,
                                                long long max_trials, Rng& rng) {
  const std::function<double(const State&)>* no_rho = nullptr;
  if (proposal != nullptr && proposal->sample_initial) {
    return detail::rejection_loop(
        0, [&](Rng& r) { return proposal->sample_initial(r); }, twist, &proposal->log_rho,
        max_trials, rng);
  }
  return detail::rejection_loop(
      0, [&](Rng& r) { return base_initial(r); }, twist, no_rho, max_trials, rng);
}

}  // namespace twistpf
