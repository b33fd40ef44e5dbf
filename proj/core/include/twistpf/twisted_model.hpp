#pragma once

#include <cmath>
#include <memory>
#include <optional>
#include <stdexcept>
#include <vector>

#include "twistpf/fk_model.hpp"
#include "twistpf/filter.hpp"
#include "twistpf/math.hpp"
#include "twistpf/rejection.hpp"
#include "twistpf/twist.hpp"

namespace twistpf {

// Monte Carlo estimate of M_p(psi_p)(x) in log scale: Ntilde fresh draws
// U^j ~ M_p(x, .), averaged on the natural scale. Unbiased for the integral.
template <class State>
double log_estimate_m_psi(int p, const State& x, const FeynmanKacModel<State>& base,
                          const TwistFunction<State>& psi, int n_tilde, Rng& rng) {
  std::vector<double> vals(static_cast<std::size_t>(n_tilde));
  for (auto& v : vals) {
    const State u = base.sample_kernel(p, x, rng);
    v = psi.log_effective(u);
  }
  return log_sum_exp(vals) - std::log(static_cast<double>(n_tilde));
}

template <class State>
double estimate_m_psi(int p, const State& x, const FeynmanKacModel<State>& base,
                      const TwistFunction<State>& psi, int n_tilde, Rng& rng) {
  return std::exp(log_estimate_m_psi(p, x, base, psi, n_tilde, rng));
}

// Initial-distribution analogue, estimating M_0(psi_0).
template <class State>
double log_estimate_m0_psi(const FeynmanKacModel<State>& base, const TwistFunction<State>& psi,
                           int n_tilde, Rng& rng) {
  std::vector<double> vals(static_cast<std::size_t>(n_tilde));
  for (auto& v : vals) {
    const State u = base.sample_initial(rng);
    v = psi.log_effective(u);
  }
  return log_sum_exp(vals) - std::log(static_cast<double>(n_tilde));
}

namespace detail {

template <class State>
struct TwistedRunShared {
  std::optional<double> log_m0_psi;
};

// M_p(psi_p)(x) estimate for a schedule entry: the exact value when present,
// the tilted-kernel importance form when the entry carries an analytic
// proposal with its normalizer, and the plain base-kernel average otherwise.
template <class State>
double log_m_psi_for_entry(const TwistEntry<State>& entry, int p, const State& x,
                           const FeynmanKacModel<State>& base, int n_tilde, Rng& rng) {
  if (entry.exact_log_m_psi) return entry.exact_log_m_psi(x);
  if (entry.proposal && entry.proposal->sample && entry.proposal->log_normalizer) {
    std::vector<double> vals(static_cast<std::size_t>(n_tilde));
    for (auto& v : vals) {
      const State u = entry.proposal->sample(x, rng);
      if (base.counters) base.counters->kernel_draws += 1;
      v = entry.psi.log_effective(u) - entry.proposal->log_rho(u);
    }
    return entry.proposal->log_normalizer(x) + log_sum_exp(vals) -
           std::log(static_cast<double>(n_tilde));
  }
  return log_estimate_m_psi(p, x, base, entry.psi, n_tilde, rng);
}

template <class State>
double log_m0_psi_for_entry(const TwistEntry<State>& entry, const FeynmanKacModel<State>& base,
                            int n_tilde, Rng& rng) {
  if (entry.proposal && entry.proposal->sample_initial &&
      entry.proposal->log_normalizer0.has_value()) {
    std::vector<double> vals(static_cast<std::size_t>(n_tilde));
    for (auto& v : vals) {
      const State u = entry.proposal->sample_initial(rng);
      if (base.counters) base.counters->kernel_draws += 1;
      v = entry.psi.log_effective(u) - entry.proposal->log_rho(u);
    }
    return *entry.proposal->log_normalizer0 + log_sum_exp(vals) -
           std::log(static_cast<double>(n_tilde));
  }
  return log_estimate_m0_psi(base, entry.psi, n_tilde, rng);
}

}  // namespace detail

// Builds the twisted Feynman-Kac model for a schedule psi_{0:n}: kernels are
// sampled by rejection (through the schedule's analytic proposals where
// present) and potentials take the random-weight form
//
//   G_0^psi = G_0 / psi_0 * M~_1(psi_1) * M~_0(psi_0)
//   G_p^psi = G_p / psi_p * M~_{p+1}(psi_{p+1})      0 < p < n
//   G_n^psi = G_n / psi_n
//
// where each M~ is an independent Monte Carlo estimate (or the schedule's
// exact value when supplied). The shared M~_0(psi_0) factor is drawn once per
// run during on_run_start and added to every particle's time-0 potential.
template <class State>
FeynmanKacModel<State> build_twisted_model(const FeynmanKacModel<State>& base,
                                           std::shared_ptr<const TwistSchedule<State>> schedule) {
  if (!schedule || schedule->terminal_time() != base.terminal_time) {
    throw std::invalid_argument("build_twisted_model: schedule length must be n+1");
  }
  const int n = base.terminal_time;

  FeynmanKacModel<State> twisted;
  twisted.terminal_time = n;
  twisted.state_dim = base.state_dim;
  twisted.counters = base.counters;

  auto stats = std::make_shared<TwistRunStats>();
  stats->reset(n);
  twisted.twist_stats = stats;

  auto shared = std::make_shared<detail::TwistedRunShared<State>>();

  // base closures are copied so the twisted model does not dangle if the
  // caller's model object goes away.
  auto base_initial = base.sample_initial;
  auto base_kernel = base.sample_kernel;
  auto base_potential = base.log_potential;
  auto base_copy = std::make_shared<FeynmanKacModel<State>>(base);

  twisted.on_run_start = [base_copy, schedule, shared, stats, n](Rng& rng) {
    stats->reset(n);
    if (schedule->exact_log_m0_psi.has_value()) {
      shared->log_m0_psi = *schedule->exact_log_m0_psi;
    } else {
      shared->log_m0_psi =
          detail::log_m0_psi_for_entry(schedule->entries[0], *base_copy, schedule->n_tilde, rng);
    }
  };

  auto counters = base.counters;
  twisted.sample_initial = [base_initial, schedule, stats, counters](Rng& rng) {
    const auto& entry = schedule->entries[0];
    const bool via_proposal = entry.proposal && entry.proposal->sample_initial;
    auto res = rejection_sample_initial<State>(
        base_initial, entry.psi, entry.proposal ? &*entry.proposal : nullptr,
        entry.max_rejection_trials, rng);
    stats->trials[0] += res.trials;
    stats->accepts[0] += 1;
    // proposal draws bypass the base sampler, so account for them here
    if (via_proposal && counters) counters->kernel_draws += res.trials;
    return std::move(res.state);
  };

  twisted.sample_kernel = [base_kernel, schedule, stats, counters](int p, const State& prev,
                                                                   Rng& rng) {
    const auto& entry = schedule->entries[static_cast<std::size_t>(p)];
    const bool via_proposal = entry.proposal && entry.proposal->sample;
    auto res = rejection_sample<State>(p, prev, base_kernel, entry.psi,
                                       entry.proposal ? &*entry.proposal : nullptr,
                                       entry.max_rejection_trials, rng);
    stats->trials[p] += res.trials;
    stats->accepts[p] += 1;
    if (via_proposal && counters) counters->kernel_draws += res.trials;
    return std::move(res.state);
  };

  twisted.log_potential = [base_copy, base_potential, schedule, shared, n](int p, const State& x,
                                                                           Rng& rng) {
    const auto& entries = schedule->entries;
    double lp = base_potential(p, x, rng) - entries[static_cast<std::size_t>(p)].psi.log_effective(x);
    if (p < n) {
      lp += detail::log_m_psi_for_entry(entries[static_cast<std::size_t>(p) + 1], p + 1, x,
                                        *base_copy, schedule->n_tilde, rng);
    }
    if (p == 0) {
      if (!shared->log_m0_psi.has_value()) {
        // run started without the setup hook; fall back to drawing here
        shared->log_m0_psi =
            detail::log_m0_psi_for_entry(entries[0], *base_copy, schedule->n_tilde, rng);
      }
      lp += *shared->log_m0_psi;
    }
    return lp;
  };

  return twisted;
}

template <class State>
FeynmanKacModel<State> build_twisted_model(const FeynmanKacModel<State>& base,
                                           TwistSchedule<State> schedule) {
  return build_twisted_model(base, std::make_shared<const TwistSchedule<State>>(std::move(schedule)));
}

struct AcceptanceTrace {
  std::vector<double> mean_trials;  // per time, 1.0 where nothing was rejected-sampled
  std::vector<double> rate;         // 1 / mean_trials
};

// Per-time mean rejection trials and the implied empirical acceptance rates
// of a completed run. Untwisted runs yield an all-ones trace.
template <class State>
AcceptanceTrace acceptance_trace(const ParticleRun<State>& run) {
  AcceptanceTrace out;
  out.mean_trials.resize(run.rejection_trials.size());
  out.rate.resize(run.rejection_trials.size());
  for (std::size_t p = 0; p < run.rejection_trials.size(); ++p) {
    const double t = run.rejection_trials[p] > 0.0 ? run.rejection_trials[p] : 1.0;
    out.mean_trials[p] = t;
    out.rate[p] = 1.0 / t;
  }
  return out;
}

}  // namespace twistpf
