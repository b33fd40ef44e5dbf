#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "twistpf/errors.hpp"
#include "twistpf/filter.hpp"
#include "twistpf/math.hpp"
#include "twistpf/twist.hpp"
#include "twistpf/twisted_model.hpp"

namespace twistpf {

enum class FitClass { Isotropic, Diagonal };

struct LearnConfig {
  int iterations = 1;              // learning sweeps run by the pipeline drivers
  int n_tilde_learn = 1;           // Monte Carlo samples inside the sweep
  std::vector<double> alpha_min = {0.04};  // per-iteration targets; last value repeats
  FitClass fit_class = FitClass::Isotropic;
  double ridge = 1e-8;             // scaled by the Gram-matrix trace
  double line_search_rel_tol = 0.05;
  int max_bisection_steps = 50;
  double floor = 5e-4;             // twist floor epsilon

  double alpha_for_iteration(int iteration) const {
    if (alpha_min.empty()) return 0.0;
    const std::size_t i = std::min<std::size_t>(iteration, alpha_min.size() - 1);
    return alpha_min[i];
  }
};

// ---------------------------------------------------------------------------
// Least-squares fit of log h(x) = a|x|^2 + b'x + c (isotropic) or
// sum_j a_j x_j^2 + b'x + c (diagonal) to log targets, via ridge-regularized
// normal equations.

struct QuadraticFit {
  TwistCoeffs coeffs;
  double rmse = 0.0;
};

QuadraticFit fit_log_quadratic(const std::vector<Eigen::VectorXd>& points,
                               const std::vector<double>& log_targets, FitClass fit_class,
                               double ridge);

// Scalar-state convenience (the two classes coincide in one dimension).
QuadraticFit fit_log_quadratic(const std::vector<double>& points,
                               const std::vector<double>& log_targets, double ridge);

// ---------------------------------------------------------------------------
// Acceptance-rate estimation. One batch of kernel draws is shared by every
// alpha evaluation, so tempering line searches and proposal searches are
// deterministic functions of the batch.

template <class State>
struct DrawBatch {
  std::vector<std::vector<State>> draws;           // draws[i][j] ~ M_p(particle_i, .)
  std::vector<double> log_particle_weights;        // per-particle, normalized up to a constant
  std::vector<std::vector<double>> log_draw_weights;  // empty => uniform over j
};

template <class State>
DrawBatch<State> make_draw_batch(const std::vector<State>& particles,
                                 const std::vector<double>& weights,
                                 const std::function<State(const State&, Rng&)>& kernel,
                                 int n_tilde, const StreamSet& streams, int time) {
  DrawBatch<State> batch;
  const std::size_t n = particles.size();
  batch.draws.resize(n);
  batch.log_particle_weights.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    batch.log_particle_weights[i] = weights.empty() ? 0.0 : std::log(weights[i]);
    Rng rng = streams.at(i, static_cast<std::uint64_t>(time), StreamPurpose::Learn);
    auto& row = batch.draws[i];
    row.reserve(n_tilde);
    for (int j = 0; j < n_tilde; ++j) row.push_back(kernel(particles[i], rng));
  }
  return batch;
}

// Initial-time batch: one logical particle holding `count` draws from M_0.
template <class State>
DrawBatch<State> make_initial_draw_batch(const std::function<State(Rng&)>& sample_initial,
                                         int count, const StreamSet& streams) {
  DrawBatch<State> batch;
  batch.draws.resize(1);
  batch.log_particle_weights.assign(1, 0.0);
  Rng rng = streams.shared(0, StreamPurpose::Learn);
  auto& row = batch.draws[0];
  row.reserve(count);
  for (int j = 0; j < count; ++j) row.push_back(sample_initial(rng));
  return batch;
}

// Per-particle terms of the acceptance-rate estimator for the twisting
// function omega = target^beta with proposal rho:
//
//   a_i(beta, q) = (sum_j omega(z_ij))^q / sum_j psi(z_ij)
//   h_i(rho)     = 1 / sum_j rho(z_ij)
//   alpha        = sum_i W_i a_i(beta,2) h_i / sum_i W_i a_i(beta,1)
//
// computed in log space. With rho absent the h term reduces to the uniform
// 1/Ntilde normalization.
struct AcceptanceEstimate {
  std::vector<double> log_a1;
  std::vector<double> log_a2h;
  double alpha = 0.0;
};

struct AcceptanceTable {
  std::vector<double> log_w;
  std::vector<std::vector<double>> log_target;  // raw, tempering applied at evaluation
  std::vector<std::vector<double>> log_psi;
  std::vector<std::vector<double>> log_rho;     // empty => rho identically 1
  std::vector<std::vector<double>> log_draw_w;  // empty => uniform

  AcceptanceEstimate estimate(double beta) const {
    const std::size_t n = log_target.size();
    AcceptanceEstimate out;
    out.log_a1.resize(n);
    out.log_a2h.resize(n);
    std::vector<double> num(n), den(n), scratch;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& t = log_target[i];
      const std::size_t m = t.size();
      scratch.resize(m);
      auto lse_of = [&](auto&& value) {
        for (std::size_t j = 0; j < m; ++j) {
          scratch[j] = value(j) + (log_draw_w.empty() ? 0.0 : log_draw_w[i][j]);
        }
        return log_sum_exp(scratch);
      };
      const double lse_t = lse_of([&](std::size_t j) { return beta * t[j]; });
      const double lse_p = lse_of([&](std::size_t j) { return log_psi[i][j]; });
      const double lse_r = log_rho.empty() ? lse_of([](std::size_t) { return 0.0; })
                                           : lse_of([&](std::size_t j) { return log_rho[i][j]; });
      out.log_a1[i] = lse_t - lse_p;
      out.log_a2h[i] = 2.0 * lse_t - lse_p - lse_r;
      den[i] = log_w[i] + out.log_a1[i];
      num[i] = log_w[i] + out.log_a2h[i];
    }
    out.alpha = std::exp(log_sum_exp(num) - log_sum_exp(den));
    return out;
  }

  double alpha(double beta) const { return estimate(beta).alpha; }
};

template <class State>
AcceptanceTable make_acceptance_table(const DrawBatch<State>& batch,
                                      const std::function<double(const State&)>& log_psi,
                                      const std::function<double(const State&)>& log_target,
                                      const std::function<double(const State&)>* log_rho = nullptr) {
  AcceptanceTable table;
  const std::size_t n = batch.draws.size();
  table.log_w = batch.log_particle_weights;
  table.log_target.resize(n);
  table.log_psi.resize(n);
  if (log_rho != nullptr) table.log_rho.resize(n);
  table.log_draw_w = batch.log_draw_weights;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& row = batch.draws[i];
    table.log_target[i].resize(row.size());
    table.log_psi[i].resize(row.size());
    if (log_rho != nullptr) table.log_rho[i].resize(row.size());
    for (std::size_t j = 0; j < row.size(); ++j) {
      table.log_target[i][j] = log_target(row[j]);
      table.log_psi[i][j] = log_psi(row[j]);
      if (log_rho != nullptr) table.log_rho[i][j] = (*log_rho)(row[j]);
    }
  }
  return table;
}

// One-call form: draws its own batch, then evaluates at the given beta.
template <class State>
AcceptanceEstimate estimate_acceptance(const std::vector<State>& particles,
                                       const std::vector<double>& weights,
                                       const std::function<State(const State&, Rng&)>& kernel,
                                       const std::function<double(const State&)>& log_psi,
                                       const std::function<double(const State&)>& log_target,
                                       const std::function<double(const State&)>* log_rho,
                                       double beta, int n_tilde, const StreamSet& streams,
                                       int time) {
  const auto batch = make_draw_batch<State>(particles, weights, kernel, n_tilde, streams, time);
  return make_acceptance_table(batch, log_psi, log_target, log_rho).estimate(beta);
}

// ---------------------------------------------------------------------------
// Tempering (line search on beta) and partial-twist selection, both acting on
// a fixed acceptance table.

struct TemperResult {
  double beta = 1.0;
  double alpha_pre = 0.0;   // estimated rate at beta = 1
  double alpha_post = 0.0;  // estimated rate at the returned beta
};

TemperResult temper_to_target(const AcceptanceTable& table, double alpha_min,
                              double rel_tol = 0.05, int max_steps = 50);

struct PartialTwistChoice {
  double param = 0.0;
  double alpha = 0.0;
};

// Maximizes the estimated acceptance rate over a one-parameter proposal
// family rho(param, .) on [lo, hi]: coarse grid, then golden-section
// refinement around the best grid cell. All evaluations share `batch`.
//
// Each candidate is scored at its realized acceptance: the raw estimator is
// divided by the batch supremum of omega/rho (clamped at one), which is what
// normalizing the acceptance ratio to [0, 1] costs the sampler. Without this
// the objective grows without bound as rho shrinks. The trivial proposal
// rho = 1 is unaffected (omega never exceeds one), and rho = omega scores
// exactly one.
template <class State>
PartialTwistChoice maximize_partial_twist(const DrawBatch<State>& batch,
                                          const std::function<double(const State&)>& log_psi,
                                          const std::function<double(const State&)>& log_target,
                                          double beta,
                                          const std::function<double(double, const State&)>& rho_family,
                                          double lo, double hi, int grid_points = 33) {
  AcceptanceTable table = make_acceptance_table<State>(batch, log_psi, log_target);
  table.log_rho.resize(batch.draws.size());

  auto alpha_at = [&](double param) {
    double log_sup_ratio = 0.0;
    for (std::size_t i = 0; i < batch.draws.size(); ++i) {
      auto& row = table.log_rho[i];
      row.resize(batch.draws[i].size());
      for (std::size_t j = 0; j < row.size(); ++j) {
        row[j] = rho_family(param, batch.draws[i][j]);
        log_sup_ratio = std::max(log_sup_ratio, beta * table.log_target[i][j] - row[j]);
      }
    }
    return table.alpha(beta) * std::exp(-log_sup_ratio);
  };

  if (!(hi > lo)) return {lo, alpha_at(lo)};

  double best_param = lo, best_alpha = -1.0;
  int best_index = 0;
  for (int g = 0; g < grid_points; ++g) {
    const double param = lo + (hi - lo) * g / (grid_points - 1);
    const double a = alpha_at(param);
    if (a > best_alpha) {
      best_alpha = a;
      best_param = param;
      best_index = g;
    }
  }

  double a_lo = lo + (hi - lo) * std::max(0, best_index - 1) / (grid_points - 1);
  double a_hi = lo + (hi - lo) * std::min(grid_points - 1, best_index + 1) / (grid_points - 1);
  const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
  double x1 = a_hi - gr * (a_hi - a_lo);
  double x2 = a_lo + gr * (a_hi - a_lo);
  double f1 = alpha_at(x1), f2 = alpha_at(x2);
  for (int it = 0; it < 60 && (a_hi - a_lo) > 1e-10 * (hi - lo); ++it) {
    if (f1 < f2) {
      a_lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = a_lo + gr * (a_hi - a_lo);
      f2 = alpha_at(x2);
    } else {
      a_hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = a_hi - gr * (a_hi - a_lo);
      f1 = alpha_at(x1);
    }
  }
  const double refined = f1 > f2 ? x1 : x2;
  const double refined_alpha = std::max(f1, f2);
  if (refined_alpha > best_alpha) {
    best_param = refined;
    best_alpha = refined_alpha;
  }
  return {best_param, best_alpha};
}

// ---------------------------------------------------------------------------
// One backward learning sweep.

template <class State>
struct FittedTwist {
  std::function<double(const State&)> log_eval;
  bool has_coeffs = false;
  TwistCoeffs coeffs;
  double rmse = 0.0;
};

// Regression oracle mapping (points, log targets) to a fitted member of the
// approximation class. The default fitters use fit_log_quadratic; tests may
// substitute e.g. tabular fits for finite state spaces.
template <class State>
using TwistFitter =
    std::function<FittedTwist<State>(const std::vector<State>&, const std::vector<double>&)>;

TwistFitter<Eigen::VectorXd> quadratic_fitter(FitClass fit_class, double ridge);
TwistFitter<double> scalar_quadratic_fitter(double ridge);

template <class State>
struct LearnHooks {
  // Exact M_{p}(psi)(x) in log scale; replaces the Monte Carlo estimate in
  // the lambda targets when set (oracle tests, analytic models).
  std::function<double(int p, const TwistFunction<State>&, const State&)> exact_log_m_psi;

  // One-parameter analytic proposal family for partial twisting.
  bool rho_enabled = false;
  std::function<double(double, const State&)> rho_family;
  double rho_lo = 0.0;
  double rho_hi = 0.0;
  std::function<TwistProposal<State>(int p, double param)> make_proposal;
};

struct LearnTimeReport {
  int time = 0;
  double beta = 1.0;
  double alpha_pre = 0.0;
  double alpha_post = 0.0;
  double rmse = 0.0;
  double rho_param = 0.0;
};

template <class State>
struct LearnSweepResult {
  TwistSchedule<State> schedule;
  std::vector<LearnTimeReport> report;
};

// Backward sweep updating the twist schedule from one stored run:
// psi'_n tempers the (max-normalized) terminal potential, and for p < n the
// targets lambda_p(i) = G_p(z_p^i) / psi_p(z_p^i) * M~_{p+1}(psi'_{p+1})(z_p^i)
// are regressed in log scale, composed with the current twist and tempered to
// the acceptance target. Tempered twists are shifted so their empirical
// maximum over the training particles is one, then floored.
template <class State>
LearnSweepResult<State> learn_twists(const ParticleRun<State>& history,
                                     const FeynmanKacModel<State>& base,
                                     const TwistSchedule<State>& current, const LearnConfig& cfg,
                                     double alpha_min, const TwistFitter<State>& fitter,
                                     const StreamSet& streams,
                                     const LearnHooks<State>* hooks = nullptr) {
  if (!history.has_history) {
    throw std::invalid_argument("learn_twists: run history with stored paths is required");
  }
  const int n = base.terminal_time;
  const int big_n = history.num_particles;
  const double floor_log = std::log(cfg.floor);

  LearnSweepResult<State> out;
  out.schedule.n_tilde = current.n_tilde;
  out.schedule.entries.resize(n + 1);
  out.report.resize(n + 1);

  // Base potentials are treated as deterministic functions during learning.
  auto log_g = [&base](int p, const State& x) {
    Rng scratch(0x6c6f6767ULL + static_cast<std::uint64_t>(p));
    return base.log_potential(p, x, scratch);
  };

  const bool partial = hooks != nullptr && hooks->rho_enabled;

  for (int p = n; p >= 0; --p) {
    const std::vector<State>& train = history.states[p];
    const TwistFunction<State>& psi_cur = current.entries[p].psi;

    // Proposed raw twist at this time: the normalized terminal potential at
    // p = n, the composed psi * lambda below it.
    FittedTwist<State> proposed;
    if (p == n) {
      double g_max = kNegInf;
      for (const auto& x : train) g_max = std::max(g_max, log_g(n, x));
      proposed.log_eval = [log_g, n, g_max](const State& x) { return log_g(n, x) - g_max; };
      proposed.has_coeffs = false;
      proposed.coeffs.kind = TwistCoeffs::Kind::TerminalPotential;
      proposed.coeffs.constant = -g_max;
      proposed.rmse = std::numeric_limits<double>::quiet_NaN();
    } else {
      std::vector<double> targets(train.size());
      const TwistEntry<State>& next_entry = out.schedule.entries[p + 1];
      const TwistFunction<State>& psi_next = next_entry.psi;
      for (std::size_t i = 0; i < train.size(); ++i) {
        double m_term;
        if (hooks != nullptr && hooks->exact_log_m_psi) {
          m_term = hooks->exact_log_m_psi(p + 1, psi_next, train[i]);
        } else {
          Rng rng = streams.at(i, static_cast<std::uint64_t>(p), StreamPurpose::Learn);
          m_term = detail::log_m_psi_for_entry(next_entry, p + 1, train[i], base,
                                               cfg.n_tilde_learn, rng);
        }
        targets[i] = log_g(p, train[i]) - psi_cur.log_effective(train[i]) + m_term;
        if (!std::isfinite(targets[i])) {
          throw std::runtime_error("learn_twists: non-finite regression target at (p=" +
                                   std::to_string(p) + ", i=" + std::to_string(i) + ")");
        }
      }
      FittedTwist<State> fit = fitter(train, targets);
      if (psi_cur.has_coeffs && fit.has_coeffs &&
          psi_cur.coeffs.kind != TwistCoeffs::Kind::TerminalPotential) {
        TwistCoeffs composed =
            add_coeffs(psi_cur.coeffs, psi_cur.beta, fit.coeffs, 1.0, base.state_dim);
        composed.constant += psi_cur.shift;
        proposed.coeffs = composed;
        proposed.has_coeffs = true;
        auto shared = std::make_shared<TwistCoeffs>(composed);
        if constexpr (std::is_same_v<State, double>) {
          proposed.log_eval = [shared](const State& x) { return shared->eval_scalar(x); };
        } else if constexpr (std::is_same_v<State, Eigen::VectorXd>) {
          proposed.log_eval = [shared](const State& x) { return shared->eval(x); };
        } else {
          auto cur_eval = psi_cur;
          auto fit_eval = fit.log_eval;
          proposed.log_eval = [cur_eval, fit_eval](const State& x) {
            return cur_eval.log_effective(x) + fit_eval(x);
          };
          proposed.has_coeffs = false;
        }
      } else {
        auto cur_eval = psi_cur;
        auto fit_eval = fit.log_eval;
        proposed.log_eval = [cur_eval, fit_eval](const State& x) {
          return cur_eval.log_effective(x) + fit_eval(x);
        };
      }
      proposed.rmse = fit.rmse;
    }

    // Acceptance batch for this time: kernel draws from the updated particles
    // one step back, or fresh initial draws at p = 0.
    DrawBatch<State> batch;
    if (p == 0 || (p == n && n == 0)) {
      batch = make_initial_draw_batch<State>(base.sample_initial, big_n * cfg.n_tilde_learn,
                                             streams);
    } else {
      batch = make_draw_batch<State>(history.states[p - 1], history.weights[p - 1],
                                     [&base, p](const State& x, Rng& r) {
                                       return base.sample_kernel(p, x, r);
                                     },
                                     cfg.n_tilde_learn, streams, p);
    }
    auto log_psi_cur = [&psi_cur](const State& x) { return psi_cur.log_effective(x); };
    std::function<double(const State&)> log_psi_fn = log_psi_cur;
    std::function<double(const State&)> log_target_fn = proposed.log_eval;

    double rho_param = 0.0;
    if (partial) {
      const auto choice = maximize_partial_twist<State>(batch, log_psi_fn, log_target_fn, 1.0,
                                                        hooks->rho_family, hooks->rho_lo,
                                                        hooks->rho_hi);
      rho_param = choice.param;
    }

    AcceptanceTable table;
    if (partial && rho_param != 0.0) {
      auto fam = hooks->rho_family;
      std::function<double(const State&)> log_rho_fn = [fam, rho_param](const State& x) {
        return fam(rho_param, x);
      };
      table = make_acceptance_table<State>(batch, log_psi_fn, log_target_fn, &log_rho_fn);
    } else {
      table = make_acceptance_table<State>(batch, log_psi_fn, log_target_fn);
    }

    const TemperResult temper =
        temper_to_target(table, alpha_min, cfg.line_search_rel_tol, cfg.max_bisection_steps);

    // Shift so the (decomposition-adjusted) tempered twist peaks at one over
    // the training particles.
    double peak = kNegInf;
    for (const auto& x : train) {
      const double tilt = (partial && rho_param != 0.0) ? hooks->rho_family(rho_param, x) : 0.0;
      peak = std::max(peak, temper.beta * proposed.log_eval(x) - tilt);
    }

    auto& entry = out.schedule.entries[p];
    entry.psi.eval_log = proposed.log_eval;
    entry.psi.beta = temper.beta;
    entry.psi.shift = -peak;
    entry.psi.floor_log = floor_log;
    entry.psi.has_coeffs = proposed.has_coeffs || proposed.coeffs.kind == TwistCoeffs::Kind::TerminalPotential;
    entry.psi.coeffs = proposed.coeffs;
    entry.psi.coeffs.tilt = rho_param;
    if (rho_param != 0.0) {
      auto fam = hooks->rho_family;
      entry.psi.log_tilt = [fam, rho_param](const State& x) { return fam(rho_param, x); };
      entry.proposal = hooks->make_proposal(p, rho_param);
    }
    entry.max_rejection_trials = rejection_trial_cap(floor_log);

    out.report[p] = {p, temper.beta, temper.alpha_pre, temper.alpha_post, proposed.rmse,
                     rho_param};
  }
  return out;
}

}  // namespace twistpf
