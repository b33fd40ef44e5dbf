#include "twistpf/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <map>
#include <thread>

#include "twistpf/errors.hpp"
#include "twistpf/learning.hpp"
#include "twistpf/twist_io.hpp"
#include "twistpf/twisted_model.hpp"

namespace twistpf {

namespace {

constexpr std::uint64_t kPhaseBpf = 1;
constexpr std::uint64_t kPhaseLearnRun = 100;    // + iteration
constexpr std::uint64_t kPhaseLearnSweep = 200;  // + iteration
constexpr std::uint64_t kPhaseFinalRun = 300;
constexpr std::uint64_t kPhaseOptPilot = 400;
constexpr std::uint64_t kPhaseOptTemper = 401;
constexpr std::uint64_t kPhaseOptRun = 402;
constexpr std::uint64_t kPhaseBpfMemory = 500;
constexpr std::uint64_t kPhaseBpfCompute = 501;

StreamSet phase_streams(std::uint64_t rep_key, std::uint64_t phase) {
  return StreamSet{mix_key(rep_key, phase)};
}

double now_ms() {
  return std::chrono::duration<double, std::milli>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

int resolve_workers(const ExperimentConfig& cfg) {
  if (cfg.workers > 0) return cfg.workers;
  if (const char* env = std::getenv("TWISTPF_WORKERS")) {
    const int w = std::atoi(env);
    if (w > 0) return w;
  }
  const unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}

// Summary of the final run's per-time acceptance against 0.5 * alpha_min.
void fill_acceptance_summary(ExperimentRecord& rec, const std::vector<double>& trials,
                             double alpha_min) {
  double sum = 0.0, min_rate = 1.0;
  int ok_count = 0;
  int counted = 0;
  for (double t : trials) {
    const double rate = t > 0.0 ? 1.0 / t : 1.0;
    sum += rate;
    min_rate = std::min(min_rate, rate);
    if (rate >= 0.5 * alpha_min) ++ok_count;
    ++counted;
  }
  rec.accept_mean = counted > 0 ? sum / counted : 1.0;
  rec.accept_min = counted > 0 ? min_rate : 1.0;
  rec.accept_frac_ok = counted > 0 ? static_cast<double>(ok_count) / counted : 1.0;
}

// ---------------------------------------------------------------------------
// Generic per-repetition pipelines, instantiated for the two model families.

template <class State>
struct FamilyOps {
  std::function<FeynmanKacModel<State>(std::shared_ptr<SimCounters>)> make_base;
  TwistFitter<State> fitter;
  const LearnHooks<State>* hooks = nullptr;
};

template <class State>
ExperimentRecord run_bpf_rep(const FamilyOps<State>& family, const ExperimentConfig& cfg,
                             const std::string& label, int num_particles, int rep,
                             std::uint64_t phase) {
  ExperimentRecord rec;
  rec.method = label;
  rec.rep = rep;
  rec.seed = mix_key(cfg.seed, static_cast<std::uint64_t>(rep));
  const double t0 = now_ms();
  auto counters = std::make_shared<SimCounters>();
  const auto base = family.make_base(counters);
  const auto run = run_filter(base, num_particles, ResamplingPolicy::adaptive(cfg.kappa),
                              phase_streams(rec.seed, phase));
  rec.log_z_hat = run.log_z_hat;
  rec.kernel_sims = counters->kernel_draws;
  rec.mean_trials = 1.0;
  rec.resamples = run.resample_count();
  fill_acceptance_summary(rec, run.rejection_trials, cfg.final_alpha_min());
  rec.wall_ms = now_ms() - t0;
  return rec;
}

template <class State>
struct TpfLearnOutcome {
  ExperimentRecord record;
  TwistSchedule<State> schedule;
  std::vector<std::vector<LearnTimeReport>> reports;  // per sweep
};

template <class State>
TpfLearnOutcome<State> run_tpf_learn_rep(const FamilyOps<State>& family,
                                         const ExperimentConfig& cfg, int rep) {
  TpfLearnOutcome<State> out;
  ExperimentRecord& rec = out.record;
  rec.method = "tpf-learn";
  rec.rep = rep;
  rec.seed = mix_key(cfg.seed, static_cast<std::uint64_t>(rep));
  const double t0 = now_ms();

  auto counters = std::make_shared<SimCounters>();
  const auto base = family.make_base(counters);
  const int n = base.terminal_time;
  const int n_learn = cfg.learn_particles > 0 ? cfg.learn_particles : cfg.num_particles;

  LearnConfig learn_cfg;
  learn_cfg.iterations = cfg.iterations;
  learn_cfg.n_tilde_learn = cfg.n_tilde_learn > 0 ? cfg.n_tilde_learn : cfg.n_tilde;
  learn_cfg.alpha_min = cfg.alpha_min;
  learn_cfg.floor = cfg.floor;

  TwistSchedule<State> schedule = TwistSchedule<State>::unit(n, cfg.n_tilde);
  ParticleRun<State> history =
      run_filter(base, n_learn, ResamplingPolicy::adaptive(cfg.kappa),
                 phase_streams(rec.seed, kPhaseBpf), FilterOptions{true});

  long long trials_total = 0, accepts_total = 0;
  std::vector<double> final_trials;

  for (int it = 1; it <= cfg.iterations; ++it) {
    const double alpha = learn_cfg.alpha_for_iteration(it - 1);
    auto sweep = learn_twists<State>(history, base, schedule, learn_cfg, alpha, family.fitter,
                                     phase_streams(rec.seed, kPhaseLearnSweep + it),
                                     family.hooks);
    schedule = std::move(sweep.schedule);
    schedule.n_tilde = cfg.n_tilde;
    out.reports.push_back(std::move(sweep.report));

    const bool final_run = it == cfg.iterations;
    const auto twisted = build_twisted_model(base, schedule);
    const auto run =
        run_filter(twisted, final_run ? cfg.num_particles : n_learn,
                   ResamplingPolicy::adaptive(cfg.kappa),
                   phase_streams(rec.seed, final_run ? kPhaseFinalRun : kPhaseLearnRun + it),
                   FilterOptions{!final_run});
    for (std::size_t p = 0; p < twisted.twist_stats->trials.size(); ++p) {
      trials_total += twisted.twist_stats->trials[p];
      accepts_total += twisted.twist_stats->accepts[p];
    }
    if (final_run) {
      rec.log_z_hat = run.log_z_hat;
      rec.resamples = run.resample_count();
      final_trials = run.rejection_trials;
    } else {
      history = run;
    }
  }

  rec.kernel_sims = counters->kernel_draws;
  rec.mean_trials =
      accepts_total > 0 ? static_cast<double>(trials_total) / accepts_total : 1.0;
  fill_acceptance_summary(rec, final_trials, cfg.final_alpha_min());
  rec.wall_ms = now_ms() - t0;
  out.schedule = std::move(schedule);
  return out;
}

// Tempered analytic-twist baseline (linear Gaussian model only): betas are
// chosen by the acceptance line search against an untwisted pilot run, then
// the filter runs with the tempered, floored analytic twists through the
// same rejection/Monte Carlo machinery as a learnt schedule.
ExperimentRecord run_tpf_opt_rep(const LgssmParams& params, const ExperimentConfig& cfg,
                                 int rep) {
  ExperimentRecord rec;
  rec.method = "tpf-opt";
  rec.rep = rep;
  rec.seed = mix_key(cfg.seed, static_cast<std::uint64_t>(rep));
  const double t0 = now_ms();

  auto counters = std::make_shared<SimCounters>();
  const auto base = make_fk_model(params, counters);
  const int n = params.terminal_time;
  const double alpha_target = cfg.final_alpha_min();

  const auto pilot = run_filter(base, cfg.num_particles, ResamplingPolicy::adaptive(cfg.kappa),
                                phase_streams(rec.seed, kPhaseOptPilot), FilterOptions{true});

  const auto opt_coeffs = lgssm_optimal_twists(params);
  // untempered schedule gives the analytic sup-normalizing shifts
  const TwistSchedule<Eigen::VectorXd> unit_beta_schedule = lgssm_optimal_schedule(params, {});
  const StreamSet temper_streams = phase_streams(rec.seed, kPhaseOptTemper);
  const int n_tilde = std::max(1, cfg.n_tilde_learn > 0 ? cfg.n_tilde_learn : cfg.n_tilde);

  std::vector<double> betas(n + 1, 1.0);
  for (int p = 0; p <= n; ++p) {
    const double shift = unit_beta_schedule.entries[p].psi.shift;
    auto target = [coeffs = opt_coeffs[p], shift](const Eigen::VectorXd& x) {
      return coeffs.eval(x) + shift;
    };
    std::function<double(const Eigen::VectorXd&)> log_psi = [](const Eigen::VectorXd&) {
      return 0.0;
    };
    std::function<double(const Eigen::VectorXd&)> log_target = target;

    DrawBatch<Eigen::VectorXd> batch;
    if (p == 0) {
      batch = make_initial_draw_batch<Eigen::VectorXd>(base.sample_initial,
                                                       cfg.num_particles * n_tilde,
                                                       temper_streams);
    } else {
      batch = make_draw_batch<Eigen::VectorXd>(
          pilot.states[p - 1], pilot.weights[p - 1],
          [&base, p](const Eigen::VectorXd& x, Rng& r) { return base.sample_kernel(p, x, r); },
          n_tilde, temper_streams, p);
    }
    const auto table = make_acceptance_table<Eigen::VectorXd>(batch, log_psi, log_target);
    betas[p] = temper_to_target(table, alpha_target).beta;
  }

  const auto schedule =
      lgssm_optimal_schedule(params, betas, std::log(cfg.floor), false, cfg.n_tilde);
  const auto twisted = build_twisted_model(base, schedule);
  const auto run = run_filter(twisted, cfg.num_particles, ResamplingPolicy::adaptive(cfg.kappa),
                              phase_streams(rec.seed, kPhaseOptRun));

  rec.log_z_hat = run.log_z_hat;
  rec.kernel_sims = counters->kernel_draws;
  long long trials_total = 0, accepts_total = 0;
  for (std::size_t p = 0; p < twisted.twist_stats->trials.size(); ++p) {
    trials_total += twisted.twist_stats->trials[p];
    accepts_total += twisted.twist_stats->accepts[p];
  }
  rec.mean_trials =
      accepts_total > 0 ? static_cast<double>(trials_total) / accepts_total : 1.0;
  rec.resamples = run.resample_count();
  fill_acceptance_summary(rec, run.rejection_trials, alpha_target);
  rec.wall_ms = now_ms() - t0;
  return rec;
}

// ---------------------------------------------------------------------------
// Family construction.

struct LgssmFamily {
  LgssmParams params;
  FamilyOps<Eigen::VectorXd> ops;

  explicit LgssmFamily(LgssmParams p) : params(std::move(p)) {
    params.validate();
    LgssmParams copy = params;
    ops.make_base = [copy](std::shared_ptr<SimCounters> counters) {
      return make_fk_model(copy, std::move(counters));
    };
    ops.fitter = quadratic_fitter(FitClass::Isotropic, 1e-8);
    ops.hooks = nullptr;
  }
};

struct SvFamily {
  SvParams params;
  LearnHooks<double> hooks;
  FamilyOps<double> ops;

  explicit SvFamily(SvParams p) : params(std::move(p)) {
    params.validate();
    SvParams copy = params;
    ops.make_base = [copy](std::shared_ptr<SimCounters> counters) {
      return make_fk_model(copy, std::move(counters));
    };
    ops.fitter = scalar_quadratic_fitter(1e-8);
    hooks.rho_enabled = true;
    hooks.rho_family = [](double b, const double& x) { return b * x; };
    // negative tilts down to just above the inadmissible boundary; modest
    // positive tilts for times whose twist increases in the volatility
    const double bound = std::min(params.rate_c(), params.stationary_rate());
    hooks.rho_lo = -0.99 * bound;
    hooks.rho_hi = 0.0;
    hooks.make_proposal = [copy](int, double b) { return sv_make_proposal(copy, b); };
    ops.hooks = &hooks;
  }
};

template <class State, class RunOne>
std::vector<ExperimentRecord> run_reps(const ExperimentConfig& cfg, RunOne&& run_one) {
  const int reps = cfg.repetitions;
  std::vector<std::vector<ExperimentRecord>> per_rep(reps);
  std::atomic<int> next{0};
  const int workers = std::min(resolve_workers(cfg), std::max(1, reps));

  auto worker = [&]() {
    while (true) {
      const int rep = next.fetch_add(1);
      if (rep >= reps) break;
      try {
        per_rep[rep] = run_one(rep);
      } catch (const std::exception& e) {
        ExperimentRecord rec;
        rec.method = cfg.method;
        rec.rep = rep;
        rec.seed = mix_key(cfg.seed, static_cast<std::uint64_t>(rep));
        rec.ok = false;
        rec.reason = e.what();
        per_rep[rep] = {rec};
      }
    }
  };

  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  std::vector<ExperimentRecord> records;
  for (auto& group : per_rep) {
    for (auto& rec : group) records.push_back(std::move(rec));
  }
  return records;
}

template <class State>
std::vector<ExperimentRecord> run_family_experiment(const FamilyOps<State>& family,
                                                    const LgssmParams* lgssm_params,
                                                    const ExperimentConfig& cfg) {
  auto one_rep = [&](int rep) -> std::vector<ExperimentRecord> {
    if (cfg.method == "bpf") {
      return {run_bpf_rep(family, cfg, "bpf", cfg.num_particles, rep, kPhaseBpf)};
    }
    if (cfg.method == "tpf-learn") {
      return {run_tpf_learn_rep(family, cfg, rep).record};
    }
    if (cfg.method == "tpf-opt") {
      if (lgssm_params == nullptr) {
        throw ConfigError("experiment.method", "tpf-opt is only defined for the lgssm model");
      }
      return {run_tpf_opt_rep(*lgssm_params, cfg, rep)};
    }
    if (cfg.method == "compare") {
      std::vector<ExperimentRecord> group;
      auto tpf = run_tpf_learn_rep(family, cfg, rep);
      group.push_back(tpf.record);
      if (lgssm_params != nullptr) group.push_back(run_tpf_opt_rep(*lgssm_params, cfg, rep));

      const BaselineSizes sizes = size_baselines({tpf.record}, cfg.num_particles, cfg.n_tilde);
      group.push_back(run_bpf_rep(family, cfg, "bpf-memory",
                                  static_cast<int>(sizes.n_memory), rep, kPhaseBpfMemory));
      group.push_back(run_bpf_rep(family, cfg, "bpf-compute",
                                  static_cast<int>(sizes.n_compute[0]), rep, kPhaseBpfCompute));
      return group;
    }
    throw ConfigError("experiment.method", "unknown method '" + cfg.method + "'");
  };
  return run_reps<State>(cfg, one_rep);
}

}  // namespace

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
  return from_document(KvDocument::parse_file(path));
}

ExperimentConfig ExperimentConfig::from_document(const KvDocument& doc) {
  ExperimentConfig cfg;
  cfg.model = doc.get_string("experiment", "model");
  cfg.params_path = doc.get_string("experiment", "params");
  cfg.method = doc.get_string("experiment", "method", "bpf");
  cfg.num_particles = static_cast<int>(doc.get_int("experiment", "particles", 100));
  cfg.learn_particles = static_cast<int>(doc.get_int("experiment", "learn_particles", 0));
  cfg.n_tilde = static_cast<int>(doc.get_int("experiment", "n_tilde", 1));
  cfg.n_tilde_learn = static_cast<int>(doc.get_int("experiment", "n_tilde_learn", 0));
  cfg.iterations = static_cast<int>(doc.get_int("experiment", "iterations", 1));
  cfg.alpha_min = doc.get_array("experiment", "alpha_min", {0.04});
  cfg.kappa = doc.get_double("experiment", "kappa", 0.5);
  cfg.floor = doc.get_double("experiment", "floor", 5e-4);
  cfg.repetitions = static_cast<int>(doc.get_int("experiment", "repetitions", 1));
  cfg.seed = static_cast<std::uint64_t>(doc.get_int("experiment", "seed", 0));
  cfg.out_path = doc.get_string("experiment", "out", "");
  cfg.workers = static_cast<int>(doc.get_int("experiment", "workers", 0));

  if (cfg.num_particles < 1) throw ConfigError("experiment.particles", "must be positive");
  if (cfg.n_tilde < 1) throw ConfigError("experiment.n_tilde", "must be positive");
  if (cfg.iterations < 1) throw ConfigError("experiment.iterations", "must be positive");
  if (cfg.repetitions < 1) throw ConfigError("experiment.repetitions", "must be positive");
  if (cfg.kappa < 0.0 || cfg.kappa > 1.0) throw ConfigError("experiment.kappa", "must lie in [0,1]");
  for (double a : cfg.alpha_min) {
    if (a <= 0.0 || a > 1.0) throw ConfigError("experiment.alpha_min", "entries must lie in (0,1]");
  }
  return cfg;
}

std::vector<std::string> record_header() {
  return {"method",      "rep",         "seed",        "status",   "log_z_hat",
          "kernel_sims", "mean_trials", "accept_mean", "accept_min", "accept_frac_ok",
          "resamples",   "wall_ms",     "reason"};
}

CsvTable records_to_csv(const std::vector<ExperimentRecord>& records) {
  CsvTable table;
  table.header = record_header();
  for (const auto& r : records) {
    table.rows.push_back({r.method, std::to_string(r.rep), std::to_string(r.seed),
                          r.ok ? "ok" : "failed", format_double(r.log_z_hat),
                          std::to_string(r.kernel_sims), format_double(r.mean_trials),
                          format_double(r.accept_mean), format_double(r.accept_min),
                          format_double(r.accept_frac_ok), std::to_string(r.resamples),
                          format_double(r.wall_ms), r.reason});
  }
  return table;
}

std::vector<ExperimentRecord> records_from_csv(const CsvTable& table) {
  std::vector<ExperimentRecord> out;
  for (const auto& row : table.rows) {
    ExperimentRecord r;
    r.method = row.at(0);
    r.rep = std::stoi(row.at(1));
    r.seed = std::stoull(row.at(2));
    r.ok = row.at(3) == "ok";
    r.log_z_hat = std::stod(row.at(4));
    r.kernel_sims = std::stoll(row.at(5));
    r.mean_trials = std::stod(row.at(6));
    r.accept_mean = std::stod(row.at(7));
    r.accept_min = std::stod(row.at(8));
    r.accept_frac_ok = std::stod(row.at(9));
    r.resamples = std::stoi(row.at(10));
    r.wall_ms = std::stod(row.at(11));
    if (row.size() > 12) r.reason = row[12];
    out.push_back(std::move(r));
  }
  return out;
}

void write_records_csv(const std::string& path, const std::vector<ExperimentRecord>& records) {
  write_csv(path, records_to_csv(records));
}

std::vector<ExperimentRecord> read_records_csv(const std::string& path) {
  return records_from_csv(read_csv(path));
}

std::string records_fingerprint(const CsvTable& table) {
  const int wall_col = table.column("wall_ms");
  std::string out;
  for (const auto& row : table.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (static_cast<int>(i) == wall_col) continue;
      out += row[i];
      out += '|';
    }
    out += '\n';
  }
  return out;
}

LgssmParams load_lgssm_params(const KvDocument& doc, bool need_data) {
  LgssmParams params;
  params.dim = static_cast<int>(doc.get_int("lgssm", "dim", 1));
  params.terminal_time = static_cast<int>(doc.get_int("lgssm", "n"));
  const auto mu0 = doc.get_array("lgssm", "mu0", {1.0});
  params.mu0 = mu0.size() == 1 ? Eigen::VectorXd::Constant(params.dim, mu0[0]).eval()
                               : Eigen::Map<const Eigen::VectorXd>(mu0.data(), mu0.size()).eval();
  params.sigma0_sq = doc.get_double("lgssm", "sigma0_sq", 1.0);
  params.sigma_m_sq = doc.get_double("lgssm", "sigma_m_sq", 1.0);
  params.sigma_g_sq = doc.get_double("lgssm", "sigma_g_sq", 1.0);
  params.transition = LgssmParams::banded_transition(params.dim, doc.get_double("lgssm", "a", 0.42));
  if (need_data) {
    const std::string data = doc.get_string("lgssm", "data");
    params.obs = read_lgssm_observations(data, params.dim);
    params.terminal_time = static_cast<int>(params.obs.size()) - 1;
  }
  params.validate(need_data);
  return params;
}

SvParams load_sv_params(const KvDocument& doc, bool need_data) {
  SvParams params;
  params.phi1 = doc.get_double("sv", "phi1", 0.09);
  params.phi2 = doc.get_double("sv", "phi2", 0.45);
  params.phi3 = doc.get_double("sv", "phi3", 0.11);
  params.sigma = doc.get_double("sv", "sigma", 0.25);
  params.terminal_time = static_cast<int>(doc.get_int("sv", "n", 0));
  if (need_data) {
    const std::string data = doc.get_string("sv", "data");
    params.returns = read_sv_returns(data);
    params.terminal_time = static_cast<int>(params.returns.size());
  }
  params.validate(need_data);
  return params;
}

void write_lgssm_observations(const std::string& path,
                              const std::vector<Eigen::VectorXd>& obs) {
  CsvTable table;
  table.header = {"t"};
  const int d = obs.empty() ? 0 : static_cast<int>(obs[0].size());
  for (int j = 0; j < d; ++j) table.header.push_back("y" + std::to_string(j + 1));
  for (std::size_t t = 0; t < obs.size(); ++t) {
    std::vector<std::string> row{std::to_string(t)};
    for (int j = 0; j < d; ++j) row.push_back(format_double(obs[t](j)));
    table.rows.push_back(std::move(row));
  }
  write_csv(path, table);
}

std::vector<Eigen::VectorXd> read_lgssm_observations(const std::string& path, int dim) {
  const CsvTable table = read_csv(path);
  if (static_cast<int>(table.header.size()) != dim + 1) {
    throw std::runtime_error("observation file " + path + " does not match dim " +
                             std::to_string(dim));
  }
  std::vector<Eigen::VectorXd> obs;
  obs.reserve(table.rows.size());
  for (const auto& row : table.rows) {
    Eigen::VectorXd y(dim);
    for (int j = 0; j < dim; ++j) y(j) = std::stod(row.at(j + 1));
    obs.push_back(std::move(y));
  }
  return obs;
}

void write_sv_returns(const std::string& path, const std::vector<double>& returns) {
  CsvTable table;
  table.header = {"t", "r"};
  for (std::size_t t = 0; t < returns.size(); ++t) {
    table.rows.push_back({std::to_string(t + 1), format_double(returns[t])});
  }
  write_csv(path, table);
}

std::vector<double> read_sv_returns(const std::string& path) {
  const CsvTable table = read_csv(path);
  std::vector<double> returns;
  returns.reserve(table.rows.size());
  for (const auto& row : table.rows) returns.push_back(std::stod(row.at(1)));
  return returns;
}

BaselineSizes size_baselines(const std::vector<ExperimentRecord>& tpf_records, int num_particles,
                             int n_tilde) {
  BaselineSizes sizes;
  sizes.n_memory = static_cast<long long>(num_particles) + n_tilde;
  sizes.n_compute.reserve(tpf_records.size());
  for (const auto& rec : tpf_records) {
    if (!(rec.mean_trials > 0.0)) {
      throw std::invalid_argument("size_baselines: record lacks a rejection-trial count");
    }
    sizes.n_compute.push_back(static_cast<long long>(
        std::ceil(num_particles * (3.0 * rec.mean_trials + 4.0 * n_tilde))));
  }
  return sizes;
}

std::vector<ExperimentRecord> run_experiment(const ExperimentConfig& cfg) {
  const KvDocument params_doc = KvDocument::parse_file(cfg.params_path);
  std::vector<ExperimentRecord> records;
  if (cfg.model == "lgssm") {
    LgssmFamily family(load_lgssm_params(params_doc));
    records = run_family_experiment<Eigen::VectorXd>(family.ops, &family.params, cfg);
  } else if (cfg.model == "sv") {
    SvFamily family(load_sv_params(params_doc));
    records = run_family_experiment<double>(family.ops, nullptr, cfg);
  } else {
    throw ConfigError("experiment.model", "unknown model '" + cfg.model + "'");
  }
  if (!cfg.out_path.empty()) write_records_csv(cfg.out_path, records);
  return records;
}

LearnPipelineOutput run_learn_pipeline(const ExperimentConfig& cfg) {
  const KvDocument params_doc = KvDocument::parse_file(cfg.params_path);
  LearnPipelineOutput out;
  out.n_tilde = cfg.n_tilde;
  out.report.header = {"iteration", "time", "beta", "alpha_pre", "alpha_post", "rmse", "rho"};

  auto fill_report = [&out](const std::vector<std::vector<LearnTimeReport>>& reports) {
    for (std::size_t it = 0; it < reports.size(); ++it) {
      for (const auto& r : reports[it]) {
        out.report.rows.push_back({std::to_string(it + 1), std::to_string(r.time),
                                   format_double(r.beta), format_double(r.alpha_pre),
                                   format_double(r.alpha_post), format_double(r.rmse),
                                   format_double(r.rho_param)});
      }
    }
  };

  if (cfg.model == "lgssm") {
    LgssmFamily family(load_lgssm_params(params_doc));
    auto outcome = run_tpf_learn_rep(family.ops, cfg, 0);
    fill_report(outcome.reports);
    out.schedule_records = to_records(outcome.schedule);
  } else if (cfg.model == "sv") {
    SvFamily family(load_sv_params(params_doc));
    auto outcome = run_tpf_learn_rep(family.ops, cfg, 0);
    fill_report(outcome.reports);
    out.schedule_records = to_records(outcome.schedule);
  } else {
    throw ConfigError("experiment.model", "unknown model '" + cfg.model + "'");
  }
  return out;
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw std::invalid_argument("quantile: empty sample");
  std::sort(values.begin(), values.end());
  if (q <= 0.0) return values.front();
  if (q >= 1.0) return values.back();
  const double h = q * static_cast<double>(values.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(h);
  const double frac = h - static_cast<double>(lo);
  if (lo + 1 >= values.size()) return values.back();
  return values[lo] * (1.0 - frac) + values[lo + 1] * frac;
}

Summary summarize(const std::vector<ExperimentRecord>& records, double reference_log_z,
                  const std::string& baseline_method) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<double>> errors;
  Summary summary;
  summary.long_format.header = {"method", "rep", "log_error", "abs_log_error", "sign"};

  for (const auto& rec : records) {
    if (!rec.ok) continue;
    if (errors.find(rec.method) == errors.end()) order.push_back(rec.method);
    const double err = rec.log_z_hat - reference_log_z;
    errors[rec.method].push_back(err);
    summary.long_format.rows.push_back({rec.method, std::to_string(rec.rep), format_double(err),
                                        format_double(std::abs(err)),
                                        err >= 0.0 ? "1" : "-1"});
  }
  if (errors.empty()) throw std::invalid_argument("summarize: no successful records");

  std::map<std::string, double> mse;
  for (const auto& [method, errs] : errors) {
    double acc = 0.0;
    for (double e : errs) acc += e * e;
    mse[method] = acc / static_cast<double>(errs.size());
  }
  const bool have_baseline = mse.find(baseline_method) != mse.end();

  summary.table.header = {"method", "count",        "mse",        "rel_mse",
                          "ratio_mean", "ratio_q10", "ratio_q90",  "abs_err_median",
                          "err_q025",   "err_q975"};
  for (const auto& method : order) {
    const auto& errs = errors[method];
    SummaryRow row;
    row.method = method;
    row.count = static_cast<int>(errs.size());
    row.mse = mse[method];
    row.rel_mse = have_baseline ? row.mse / mse[baseline_method]
                                : std::numeric_limits<double>::quiet_NaN();
    std::vector<double> ratios(errs.size()), abs_errs(errs.size());
    double ratio_sum = 0.0;
    for (std::size_t i = 0; i < errs.size(); ++i) {
      ratios[i] = std::exp(errs[i]);
      ratio_sum += ratios[i];
      abs_errs[i] = std::abs(errs[i]);
    }
    row.ratio_mean = ratio_sum / static_cast<double>(errs.size());
    row.ratio_q10 = quantile(ratios, 0.10);
    row.ratio_q90 = quantile(ratios, 0.90);
    row.abs_err_median = quantile(abs_errs, 0.5);
    row.err_q025 = quantile(errs, 0.025);
    row.err_q975 = quantile(errs, 0.975);
    summary.rows.push_back(row);
    summary.table.rows.push_back({row.method, std::to_string(row.count), format_double(row.mse),
                                  format_double(row.rel_mse), format_double(row.ratio_mean),
                                  format_double(row.ratio_q10), format_double(row.ratio_q90),
                                  format_double(row.abs_err_median), format_double(row.err_q025),
                                  format_double(row.err_q975)});
  }
  return summary;
}

}  // namespace twistpf
