#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "twistpf/config.hpp"
#include "twistpf/csv.hpp"
#include "twistpf/lgssm.hpp"
#include "twistpf/sv.hpp"

namespace twistpf {

struct ExperimentConfig {
  std::string model;        // "lgssm" | "sv"
  std::string params_path;  // key-value parameter file
  std::string method = "bpf";  // bpf | tpf-learn | tpf-opt | compare

  int num_particles = 100;   // N
  int learn_particles = 0;   // N0 for learning runs; 0 means N
  int n_tilde = 1;           // Monte Carlo samples for twisted potentials
  int n_tilde_learn = 0;     // Monte Carlo samples inside learning; 0 means n_tilde
  int iterations = 1;        // learning sweeps I
  std::vector<double> alpha_min = {0.04};
  double kappa = 0.5;
  double floor = 5e-4;

  int repetitions = 1;
  std::uint64_t seed = 0;
  std::string out_path;
  int workers = 0;  // 0: TWISTPF_WORKERS env or hardware concurrency

  static ExperimentConfig from_file(const std::string& path);
  static ExperimentConfig from_document(const KvDocument& doc);

  double final_alpha_min() const {
    return alpha_min.empty() ? 0.0 : alpha_min.back();
  }
};

struct ExperimentRecord {
  std::string method;
  int rep = 0;
  std::uint64_t seed = 0;
  bool ok = true;
  double log_z_hat = 0.0;
  long long kernel_sims = 0;
  double mean_trials = 1.0;      // R: mean rejection trials per accepted draw
  double accept_mean = 1.0;      // per-time acceptance summary of the final run
  double accept_min = 1.0;
  double accept_frac_ok = 1.0;   // fraction of times with rate >= 0.5 * alpha_min
  int resamples = 0;
  double wall_ms = 0.0;
  std::string reason;            // failure reason when !ok
};

std::vector<std::string> record_header();
CsvTable records_to_csv(const std::vector<ExperimentRecord>& records);
std::vector<ExperimentRecord> records_from_csv(const CsvTable& table);
void write_records_csv(const std::string& path, const std::vector<ExperimentRecord>& records);
std::vector<ExperimentRecord> read_records_csv(const std::string& path);

// All record fields except wall time, concatenated; two runs of the same
// config with the same seed must produce identical fingerprints.
std::string records_fingerprint(const CsvTable& table);

// Parameter loading. Observations/returns are read from the CSV named by the
// section's `data` key unless `need_data` is false.
LgssmParams load_lgssm_params(const KvDocument& doc, bool need_data = true);
SvParams load_sv_params(const KvDocument& doc, bool need_data = true);

void write_lgssm_observations(const std::string& path, const std::vector<Eigen::VectorXd>& obs);
std::vector<Eigen::VectorXd> read_lgssm_observations(const std::string& path, int dim);
void write_sv_returns(const std::string& path, const std::vector<double>& returns);
std::vector<double> read_sv_returns(const std::string& path);

// Comparative baseline sizes from twisted-filter records:
// compute-equivalent N' = ceil(N (3R + 4 Ntilde)) per repetition and the
// memory-equivalent N + Ntilde.
struct BaselineSizes {
  std::vector<long long> n_compute;  // per repetition
  long long n_memory = 0;
};
BaselineSizes size_baselines(const std::vector<ExperimentRecord>& tpf_records, int num_particles,
                             int n_tilde);

// Runs the configured experiment; one record per (method, repetition).
// Repetitions execute on a worker pool; failures are recorded and the
// remaining repetitions continue. Writes the records CSV when out_path is
// set.
std::vector<ExperimentRecord> run_experiment(const ExperimentConfig& cfg);

// Learning pipeline entry point used by the `learn` subcommand: runs one
// repetition's learning phase and returns the schedule records plus the
// per-iteration report table.
struct LearnPipelineOutput {
  CsvTable report;                     // iteration, time, beta, alpha_pre, alpha_post, rmse, rho
  std::vector<struct TwistRecord> schedule_records;
  int n_tilde = 1;
};
LearnPipelineOutput run_learn_pipeline(const ExperimentConfig& cfg);

// Sorted-order quantile with linear interpolation (values need not be sorted).
double quantile(std::vector<double> values, double q);

struct SummaryRow {
  std::string method;
  int count = 0;
  double mse = 0.0;
  double rel_mse = 0.0;        // vs the baseline method; NaN when absent
  double ratio_mean = 0.0;     // mean of Zhat^N / Zhat
  double ratio_q10 = 0.0;
  double ratio_q90 = 0.0;
  double abs_err_median = 0.0; // median |log Zhat^N - log Zhat|
  double err_q025 = 0.0;
  double err_q975 = 0.0;
};

struct Summary {
  std::vector<SummaryRow> rows;
  CsvTable table;        // summary rows
  CsvTable long_format;  // per-repetition plot-ready rows
};

Summary summarize(const std::vector<ExperimentRecord>& records, double reference_log_z,
                  const std::string& baseline_method = "tpf-opt");

}  // namespace twistpf
