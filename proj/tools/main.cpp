// twistpf command line tool: data simulation, filter experiments, twist
// learning, summaries and the exact-oracle self check.

#include <cstdio>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "twistpf/config.hpp"
#include "twistpf/csv.hpp"
#include "twistpf/discrete_checks.hpp"
#include "twistpf/experiment.hpp"
#include "twistpf/lgssm.hpp"
#include "twistpf/sv.hpp"
#include "twistpf/twist_io.hpp"

namespace {

int cmd_simulate(const std::string& model, const std::string& params_path, std::uint64_t seed,
                 int steps, const std::string& out_path) {
  const twistpf::KvDocument doc = twistpf::KvDocument::parse_file(params_path);
  twistpf::Rng rng(twistpf::mix_key(0x73696d75ULL, seed));
  if (model == "lgssm") {
    twistpf::LgssmParams params = twistpf::load_lgssm_params(doc, false);
    if (steps > 0) params.terminal_time = steps;
    const auto sim = twistpf::lgssm_simulate(params, rng);
    twistpf::write_lgssm_observations(out_path, sim.obs);
  } else if (model == "sv") {
    twistpf::SvParams params = twistpf::load_sv_params(doc, false);
    const int n = steps > 0 ? steps : params.terminal_time;
    const double x0 = doc.get_double("sv", "x0", params.phi1 / params.phi2);
    const auto sim = twistpf::sv_simulate(params, n, x0, rng);
    twistpf::write_sv_returns(out_path, sim.returns);
  } else {
    std::cerr << "unknown model '" << model << "' (expected lgssm or sv)\n";
    return 2;
  }
  std::cout << "wrote " << out_path << "\n";
  return 0;
}

int cmd_run(const std::string& config_path, const std::string& out_override) {
  twistpf::ExperimentConfig cfg = twistpf::ExperimentConfig::from_file(config_path);
  if (!out_override.empty()) cfg.out_path = out_override;
  const auto records = twistpf::run_experiment(cfg);
  int failed = 0;
  for (const auto& r : records) {
    if (!r.ok) {
      ++failed;
      std::cerr << "rep " << r.rep << " (" << r.method << ") failed: " << r.reason << "\n";
    }
  }
  std::cout << records.size() << " records";
  if (!cfg.out_path.empty()) std::cout << " -> " << cfg.out_path;
  std::cout << "\n";
  return failed == 0 ? 0 : 1;
}

int cmd_learn(const std::string& config_path, const std::string& schedule_out,
              const std::string& report_out) {
  twistpf::ExperimentConfig cfg = twistpf::ExperimentConfig::from_file(config_path);
  const auto result = twistpf::run_learn_pipeline(cfg);
  twistpf::save_twist_schedule(schedule_out, result.schedule_records, result.n_tilde);
  std::cout << "wrote " << schedule_out << "\n";
  if (!report_out.empty()) {
    twistpf::write_csv(report_out, result.report);
    std::cout << "wrote " << report_out << "\n";
  }
  return 0;
}

int cmd_summarize(const std::string& records_path, const std::string& reference,
                  double reference_value, const std::string& reference_records,
                  const std::string& params_path, const std::string& baseline,
                  const std::string& out_path, const std::string& plot_out) {
  const auto records = twistpf::read_records_csv(records_path);

  double ref_log_z = reference_value;
  if (reference == "kalman") {
    if (params_path.empty()) {
      std::cerr << "--reference kalman needs --params\n";
      return 2;
    }
    const auto doc = twistpf::KvDocument::parse_file(params_path);
    ref_log_z = twistpf::kalman_log_evidence(twistpf::load_lgssm_params(doc));
  } else if (reference == "records") {
    if (reference_records.empty()) {
      std::cerr << "--reference records needs --reference-records\n";
      return 2;
    }
    // log of the mean of Zhat over the reference repetitions
    const auto ref = twistpf::read_records_csv(reference_records);
    std::vector<double> vals;
    for (const auto& r : ref) {
      if (r.ok) vals.push_back(r.log_z_hat);
    }
    if (vals.empty()) {
      std::cerr << "reference records contain no successful repetitions\n";
      return 1;
    }
    ref_log_z = twistpf::log_sum_exp(vals) - std::log(static_cast<double>(vals.size()));
  } else if (reference != "value") {
    std::cerr << "unknown reference kind '" << reference << "'\n";
    return 2;
  }

  const auto summary = twistpf::summarize(records, ref_log_z, baseline);
  twistpf::write_csv(out_path, summary.table);
  std::cout << "wrote " << out_path << " (reference log Z = " << ref_log_z << ")\n";
  if (!plot_out.empty()) {
    twistpf::write_csv(plot_out, summary.long_format);
    std::cout << "wrote " << plot_out << "\n";
  }
  return 0;
}

int cmd_oracle_check(std::uint64_t seed, int cases) {
  twistpf::OracleCheckOptions options;
  options.seed = seed;
  options.fuzz_cases = cases;
  const auto checks = twistpf::run_discrete_oracle_checks(options);
  bool all_ok = true;
  for (const auto& c : checks) {
    std::printf("[%s] %s%s%s\n", c.pass ? "PASS" : "FAIL", c.name.c_str(),
                c.detail.empty() ? "" : ": ", c.detail.c_str());
    all_ok = all_ok && c.pass;
  }
  return all_ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Twisted particle filters with rejection-sampled kernels and Monte Carlo "
               "potentials"};
  app.require_subcommand(1);

  // simulate
  std::string sim_model, sim_params, sim_out;
  std::uint64_t sim_seed = 0;
  int sim_steps = 0;
  auto* sim = app.add_subcommand("simulate", "Simulate observations from a model");
  sim->add_option("--model", sim_model, "Model family (lgssm | sv)")->required();
  sim->add_option("--params", sim_params, "Parameter file")->required();
  sim->add_option("--seed", sim_seed, "Simulation seed");
  sim->add_option("--steps", sim_steps, "Override the series length");
  sim->add_option("--out", sim_out, "Output CSV path")->required();

  // run
  std::string run_config, run_out;
  auto* run = app.add_subcommand("run", "Run a filter experiment from a config file");
  run->add_option("--config", run_config, "Experiment config file")->required();
  run->add_option("--out", run_out, "Override the records CSV path");

  // learn
  std::string learn_config, learn_schedule_out = "schedule.kv", learn_report_out;
  auto* learn = app.add_subcommand("learn", "Learn a twist schedule and save it");
  learn->add_option("--config", learn_config, "Experiment config file")->required();
  learn->add_option("--schedule-out", learn_schedule_out, "Twist schedule output path");
  learn->add_option("--report", learn_report_out, "Per-iteration learning report CSV");

  // summarize
  std::string sum_records, sum_reference = "value", sum_ref_records, sum_params;
  std::string sum_baseline = "tpf-opt", sum_out = "summary.csv", sum_plot;
  double sum_ref_value = 0.0;
  auto* sum = app.add_subcommand("summarize", "Summarize experiment records");
  sum->add_option("--records", sum_records, "Records CSV")->required();
  sum->add_option("--reference", sum_reference, "Reference kind: kalman | records | value");
  sum->add_option("--reference-value", sum_ref_value, "Reference log Z (kind: value)");
  sum->add_option("--reference-records", sum_ref_records, "High-N reference records CSV");
  sum->add_option("--params", sum_params, "Model parameter file (kind: kalman)");
  sum->add_option("--baseline", sum_baseline, "Baseline method for relative MSE");
  sum->add_option("--out", sum_out, "Summary CSV path");
  sum->add_option("--plot-out", sum_plot, "Plot-ready long-format CSV path");

  // oracle-check
  std::uint64_t oc_seed = 20240915;
  int oc_cases = 100;
  auto* oracle = app.add_subcommand("oracle-check", "Run the exact-oracle property suite");
  oracle->add_option("--seed", oc_seed, "Fuzz master seed");
  oracle->add_option("--cases", oc_cases, "Fuzz cases per property");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (sim->parsed()) return cmd_simulate(sim_model, sim_params, sim_seed, sim_steps, sim_out);
    if (run->parsed()) return cmd_run(run_config, run_out);
    if (learn->parsed()) return cmd_learn(learn_config, learn_schedule_out, learn_report_out);
    if (sum->parsed()) {
      return cmd_summarize(sum_records, sum_reference, sum_ref_value, sum_ref_records,
                           sum_params, sum_baseline, sum_out, sum_plot);
    }
    if (oracle->parsed()) return cmd_oracle_check(oc_seed, oc_cases);
  } catch (const twistpf::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
