#pragma once

#include <string>
#include <vector>

#include "twistpf/lgssm.hpp"
#include "twistpf/sv.hpp"
#include "twistpf/twist.hpp"

namespace twistpf {

// On-disk form of one twist entry: per-time coefficient block with fields
// {kind, a, b, c, beta, shift, floor_log, rho_b}. Kinds: "unit", "iso",
// "diag", "full" (a holds the quadratic coefficients, row-major for full)
// and "gpot" for twists built from the model's terminal potential.
struct TwistRecord {
  std::string kind = "unit";
  std::vector<double> a;
  std::vector<double> b;
  double c = 0.0;
  double beta = 1.0;
  double shift = 0.0;
  double floor_log = kNegInf;
  double rho_b = 0.0;
};

struct LoadedSchedule {
  std::vector<TwistRecord> records;
  int n_tilde = 1;
};

std::vector<TwistRecord> to_records(const TwistSchedule<Eigen::VectorXd>& schedule);
std::vector<TwistRecord> to_records(const TwistSchedule<double>& schedule);

void save_twist_schedule(const std::string& path, const std::vector<TwistRecord>& records,
                         int n_tilde);
LoadedSchedule load_twist_schedule(const std::string& path);

// Rebind records to evaluable schedules. The model supplies the terminal
// potential for "gpot" records and, for the volatility model, the tilted
// proposal kernels for records with rho_b != 0.
TwistSchedule<Eigen::VectorXd> bind_lgssm_schedule(const LoadedSchedule& loaded,
                                                   const LgssmParams& params);
TwistSchedule<double> bind_sv_schedule(const LoadedSchedule& loaded, const SvParams& params);

}  // namespace twistpf
