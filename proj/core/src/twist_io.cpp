#include "twistpf/twist_io.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "twistpf/config.hpp"
#include "twistpf/csv.hpp"

namespace twistpf {

namespace {

std::string kind_name(TwistCoeffs::Kind kind) {
  switch (kind) {
    case TwistCoeffs::Kind::Unit: return "unit";
    case TwistCoeffs::Kind::Iso: return "iso";
    case TwistCoeffs::Kind::Diag: return "diag";
    case TwistCoeffs::Kind::Full: return "full";
    case TwistCoeffs::Kind::TerminalPotential: return "gpot";
  }
  return "unit";
}

template <class State>
TwistRecord record_of(const TwistEntry<State>& entry) {
  if (!entry.psi.has_coeffs) {
    throw std::runtime_error("twist schedule entry has no parametric form to serialize");
  }
  const TwistCoeffs& c = entry.psi.coeffs;
  TwistRecord rec;
  rec.kind = kind_name(c.kind);
  if (c.kind == TwistCoeffs::Kind::Iso) {
    rec.a = {c.quad(0, 0)};
  } else if (c.kind == TwistCoeffs::Kind::Diag) {
    rec.a.assign(c.quad.data(), c.quad.data() + c.quad.rows());
  } else if (c.kind == TwistCoeffs::Kind::Full) {
    for (Eigen::Index i = 0; i < c.quad.rows(); ++i) {
      for (Eigen::Index j = 0; j < c.quad.cols(); ++j) rec.a.push_back(c.quad(i, j));
    }
  }
  rec.b.assign(c.lin.data(), c.lin.data() + c.lin.size());
  rec.c = c.constant;
  rec.beta = entry.psi.beta;
  rec.shift = entry.psi.shift;
  rec.floor_log = entry.psi.floor_log;
  rec.rho_b = c.tilt;
  return rec;
}

TwistCoeffs coeffs_of(const TwistRecord& rec) {
  TwistCoeffs c;
  Eigen::VectorXd lin(static_cast<Eigen::Index>(rec.b.size()));
  for (std::size_t i = 0; i < rec.b.size(); ++i) lin(static_cast<Eigen::Index>(i)) = rec.b[i];
  if (rec.kind == "iso") {
    c = TwistCoeffs::iso(rec.a.at(0), lin, rec.c);
  } else if (rec.kind == "diag") {
    Eigen::VectorXd q(static_cast<Eigen::Index>(rec.a.size()));
    for (std::size_t i = 0; i < rec.a.size(); ++i) q(static_cast<Eigen::Index>(i)) = rec.a[i];
    c = TwistCoeffs::diag(q, lin, rec.c);
  } else if (rec.kind == "full") {
    const int d = static_cast<int>(lin.size());
    if (static_cast<int>(rec.a.size()) != d * d) {
      throw std::runtime_error("twist record: full quadratic needs d*d coefficients");
    }
    Eigen::MatrixXd q(d, d);
    for (int i = 0; i < d; ++i) {
      for (int j = 0; j < d; ++j) q(i, j) = rec.a[static_cast<std::size_t>(i) * d + j];
    }
    c = TwistCoeffs::full(q, lin, rec.c);
  } else if (rec.kind == "gpot") {
    c.kind = TwistCoeffs::Kind::TerminalPotential;
    c.constant = rec.c;
  } else if (rec.kind == "unit") {
    c = TwistCoeffs::unit();
  } else {
    throw std::runtime_error("twist record: unknown kind '" + rec.kind + "'");
  }
  c.tilt = rec.rho_b;
  return c;
}

std::string format_array(const std::vector<double>& v) {
  std::string out = "[";
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i > 0) out += ", ";
    out += format_double(v[i]);
  }
  out += "]";
  return out;
}

}  // namespace

std::vector<TwistRecord> to_records(const TwistSchedule<Eigen::VectorXd>& schedule) {
  std::vector<TwistRecord> out;
  out.reserve(schedule.entries.size());
  for (const auto& e : schedule.entries) out.push_back(record_of(e));
  return out;
}

std::vector<TwistRecord> to_records(const TwistSchedule<double>& schedule) {
  std::vector<TwistRecord> out;
  out.reserve(schedule.entries.size());
  for (const auto& e : schedule.entries) out.push_back(record_of(e));
  return out;
}

void save_twist_schedule(const std::string& path, const std::vector<TwistRecord>& records,
                         int n_tilde) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write twist schedule: " + path);
  out << "[schedule]\n";
  out << "terminal_time = " << records.size() - 1 << "\n";
  out << "n_tilde = " << n_tilde << "\n";
  for (std::size_t p = 0; p < records.size(); ++p) {
    const TwistRecord& r = records[p];
    out << "\n[twist." << p << "]\n";
    out << "kind = \"" << r.kind << "\"\n";
    out << "a = " << format_array(r.a) << "\n";
    out << "b = " << format_array(r.b) << "\n";
    out << "c = " << format_double(r.c) << "\n";
    out << "beta = " << format_double(r.beta) << "\n";
    out << "shift = " << format_double(r.shift) << "\n";
    out << "floor_log = " << format_double(r.floor_log) << "\n";
    out << "rho_b = " << format_double(r.rho_b) << "\n";
  }
}

LoadedSchedule load_twist_schedule(const std::string& path) {
  const KvDocument doc = KvDocument::parse_file(path);
  LoadedSchedule loaded;
  const int n = static_cast<int>(doc.get_int("schedule", "terminal_time"));
  loaded.n_tilde = static_cast<int>(doc.get_int("schedule", "n_tilde", 1));
  loaded.records.resize(n + 1);
  for (int p = 0; p <= n; ++p) {
    const std::string section = "twist." + std::to_string(p);
    TwistRecord& r = loaded.records[p];
    r.kind = doc.get_string(section, "kind");
    r.a = doc.get_array(section, "a", {});
    r.b = doc.get_array(section, "b", {});
    r.c = doc.get_double(section, "c", 0.0);
    r.beta = doc.get_double(section, "beta", 1.0);
    r.shift = doc.get_double(section, "shift", 0.0);
    r.floor_log = doc.get_double(section, "floor_log", kNegInf);
    r.rho_b = doc.get_double(section, "rho_b", 0.0);
  }
  return loaded;
}

TwistSchedule<Eigen::VectorXd> bind_lgssm_schedule(const LoadedSchedule& loaded,
                                                   const LgssmParams& params) {
  TwistSchedule<Eigen::VectorXd> schedule;
  schedule.n_tilde = loaded.n_tilde;
  schedule.entries.resize(loaded.records.size());
  auto shared = std::make_shared<LgssmParams>(params);
  for (std::size_t p = 0; p < loaded.records.size(); ++p) {
    const TwistRecord& rec = loaded.records[p];
    const TwistCoeffs coeffs = coeffs_of(rec);
    auto& entry = schedule.entries[p];
    if (coeffs.kind == TwistCoeffs::Kind::TerminalPotential) {
      entry.psi.eval_log = [shared, p, c = rec.c](const Eigen::VectorXd& x) {
        return log_gaussian_isotropic(shared->obs[p], x, shared->sigma_g_sq) + c;
      };
      entry.psi.beta = rec.beta;
      entry.psi.shift = rec.shift;
      entry.psi.floor_log = rec.floor_log;
      entry.psi.has_coeffs = true;
      entry.psi.coeffs = coeffs;
    } else {
      entry.psi = make_quadratic_twist(coeffs, rec.beta, rec.shift, rec.floor_log);
    }
    entry.max_rejection_trials = rejection_trial_cap(rec.floor_log);
  }
  return schedule;
}

TwistSchedule<double> bind_sv_schedule(const LoadedSchedule& loaded, const SvParams& params) {
  TwistSchedule<double> schedule;
  schedule.n_tilde = loaded.n_tilde;
  schedule.entries.resize(loaded.records.size());
  auto shared = std::make_shared<SvParams>(params);
  for (std::size_t p = 0; p < loaded.records.size(); ++p) {
    const TwistRecord& rec = loaded.records[p];
    const TwistCoeffs coeffs = coeffs_of(rec);
    auto& entry = schedule.entries[p];
    if (coeffs.kind == TwistCoeffs::Kind::TerminalPotential) {
      const int t = static_cast<int>(p);
      entry.psi.eval_log = [shared, t, c = rec.c](const double& x) {
        return (t == 0 ? 0.0 : sv_log_potential(t, x, *shared)) + c;
      };
      entry.psi.beta = rec.beta;
      entry.psi.shift = rec.shift;
      entry.psi.floor_log = rec.floor_log;
      entry.psi.has_coeffs = true;
      entry.psi.coeffs = coeffs;
    } else {
      entry.psi = make_scalar_quadratic_twist(coeffs, rec.beta, rec.shift, rec.floor_log,
                                              rec.rho_b);
    }
    if (rec.rho_b != 0.0) {
      if (coeffs.kind == TwistCoeffs::Kind::TerminalPotential) {
        entry.psi.log_tilt = [b = rec.rho_b](const double& x) { return b * x; };
      }
      entry.proposal = sv_make_proposal(params, rec.rho_b);
    }
    entry.max_rejection_trials = rejection_trial_cap(rec.floor_log);
  }
  return schedule;
}

}  // namespace twistpf
