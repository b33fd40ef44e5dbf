#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "twistpf/math.hpp"
#include "twistpf/rng.hpp"

namespace twistpf {

// Parametric form of an exponential-quadratic twist, kept alongside the
// evaluation closure so learned schedules can be serialized and composed
// across learning iterations. `quad` holds a 1x1 isotropic coefficient, a
// dx1 diagonal, or a full dxd matrix depending on `kind`.
struct TwistCoeffs {
  enum class Kind { Unit, Iso, Diag, Full, TerminalPotential };
  Kind kind = Kind::Unit;
  Eigen::MatrixXd quad;
  Eigen::VectorXd lin;
  double constant = 0.0;
  // log-linear tilt coefficient handled by the proposal kernel (scalar states)
  double tilt = 0.0;

  static TwistCoeffs unit() { return {}; }

  static TwistCoeffs iso(double a, Eigen::VectorXd b, double c) {
    TwistCoeffs t;
    t.kind = Kind::Iso;
    t.quad = Eigen::MatrixXd::Constant(1, 1, a);
    t.lin = std::move(b);
    t.constant = c;
    return t;
  }

  static TwistCoeffs diag(Eigen::VectorXd a, Eigen::VectorXd b, double c) {
    TwistCoeffs t;
    t.kind = Kind::Diag;
    t.quad = std::move(a);
    t.lin = std::move(b);
    t.constant = c;
    return t;
  }

  static TwistCoeffs full(Eigen::MatrixXd a, Eigen::VectorXd b, double c) {
    TwistCoeffs t;
    t.kind = Kind::Full;
    t.quad = std::move(a);
    t.lin = std::move(b);
    t.constant = c;
    return t;
  }

  // log psi(x) = x'Ax + b'x + c in the representation of `kind`.
  double eval(const Eigen::VectorXd& x) const {
    switch (kind) {
      case Kind::Unit:
        return 0.0;
      case Kind::Iso:
        return quad(0, 0) * x.squaredNorm() + lin.dot(x) + constant;
      case Kind::Diag:
        return quad.col(0).dot(x.cwiseProduct(x)) + lin.dot(x) + constant;
      case Kind::Full:
        return x.dot(quad * x) + lin.dot(x) + constant;
      case Kind::TerminalPotential:
        return 0.0;  // evaluated through the bound closure, not coefficients
    }
    return 0.0;
  }

  double eval_scalar(double x) const {
    switch (kind) {
      case Kind::Unit:
        return 0.0;
      case Kind::Iso:
      case Kind::Diag:
      case Kind::Full:
        return quad(0, 0) * x * x + (lin.size() > 0 ? lin(0) * x : 0.0) + constant;
      case Kind::TerminalPotential:
        return 0.0;
    }
    return 0.0;
  }

  // Full-matrix view of the quadratic coefficient for dimension d.
  Eigen::MatrixXd quad_matrix(int d) const {
    switch (kind) {
      case Kind::Iso:
        return quad(0, 0) * Eigen::MatrixXd::Identity(d, d);
      case Kind::Diag:
        return quad.col(0).asDiagonal();
      case Kind::Full:
        return quad;
      default:
        return Eigen::MatrixXd::Zero(d, d);
    }
  }
};

// A twisting function psi_p. The raw value eval_log(x) is tempered by beta,
// shifted, clamped to [floor_log, 0], and any analytic tilt component is
// added back outside the clamp:
//
//   log psi_eff(x) = clamp(beta * eval_log(x) + shift - t(x), floor_log, 0) + t(x)
//
// with t = log_tilt (identically zero when unset). The clamp keeps the
// rejection acceptance probability in [floor, 1]; the tilt is the part of the
// twist absorbed analytically into the proposal kernel and therefore exempt.
template <class State>
struct TwistFunction {
  std::function<double(const State&)> eval_log;  // raw log psi
  double beta = 1.0;
  double shift = 0.0;
  double floor_log = kNegInf;
  std::function<double(const State&)> log_tilt;

  bool has_coeffs = false;
  TwistCoeffs coeffs;

  static TwistFunction unit() {
    TwistFunction t;
    t.eval_log = [](const State&) { return 0.0; };
    t.coeffs = TwistCoeffs::unit();
    t.has_coeffs = true;
    return t;
  }

  bool is_unit() const { return has_coeffs && coeffs.kind == TwistCoeffs::Kind::Unit; }

  double log_effective(const State& x) const {
    const double t = log_tilt ? log_tilt(x) : 0.0;
    double v = beta * eval_log(x) + shift - t;
    v = std::min(0.0, std::max(floor_log, v));
    return v + t;
  }
};

// Exact sampler for a rho-twisted kernel M_p^rho, used as the rejection
// proposal under partial analytical twisting. log_rho must match the tilt
// component of the paired twist so that acceptance ratios stay <= 1. When the
// tilt normalizers M_p(rho)(x) are supplied, the Monte Carlo potential
// estimates also route through the tilted kernel:
// M(psi)(x) = M(rho)(x) * M^rho(psi/rho)(x), leaving only the flat clamped
// factor to the sampling average.
template <class State>
struct TwistProposal {
  std::function<double(const State&)> log_rho;
  std::function<State(const State& prev, Rng&)> sample;
  std::function<State(Rng&)> sample_initial;  // only needed on the p = 0 entry
  std::function<double(const State& prev)> log_normalizer;  // log M_p(rho)(prev)
  std::optional<double> log_normalizer0;                    // log M_0(rho)
};

template <class State>
struct TwistEntry {
  TwistFunction<State> psi;
  std::optional<TwistProposal<State>> proposal;
  // Analytic M_p(psi_p)(x_{p-1}) in log scale, substituted for the Monte
  // Carlo estimate when available (exact oracles, optimal-twist baselines).
  std::function<double(const State&)> exact_log_m_psi;
  long long max_rejection_trials = 20000;
};

// Hard cap on rejection trials: 10 * ceil(1/eps) for a twist floored at eps,
// falling back to the default floor's cap when there is no usable floor.
inline long long rejection_trial_cap(double floor_log) {
  const double eps = std::exp(floor_log);
  if (!(eps > 0.0) || eps >= 1.0) return 20000;
  const double c = std::ceil(1.0 / eps);
  if (c > 1e14) return 1000000000000000LL;
  return 10LL * static_cast<long long>(c);
}

template <class State>
struct TwistSchedule {
  std::vector<TwistEntry<State>> entries;  // size n+1
  std::optional<double> exact_log_m0_psi;  // analytic log M_0(psi_0), when known
  int n_tilde = 1;                         // Monte Carlo samples per potential estimate

  int terminal_time() const { return static_cast<int>(entries.size()) - 1; }

  static TwistSchedule unit(int terminal_time, int n_tilde = 1) {
    TwistSchedule s;
    s.n_tilde = n_tilde;
    s.entries.resize(static_cast<std::size_t>(terminal_time) + 1);
    for (auto& e : s.entries) e.psi = TwistFunction<State>::unit();
    return s;
  }

  bool is_unit() const {
    for (const auto& e : entries) {
      if (!e.psi.is_unit()) return false;
    }
    return true;
  }
};

namespace detail {

inline TwistCoeffs::Kind promote_kind(TwistCoeffs::Kind a, TwistCoeffs::Kind b) {
  using K = TwistCoeffs::Kind;
  auto rank = [](K k) {
    switch (k) {
      case K::Unit: return 0;
      case K::Iso: return 1;
      case K::Diag: return 2;
      default: return 3;
    }
  };
  return rank(a) >= rank(b) ? a : b;
}

}  // namespace detail

// Sum of two quadratic forms, promoted to the finer representation. `d` is
// the state dimension (needed when promoting isotropic terms).
inline TwistCoeffs add_coeffs(const TwistCoeffs& a, double scale_a, const TwistCoeffs& b,
                              double scale_b, int d) {
  using K = TwistCoeffs::Kind;
  const K kind = detail::promote_kind(a.kind, b.kind);
  TwistCoeffs out;
  out.kind = kind;
  auto lin_of = [&](const TwistCoeffs& t) {
    return t.kind == K::Unit || t.lin.size() == 0 ? Eigen::VectorXd::Zero(d).eval() : t.lin;
  };
  out.lin = scale_a * lin_of(a) + scale_b * lin_of(b);
  out.constant = scale_a * a.constant + scale_b * b.constant;
  switch (kind) {
    case K::Unit:
      out.quad = Eigen::MatrixXd::Zero(1, 1);
      break;
    case K::Iso: {
      const double aa = a.kind == K::Unit ? 0.0 : a.quad(0, 0);
      const double bb = b.kind == K::Unit ? 0.0 : b.quad(0, 0);
      out.quad = Eigen::MatrixXd::Constant(1, 1, scale_a * aa + scale_b * bb);
      break;
    }
    case K::Diag: {
      auto diag_of = [&](const TwistCoeffs& t) -> Eigen::VectorXd {
        switch (t.kind) {
          case K::Unit: return Eigen::VectorXd::Zero(d);
          case K::Iso: return Eigen::VectorXd::Constant(d, t.quad(0, 0));
          default: return t.quad.col(0);
        }
      };
      out.quad = scale_a * diag_of(a) + scale_b * diag_of(b);
      break;
    }
    default:
      out.quad = scale_a * a.quad_matrix(d) + scale_b * b.quad_matrix(d);
      break;
  }
  return out;
}

// Twist function over vector states from a coefficient set.
inline TwistFunction<Eigen::VectorXd> make_quadratic_twist(TwistCoeffs coeffs, double beta,
                                                           double shift, double floor_log) {
  TwistFunction<Eigen::VectorXd> t;
  auto c = std::make_shared<TwistCoeffs>(std::move(coeffs));
  t.eval_log = [c](const Eigen::VectorXd& x) { return c->eval(x); };
  t.beta = beta;
  t.shift = shift;
  t.floor_log = floor_log;
  t.coeffs = *c;
  t.has_coeffs = true;
  return t;
}

// Scalar-state variant, optionally carrying a log-linear tilt exp(rho_b * x)
// that a proposal kernel absorbs analytically.
inline TwistFunction<double> make_scalar_quadratic_twist(TwistCoeffs coeffs, double beta,
                                                         double shift, double floor_log,
                                                         double rho_b = 0.0) {
  TwistFunction<double> t;
  auto c = std::make_shared<TwistCoeffs>(std::move(coeffs));
  t.eval_log = [c](const double& x) { return c->eval_scalar(x); };
  t.beta = beta;
  t.shift = shift;
  t.floor_log = floor_log;
  if (rho_b != 0.0) {
    t.log_tilt = [rho_b](const double& x) { return rho_b * x; };
  }
  t.coeffs = *c;
  t.coeffs.tilt = rho_b;
  t.has_coeffs = true;
  return t;
}

}  // namespace twistpf
