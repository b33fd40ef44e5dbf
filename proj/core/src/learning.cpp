#include "twistpf/learning.hpp"

#include <Eigen/Dense>
#include <cmath>

namespace twistpf {

namespace {

QuadraticFit solve_normal_equations(const Eigen::MatrixXd& features, const Eigen::VectorXd& y,
                                    double ridge, int dim, FitClass fit_class) {
  const Eigen::Index m = features.cols();
  if (features.rows() < m) {
    throw DegenerateDesignError("fit_log_quadratic: " + std::to_string(features.rows()) +
                                " points cannot determine " + std::to_string(m) +
                                " coefficients");
  }
  Eigen::MatrixXd gram = features.transpose() * features;
  const double lambda = ridge * gram.trace() / static_cast<double>(m);
  gram.diagonal().array() += lambda;
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
  Eigen::VectorXd beta = ldlt.solve(features.transpose() * y);
  if (ldlt.info() != Eigen::Success || !beta.allFinite()) {
    throw DegenerateDesignError("fit_log_quadratic: normal equations are singular");
  }

  QuadraticFit fit;
  if (fit_class == FitClass::Isotropic) {
    fit.coeffs = TwistCoeffs::iso(beta(0), beta.segment(1, dim), beta(m - 1));
  } else {
    fit.coeffs = TwistCoeffs::diag(beta.head(dim), beta.segment(dim, dim), beta(m - 1));
  }
  const Eigen::VectorXd resid = features * beta - y;
  fit.rmse = std::sqrt(resid.squaredNorm() / static_cast<double>(features.rows()));
  return fit;
}

}  // namespace

QuadraticFit fit_log_quadratic(const std::vector<Eigen::VectorXd>& points,
                               const std::vector<double>& log_targets, FitClass fit_class,
                               double ridge) {
  if (points.empty()) throw DegenerateDesignError("fit_log_quadratic: no points");
  if (points.size() != log_targets.size()) {
    throw std::invalid_argument("fit_log_quadratic: points/targets size mismatch");
  }
  const int d = static_cast<int>(points[0].size());
  const Eigen::Index m = fit_class == FitClass::Isotropic ? d + 2 : 2 * d + 1;

  Eigen::MatrixXd features(points.size(), m);
  Eigen::VectorXd y(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!std::isfinite(log_targets[i])) {
      throw std::invalid_argument("fit_log_quadratic: non-finite target at index " +
                                  std::to_string(i));
    }
    y(i) = log_targets[i];
    const Eigen::VectorXd& x = points[i];
    if (fit_class == FitClass::Isotropic) {
      features(i, 0) = x.squaredNorm();
      features.row(i).segment(1, d) = x.transpose();
    } else {
      features.row(i).head(d) = x.cwiseProduct(x).transpose();
      features.row(i).segment(d, d) = x.transpose();
    }
    features(i, m - 1) = 1.0;
  }
  return solve_normal_equations(features, y, ridge, d, fit_class);
}

QuadraticFit fit_log_quadratic(const std::vector<double>& points,
                               const std::vector<double>& log_targets, double ridge) {
  std::vector<Eigen::VectorXd> vec_points(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    vec_points[i] = Eigen::VectorXd::Constant(1, points[i]);
  }
  return fit_log_quadratic(vec_points, log_targets, FitClass::Isotropic, ridge);
}

TwistFitter<Eigen::VectorXd> quadratic_fitter(FitClass fit_class, double ridge) {
  return [fit_class, ridge](const std::vector<Eigen::VectorXd>& points,
                            const std::vector<double>& targets) {
    const QuadraticFit fit = fit_log_quadratic(points, targets, fit_class, ridge);
    FittedTwist<Eigen::VectorXd> out;
    auto coeffs = std::make_shared<TwistCoeffs>(fit.coeffs);
    out.log_eval = [coeffs](const Eigen::VectorXd& x) { return coeffs->eval(x); };
    out.has_coeffs = true;
    out.coeffs = fit.coeffs;
    out.rmse = fit.rmse;
    return out;
  };
}

TwistFitter<double> scalar_quadratic_fitter(double ridge) {
  return [ridge](const std::vector<double>& points, const std::vector<double>& targets) {
    const QuadraticFit fit = fit_log_quadratic(points, targets, ridge);
    FittedTwist<double> out;
    auto coeffs = std::make_shared<TwistCoeffs>(fit.coeffs);
    out.log_eval = [coeffs](const double& x) { return coeffs->eval_scalar(x); };
    out.has_coeffs = true;
    out.coeffs = fit.coeffs;
    out.rmse = fit.rmse;
    return out;
  };
}

TemperResult temper_to_target(const AcceptanceTable& table, double alpha_min, double rel_tol,
                              int max_steps) {
  TemperResult out;
  out.alpha_pre = table.alpha(1.0);
  if (out.alpha_pre >= alpha_min) {
    out.beta = 1.0;
    out.alpha_post = out.alpha_pre;
    return out;
  }

  // alpha(beta) -> 1 as beta -> 0, so a feasible bracket always exists.
  // Bisection on the empirical map; when the 50 steps run out without
  // hitting the tolerance we return the deepest beta seen with alpha above
  // the target, falling back to the smallest feasible evaluation if the
  // empirical map turned out non-monotone.
  double lo = 0.0, hi = 1.0;
  double best_feasible = 0.0, best_feasible_alpha = 1.0;
  double smallest_feasible = 2.0, smallest_feasible_alpha = 1.0;
  double largest_infeasible = 0.0;
  bool non_monotone = false;

  for (int step = 0; step < max_steps; ++step) {
    const double mid = 0.5 * (lo + hi);
    const double a = table.alpha(mid);
    if (std::abs(a - alpha_min) <= rel_tol * alpha_min) {
      out.beta = mid;
      out.alpha_post = a;
      return out;
    }
    if (a >= alpha_min) {
      if (mid < largest_infeasible) non_monotone = true;
      if (mid > best_feasible) {
        best_feasible = mid;
        best_feasible_alpha = a;
      }
      if (mid < smallest_feasible) {
        smallest_feasible = mid;
        smallest_feasible_alpha = a;
      }
      lo = mid;
    } else {
      if (mid > largest_infeasible) largest_infeasible = mid;
      if (mid < best_feasible) non_monotone = true;
      hi = mid;
    }
  }

  if (non_monotone && smallest_feasible <= 1.0) {
    out.beta = smallest_feasible;
    out.alpha_post = smallest_feasible_alpha;
  } else if (best_feasible > 0.0) {
    out.beta = best_feasible;
    out.alpha_post = best_feasible_alpha;
  } else {
    out.beta = std::min(1.0, std::max(lo, 1e-12));
    out.alpha_post = table.alpha(out.beta);
  }
  return out;
}

}  // namespace twistpf
