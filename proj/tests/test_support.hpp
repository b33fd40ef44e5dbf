#pragma once

// Shared fixtures and small statistics helpers for the test suites.

#include <cmath>
#include <numeric>
#include <vector>

#include "twistpf/discrete.hpp"

namespace testsup {

struct Moments {
  double mean = 0.0;
  double sd = 0.0;
  double se = 0.0;  // of the mean
};

inline Moments moments(const std::vector<double>& v) {
  Moments m;
  const double n = static_cast<double>(v.size());
  m.mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double acc = 0.0;
  for (double x : v) acc += (x - m.mean) * (x - m.mean);
  m.sd = std::sqrt(acc / (n - 1.0));
  m.se = m.sd / std::sqrt(n);
  return m;
}

// Upper chi-squared quantile via the Wilson-Hilferty approximation.
inline double chi2_upper(double df, double z) {
  const double t = 2.0 / (9.0 * df);
  const double c = 1.0 - t + z * std::sqrt(t);
  return df * c * c * c;
}

inline double chi2_crit_01(double df) { return chi2_upper(df, 2.3263478740408408); }

// Two-sample Kolmogorov-Smirnov distance.
inline double ks_distance(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double d = 0.0;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] <= b[j]) {
      ++i;
    } else {
      ++j;
    }
    const double fa = static_cast<double>(i) / a.size();
    const double fb = static_cast<double>(j) / b.size();
    d = std::max(d, std::abs(fa - fb));
  }
  return d;
}

inline double ks_crit_01(std::size_t m, std::size_t n) {
  return 1.627624 * std::sqrt((static_cast<double>(m) + n) / (static_cast<double>(m) * n));
}

// K=2, n=2 chain with distinct rows and potentials; hand-checkable.
inline twistpf::DiscreteFK small_chain() {
  twistpf::DiscreteFK model;
  model.m0 = Eigen::Vector2d(0.5, 0.5);
  Eigen::MatrixXd m(2, 2);
  m << 0.9, 0.1, 0.2, 0.8;
  model.trans = {m, m};
  model.pot.assign(3, Eigen::Vector2d(1.0, 2.0));
  return model;
}

// K-state, n-step model with irregular values, fixed by seed.
inline twistpf::DiscreteFK test_model(int k, int n, std::uint64_t seed) {
  twistpf::Rng rng(seed);
  twistpf::DiscreteFK model;
  model.m0.resize(k);
  for (int i = 0; i < k; ++i) model.m0(i) = 0.2 + rng.uniform01();
  model.m0 /= model.m0.sum();
  model.trans.resize(n);
  for (auto& m : model.trans) {
    m.resize(k, k);
    for (int i = 0; i < k; ++i) {
      for (int j = 0; j < k; ++j) m(i, j) = 0.1 + rng.uniform01();
      m.row(i) /= m.row(i).sum();
    }
  }
  model.pot.resize(n + 1);
  for (auto& g : model.pot) {
    g.resize(k);
    for (int i = 0; i < k; ++i) g(i) = 0.3 + 1.5 * rng.uniform01();
  }
  return model;
}

inline std::vector<Eigen::VectorXd> constant_tables(int k, int n, double value) {
  return std::vector<Eigen::VectorXd>(n + 1, Eigen::VectorXd::Constant(k, value));
}

}  // namespace testsup
