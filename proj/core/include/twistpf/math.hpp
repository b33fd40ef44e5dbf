#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

namespace twistpf {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// log(sum(exp(v))), shifted by the maximum for stability.
inline double log_sum_exp(std::span<const double> v) {
  if (v.empty()) return kNegInf;
  const double m = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(m)) return m;  // all -inf, or a stray inf/nan propagates
  double acc = 0.0;
  for (double x : v) acc += std::exp(x - m);
  return m + std::log(acc);
}

inline double log_sum_exp(const std::vector<double>& v) {
  return log_sum_exp(std::span<const double>(v));
}

// Compensated summation; keeps normalization errors O(eps) regardless of the
// particle count.
inline double kahan_sum(std::span<const double> v) {
  double total = 0.0, carry = 0.0;
  for (double x : v) {
    const double y = x - carry;
    const double t = total + y;
    carry = (t - total) - y;
    total = t;
  }
  return total;
}

inline double kahan_sum(const std::vector<double>& v) {
  return kahan_sum(std::span<const double>(v));
}

// Normalized weights from unnormalized log weights. Output sums to 1 up to
// rounding in the final division.
inline std::vector<double> normalized_weights(std::span<const double> log_w) {
  std::vector<double> w(log_w.size());
  if (log_w.empty()) return w;
  const double m = *std::max_element(log_w.begin(), log_w.end());
  for (std::size_t i = 0; i < log_w.size(); ++i) {
    w[i] = std::exp(log_w[i] - m);
  }
  const double total = kahan_sum(w);
  for (double& x : w) x /= total;
  return w;
}

inline double square(double x) { return x * x; }

}  // namespace twistpf
