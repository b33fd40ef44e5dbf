#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "twistpf/errors.hpp"
#include "twistpf/rng.hpp"

namespace twistpf {

enum class ResampleMode { Always, Adaptive };

struct ResamplingPolicy {
  ResampleMode mode = ResampleMode::Adaptive;
  double kappa = 0.5;  // resample when ESS drops below kappa * N

  static ResamplingPolicy always() { return {ResampleMode::Always, 1.0}; }
  static ResamplingPolicy adaptive(double kappa) { return {ResampleMode::Adaptive, kappa}; }
};

inline void validate_weights(std::span<const double> weights) {
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (!std::isfinite(weights[i]) || weights[i] < 0.0) {
      throw InvalidWeightsError("weight " + std::to_string(i) + " is negative or non-finite");
    }
  }
}

// Effective sample size (sum w)^2 / sum w^2 of a normalized weight vector.
// Lies in [1, N]; equals N for uniform weights and 1 for a point mass.
inline double ess(std::span<const double> weights) {
  validate_weights(weights);
  double s = 0.0, s2 = 0.0;
  for (double w : weights) {
    s += w;
    s2 += w * w;
  }
  if (s2 <= 0.0) throw InvalidWeightsError("all weights are zero");
  return (s * s) / s2;
}

inline double ess(const std::vector<double>& weights) {
  return ess(std::span<const double>(weights));
}

// n_out i.i.d. categorical ancestor indices with probabilities proportional
// to `weights` (multinomial resampling).
inline std::vector<std::uint32_t> resample_categorical(std::span<const double> weights,
                                                       std::size_t n_out, Rng& rng) {
  validate_weights(weights);
  std::vector<double> cum(weights.size());
  double total = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    total += weights[i];
    cum[i] = total;
  }
  if (total <= 0.0) throw InvalidWeightsError("all weights are zero");

  std::vector<std::uint32_t> ancestors(n_out);
  for (std::size_t i = 0; i < n_out; ++i) {
    const double u = rng.uniform01() * total;
    // first index with cumulative weight > u
    std::size_t lo = 0, hi = cum.size() - 1;
    while (lo < hi) {
      const std::size_t mid = (lo + hi) / 2;
      if (cum[mid] > u) {
        hi = mid;
      } else {
        lo = mid + 1;
      }
    }
    ancestors[i] = static_cast<std::uint32_t>(lo);
  }
  return ancestors;
}

inline std::vector<std::uint32_t> resample_categorical(const std::vector<double>& weights,
                                                       std::size_t n_out, Rng& rng) {
  return resample_categorical(std::span<const double>(weights), n_out, rng);
}

}  // namespace twistpf
