#pragma once

#include <stdexcept>
#include <string>

namespace twistpf {

struct InvalidWeightsError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A filter run aborted; `time` is the step at which it happened.
struct FilterError : std::runtime_error {
  FilterError(int time_index, const std::string& what)
      : std::runtime_error("filter aborted at time " + std::to_string(time_index) + ": " + what),
        time(time_index) {}
  int time;
};

// The rejection sampler exceeded its hard trial cap. With a floored twist
// this should be unreachable; it signals a mis-normalized twist.
struct RejectionOverflowError : std::runtime_error {
  RejectionOverflowError(int time_index, long long trial_cap)
      : std::runtime_error("rejection sampler exceeded " + std::to_string(trial_cap) +
                           " trials at time " + std::to_string(time_index)),
        time(time_index),
        trials(trial_cap) {}
  int time;
  long long trials;
};

struct DegenerateDesignError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
  ConfigError(const std::string& key, const std::string& what)
      : std::runtime_error("config key '" + key + "': " + what), key(key) {}
  std::string key;
};

}  // namespace twistpf
