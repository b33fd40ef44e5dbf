#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "twistpf/discrete.hpp"

namespace twistpf {

struct OracleCheck {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct OracleCheckOptions {
  std::uint64_t seed = 20240915;
  int fuzz_cases = 100;
  int max_states = 5;
  int max_time = 6;
  double tol = 1e-12;
};

// Random finite-state model generators for fuzzing. Per-case seeds are
// reported on failure so cases can be replayed.
DiscreteFK random_discrete_model(Rng& rng, int max_states, int max_time);
std::vector<Eigen::VectorXd> random_twist_tables(const DiscreteFK& model, Rng& rng, double lo,
                                                 double hi);

// The exact-identity property suite over the discrete oracle: marginal
// recursion vs brute force, twisted-model preservation and marginal
// identities, kernel/potential factorization, twist composition, the
// two-form acceptance-rate identity, Q-kernel semigroup relations, variance
// formula reductions and bounds, and single-particle exactness under the
// optimal twist.
std::vector<OracleCheck> run_discrete_oracle_checks(const OracleCheckOptions& options = {});

}  // namespace twistpf
