#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "ncsac/refiner.hpp"

namespace ncsac {

struct SuiteResult {
  std::string name;
  bool passed = true;
  std::size_t cases = 0;
  std::string detail;  // worst deviation, or the first failing case
};

/// ACE against the multigraph extractor on `graphs` seeded graphs.
SuiteResult check_extractor_equivalence(std::size_t n, std::size_t graphs,
                                        std::uint64_t seed);

/// Random interleaved add/remove, compared with a from-scratch rebuild every
/// `check_every` operations.
SuiteResult check_incremental_state(std::size_t n, std::size_t operations,
                                    std::size_t check_every,
                                    std::uint64_t seed);

/// Monte-Carlo one-step walks against the closed-form conductances, both
/// walk modes, tolerance `sigmas` standard errors.
SuiteResult check_escape_probability(std::size_t graphs, std::size_t trials,
                                     double sigmas, std::uint64_t seed);

/// Encoder loss gradients (summed and normalized forms) against central
/// differences on tiny models.
SuiteResult check_encoder_gradients(std::uint64_t seed, double tolerance);

struct PolicyGradCheck {
  double max_relative_error = 0.0;
  // Distance of the nearest hidden ReLU input from 0 and of the nearest
  // ratio from 1 +- clip.
  double kink_margin = 0.0;
  std::size_t parameters = 0;
};

/// Central differences of ppo_objective against ppo_gradient.
PolicyGradCheck ppo_grad_check(const PolicyModel& policy,
                               const Trajectory& trajectory, double clip,
                               double epsilon);

/// A random trajectory whose stored log-probs come from a perturbed copy of
/// `policy`, so ratios spread on both sides of the clip window.
Trajectory synthetic_trajectory(const PolicyModel& policy, std::size_t steps,
                                double perturbation, std::mt19937_64& rng);

SuiteResult check_policy_gradients(std::uint64_t seed, double tolerance);

/// Every suite above at the sizes used by the oracle-check command.
std::vector<SuiteResult> run_oracle_checks(std::size_t n, std::uint64_t seed);

}  // namespace ncsac
