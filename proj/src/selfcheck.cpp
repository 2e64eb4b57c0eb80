#include "ncsac/selfcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "ncsac/conductance.hpp"
#include "ncsac/encoder.hpp"
#include "ncsac/error.hpp"
#include "ncsac/extractor.hpp"
#include "ncsac/io.hpp"

namespace ncsac {

namespace {

SyntheticSpec fixture_spec(std::size_t n, std::uint64_t seed) {
  SyntheticSpec spec;
  spec.blocks = std::max<std::size_t>(2, std::min<std::size_t>(4, n / 8));
  spec.block_size = std::max<std::size_t>(2, n / spec.blocks);
  spec.p_in = std::min(1.0, 8.0 / static_cast<double>(spec.block_size));
  spec.p_out = std::min(0.5, 1.0 / static_cast<double>(n));
  spec.k = 16;
  spec.attrs_per_block = 4;
  spec.seed = seed;
  return spec;
}

std::string describe(double x) {
  std::ostringstream os;
  os << x;
  return os.str();
}

double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-4});
}

}  // namespace

SuiteResult check_extractor_equivalence(std::size_t n, std::size_t graphs,
                                        std::uint64_t seed) {
  SuiteResult r;
  r.name = "ace-vs-nac";
  double worst = 0.0;
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < graphs && r.passed; ++i) {
    const SyntheticDataset data = gen_synthetic(fixture_spec(n, seed + i));
    const AttributedGraph& g = data.graph;
    std::uniform_int_distribution<NodeId> pick(0, static_cast<NodeId>(g.num_nodes() - 1));
    for (int j = 0; j < 3; ++j) {
      const NodeId q = pick(rng);
      const double beta = (j == 0) ? 0.2 : std::uniform_real_distribution<>(0, 1)(rng);
      const auto fast = extract_candidate(g, q, beta);
      const auto slow = extract_candidate_naive(g, q, beta);
      ++r.cases;
      worst = std::max(worst, std::abs(fast.phi - slow.phi));
      if (fast.community != slow.community || std::abs(fast.phi - slow.phi) > 1e-12) {
        r.passed = false;
        r.detail = "graph " + std::to_string(i) + " query " + std::to_string(q) +
                   " differs";
        break;
      }
    }
  }
  if (r.passed) r.detail = "max |dPhi| = " + describe(worst);
  return r;
}

SuiteResult check_incremental_state(std::size_t n, std::size_t operations,
                                    std::size_t check_every,
                                    std::uint64_t seed) {
  SuiteResult r;
  r.name = "incremental-vs-scratch";
  const SyntheticDataset data = gen_synthetic(fixture_spec(n, seed));
  const AttributedGraph& g = data.graph;
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_int_distribution<NodeId> pick(0, static_cast<NodeId>(g.num_nodes() - 1));
  CommunityState state(g, pick(rng));
  for (std::size_t op = 1; op <= operations; ++op) {
    const NodeId u = pick(rng);
    if (u == state.query()) continue;
    if (state.contains(u)) {
      state.remove(g, u);
    } else {
      state.add(g, u);
    }
    if (op % check_every == 0 || op == operations) {
      ++r.cases;
      const auto scratch =
          CommunityState::from_scratch(g, state.query(), state.members());
      if (!state.same_counters(scratch)) {
        r.passed = false;
        r.detail = "mismatch after operation " + std::to_string(op);
        return r;
      }
    }
  }
  r.detail = std::to_string(operations) + " operations, final |C| = " +
             std::to_string(state.size());
  return r;
}

SuiteResult check_escape_probability(std::size_t graphs, std::size_t trials,
                                     double sigmas, std::uint64_t seed) {
  SuiteResult r;
  r.name = "escape-probability";
  double worst = 0.0;
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < graphs; ++i) {
    SyntheticSpec spec;
    spec.blocks = 3;
    spec.block_size = 8 + i % 3;
    spec.p_in = 0.5;
    spec.p_out = 0.1;
    spec.k = 8;
    spec.attrs_per_block = 2;
    spec.attr_noise = 0.15;
    spec.seed = seed + i;
    const SyntheticDataset data = gen_synthetic(spec);
    const AttributedGraph& g = data.graph;
    Community c = data.communities[i % data.communities.size()];
    for (WalkMode mode : {WalkMode::topology, WalkMode::attribute}) {
      const double exact = mode == WalkMode::topology ? phi_t(g, c) : phi_a(g, c);
      EscapeEstimate est;
      try {
        est = escape_probability(g, c, mode, trials, rng());
      } catch (const DegenerateInputError&) {
        continue;
      }
      ++r.cases;
      const double dev = std::abs(est.estimate - exact);
      const double allowed = sigmas * est.standard_error;
      const double score = est.standard_error > 0 ? dev / est.standard_error
                                                  : (dev > 1e-12 ? 1e9 : 0.0);
      worst = std::max(worst, score);
      if (dev > allowed && dev > 1e-12) {
        r.passed = false;
        r.detail = "graph " + std::to_string(i) + ": estimate " +
                   describe(est.estimate) + " vs exact " + describe(exact);
        return r;
      }
    }
  }
  r.detail = "worst deviation " + describe(worst) + " standard errors";
  return r;
}

SuiteResult check_encoder_gradients(std::uint64_t seed, double tolerance) {
  SuiteResult r;
  r.name = "encoder-grad-check";
  double worst = 0.0;
  std::mt19937_64 rng(seed);
  SyntheticSpec spec;
  spec.blocks = 2;
  spec.block_size = 6;
  spec.p_in = 0.6;
  spec.p_out = 0.1;
  spec.k = 6;
  spec.attrs_per_block = 2;
  spec.seed = seed;
  const SyntheticDataset data = gen_synthetic(spec);
  const AttributedGraph& g = data.graph;
  EncoderConfig cfg;
  cfg.triplets_per_community = 4;
  cfg.pair_budget = 1.0;

  std::size_t accepted = 0;
  for (std::size_t attempt = 0; attempt < 40 && accepted < 4; ++attempt) {
    const EncoderModel model =
        EncoderModel::random(static_cast<Eigen::Index>(g.num_attributes() + 1), 5, 4, 0.0, rng());
    const TrainingBatch batch = sample_batch(g, data.communities, cfg, rng);
    std::vector<std::uint8_t> indicator(g.num_nodes(), 0);
    for (NodeId u : data.communities[attempt % 2]) indicator[u] = 1;
    for (bool normalize : {false, true}) {
      LossWeights w;
      w.normalize = normalize;
      const GradCheckResult gc = grad_check(model, g, indicator, batch, w, 1e-6);
      // Finite differences straddling a kink are not a valid oracle.
      if (gc.kink_margin < 1e-4) continue;
      ++r.cases;
      worst = std::max(worst, gc.max_relative_error);
      if (gc.max_relative_error > tolerance) {
        r.passed = false;
        r.detail = "relative error " + describe(gc.max_relative_error);
        return r;
      }
    }
    ++accepted;
  }
  if (r.cases == 0) {
    r.passed = false;
    r.detail = "no model far enough from activation kinks";
    return r;
  }
  r.detail = "max relative error " + describe(worst);
  return r;
}

PolicyGradCheck ppo_grad_check(const PolicyModel& policy,
                               const Trajectory& trajectory, double clip,
                               double epsilon) {
  PolicyGradCheck out;
  out.kink_margin = std::numeric_limits<double>::infinity();
  for (const TrajectoryStep& s : trajectory.steps) {
    const ScoreHead& head = s.branch == Branch::add ? policy.add_head : policy.remove_head;
    Eigen::MatrixXd z = s.features * head.w1;
    z.rowwise() += head.b1.transpose();
    out.kink_margin = std::min(out.kink_margin, z.cwiseAbs().minCoeff());
    const Eigen::VectorXd scores = head.score(s.features);
    const double top = scores.maxCoeff();
    const double lse = top + std::log((scores.array() - top).exp().sum());
    const double ratio =
        std::exp(scores[static_cast<Eigen::Index>(s.chosen)] - lse - s.log_prob);
    out.kink_margin = std::min({out.kink_margin, std::abs(ratio - (1 + clip)),
                                std::abs(ratio - (1 - clip))});
  }

  PolicyModel analytic = ppo_gradient(policy, trajectory, clip);
  std::vector<double> grads;
  analytic.for_each_head_parameter([&](double& g) { grads.push_back(g); });
  PolicyModel probe = policy;
  std::size_t i = 0;
  probe.for_each_head_parameter([&](double& p) {
    const double saved = p;
    p = saved + epsilon;
    const double up = ppo_objective(probe, trajectory, clip);
    p = saved - epsilon;
    const double down = ppo_objective(probe, trajectory, clip);
    p = saved;
    const double numeric = (up - down) / (2 * epsilon);
    out.max_relative_error =
        std::max(out.max_relative_error, relative_error(grads[i++], numeric));
  });
  out.parameters = i;
  return out;
}

Trajectory synthetic_trajectory(const PolicyModel& policy, std::size_t steps,
                                double perturbation, std::mt19937_64& rng) {
  PolicyModel old = policy;
  std::normal_distribution<double> noise(0.0, perturbation);
  old.for_each_head_parameter([&](double& p) { p += noise(rng); });
  std::normal_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> width(1, 5);
  Trajectory t;
  for (std::size_t i = 0; i < steps; ++i) {
    TrajectoryStep s;
    s.branch = i % 2 ? Branch::remove : Branch::add;
    const std::size_t c = width(rng);
    s.features = Eigen::MatrixXd::NullaryExpr(
        static_cast<Eigen::Index>(c + 1), policy.state_dim(), [&] { return unit(rng); });
    for (std::size_t j = 0; j < c; ++j) s.candidates.push_back(static_cast<NodeId>(j));
    s.chosen = std::uniform_int_distribution<std::size_t>(0, c)(rng);
    s.stop = s.chosen == c;
    const ScoreHead& head = s.branch == Branch::add ? old.add_head : old.remove_head;
    const Eigen::VectorXd scores = head.score(s.features);
    const double top = scores.maxCoeff();
    s.log_prob = scores[static_cast<Eigen::Index>(s.chosen)] - top -
                 std::log((scores.array() - top).exp().sum());
    s.reward = unit(rng);
    t.steps.push_back(std::move(s));
  }
  compute_advantages(t, 0.9);
  return t;
}

SuiteResult check_policy_gradients(std::uint64_t seed, double tolerance) {
  SuiteResult r;
  r.name = "policy-grad-check";
  double worst = 0.0;
  std::mt19937_64 rng(seed);
  for (std::size_t attempt = 0; attempt < 60 && r.cases < 8; ++attempt) {
    const PolicyModel policy = PolicyModel::random(4, 6, rng());
    const Trajectory t = synthetic_trajectory(policy, 6, 0.4, rng);
    const PolicyGradCheck gc = ppo_grad_check(policy, t, 0.2, 1e-6);
    if (gc.kink_margin < 1e-3) continue;
    ++r.cases;
    worst = std::max(worst, gc.max_relative_error);
    if (gc.max_relative_error > tolerance) {
      r.passed = false;
      r.detail = "relative error " + describe(gc.max_relative_error);
      return r;
    }
  }
  if (r.cases == 0) {
    r.passed = false;
    r.detail = "no trajectory far enough from kinks";
    return r;
  }
  r.detail = "max relative error " + describe(worst);
  return r;
}

std::vector<SuiteResult> run_oracle_checks(std::size_t n, std::uint64_t seed) {
  std::vector<SuiteResult> out;
  out.push_back(check_extractor_equivalence(n, 10, seed));
  out.push_back(check_incremental_state(n, 10000, 100, seed));
  out.push_back(check_escape_probability(10, 100000, 4.0, seed));
  out.push_back(check_encoder_gradients(seed, 1e-4));
  out.push_back(check_policy_gradients(seed, 1e-4));
  return out;
}

}  // namespace ncsac
