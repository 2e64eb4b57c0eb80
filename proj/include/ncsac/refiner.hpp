#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "ncsac/conductance.hpp"
#include "ncsac/encoder.hpp"
#include "ncsac/graph.hpp"
#include "ncsac/io.hpp"

namespace ncsac {

/// Two-layer MLP mapping a state vector to a scalar score:
///   score(x) = w2 . relu(W1^T x + b1) + b2
struct ScoreHead {
  Eigen::MatrixXd w1;  // state_dim x hidden
  Eigen::VectorXd b1;
  Eigen::VectorXd w2;
  double b2 = 0.0;

  /// One score per row of `states`.
  Eigen::VectorXd score(const Eigen::MatrixXd& states) const;
};

/// Add head, remove head, and the fixed feature vectors of the two virtual
/// termination nodes.
struct PolicyModel {
  ScoreHead add_head;
  ScoreHead remove_head;
  Eigen::VectorXd stop_add;     // s_a
  Eigen::VectorXd stop_remove;  // s_r
  std::uint64_t seed = 0;

  Eigen::Index state_dim() const { return add_head.w1.rows(); }

  static PolicyModel random(Eigen::Index state_dim, Eigen::Index hidden,
                            std::uint64_t seed);
  PolicyModel zeros_like() const;
  void validate() const;

  template <typename Fn>
  void for_each_head_parameter(Fn&& fn);
};

enum class Objective { labeled_f1, negative_phi };
enum class Branch { add, remove };

struct RefineConfig {
  double beta = 0.2;
  double alpha = 0.5;
  std::size_t episodes = 2000;  // tau
  double discount = 0.99;
  double clip = 0.2;
  double epsilon_start = 1.0;
  double epsilon_end = 0.05;
  // Per-episode step cap; unset means 2 * |C_coa| + 20.
  std::optional<std::size_t> max_steps;
  Objective objective = Objective::labeled_f1;
  double learning_rate = 0.001;
  std::size_t ppo_epochs = 4;
  Eigen::Index head_hidden = 32;
  std::optional<std::size_t> max_hop = 6;

  void validate() const;
};

/// epsilon(e) = start - (start - end) * e / (episodes - 1).
double exploration_rate(std::size_t episode, const RefineConfig& cfg);

/// Graph, its encoder tensors, and the frozen encoder.
struct RefineContext {
  RefineContext(const AttributedGraph& graph, const EncoderModel& encoder);

  const AttributedGraph& graph;
  const EncoderModel& encoder;
  GraphTensors tensors;
};

/// Non-members adjacent to at least one member, sorted.
std::vector<NodeId> community_boundary(const AttributedGraph& g,
                                       const CommunityState& state);

/// Encoder states for C and its boundary.
struct StateFeatures {
  std::vector<NodeId> nodes;  // C u dC, sorted
  std::vector<NodeId> boundary;
  Eigen::MatrixXd rows;       // aligned with `nodes`

  Eigen::VectorXd of(NodeId u) const;
};

StateFeatures state_features(const RefineContext& ctx,
                             const CommunityState& state);

/// Candidates of one branch; the last feature row and score belong to the
/// virtual termination node.
struct BranchScores {
  std::vector<NodeId> candidates;
  Eigen::MatrixXd features;
  Eigen::VectorXd scores;

  bool is_stop(std::size_t index) const { return index == candidates.size(); }
};

struct ActionScores {
  BranchScores add;     // boundary u {s_a}
  BranchScores remove;  // (C \ {q}) u {s_r}
};

ActionScores score_actions(const PolicyModel& policy,
                           const StateFeatures& feats,
                           const CommunityState& state);

/// Highest score, smallest node id on ties, virtual node last.
std::size_t greedy_choice(const Eigen::VectorXd& scores);
Eigen::VectorXd softmax(const Eigen::VectorXd& scores);

struct StepFlags {
  bool add_terminated = false;
  bool remove_terminated = false;
};

/// Applies the add (if any) and then the removal (if any). An empty choice
/// means the branch terminates.
StepFlags apply_step(const AttributedGraph& g, CommunityState& state,
                     std::optional<NodeId> add, std::optional<NodeId> remove);

struct LabelInfo {
  NodeId node;
  Branch branch;
  bool node_in_truth;
};

/// obj_after - obj_before, plus +1/-1 when labels are available: +1 for
/// adding a ground-truth node or removing a non-ground-truth node.
double reward(double obj_before, double obj_after,
              std::optional<LabelInfo> label = {});

struct TrajectoryStep {
  Branch branch = Branch::add;
  std::vector<NodeId> candidates;
  Eigen::MatrixXd features;  // candidate rows + virtual row
  std::size_t chosen = 0;
  bool stop = false;
  double log_prob = 0.0;
  double reward = 0.0;
  double advantage = 0.0;
};

struct Trajectory {
  std::vector<TrajectoryStep> steps;
  double episode_return = 0.0;  // undiscounted sum of rewards
};

enum class RolloutMode { train, eval };

struct RolloutResult {
  Trajectory trajectory;
  Community raw;        // member set when the episode ended
  Community community;  // connected component of q within `raw`
  std::size_t env_steps = 0;
};

/// Runs one refinement episode from `initial` (which must contain q).
/// `truth` enables the labeled reward terms and the F1 objective.
RolloutResult rollout_episode(const RefineContext& ctx,
                              std::span<const NodeId> initial, NodeId q,
                              const PolicyModel& policy,
                              const RefineConfig& cfg, RolloutMode mode,
                              double epsilon, std::mt19937_64& rng,
                              std::span<const NodeId> truth = {});

/// Connected component of q in the subgraph induced by `members`.
Community connected_component(const AttributedGraph& g,
                              std::span<const NodeId> members, NodeId q);

/// Returns-to-go per branch, minus the trajectory mean.
void compute_advantages(Trajectory& trajectory, double discount);

/// Mean over steps of min(r A, clip(r, 1-eps, 1+eps) A).
double ppo_objective(const PolicyModel& policy, const Trajectory& trajectory,
                     double clip);
/// Gradient of ppo_objective w.r.t. the head parameters (stop vectors are
/// not trained and get zero gradient).
PolicyModel ppo_gradient(const PolicyModel& policy,
                         const Trajectory& trajectory, double clip);

/// Adam ascent on the clipped objective.
class PolicyOptimizer {
 public:
  PolicyOptimizer(const PolicyModel& shape, double learning_rate);
  void ascend(PolicyModel& policy, const PolicyModel& gradient);

 private:
  double lr_;
  std::size_t t_ = 0;
  PolicyModel m_, v_;
};

/// `ppo_epochs` gradient-ascent steps on one trajectory. No-op when empty.
void ppo_update(PolicyModel& policy, PolicyOptimizer& optimizer,
                const Trajectory& trajectory, const RefineConfig& cfg);

struct TrainResult {
  PolicyModel policy;
  std::vector<double> episode_returns;
};

/// Offline training: each episode samples a training community and a query
/// in it, extracts the coarse candidate, rolls out one epsilon-greedy
/// trajectory and runs a PPO update on it.
TrainResult train_refiner(const RefineContext& ctx, const CommunitySet& train,
                          const RefineConfig& cfg, std::uint64_t seed);

/// Greedy online refinement; the result contains q and is connected.
Community refine(const RefineContext& ctx, std::span<const NodeId> coarse,
                 NodeId q, const PolicyModel& policy, const RefineConfig& cfg);

void save_policy(const PolicyModel& policy, const std::filesystem::path& path);
PolicyModel load_policy(const std::filesystem::path& path);

template <typename Fn>
void PolicyModel::for_each_head_parameter(Fn&& fn) {
  for (ScoreHead* head : {&add_head, &remove_head}) {
    for (Eigen::Index i = 0; i < head->w1.size(); ++i) fn(head->w1.data()[i]);
    for (Eigen::Index i = 0; i < head->b1.size(); ++i) fn(head->b1[i]);
    for (Eigen::Index i = 0; i < head->w2.size(); ++i) fn(head->w2[i]);
    fn(head->b2);
  }
}

}  // namespace ncsac
