#include "ncsac/refiner.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "ncsac/error.hpp"
#include "ncsac/extractor.hpp"
#include "ncsac/serialize.hpp"

namespace ncsac {

namespace {

Eigen::MatrixXd hidden_preactivation(const ScoreHead& head,
                                     const Eigen::MatrixXd& states) {
  Eigen::MatrixXd z = states * head.w1;
  z.rowwise() += head.b1.transpose();
  return z;
}

ScoreHead random_head(Eigen::Index dim, Eigen::Index hidden,
                      std::mt19937_64& rng) {
  const double limit1 = std::sqrt(6.0 / static_cast<double>(dim + hidden));
  const double limit2 = std::sqrt(6.0 / static_cast<double>(hidden + 1));
  std::uniform_real_distribution<double> u1(-limit1, limit1);
  std::uniform_real_distribution<double> u2(-limit2, limit2);
  ScoreHead head;
  head.w1 = Eigen::MatrixXd::NullaryExpr(dim, hidden, [&] { return u1(rng); });
  head.b1 = Eigen::VectorXd::Constant(hidden, 0.01);
  head.w2 = Eigen::VectorXd::NullaryExpr(hidden, [&] { return u2(rng); });
  head.b2 = 0.0;
  return head;
}

// Accumulates d(sum_i ds_i * score_i)/d(params) into grad.
void head_backward(const ScoreHead& head, const Eigen::MatrixXd& states,
                   const Eigen::VectorXd& dscores, ScoreHead& grad) {
  const Eigen::MatrixXd z = hidden_preactivation(head, states);
  const Eigen::MatrixXd a = z.cwiseMax(0.0);
  grad.w2 += a.transpose() * dscores;
  grad.b2 += dscores.sum();
  const Eigen::MatrixXd dz =
      (dscores * head.w2.transpose())
          .cwiseProduct((z.array() > 0.0).cast<double>().matrix());
  grad.w1 += states.transpose() * dz;
  grad.b1 += dz.colwise().sum().transpose();
}

double log_softmax_at(const Eigen::VectorXd& scores, std::size_t index) {
  const double top = scores.maxCoeff();
  const double lse = top + std::log((scores.array() - top).exp().sum());
  return scores[static_cast<Eigen::Index>(index)] - lse;
}

const ScoreHead& head_for(const PolicyModel& p, Branch b) {
  return b == Branch::add ? p.add_head : p.remove_head;
}
ScoreHead& head_for(PolicyModel& p, Branch b) {
  return b == Branch::add ? p.add_head : p.remove_head;
}

double clip_ratio(double r, double clip) {
  return std::clamp(r, 1.0 - clip, 1.0 + clip);
}

}  // namespace

Eigen::VectorXd ScoreHead::score(const Eigen::MatrixXd& states) const {
  Eigen::VectorXd s =
      hidden_preactivation(*this, states).cwiseMax(0.0) * w2;
  s.array() += b2;
  return s;
}

PolicyModel PolicyModel::random(Eigen::Index state_dim, Eigen::Index hidden,
                                std::uint64_t seed) {
  if (state_dim <= 0 || hidden <= 0) {
    throw ShapeError("policy dimensions must be positive");
  }
  std::mt19937_64 rng(seed);
  PolicyModel p;
  p.add_head = random_head(state_dim, hidden, rng);
  p.remove_head = random_head(state_dim, hidden, rng);
  std::uniform_real_distribution<double> stop(-0.1, 0.1);
  p.stop_add = Eigen::VectorXd::NullaryExpr(state_dim, [&] { return stop(rng); });
  p.stop_remove =
      Eigen::VectorXd::NullaryExpr(state_dim, [&] { return stop(rng); });
  p.seed = seed;
  return p;
}

PolicyModel PolicyModel::zeros_like() const {
  PolicyModel z = *this;
  for (ScoreHead* h : {&z.add_head, &z.remove_head}) {
    h->w1.setZero();
    h->b1.setZero();
    h->w2.setZero();
    h->b2 = 0.0;
  }
  z.stop_add.setZero();
  z.stop_remove.setZero();
  return z;
}

void PolicyModel::validate() const {
  for (const ScoreHead* h : {&add_head, &remove_head}) {
    if (h->w1.rows() != stop_add.size() || h->b1.size() != h->w1.cols() ||
        h->w2.size() != h->w1.cols()) {
      throw ShapeError("policy head shapes are inconsistent");
    }
    if (!h->w1.allFinite() || !h->b1.allFinite() || !h->w2.allFinite() ||
        !std::isfinite(h->b2)) {
      throw ConfigError("policy head holds non-finite weights");
    }
  }
  if (stop_remove.size() != stop_add.size()) {
    throw ShapeError("termination vectors differ in length");
  }
}

void RefineConfig::validate() const {
  if (!(beta >= 0.0 && beta <= 1.0)) throw ConfigError("beta must lie in [0, 1]");
  if (episodes < 1) throw ConfigError("tau (episodes) must be >= 1");
  if (!(discount >= 0.0 && discount <= 1.0)) {
    throw ConfigError("discount must lie in [0, 1]");
  }
  if (!(clip > 0.0 && clip < 1.0)) throw ConfigError("PPO clip must lie in (0, 1)");
  if (!(epsilon_start >= 0.0 && epsilon_start <= 1.0 && epsilon_end >= 0.0 &&
        epsilon_end <= epsilon_start)) {
    throw ConfigError("exploration must satisfy 0 <= end <= start <= 1");
  }
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("policy learning rate must be finite and >= 0");
  }
  if (head_hidden <= 0) throw ConfigError("policy hidden width must be positive");
  if (max_steps && *max_steps == 0) throw ConfigError("max_steps must be >= 1");
}

double exploration_rate(std::size_t episode, const RefineConfig& cfg) {
  if (cfg.episodes <= 1) return cfg.epsilon_start;
  const double frac = std::min(1.0, static_cast<double>(episode) /
                                        static_cast<double>(cfg.episodes - 1));
  return cfg.epsilon_start - (cfg.epsilon_start - cfg.epsilon_end) * frac;
}

RefineContext::RefineContext(const AttributedGraph& g, const EncoderModel& e)
    : graph(g), encoder(e), tensors(make_graph_tensors(g)) {
  if (e.in_dim() != static_cast<Eigen::Index>(g.num_attributes() + 1)) {
    throw ShapeError("encoder input width " + std::to_string(e.in_dim()) +
                     " does not match k+1=" +
                     std::to_string(g.num_attributes() + 1));
  }
}

std::vector<NodeId> community_boundary(const AttributedGraph& g,
                                       const CommunityState& state) {
  std::vector<NodeId> out;
  for (NodeId u : state.members()) {
    for (NodeId v : g.neighbors(u)) {
      if (!state.contains(v)) out.push_back(v);
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

Eigen::VectorXd StateFeatures::of(NodeId u) const {
  auto it = std::lower_bound(nodes.begin(), nodes.end(), u);
  if (it == nodes.end() || *it != u) {
    throw PreconditionError("node " + std::to_string(u) +
                            " is outside the community and its boundary");
  }
  return rows.row(it - nodes.begin()).transpose();
}

StateFeatures state_features(const RefineContext& ctx,
                             const CommunityState& state) {
  std::vector<std::uint8_t> indicator(ctx.graph.num_nodes(), 0);
  for (NodeId u : state.members()) indicator[u] = 1;
  const Eigen::MatrixXd emb = encode(ctx.encoder, ctx.tensors, indicator);

  StateFeatures f;
  f.boundary = community_boundary(ctx.graph, state);
  f.nodes = state.sorted_members();
  f.nodes.insert(f.nodes.end(), f.boundary.begin(), f.boundary.end());
  std::sort(f.nodes.begin(), f.nodes.end());
  f.rows.resize(static_cast<Eigen::Index>(f.nodes.size()), emb.cols());
  for (std::size_t i = 0; i < f.nodes.size(); ++i) {
    f.rows.row(static_cast<Eigen::Index>(i)) = emb.row(f.nodes[i]);
  }
  return f;
}

namespace {

BranchScores score_branch(const ScoreHead& head, const StateFeatures& feats,
                          std::vector<NodeId> candidates,
                          const Eigen::VectorXd& stop) {
  BranchScores b;
  b.candidates = std::move(candidates);
  const auto count = static_cast<Eigen::Index>(b.candidates.size());
  b.features.resize(count + 1, feats.rows.cols());
  for (Eigen::Index i = 0; i < count; ++i) {
    b.features.row(i) = feats.of(b.candidates[static_cast<std::size_t>(i)]);
  }
  b.features.row(count) = stop.transpose();
  b.scores = head.score(b.features);
  return b;
}

}  // namespace

ActionScores score_actions(const PolicyModel& policy,
                           const StateFeatures& feats,
                           const CommunityState& state) {
  if (feats.rows.cols() != policy.state_dim()) {
    throw ShapeError("policy expects state width " +
                     std::to_string(policy.state_dim()) + ", got " +
                     std::to_string(feats.rows.cols()));
  }
  std::vector<NodeId> removable;
  for (NodeId u : state.sorted_members()) {
    if (u != state.query()) removable.push_back(u);
  }
  ActionScores out;
  out.add = score_branch(policy.add_head, feats, feats.boundary, policy.stop_add);
  out.remove = score_branch(policy.remove_head, feats, std::move(removable),
                            policy.stop_remove);
  return out;
}

std::size_t greedy_choice(const Eigen::VectorXd& scores) {
  std::size_t best = 0;
  for (Eigen::Index i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[static_cast<Eigen::Index>(best)]) {
      best = static_cast<std::size_t>(i);
    }
  }
  return best;
}

Eigen::VectorXd softmax(const Eigen::VectorXd& scores) {
  Eigen::VectorXd p = (scores.array() - scores.maxCoeff()).exp().matrix();
  return p / p.sum();
}

StepFlags apply_step(const AttributedGraph& g, CommunityState& state,
                     std::optional<NodeId> add, std::optional<NodeId> remove) {
  if (remove && *remove == state.query()) {
    throw PreconditionError("the query node cannot be removed");
  }
  if (add) state.add(g, *add);
  if (remove) state.remove(g, *remove);
  return {!add.has_value(), !remove.has_value()};
}

double reward(double obj_before, double obj_after,
              std::optional<LabelInfo> label) {
  double r = obj_after - obj_before;
  if (label) {
    const bool good = label->branch == Branch::add ? label->node_in_truth
                                                   : !label->node_in_truth;
    r += good ? 1.0 : -1.0;
  }
  return r;
}

Community connected_component(const AttributedGraph& g,
                              std::span<const NodeId> members, NodeId q) {
  std::vector<std::uint8_t> allowed(g.num_nodes(), 0);
  for (NodeId u : members) allowed[u] = 1;
  allowed[q] = 1;
  std::vector<std::uint8_t> seen(g.num_nodes(), 0);
  Community out{q};
  seen[q] = 1;
  for (std::size_t i = 0; i < out.size(); ++i) {
    for (NodeId v : g.neighbors(out[i])) {
      if (allowed[v] && !seen[v]) {
        seen[v] = 1;
        out.push_back(v);
      }
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

RolloutResult rollout_episode(const RefineContext& ctx,
                              std::span<const NodeId> initial, NodeId q,
                              const PolicyModel& policy,
                              const RefineConfig& cfg, RolloutMode mode,
                              double epsilon, std::mt19937_64& rng,
                              std::span<const NodeId> truth) {
  const AttributedGraph& g = ctx.graph;
  if (std::find(initial.begin(), initial.end(), q) == initial.end()) {
    throw PreconditionError("initial community must contain the query node");
  }
  CommunityState state(g, q);
  for (NodeId u : initial) {
    if (!state.contains(u)) state.add(g, u);
  }

  std::vector<std::uint8_t> in_truth;
  if (!truth.empty()) {
    in_truth.assign(g.num_nodes(), 0);
    for (NodeId u : truth) in_truth[u] = 1;
  }
  const bool labeled = !in_truth.empty();
  const bool need_objective = mode == RolloutMode::train;
  if (need_objective && cfg.objective == Objective::labeled_f1 && !labeled) {
    throw PreconditionError("the labeled F1 objective needs a ground truth");
  }
  std::size_t overlap = 0;
  if (labeled) {
    for (NodeId u : state.members()) overlap += in_truth[u];
  }
  auto objective = [&]() -> double {
    if (cfg.objective == Objective::labeled_f1) {
      return 2.0 * static_cast<double>(overlap) /
             static_cast<double>(state.size() + truth.size());
    }
    return -state.phi(g, cfg.beta);
  };

  std::uniform_real_distribution<double> coin(0.0, 1.0);
  auto choose = [&](const Eigen::VectorXd& scores) {
    if (mode == RolloutMode::eval) return greedy_choice(scores);
    if (coin(rng) < epsilon) {
      std::uniform_int_distribution<std::size_t> any(
          0, static_cast<std::size_t>(scores.size()) - 1);
      return any(rng);
    }
    const Eigen::VectorXd p = softmax(scores);
    std::discrete_distribution<std::size_t> pick(p.data(), p.data() + p.size());
    return pick(rng);
  };

  RolloutResult result;
  bool add_active = true;
  bool remove_active = true;
  const std::size_t max_steps =
      cfg.max_steps.value_or(2 * state.size() + 20);
  auto record = [&](Branch branch, const BranchScores& b, std::size_t idx) {
    TrajectoryStep step;
    step.branch = branch;
    step.candidates = b.candidates;
    step.features = b.features;
    step.chosen = idx;
    step.stop = b.is_stop(idx);
    step.log_prob = log_softmax_at(b.scores, idx);
    result.trajectory.steps.push_back(std::move(step));
    return &result.trajectory.steps.back() - &result.trajectory.steps.front();
  };

  while (result.env_steps < max_steps && (add_active || remove_active)) {
    ++result.env_steps;
    const StateFeatures feats = state_features(ctx, state);
    const ActionScores scores = score_actions(policy, feats, state);

    std::optional<std::ptrdiff_t> add_step, remove_step;
    std::optional<NodeId> add_node, remove_node;
    if (add_active) {
      const std::size_t idx = choose(scores.add.scores);
      if (mode == RolloutMode::train) add_step = record(Branch::add, scores.add, idx);
      if (scores.add.is_stop(idx)) {
        add_active = false;
      } else {
        add_node = scores.add.candidates[idx];
      }
    }
    if (remove_active) {
      const std::size_t idx = choose(scores.remove.scores);
      if (mode == RolloutMode::train) {
        remove_step = record(Branch::remove, scores.remove, idx);
      }
      if (scores.remove.is_stop(idx)) {
        remove_active = false;
      } else {
        remove_node = scores.remove.candidates[idx];
      }
    }

    double obj = need_objective ? objective() : 0.0;
    if (add_node) {
      state.add(g, *add_node);
      if (labeled) overlap += in_truth[*add_node];
      if (add_step) {
        const double after = objective();
        std::optional<LabelInfo> label;
        if (labeled) label = LabelInfo{*add_node, Branch::add, in_truth[*add_node] != 0};
        result.trajectory.steps[static_cast<std::size_t>(*add_step)].reward =
            reward(obj, after, label);
        obj = after;
      }
    }
    if (remove_node) {
      state.remove(g, *remove_node);
      if (labeled) overlap -= in_truth[*remove_node];
      if (remove_step) {
        const double after = objective();
        std::optional<LabelInfo> label;
        if (labeled) {
          label = LabelInfo{*remove_node, Branch::remove, in_truth[*remove_node] != 0};
        }
        result.trajectory.steps[static_cast<std::size_t>(*remove_step)].reward =
            reward(obj, after, label);
      }
    }
  }

  for (const TrajectoryStep& s : result.trajectory.steps) {
    result.trajectory.episode_return += s.reward;
  }
  result.raw = state.sorted_members();
  result.community = connected_component(g, result.raw, q);
  return result;
}

void compute_advantages(Trajectory& trajectory, double discount) {
  auto& steps = trajectory.steps;
  if (steps.empty()) return;
  std::vector<double> to_go(steps.size(), 0.0);
  for (Branch b : {Branch::add, Branch::remove}) {
    double running = 0.0;
    for (std::size_t i = steps.size(); i-- > 0;) {
      if (steps[i].branch != b) continue;
      running = steps[i].reward + discount * running;
      to_go[i] = running;
    }
  }
  const double mean =
      std::accumulate(to_go.begin(), to_go.end(), 0.0) /
      static_cast<double>(to_go.size());
  for (std::size_t i = 0; i < steps.size(); ++i) {
    steps[i].advantage = to_go[i] - mean;
  }
}

double ppo_objective(const PolicyModel& policy, const Trajectory& trajectory,
                     double clip) {
  if (trajectory.steps.empty()) return 0.0;
  double total = 0.0;
  for (const TrajectoryStep& s : trajectory.steps) {
    const Eigen::VectorXd scores = head_for(policy, s.branch).score(s.features);
    const double ratio = std::exp(log_softmax_at(scores, s.chosen) - s.log_prob);
    total += std::min(ratio * s.advantage, clip_ratio(ratio, clip) * s.advantage);
  }
  return total / static_cast<double>(trajectory.steps.size());
}

PolicyModel ppo_gradient(const PolicyModel& policy,
                         const Trajectory& trajectory, double clip) {
  PolicyModel grad = policy.zeros_like();
  if (trajectory.steps.empty()) return grad;
  const double inv = 1.0 / static_cast<double>(trajectory.steps.size());
  for (const TrajectoryStep& s : trajectory.steps) {
    const ScoreHead& head = head_for(policy, s.branch);
    const Eigen::VectorXd scores = head.score(s.features);
    const double ratio = std::exp(log_softmax_at(scores, s.chosen) - s.log_prob);
    // The clipped branch is constant in the parameters.
    if (ratio * s.advantage > clip_ratio(ratio, clip) * s.advantage) continue;
    Eigen::VectorXd dscores = -softmax(scores);
    dscores[static_cast<Eigen::Index>(s.chosen)] += 1.0;
    dscores *= inv * s.advantage * ratio;
    head_backward(head, s.features, dscores, head_for(grad, s.branch));
  }
  return grad;
}

PolicyOptimizer::PolicyOptimizer(const PolicyModel& shape, double learning_rate)
    : lr_(learning_rate), m_(shape.zeros_like()), v_(shape.zeros_like()) {}

void PolicyOptimizer::ascend(PolicyModel& policy, const PolicyModel& gradient) {
  constexpr double kBeta1 = 0.9;
  constexpr double kBeta2 = 0.999;
  constexpr double kEps = 1e-8;
  if (lr_ == 0.0) return;
  ++t_;
  PolicyModel g = gradient;
  std::vector<double*> params, grads, ms, vs;
  policy.for_each_head_parameter([&](double& p) { params.push_back(&p); });
  g.for_each_head_parameter([&](double& p) { grads.push_back(&p); });
  m_.for_each_head_parameter([&](double& p) { ms.push_back(&p); });
  v_.for_each_head_parameter([&](double& p) { vs.push_back(&p); });
  const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    *ms[i] = kBeta1 * *ms[i] + (1.0 - kBeta1) * *grads[i];
    *vs[i] = kBeta2 * *vs[i] + (1.0 - kBeta2) * *grads[i] * *grads[i];
    *params[i] += lr_ * (*ms[i] / c1) / (std::sqrt(*vs[i] / c2) + kEps);
  }
}

void ppo_update(PolicyModel& policy, PolicyOptimizer& optimizer,
                const Trajectory& trajectory, const RefineConfig& cfg) {
  if (trajectory.steps.empty()) return;
  for (std::size_t epoch = 0; epoch < cfg.ppo_epochs; ++epoch) {
    optimizer.ascend(policy, ppo_gradient(policy, trajectory, cfg.clip));
  }
}

TrainResult train_refiner(const RefineContext& ctx, const CommunitySet& train,
                          const RefineConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (train.empty()) throw ConfigError("refiner training needs training communities");
  std::mt19937_64 rng(seed);
  TrainResult result;
  result.policy =
      PolicyModel::random(ctx.encoder.out_dim(), cfg.head_hidden, rng());
  result.policy.seed = seed;
  PolicyOptimizer optimizer(result.policy, cfg.learning_rate);

  std::uniform_int_distribution<std::size_t> pick(0, train.size() - 1);
  for (std::size_t e = 0; e < cfg.episodes; ++e) {
    const Community& truth = train[pick(rng)];
    std::uniform_int_distribution<std::size_t> member(0, truth.size() - 1);
    const NodeId q = truth[member(rng)];
    const ExtractionResult coarse =
        extract_candidate(ctx.graph, q, cfg.beta, cfg.max_hop);
    RolloutResult rollout =
        rollout_episode(ctx, coarse.community, q, result.policy, cfg,
                        RolloutMode::train, exploration_rate(e, cfg), rng, truth);
    compute_advantages(rollout.trajectory, cfg.discount);
    ppo_update(result.policy, optimizer, rollout.trajectory, cfg);
    result.episode_returns.push_back(rollout.trajectory.episode_return);
  }
  result.policy.validate();
  return result;
}

Community refine(const RefineContext& ctx, std::span<const NodeId> coarse,
                 NodeId q, const PolicyModel& policy, const RefineConfig& cfg) {
  std::mt19937_64 unused(0);
  return rollout_episode(ctx, coarse, q, policy, cfg, RolloutMode::eval, 0.0,
                         unused)
      .community;
}

namespace {

void write_head(BinaryWriter& w, const ScoreHead& h) {
  w.matrix(h.w1);
  w.vector(h.b1);
  w.vector(h.w2);
  w.f64(h.b2);
}

ScoreHead read_head(BinaryReader& r) {
  ScoreHead h;
  h.w1 = r.matrix();
  h.b1 = r.vector();
  h.w2 = r.vector();
  h.b2 = r.f64();
  return h;
}

}  // namespace

void save_policy(const PolicyModel& policy, const std::filesystem::path& path) {
  policy.validate();
  BinaryWriter w(ModelKind::policy);
  w.u64(static_cast<std::uint64_t>(policy.state_dim()));
  w.u64(static_cast<std::uint64_t>(policy.add_head.w1.cols()));
  w.u64(policy.seed);
  write_head(w, policy.add_head);
  write_head(w, policy.remove_head);
  w.vector(policy.stop_add);
  w.vector(policy.stop_remove);
  w.save(path);
}

PolicyModel load_policy(const std::filesystem::path& path) {
  BinaryReader r = BinaryReader::open(path, ModelKind::policy);
  const auto dim = r.u64();
  const auto hidden = r.u64();
  PolicyModel p;
  p.seed = r.u64();
  p.add_head = read_head(r);
  p.remove_head = read_head(r);
  p.stop_add = r.vector();
  p.stop_remove = r.vector();
  if (!r.at_end()) throw ParseError("trailing bytes in policy file");
  p.validate();
  if (static_cast<std::uint64_t>(p.state_dim()) != dim ||
      static_cast<std::uint64_t>(p.add_head.w1.cols()) != hidden) {
    throw ShapeError("policy header dims disagree with stored weights");
  }
  return p;
}

}  // namespace ncsac
