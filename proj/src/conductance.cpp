#include "ncsac/conductance.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "ncsac/error.hpp"

namespace ncsac {

double conductance_ratio(Count cut, Count vol, Count vol_total) {
  const Count denom = std::min(vol, vol_total - vol);
  if (denom <= 0) return 1.0;
  return static_cast<double>(cut) / static_cast<double>(denom);
}

double blend_conductance(double beta, Count cut, Count vol, Count vol_total,
                         Count cut_a, Count vol_a, Count vol_a_total) {
  return beta * conductance_ratio(cut, vol, vol_total) +
         (1.0 - beta) * conductance_ratio(cut_a, vol_a, vol_a_total);
}

void check_beta(double beta) {
  if (!(beta >= 0.0 && beta <= 1.0)) {
    throw ConfigError("beta must lie in [0, 1], got " + std::to_string(beta));
  }
}

namespace {

std::vector<std::uint8_t> membership(const AttributedGraph& g,
                                     std::span<const NodeId> community) {
  std::vector<std::uint8_t> in(g.num_nodes(), 0);
  for (NodeId u : community) {
    if (u >= g.num_nodes()) {
      throw BoundsError("community node " + std::to_string(u) +
                        " out of range");
    }
    in[u] = 1;
  }
  return in;
}

}  // namespace

double phi_t(const AttributedGraph& g, std::span<const NodeId> community) {
  const auto in = membership(g, community);
  Count cut = 0;
  Count vol = 0;
  for (NodeId u = 0; u < g.num_nodes(); ++u) {
    if (!in[u]) continue;
    vol += g.degree(u);
    for (NodeId v : g.neighbors(u)) cut += in[v] ? 0 : 1;
  }
  return conductance_ratio(cut, vol, g.total_volume());
}

double phi_a(const AttributedGraph& g, std::span<const NodeId> community) {
  const auto in = membership(g, community);
  std::vector<Count> att(g.num_attributes(), 0);
  Count vol_a = 0;
  for (NodeId u = 0; u < g.num_nodes(); ++u) {
    if (!in[u]) continue;
    vol_a += g.attribute_degree(u);
    for (AttrId f : g.attributes(u)) ++att[f];
  }
  // Attribute edges from u in C via f leave C once per non-member holder.
  auto colsum = g.attribute_column_sums();
  Count cut_a = 0;
  for (NodeId u = 0; u < g.num_nodes(); ++u) {
    if (!in[u]) continue;
    for (AttrId f : g.attributes(u)) cut_a += colsum[f] - att[f];
  }
  return conductance_ratio(cut_a, vol_a, g.total_attribute_volume());
}

double phi_aug(const AttributedGraph& g, std::span<const NodeId> community,
               double beta) {
  check_beta(beta);
  return beta * phi_t(g, community) + (1.0 - beta) * phi_a(g, community);
}

CommunityState::CommunityState(const AttributedGraph& g, NodeId query)
    : query_(query),
      members_{query},
      position_(g.num_nodes(), -1),
      cut_(g.degree(query)),
      vol_(g.degree(query)),
      cut_a_(g.attribute_degree(query)),
      vol_a_(g.attribute_degree(query)),
      att_(g.num_attributes(), 0) {
  position_[query] = 0;
  for (AttrId f : g.attributes(query)) att_[f] = 1;
}

void CommunityState::add(const AttributedGraph& g, NodeId u) {
  if (contains(u)) {
    throw PreconditionError("node " + std::to_string(u) +
                            " is already a member");
  }
  Count inside = 0;
  for (NodeId v : g.neighbors(u)) inside += contains(v) ? 1 : 0;
  cut_ += g.degree(u) - 2 * inside;
  vol_ += g.degree(u);
  cut_a_ += g.attribute_degree(u) - 2 * attribute_overlap(g, u, att_);
  vol_a_ += g.attribute_degree(u);
  for (AttrId f : g.attributes(u)) ++att_[f];
  position_[u] = static_cast<std::int64_t>(members_.size());
  members_.push_back(u);
}

void CommunityState::remove(const AttributedGraph& g, NodeId u) {
  if (u == query_) {
    throw PreconditionError("the query node " + std::to_string(u) +
                            " cannot be removed");
  }
  if (!contains(u)) {
    throw PreconditionError("node " + std::to_string(u) + " is not a member");
  }
  const auto pos = static_cast<std::size_t>(position_[u]);
  members_[pos] = members_.back();
  position_[members_[pos]] = static_cast<std::int64_t>(pos);
  members_.pop_back();
  position_[u] = -1;

  for (AttrId f : g.attributes(u)) --att_[f];
  Count inside = 0;
  for (NodeId v : g.neighbors(u)) inside += contains(v) ? 1 : 0;
  cut_ -= g.degree(u) - 2 * inside;
  vol_ -= g.degree(u);
  cut_a_ -= g.attribute_degree(u) - 2 * attribute_overlap(g, u, att_);
  vol_a_ -= g.attribute_degree(u);
}

std::vector<NodeId> CommunityState::sorted_members() const {
  std::vector<NodeId> out(members_.begin(), members_.end());
  std::sort(out.begin(), out.end());
  return out;
}

double CommunityState::phi(const AttributedGraph& g, double beta) const {
  return blend_conductance(beta, cut_, vol_, g.total_volume(), cut_a_, vol_a_,
                           g.total_attribute_volume());
}

bool CommunityState::same_counters(const CommunityState& other) const {
  return query_ == other.query_ && cut_ == other.cut_ && vol_ == other.vol_ &&
         cut_a_ == other.cut_a_ && vol_a_ == other.vol_a_ &&
         att_ == other.att_ && sorted_members() == other.sorted_members();
}

CommunityState CommunityState::from_scratch(const AttributedGraph& g,
                                            NodeId query,
                                            std::span<const NodeId> members) {
  CommunityState s;
  s.query_ = query;
  s.position_.assign(g.num_nodes(), -1);
  s.att_.assign(g.num_attributes(), 0);
  for (NodeId u : members) {
    if (s.position_[u] >= 0) continue;
    s.position_[u] = static_cast<std::int64_t>(s.members_.size());
    s.members_.push_back(u);
  }
  if (s.position_[query] < 0) {
    throw PreconditionError("query node must be a member");
  }
  for (NodeId u : s.members_) {
    s.vol_ += g.degree(u);
    s.vol_a_ += g.attribute_degree(u);
    for (NodeId v : g.neighbors(u)) s.cut_ += s.contains(v) ? 0 : 1;
    for (AttrId f : g.attributes(u)) ++s.att_[f];
  }
  // Pairwise count over members against everything else.
  for (NodeId u : s.members_) {
    for (NodeId v = 0; v < g.num_nodes(); ++v) {
      if (!s.contains(v)) s.cut_a_ += shared_attributes(g, u, v);
    }
  }
  return s;
}

CommunityState state_init(const AttributedGraph& g, NodeId q) {
  if (q >= g.num_nodes()) {
    throw BoundsError("query node " + std::to_string(q) + " out of range (n=" +
                      std::to_string(g.num_nodes()) + ")");
  }
  return CommunityState(g, q);
}

CommunityState state_add(const AttributedGraph& g, CommunityState s,
                         NodeId u) {
  s.add(g, u);
  return s;
}

CommunityState state_remove(const AttributedGraph& g, CommunityState s,
                            NodeId u) {
  s.remove(g, u);
  return s;
}

double phi_of_state(const AttributedGraph& g, const CommunityState& s,
                    double beta) {
  return s.phi(g, beta);
}

namespace {

// One walk step from u; returns the next node.
NodeId walk_step(const AttributedGraph& g, NodeId u, WalkMode mode,
                 std::mt19937_64& rng) {
  if (mode == WalkMode::topology) {
    auto nbrs = g.neighbors(u);
    std::uniform_int_distribution<std::size_t> pick(0, nbrs.size() - 1);
    return nbrs[pick(rng)];
  }
  // P^a_{uv} is proportional to the attributes u and v share: choose an
  // attribute of u weighted by its other holders, then one such holder.
  auto attrs = g.attributes(u);
  auto colsum = g.attribute_column_sums();
  std::uniform_int_distribution<Count> ticket(0, g.attribute_degree(u) - 1);
  Count t = ticket(rng);
  AttrId chosen = attrs.front();
  for (AttrId f : attrs) {
    if (t < colsum[f] - 1) {
      chosen = f;
      break;
    }
    t -= colsum[f] - 1;
  }
  auto holders = g.holders(chosen);
  std::size_t idx = static_cast<std::size_t>(t);
  const auto self = static_cast<std::size_t>(
      std::lower_bound(holders.begin(), holders.end(), u) - holders.begin());
  if (idx >= self) ++idx;
  return holders[idx];
}

struct SideSample {
  double p = 0.0;
  double se = 0.0;
};

SideSample sample_side(const AttributedGraph& g,
                       const std::vector<std::uint8_t>& in, bool inside,
                       WalkMode mode, std::size_t trials,
                       std::mt19937_64& rng) {
  std::vector<NodeId> nodes;
  std::vector<double> weights;
  for (NodeId u = 0; u < g.num_nodes(); ++u) {
    if (static_cast<bool>(in[u]) != inside) continue;
    const Count w = mode == WalkMode::topology ? g.degree(u)
                                               : g.attribute_degree(u);
    if (w > 0) {
      nodes.push_back(u);
      weights.push_back(static_cast<double>(w));
    }
  }
  if (nodes.empty()) {
    throw DegenerateInputError(
        std::string("escape probability needs nonzero volume on the ") +
        (inside ? "community" : "complement") + " side");
  }
  std::discrete_distribution<std::size_t> start(weights.begin(),
                                                weights.end());
  std::size_t escaped = 0;
  for (std::size_t t = 0; t < trials; ++t) {
    const NodeId w0 = nodes[start(rng)];
    const NodeId w1 = walk_step(g, w0, mode, rng);
    if (static_cast<bool>(in[w1]) != inside) ++escaped;
  }
  SideSample out;
  out.p = static_cast<double>(escaped) / static_cast<double>(trials);
  out.se = std::sqrt(out.p * (1.0 - out.p) / static_cast<double>(trials));
  return out;
}

}  // namespace

EscapeEstimate escape_probability(const AttributedGraph& g,
                                  std::span<const NodeId> community,
                                  WalkMode mode, std::size_t trials,
                                  std::uint64_t seed) {
  if (trials == 0) throw ConfigError("escape probability needs trials >= 1");
  std::vector<std::uint8_t> in(g.num_nodes(), 0);
  for (NodeId u : community) {
    if (u >= g.num_nodes()) throw BoundsError("community node out of range");
    in[u] = 1;
  }
  std::mt19937_64 rng(seed);
  const SideSample a = sample_side(g, in, true, mode, trials, rng);
  const SideSample b = sample_side(g, in, false, mode, trials, rng);
  EscapeEstimate out;
  out.from_inside = a.p;
  out.from_outside = b.p;
  const SideSample& best = a.p >= b.p ? a : b;
  out.estimate = best.p;
  out.standard_error = best.se;
  return out;
}

}  // namespace ncsac
