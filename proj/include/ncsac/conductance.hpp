#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ncsac/graph.hpp"

namespace ncsac {

/// cut / min(vol, vol_total - vol), or 1.0 when that denominator is 0.
double conductance_ratio(Count cut, Count vol, Count vol_total);

/// beta * phi_t + (1 - beta) * phi_a from raw counters.
double blend_conductance(double beta, Count cut, Count vol, Count vol_total,
                         Count cut_a, Count vol_a, Count vol_a_total);

/// Throws ConfigError unless 0 <= beta <= 1.
void check_beta(double beta);

/// Topology-based conductance of C. 1.0 for empty C or C = V.
double phi_t(const AttributedGraph& g, std::span<const NodeId> community);

/// Attribute-based conductance of C on the implicit attribute multigraph.
double phi_a(const AttributedGraph& g, std::span<const NodeId> community);

/// Attribute-augmented conductance beta*phi_t + (1-beta)*phi_a.
double phi_aug(const AttributedGraph& g, std::span<const NodeId> community,
               double beta);

/// Incrementally maintained statistics of a community containing a query
/// node. add() and remove() cost O(d(u) + |F[u]|).
class CommunityState {
 public:
  CommunityState() = default;
  /// {q} with cut = vol = d(q), cut_a = vol_a = d_a(q), att = F[q].
  CommunityState(const AttributedGraph& g, NodeId query);

  void add(const AttributedGraph& g, NodeId u);
  /// Inverse of add(). The query node cannot be removed.
  void remove(const AttributedGraph& g, NodeId u);

  bool contains(NodeId u) const { return position_[u] >= 0; }
  NodeId query() const { return query_; }
  std::size_t size() const { return members_.size(); }
  /// Members in insertion order (swap-removal permutes it).
  std::span<const NodeId> members() const { return members_; }
  std::vector<NodeId> sorted_members() const;

  Count cut() const { return cut_; }
  Count vol() const { return vol_; }
  Count cut_a() const { return cut_a_; }
  Count vol_a() const { return vol_a_; }
  std::span<const Count> att() const { return att_; }

  /// Attribute-augmented conductance from the counters.
  double phi(const AttributedGraph& g, double beta) const;

  /// Counters and member set agree (member order ignored).
  bool same_counters(const CommunityState& other) const;

  /// Recomputes every counter from the member set.
  static CommunityState from_scratch(const AttributedGraph& g, NodeId query,
                                     std::span<const NodeId> members);

 private:
  NodeId query_ = 0;
  std::vector<NodeId> members_;
  std::vector<std::int64_t> position_;
  Count cut_ = 0;
  Count vol_ = 0;
  Count cut_a_ = 0;
  Count vol_a_ = 0;
  std::vector<Count> att_;
};

CommunityState state_init(const AttributedGraph& g, NodeId q);
CommunityState state_add(const AttributedGraph& g, CommunityState s, NodeId u);
CommunityState state_remove(const AttributedGraph& g, CommunityState s,
                            NodeId u);
double phi_of_state(const AttributedGraph& g, const CommunityState& s,
                    double beta);

enum class WalkMode { topology, attribute };

struct EscapeEstimate {
  double estimate = 0.0;
  double standard_error = 0.0;
  double from_inside = 0.0;   // Pr(w1 outside | w0 inside)
  double from_outside = 0.0;  // Pr(w1 inside | w0 outside)
};

/// Monte-Carlo estimate of max{Pr(w1 in C-bar | w0 in C),
/// Pr(w1 in C | w0 in C-bar)} for a one-step walk with w0 drawn by the
/// (attribute) degree distribution of its side. `trials` walks per side.
EscapeEstimate escape_probability(const AttributedGraph& g,
                                  std::span<const NodeId> community,
                                  WalkMode mode, std::size_t trials,
                                  std::uint64_t seed);

}  // namespace ncsac
