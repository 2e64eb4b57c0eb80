#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace ncsac {

using NodeId = std::uint32_t;
using AttrId = std::uint32_t;
using Count = std::int64_t;

struct Edge {
  NodeId u;
  NodeId v;
};

/// Immutable undirected simple graph with binary node attributes.
///
/// Adjacency and attribute rows are stored in CSR form with sorted rows.
/// Attribute degrees and their total are computed once at construction.
class AttributedGraph {
 public:
  AttributedGraph() = default;

  /// Builds a graph on nodes 0..n-1. Self-loops and duplicate edges are
  /// dropped (see dropped_edges()). attrs[u] lists the attribute indices
  /// of node u; each must be < k. Missing rows are all-zero.
  AttributedGraph(std::size_t n, std::span<const Edge> edges,
                  const std::vector<std::vector<AttrId>>& attrs, std::size_t k);

  std::size_t num_nodes() const { return degree_.size(); }
  std::size_t num_edges() const { return num_edges_; }
  std::size_t num_attributes() const { return k_; }

  std::span<const NodeId> neighbors(NodeId u) const {
    return {adj_.data() + adj_offsets_[u], adj_.data() + adj_offsets_[u + 1]};
  }
  std::span<const AttrId> attributes(NodeId u) const {
    return {attr_.data() + attr_offsets_[u],
            attr_.data() + attr_offsets_[u + 1]};
  }
  /// Nodes holding attribute f, sorted.
  std::span<const NodeId> holders(AttrId f) const {
    return {holders_.data() + holder_offsets_[f],
            holders_.data() + holder_offsets_[f + 1]};
  }

  Count degree(NodeId u) const { return degree_[u]; }
  Count attribute_degree(NodeId u) const { return attr_degree_[u]; }
  std::span<const Count> degrees() const { return degree_; }
  std::span<const Count> attribute_degrees() const { return attr_degree_; }

  /// 2m.
  Count total_volume() const { return 2 * static_cast<Count>(num_edges_); }
  /// Sum of d_a over all nodes.
  Count total_attribute_volume() const { return vol_a_total_; }
  /// Number of nodes holding each attribute (1_n F).
  std::span<const Count> attribute_column_sums() const { return colsum_; }

  bool has_edge(NodeId u, NodeId v) const;
  std::size_t dropped_edges() const { return dropped_edges_; }

  /// Undirected edge list with u < v, sorted.
  std::vector<Edge> edge_list() const;

 private:
  std::size_t num_edges_ = 0;
  std::size_t k_ = 0;
  std::size_t dropped_edges_ = 0;
  std::vector<std::size_t> adj_offsets_{0};
  std::vector<NodeId> adj_;
  std::vector<std::size_t> attr_offsets_{0};
  std::vector<AttrId> attr_;
  std::vector<std::size_t> holder_offsets_{0};
  std::vector<NodeId> holders_;
  std::vector<Count> degree_;
  std::vector<Count> attr_degree_;
  std::vector<Count> colsum_;
  Count vol_a_total_ = 0;
};

/// d_a(u) = F[u] . (1_n F - 1_k)^T for every node, via one column-sum pass.
std::vector<Count> attribute_degrees(const AttributedGraph& g);

/// F[u] . att^T. With att aggregating a community C not containing u this is
/// the number of attribute edges between u and C.
Count attribute_overlap(const AttributedGraph& g, NodeId u,
                        std::span<const Count> att);

/// F[u] . F[v]^T by sorted-merge intersection.
Count shared_attributes(const AttributedGraph& g, NodeId u, NodeId v);

/// P^a_{uv} = F[u].F[v]^T / d_a(u); 0 when d_a(u) = 0.
double attribute_transition_probability(const AttributedGraph& g, NodeId u,
                                        NodeId v);

/// Dense materialization of the attribute multigraph: count(u, v) is the
/// number of attribute edges between u and v. O(k n^2) time and O(n^2)
/// space, so only meant as a test oracle and as the naive extractor.
class MultigraphOracle {
 public:
  static constexpr std::size_t kDefaultGuard = 2000;

  explicit MultigraphOracle(const AttributedGraph& g,
                            std::size_t max_nodes = kDefaultGuard);

  std::size_t num_nodes() const { return n_; }
  Count count(NodeId u, NodeId v) const {
    return counts_[static_cast<std::size_t>(u) * n_ + v];
  }
  /// Sum of counts incident to u.
  Count degree(NodeId u) const;
  /// Total number of attribute edges (each unordered pair counted once).
  Count total_edges() const;
  /// Nonzero unordered pairs (u < v) with their counts.
  std::vector<std::pair<Edge, Count>> pairs() const;

 private:
  std::size_t n_ = 0;
  std::vector<std::int32_t> counts_;
};

}  // namespace ncsac
