#include "ncsac/graph.hpp"

#include <algorithm>
#include <string>

#include "ncsac/error.hpp"

namespace ncsac {

AttributedGraph::AttributedGraph(std::size_t n, std::span<const Edge> edges,
                                 const std::vector<std::vector<AttrId>>& attrs,
                                 std::size_t k)
    : k_(k) {
  if (attrs.size() > n) {
    throw BoundsError("attribute rows (" + std::to_string(attrs.size()) +
                      ") exceed node count " + std::to_string(n));
  }

  std::vector<Edge> directed;
  directed.reserve(2 * edges.size());
  for (const Edge& e : edges) {
    if (e.u >= n || e.v >= n) {
      throw BoundsError("edge (" + std::to_string(e.u) + ", " +
                        std::to_string(e.v) + ") references a node >= " +
                        std::to_string(n));
    }
    if (e.u == e.v) {
      ++dropped_edges_;
      continue;
    }
    directed.push_back({e.u, e.v});
    directed.push_back({e.v, e.u});
  }
  std::sort(directed.begin(), directed.end(), [](const Edge& a, const Edge& b) {
    return a.u != b.u ? a.u < b.u : a.v < b.v;
  });
  auto last = std::unique(directed.begin(), directed.end(),
                          [](const Edge& a, const Edge& b) {
                            return a.u == b.u && a.v == b.v;
                          });
  const std::size_t unique_directed =
      static_cast<std::size_t>(last - directed.begin());
  // Each undirected duplicate shows up twice in the directed list.
  dropped_edges_ += (directed.size() - unique_directed) / 2;
  directed.erase(last, directed.end());
  num_edges_ = directed.size() / 2;

  adj_offsets_.assign(n + 1, 0);
  adj_.reserve(directed.size());
  degree_.assign(n, 0);
  for (const Edge& e : directed) {
    ++degree_[e.u];
    adj_.push_back(e.v);
  }
  for (std::size_t u = 0; u < n; ++u) {
    adj_offsets_[u + 1] = adj_offsets_[u] + static_cast<std::size_t>(degree_[u]);
  }

  attr_offsets_.assign(n + 1, 0);
  colsum_.assign(k, 0);
  for (std::size_t u = 0; u < n; ++u) {
    if (u < attrs.size()) {
      std::vector<AttrId> row = attrs[u];
      std::sort(row.begin(), row.end());
      row.erase(std::unique(row.begin(), row.end()), row.end());
      for (AttrId f : row) {
        if (f >= k) {
          throw BoundsError("attribute index " + std::to_string(f) +
                            " of node " + std::to_string(u) +
                            " is >= k=" + std::to_string(k));
        }
        ++colsum_[f];
        attr_.push_back(f);
      }
    }
    attr_offsets_[u + 1] = attr_.size();
  }

  holder_offsets_.assign(k + 1, 0);
  for (std::size_t f = 0; f < k; ++f) {
    holder_offsets_[f + 1] =
        holder_offsets_[f] + static_cast<std::size_t>(colsum_[f]);
  }
  holders_.resize(attr_.size());
  std::vector<std::size_t> cursor(holder_offsets_.begin(),
                                  holder_offsets_.end() - 1);
  for (std::size_t u = 0; u < n; ++u) {
    for (AttrId f : attributes(static_cast<NodeId>(u))) {
      holders_[cursor[f]++] = static_cast<NodeId>(u);
    }
  }

  attr_degree_ = ncsac::attribute_degrees(*this);
  vol_a_total_ = 0;
  for (Count d : attr_degree_) vol_a_total_ += d;
}

bool AttributedGraph::has_edge(NodeId u, NodeId v) const {
  auto nbrs = neighbors(u);
  return std::binary_search(nbrs.begin(), nbrs.end(), v);
}

std::vector<Edge> AttributedGraph::edge_list() const {
  std::vector<Edge> out;
  out.reserve(num_edges_);
  for (NodeId u = 0; u < num_nodes(); ++u) {
    for (NodeId v : neighbors(u)) {
      if (u < v) out.push_back({u, v});
    }
  }
  return out;
}

std::vector<Count> attribute_degrees(const AttributedGraph& g) {
  auto colsum = g.attribute_column_sums();
  std::vector<Count> d_a(g.num_nodes(), 0);
  for (NodeId u = 0; u < g.num_nodes(); ++u) {
    Count total = 0;
    for (AttrId f : g.attributes(u)) total += colsum[f] - 1;
    d_a[u] = total;
  }
  return d_a;
}

Count attribute_overlap(const AttributedGraph& g, NodeId u,
                        std::span<const Count> att) {
  Count total = 0;
  for (AttrId f : g.attributes(u)) total += att[f];
  return total;
}

Count shared_attributes(const AttributedGraph& g, NodeId u, NodeId v) {
  auto a = g.attributes(u);
  auto b = g.attributes(v);
  Count shared = 0;
  auto i = a.begin();
  auto j = b.begin();
  while (i != a.end() && j != b.end()) {
    if (*i < *j) {
      ++i;
    } else if (*j < *i) {
      ++j;
    } else {
      ++shared;
      ++i;
      ++j;
    }
  }
  return shared;
}

double attribute_transition_probability(const AttributedGraph& g, NodeId u,
                                        NodeId v) {
  const Count d_a = g.attribute_degree(u);
  if (d_a == 0 || u == v) return 0.0;
  return static_cast<double>(shared_attributes(g, u, v)) /
         static_cast<double>(d_a);
}

MultigraphOracle::MultigraphOracle(const AttributedGraph& g,
                                   std::size_t max_nodes)
    : n_(g.num_nodes()) {
  if (n_ > max_nodes) {
    throw SizeError("multigraph oracle refuses n=" + std::to_string(n_) +
                    " above guard " + std::to_string(max_nodes));
  }
  counts_.assign(n_ * n_, 0);
  for (NodeId u = 0; u < n_; ++u) {
    for (NodeId v = u + 1; v < n_; ++v) {
      const auto c = static_cast<std::int32_t>(shared_attributes(g, u, v));
      counts_[static_cast<std::size_t>(u) * n_ + v] = c;
      counts_[static_cast<std::size_t>(v) * n_ + u] = c;
    }
  }
}

Count MultigraphOracle::degree(NodeId u) const {
  Count total = 0;
  for (NodeId v = 0; v < n_; ++v) total += count(u, v);
  return total;
}

Count MultigraphOracle::total_edges() const {
  Count total = 0;
  for (NodeId u = 0; u < n_; ++u) total += degree(u);
  return total / 2;
}

std::vector<std::pair<Edge, Count>> MultigraphOracle::pairs() const {
  std::vector<std::pair<Edge, Count>> out;
  for (NodeId u = 0; u < n_; ++u) {
    for (NodeId v = u + 1; v < n_; ++v) {
      if (Count c = count(u, v); c > 0) out.push_back({{u, v}, c});
    }
  }
  return out;
}

}  // namespace ncsac
