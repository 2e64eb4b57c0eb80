#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <set>
#include <vector>

#include "ncsac/graph.hpp"
#include "ncsac/io.hpp"

#ifndef NCSAC_FIXTURE_DIR
#define NCSAC_FIXTURE_DIR "."
#endif

namespace testsupport {

using namespace ncsac;

inline std::string fixture(const char* name) {
  return std::string(NCSAC_FIXTURE_DIR) + "/" + name;
}

// The seven-node example graph. Attributes: CS=0 ML=1 DB=2 DM=3 IR=4.
inline AttributedGraph fig2() {
  const std::vector<Edge> edges = {{0, 1}, {0, 3}, {0, 5}, {0, 6}, {1, 2}, {1, 3},
                                   {1, 5}, {2, 3}, {2, 4}, {3, 4}, {4, 6}, {5, 6}};
  const std::vector<std::vector<AttrId>> attrs = {{0, 1}, {0},    {2, 3}, {0, 1},
                                                  {2, 4}, {0, 3}, {0, 4}};
  return AttributedGraph(7, edges, attrs, 5);
}

// G(n, p) with every attribute bit set independently with probability pa.
inline AttributedGraph random_graph(std::size_t n, double p, std::size_t k,
                                    double pa, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution edge(p), bit(pa);
  std::vector<Edge> edges;
  for (NodeId u = 0; u < n; ++u)
    for (NodeId v = u + 1; v < n; ++v)
      if (edge(rng)) edges.push_back({u, v});
  std::vector<std::vector<AttrId>> attrs(n);
  for (std::size_t u = 0; u < n; ++u)
    for (AttrId f = 0; f < k; ++f)
      if (bit(rng)) attrs[u].push_back(f);
  return AttributedGraph(n, edges, attrs, k);
}

inline std::vector<NodeId> random_subset(std::size_t n, double p, std::mt19937_64& rng) {
  std::bernoulli_distribution in(p);
  std::vector<NodeId> out;
  for (NodeId u = 0; u < n; ++u)
    if (in(rng)) out.push_back(u);
  return out;
}

// Pairwise count of shared attributes, straight from the attribute rows.
inline long shared(const AttributedGraph& g, NodeId u, NodeId v) {
  long c = 0;
  for (AttrId a : g.attributes(u))
    for (AttrId b : g.attributes(v)) c += a == b;
  return c;
}

struct Counters {
  long cut = 0, vol = 0, cut_a = 0, vol_a = 0;
  std::vector<long> att;
};

// Every counter from its definition, with nested loops over node pairs.
inline Counters brute_counters(const AttributedGraph& g, const std::vector<NodeId>& members) {
  const std::size_t n = g.num_nodes();
  std::vector<char> in(n, 0);
  for (NodeId u : members) in[u] = 1;
  Counters c;
  c.att.assign(g.num_attributes(), 0);
  for (NodeId u = 0; u < n; ++u) {
    if (!in[u]) continue;
    for (AttrId f : g.attributes(u)) ++c.att[f];
    for (NodeId v = 0; v < n; ++v) {
      if (v == u) continue;
      const bool adj = std::find(g.neighbors(u).begin(), g.neighbors(u).end(), v) !=
                       g.neighbors(u).end();
      const long s = shared(g, u, v);
      c.vol += adj;
      c.vol_a += s;
      if (!in[v]) {
        c.cut += adj;
        c.cut_a += s;
      }
    }
  }
  return c;
}

inline double ratio(long cut, long vol, long total) {
  const long d = std::min(vol, total - vol);
  return d <= 0 ? 1.0 : static_cast<double>(cut) / static_cast<double>(d);
}

// Induced-subgraph connectivity by repeated relaxation.
inline bool connected_within(const AttributedGraph& g, const std::vector<NodeId>& nodes) {
  if (nodes.empty()) return true;
  std::set<NodeId> pending(nodes.begin(), nodes.end());
  std::vector<NodeId> frontier{nodes.front()};
  pending.erase(nodes.front());
  while (!frontier.empty()) {
    NodeId u = frontier.back();
    frontier.pop_back();
    for (NodeId v : g.neighbors(u)) {
      if (pending.erase(v)) frontier.push_back(v);
    }
  }
  return pending.empty();
}

}  // namespace testsupport
