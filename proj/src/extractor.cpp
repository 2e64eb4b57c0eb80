#include "ncsac/extractor.hpp"

#include <algorithm>
#include <string>

#include "ncsac/conductance.hpp"
#include "ncsac/error.hpp"

namespace ncsac {

namespace {

void check_query(const AttributedGraph& g, NodeId q, double beta) {
  if (q >= g.num_nodes()) {
    throw BoundsError("query node " + std::to_string(q) + " out of range (n=" +
                      std::to_string(g.num_nodes()) + ")");
  }
  check_beta(beta);
}

// BFS order from q with layer boundaries: layer h occupies
// order[ends[h-1], ends[h]). ends[0] = 1 (just q).
struct Layers {
  std::vector<NodeId> order;
  std::vector<std::size_t> ends;
};

Layers bfs_layers(const AttributedGraph& g, NodeId q,
                  std::optional<std::size_t> max_hop) {
  Layers out;
  std::vector<std::uint8_t> seen(g.num_nodes(), 0);
  out.order.push_back(q);
  out.ends.push_back(1);
  seen[q] = 1;
  std::size_t begin = 0;
  while (out.ends.back() > begin) {
    if (max_hop && out.ends.size() > *max_hop) break;
    const std::size_t end = out.ends.back();
    for (std::size_t i = begin; i < end; ++i) {
      for (NodeId v : g.neighbors(out.order[i])) {
        if (!seen[v]) {
          seen[v] = 1;
          out.order.push_back(v);
        }
      }
    }
    begin = end;
    if (out.order.size() == end) break;
    out.ends.push_back(out.order.size());
  }
  return out;
}

ExtractionResult finish(const Layers& layers, std::size_t best_prefix,
                        double best_phi, std::vector<HopRecord> trace) {
  ExtractionResult out;
  out.community.assign(layers.order.begin(),
                       layers.order.begin() +
                           static_cast<std::ptrdiff_t>(best_prefix));
  std::sort(out.community.begin(), out.community.end());
  out.phi = best_phi;
  out.hops_scanned = trace.size();
  out.trace = std::move(trace);
  return out;
}

}  // namespace

ExtractionResult extract_candidate(const AttributedGraph& g, NodeId q,
                                   double beta,
                                   std::optional<std::size_t> max_hop) {
  check_query(g, q, beta);
  const Layers layers = bfs_layers(g, q, max_hop);

  CommunityState state(g, q);
  double best_phi = 1.0;
  std::size_t best_prefix = 1;
  std::vector<HopRecord> trace;
  for (std::size_t h = 1; h < layers.ends.size(); ++h) {
    const std::size_t begin = layers.ends[h - 1];
    const std::size_t end = layers.ends[h];
    for (std::size_t i = begin; i < end; ++i) state.add(g, layers.order[i]);
    const double phi = state.phi(g, beta);
    trace.push_back({h, end - begin, phi});
    if (phi < best_phi) {
      best_phi = phi;
      best_prefix = end;
    }
  }
  return finish(layers, best_prefix, best_phi, std::move(trace));
}

ExtractionResult extract_candidate_naive(const AttributedGraph& g, NodeId q,
                                         double beta,
                                         std::optional<std::size_t> max_hop,
                                         std::size_t guard) {
  check_query(g, q, beta);
  const MultigraphOracle multigraph(g, guard);
  const std::size_t n = g.num_nodes();
  const Layers layers = bfs_layers(g, q, max_hop);

  Count vol_a_total = 0;
  for (NodeId u = 0; u < n; ++u) vol_a_total += multigraph.degree(u);

  std::vector<std::uint8_t> in(n, 0);
  in[q] = 1;
  double best_phi = 1.0;
  std::size_t best_prefix = 1;
  std::vector<HopRecord> trace;
  for (std::size_t h = 1; h < layers.ends.size(); ++h) {
    const std::size_t begin = layers.ends[h - 1];
    const std::size_t end = layers.ends[h];
    for (std::size_t i = begin; i < end; ++i) in[layers.order[i]] = 1;

    Count cut = 0, vol = 0, cut_a = 0, vol_a = 0;
    for (NodeId u = 0; u < n; ++u) {
      if (!in[u]) continue;
      vol += g.degree(u);
      for (NodeId v : g.neighbors(u)) cut += in[v] ? 0 : 1;
      for (NodeId v = 0; v < n; ++v) {
        const Count c = multigraph.count(u, v);
        vol_a += c;
        if (!in[v]) cut_a += c;
      }
    }
    const double phi = blend_conductance(beta, cut, vol, g.total_volume(),
                                         cut_a, vol_a, vol_a_total);
    trace.push_back({h, end - begin, phi});
    if (phi < best_phi) {
      best_phi = phi;
      best_prefix = end;
    }
  }
  return finish(layers, best_prefix, best_phi, std::move(trace));
}

}  // namespace ncsac
