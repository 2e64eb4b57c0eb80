#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "ncsac/graph.hpp"
#include "ncsac/io.hpp"

namespace ncsac {

struct HopRecord {
  std::size_t hop = 0;
  std::size_t frontier_size = 0;  // |N^h(q) \ N^{h-1}(q)|
  double phi = 1.0;               // after absorbing the whole layer
};

struct ExtractionResult {
  Community community;  // sorted
  double phi = 1.0;
  std::vector<HopRecord> trace;
  std::size_t hops_scanned = 0;
};

/// Adaptive community extractor: absorbs BFS layers around q one at a time,
/// maintaining the conductance counters incrementally, and keeps the hop
/// prefix with the smallest attribute-augmented conductance (strictly
/// smaller than every earlier one, starting from 1). O(m + nk).
ExtractionResult extract_candidate(const AttributedGraph& g, NodeId q,
                                   double beta,
                                   std::optional<std::size_t> max_hop = {});

/// Same contract, computed by materializing the attribute multigraph and
/// re-evaluating both conductances from scratch at every hop.
ExtractionResult extract_candidate_naive(
    const AttributedGraph& g, NodeId q, double beta,
    std::optional<std::size_t> max_hop = {},
    std::size_t guard = MultigraphOracle::kDefaultGuard);

}  // namespace ncsac
