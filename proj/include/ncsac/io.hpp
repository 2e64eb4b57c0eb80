#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "ncsac/graph.hpp"

namespace ncsac {

/// Sorted, duplicate-free node list.
using Community = std::vector<NodeId>;

struct CommunitySet {
  std::vector<Community> communities;

  std::size_t size() const { return communities.size(); }
  bool empty() const { return communities.empty(); }
  const Community& operator[](std::size_t i) const { return communities[i]; }
};

/// A graph read from disk together with the file labels of its nodes.
struct LoadedGraph {
  AttributedGraph graph;
  std::vector<std::int64_t> labels;  // compact id -> label in the files
  std::unordered_map<std::int64_t, NodeId> index;  // label -> compact id

  NodeId id_of(std::int64_t label) const;
};

/// Reads an attribute file ("k=<int>" header, then "u a1 a2 ...") and an
/// edge list ("u v" per line, '#' comments). Node labels are compacted to
/// 0..n-1 in first-seen order, attribute file first, then edge file.
LoadedGraph load_graph(const std::filesystem::path& edge_path,
                       const std::filesystem::path& attr_path);

/// Same formats, parsed from in-memory text.
LoadedGraph parse_graph(const std::string& edge_text,
                        const std::string& attr_text);

/// Writes compact ids; every node gets an attribute line so reloading
/// reproduces the same ids.
void write_graph(const AttributedGraph& g,
                 const std::filesystem::path& edge_path,
                 const std::filesystem::path& attr_path);

/// One community per line, whitespace-separated node labels.
CommunitySet load_communities(const std::filesystem::path& path,
                              const LoadedGraph& g);
CommunitySet parse_communities(const std::string& text, const LoadedGraph& g);
void write_communities(const CommunitySet& set,
                       const std::filesystem::path& path);

struct SyntheticSpec {
  std::size_t blocks = 4;
  std::size_t block_size = 25;
  double p_in = 0.3;
  double p_out = 0.05;
  std::size_t k = 16;
  std::size_t attrs_per_block = 4;
  double attr_noise = 0.1;
  std::uint64_t seed = 1;

  /// Throws ConfigError when an invariant does not hold.
  void validate() const;
};

struct SyntheticDataset {
  AttributedGraph graph;
  CommunitySet communities;
};

/// Attributed planted-partition graph. Block b owns nodes
/// [b*block_size, (b+1)*block_size) and attribute columns
/// [b*attrs_per_block, (b+1)*attrs_per_block).
SyntheticDataset gen_synthetic(const SyntheticSpec& spec);

struct CommunitySplit {
  CommunitySet train;
  CommunitySet validation;
  CommunitySet test;
};

/// Seeded shuffle, then floor(N * r / sum) communities for train and
/// validation; the remainder goes to test.
CommunitySplit split_communities(const CommunitySet& set,
                                 std::array<double, 3> ratios,
                                 std::uint64_t seed);

}  // namespace ncsac
