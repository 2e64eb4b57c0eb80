#include "ncsac/io.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string_view>

#include "ncsac/error.hpp"

namespace ncsac {

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

// Splits a line into whitespace-separated tokens.
std::vector<std::string_view> tokenize(std::string_view line) {
  std::vector<std::string_view> tokens;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i])))
      ++i;
    std::size_t j = i;
    while (j < line.size() &&
           !std::isspace(static_cast<unsigned char>(line[j])))
      ++j;
    if (j > i) tokens.push_back(line.substr(i, j - i));
    i = j;
  }
  return tokens;
}

std::int64_t parse_int(std::string_view token, const std::string& where,
                       std::size_t line_no) {
  std::int64_t value = 0;
  auto [ptr, ec] =
      std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc{} || ptr != token.data() + token.size() || value < 0) {
    throw ParseError(where + ":" + std::to_string(line_no) +
                     ": expected a nonnegative integer, got '" +
                     std::string(token) + "'");
  }
  return value;
}

// Calls fn(tokens, line_no) for every non-blank, non-comment line.
template <typename Fn>
void for_each_record(const std::string& text, Fn&& fn) {
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    ++line_no;
    std::string_view line(text.data() + pos, end - pos);
    pos = end + 1;
    auto tokens = tokenize(line);
    if (tokens.empty() || tokens.front().front() == '#') continue;
    fn(tokens, line_no);
  }
}

class LabelTable {
 public:
  NodeId intern(std::int64_t label) {
    auto [it, inserted] =
        index_.try_emplace(label, static_cast<NodeId>(labels_.size()));
    if (inserted) labels_.push_back(label);
    return it->second;
  }
  std::vector<std::int64_t> labels_;
  std::unordered_map<std::int64_t, NodeId> index_;
};

}  // namespace

NodeId LoadedGraph::id_of(std::int64_t label) const {
  auto it = index.find(label);
  if (it == index.end()) {
    throw BoundsError("node " + std::to_string(label) +
                      " is not part of the graph");
  }
  return it->second;
}

LoadedGraph parse_graph(const std::string& edge_text,
                        const std::string& attr_text) {
  LabelTable table;

  std::optional<std::size_t> k;
  std::vector<std::pair<NodeId, std::vector<AttrId>>> attr_rows;
  for_each_record(attr_text, [&](const auto& tokens, std::size_t line_no) {
    if (!k) {
      std::string_view head = tokens.front();
      if (tokens.size() != 1 || !head.starts_with("k=")) {
        throw ParseError("attributes:" + std::to_string(line_no) +
                         ": expected header 'k=<int>'");
      }
      k = static_cast<std::size_t>(
          parse_int(head.substr(2), "attributes", line_no));
      return;
    }
    const NodeId u =
        table.intern(parse_int(tokens.front(), "attributes", line_no));
    std::vector<AttrId> row;
    for (std::size_t i = 1; i < tokens.size(); ++i) {
      const std::int64_t f = parse_int(tokens[i], "attributes", line_no);
      if (static_cast<std::size_t>(f) >= *k) {
        throw BoundsError("attributes:" + std::to_string(line_no) +
                          ": attribute index " + std::to_string(f) +
                          " >= k=" + std::to_string(*k));
      }
      row.push_back(static_cast<AttrId>(f));
    }
    attr_rows.emplace_back(u, std::move(row));
  });
  if (!k) throw ParseError("attributes: missing 'k=<int>' header");

  std::vector<Edge> edges;
  for_each_record(edge_text, [&](const auto& tokens, std::size_t line_no) {
    if (tokens.size() != 2) {
      throw ParseError("edges:" + std::to_string(line_no) +
                       ": expected 'u v', got " +
                       std::to_string(tokens.size()) + " fields");
    }
    const NodeId u = table.intern(parse_int(tokens[0], "edges", line_no));
    const NodeId v = table.intern(parse_int(tokens[1], "edges", line_no));
    edges.push_back({u, v});
  });

  const std::size_t n = table.labels_.size();
  std::vector<std::vector<AttrId>> attrs(n);
  for (auto& [u, row] : attr_rows) {
    attrs[u].insert(attrs[u].end(), row.begin(), row.end());
  }

  LoadedGraph out;
  out.graph = AttributedGraph(n, edges, attrs, *k);
  out.labels = std::move(table.labels_);
  out.index = std::move(table.index_);
  return out;
}

LoadedGraph load_graph(const std::filesystem::path& edge_path,
                       const std::filesystem::path& attr_path) {
  return parse_graph(read_file(edge_path), read_file(attr_path));
}

void write_graph(const AttributedGraph& g,
                 const std::filesystem::path& edge_path,
                 const std::filesystem::path& attr_path) {
  std::ostringstream attrs;
  attrs << "k=" << g.num_attributes() << '\n';
  for (NodeId u = 0; u < g.num_nodes(); ++u) {
    attrs << u;
    for (AttrId f : g.attributes(u)) attrs << ' ' << f;
    attrs << '\n';
  }
  std::ostringstream edges;
  for (const Edge& e : g.edge_list()) edges << e.u << ' ' << e.v << '\n';
  write_file(attr_path, attrs.str());
  write_file(edge_path, edges.str());
}

CommunitySet parse_communities(const std::string& text, const LoadedGraph& g) {
  CommunitySet set;
  for_each_record(text, [&](const auto& tokens, std::size_t line_no) {
    Community c;
    c.reserve(tokens.size());
    for (auto token : tokens) {
      const std::int64_t label = parse_int(token, "communities", line_no);
      auto it = g.index.find(label);
      if (it == g.index.end()) {
        throw BoundsError("communities:" + std::to_string(line_no) +
                          ": node " + std::to_string(label) +
                          " out of range");
      }
      c.push_back(it->second);
    }
    std::sort(c.begin(), c.end());
    c.erase(std::unique(c.begin(), c.end()), c.end());
    set.communities.push_back(std::move(c));
  });
  return set;
}

CommunitySet load_communities(const std::filesystem::path& path,
                              const LoadedGraph& g) {
  return parse_communities(read_file(path), g);
}

void write_communities(const CommunitySet& set,
                       const std::filesystem::path& path) {
  std::ostringstream out;
  for (const Community& c : set.communities) {
    for (std::size_t i = 0; i < c.size(); ++i) {
      if (i) out << ' ';
      out << c[i];
    }
    out << '\n';
  }
  write_file(path, out.str());
}

void SyntheticSpec::validate() const {
  if (blocks == 0 || block_size == 0) {
    throw ConfigError("synthetic spec needs blocks >= 1 and block_size >= 1");
  }
  if (!(p_out >= 0.0 && p_out < p_in && p_in <= 1.0)) {
    throw ConfigError("synthetic spec needs 0 <= p_out < p_in <= 1");
  }
  if (!(attr_noise >= 0.0 && attr_noise <= 0.5)) {
    throw ConfigError("synthetic spec needs attr_noise in [0, 0.5]");
  }
  if (k < blocks * attrs_per_block) {
    throw ConfigError("attribute budget k=" + std::to_string(k) +
                      " is smaller than blocks*attrs_per_block=" +
                      std::to_string(blocks * attrs_per_block));
  }
}

namespace {

// Calls fn(j) for each j in [begin, end) independently with probability p,
// skipping geometrically so the cost is proportional to the hits.
template <typename Fn>
void bernoulli_range(std::mt19937_64& rng, double p, std::size_t begin,
                     std::size_t end, Fn&& fn) {
  if (p <= 0.0 || begin >= end) return;
  if (p >= 1.0) {
    for (std::size_t j = begin; j < end; ++j) fn(j);
    return;
  }
  std::geometric_distribution<std::size_t> skip(p);
  std::size_t j = begin + skip(rng);
  while (j < end) {
    fn(j);
    j += 1 + skip(rng);
  }
}

}  // namespace

SyntheticDataset gen_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  const std::size_t n = spec.blocks * spec.block_size;

  std::vector<Edge> edges;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t block_end = (i / spec.block_size + 1) * spec.block_size;
    auto add = [&](std::size_t j) {
      edges.push_back({static_cast<NodeId>(i), static_cast<NodeId>(j)});
    };
    bernoulli_range(rng, spec.p_in, i + 1, block_end, add);
    bernoulli_range(rng, spec.p_out, block_end, n, add);
  }

  // Dense bit grid, planted columns first, then independent flips.
  std::vector<std::uint8_t> bits(n * spec.k, 0);
  for (std::size_t u = 0; u < n; ++u) {
    const std::size_t b = u / spec.block_size;
    for (std::size_t a = 0; a < spec.attrs_per_block; ++a) {
      bits[u * spec.k + b * spec.attrs_per_block + a] = 1;
    }
  }
  bernoulli_range(rng, spec.attr_noise, 0, bits.size(),
                  [&](std::size_t j) { bits[j] ^= 1; });
  std::vector<std::vector<AttrId>> attrs(n);
  for (std::size_t u = 0; u < n; ++u) {
    for (std::size_t f = 0; f < spec.k; ++f) {
      if (bits[u * spec.k + f]) attrs[u].push_back(static_cast<AttrId>(f));
    }
  }

  SyntheticDataset out;
  out.graph = AttributedGraph(n, edges, attrs, spec.k);
  for (std::size_t b = 0; b < spec.blocks; ++b) {
    Community c(spec.block_size);
    std::iota(c.begin(), c.end(), static_cast<NodeId>(b * spec.block_size));
    out.communities.communities.push_back(std::move(c));
  }
  return out;
}

CommunitySplit split_communities(const CommunitySet& set,
                                 std::array<double, 3> ratios,
                                 std::uint64_t seed) {
  double sum = 0.0;
  std::size_t nonzero = 0;
  for (double r : ratios) {
    if (!(r >= 0.0) || !std::isfinite(r)) {
      throw ConfigError("split ratios must be finite and nonnegative");
    }
    sum += r;
    if (r > 0.0) ++nonzero;
  }
  if (sum <= 0.0) throw ConfigError("split ratios must not all be zero");
  if (set.size() < nonzero) {
    throw ConfigError("cannot split " + std::to_string(set.size()) +
                      " communities into " + std::to_string(nonzero) +
                      " nonempty parts");
  }

  std::vector<std::size_t> order(set.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  const auto total = static_cast<double>(set.size());
  const auto n_train =
      static_cast<std::size_t>(std::floor(total * ratios[0] / sum + 1e-9));
  const auto n_val = std::min(
      set.size() - n_train,
      static_cast<std::size_t>(std::floor(total * ratios[1] / sum + 1e-9)));

  CommunitySplit out;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const Community& c = set.communities[order[i]];
    if (i < n_train) {
      out.train.communities.push_back(c);
    } else if (i < n_train + n_val) {
      out.validation.communities.push_back(c);
    } else {
      out.test.communities.push_back(c);
    }
  }
  return out;
}

}  // namespace ncsac
