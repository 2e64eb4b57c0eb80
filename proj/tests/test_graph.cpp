#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "ncsac/conductance.hpp"
#include "ncsac/error.hpp"
#include "ncsac/graph.hpp"
#include "ncsac/io.hpp"
#include "support.hpp"

using namespace ncsac;
using namespace testsupport;

namespace {

std::filesystem::path scratch_dir(const char* name) {
  auto dir = std::filesystem::temp_directory_path() / ("ncsac_test_" + std::string(name));
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("load: three-node path read back") {
  const LoadedGraph lg = parse_graph("0 1\n1 2\n", "k=2\n0 0\n1 0 1\n2 1\n");
  const AttributedGraph& g = lg.graph;
  CHECK(g.num_nodes() == 3);
  CHECK(g.num_edges() == 2);
  CHECK(g.num_attributes() == 2);
  CHECK(g.degree(0) == 1);
  CHECK(g.degree(1) == 2);
  CHECK(g.degree(2) == 1);
  CHECK(g.attributes(1).size() == 2);
}

TEST_CASE("load: self-loops and duplicates dropped") {
  const LoadedGraph lg = parse_graph("0 1\n0 0\n1 0\n1 2\n", "k=1\n0\n1\n2\n");
  CHECK(lg.graph.num_edges() == 2);
  CHECK(lg.graph.dropped_edges() == 2);
  CHECK_FALSE(lg.graph.has_edge(0, 0));
}

TEST_CASE("load: comments, blank lines and label compaction") {
  const LoadedGraph lg = parse_graph("# header\n\n10 30\n30 20\n", "k=3\n30 2\n");
  CHECK(lg.graph.num_nodes() == 3);
  CHECK(lg.id_of(30) == 0);
  CHECK(lg.id_of(10) == 1);
  CHECK(lg.id_of(20) == 2);
  CHECK(lg.labels[0] == 30);
  CHECK_THROWS_AS(lg.id_of(99), BoundsError);
}

TEST_CASE("load: malformed lines name their line number") {
  try {
    parse_graph("0 1\n1 x\n", "k=1\n");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find(":2") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_graph("0 1\n", "0 1\n"), ParseError);
  CHECK_THROWS_AS(parse_graph("0 1 2\n", "k=1\n"), ParseError);
}

TEST_CASE("load: attribute index beyond k is a bounds error") {
  CHECK_THROWS_AS(parse_graph("0 1\n", "k=2\n0 2\n"), BoundsError);
}

TEST_CASE("figure 2 fixture from disk") {
  const LoadedGraph lg = load_graph(fixture("fig2.edges"), fixture("fig2.attrs"));
  const AttributedGraph& g = lg.graph;
  REQUIRE(g.num_nodes() == 7);
  CHECK(g.num_edges() == 12);
  const NodeId v0 = lg.id_of(0), v3 = lg.id_of(3);
  CHECK(g.attribute_degree(v0) == 5);
  CHECK(shared_attributes(g, v0, v3) == 2);
  CHECK(attribute_transition_probability(g, v0, v3) == doctest::Approx(0.4).epsilon(1e-15));
  const MultigraphOracle oracle(g);
  CHECK(oracle.count(v0, v3) == 2);
}

TEST_CASE("attribute degrees") {
  SUBCASE("all-zero row") {
    const std::vector<Edge> e = {{0, 1}};
    const AttributedGraph g(3, e, {{0}, {0}, {}}, 2);
    CHECK(g.attribute_degree(2) == 0);
    CHECK(g.attribute_degree(0) == 1);
  }
  SUBCASE("column-sum identity against the double loop") {
    const AttributedGraph g = random_graph(8, 0.4, 4, 0.5, 3);
    const auto da = attribute_degrees(g);
    for (NodeId u = 0; u < 8; ++u) {
      long expected = 0;
      for (NodeId v = 0; v < 8; ++v)
        if (v != u) expected += shared(g, u, v);
      CHECK(da[u] == expected);
      CHECK(g.attribute_degree(u) == expected);
    }
    CHECK(g.total_attribute_volume() == std::accumulate(da.begin(), da.end(), Count{0}));
  }
  SUBCASE("bounds and volume identities on random graphs") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const AttributedGraph g = random_graph(20, 0.2, 6, 0.3, seed);
      Count sum_d = 0;
      for (NodeId u = 0; u < 20; ++u) {
        sum_d += g.degree(u);
        CHECK(g.attribute_degree(u) >= 0);
        CHECK(g.attribute_degree(u) <= static_cast<Count>(6 * 19));
        for (NodeId v : g.neighbors(u)) CHECK(g.has_edge(v, u));
      }
      CHECK(sum_d == g.total_volume());
    }
  }
}

TEST_CASE("attribute overlap") {
  const AttributedGraph g = fig2();
  const std::vector<Count> att = {2, 1, 0, 0, 0};
  CHECK(attribute_overlap(g, 3, att) == 3);
  CHECK(attribute_overlap(g, 3, std::vector<Count>(5, 0)) == 0);

  std::mt19937_64 rng(5);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const AttributedGraph r = random_graph(15, 0.3, 5, 0.4, seed);
    const MultigraphOracle oracle(r);
    const auto c = random_subset(15, 0.4, rng);
    std::vector<Count> agg(5, 0);
    for (NodeId u : c)
      for (AttrId f : r.attributes(u)) ++agg[f];
    for (NodeId u = 0; u < 15; ++u) {
      if (std::find(c.begin(), c.end(), u) != c.end()) continue;
      Count expected = 0;
      for (NodeId v : c) expected += oracle.count(u, v);
      CHECK(attribute_overlap(r, u, agg) == expected);
    }
  }
}

TEST_CASE("multigraph oracle") {
  SUBCASE("disjoint attribute supports give no attribute edges") {
    const std::vector<Edge> e = {{0, 1}, {1, 2}};
    const AttributedGraph g(3, e, {{0}, {1}, {2}}, 3);
    const MultigraphOracle oracle(g);
    CHECK(oracle.pairs().empty());
    CHECK(oracle.total_edges() == 0);
  }
  SUBCASE("incident counts equal attribute degrees, symmetric") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const AttributedGraph g = random_graph(10, 0.3, 4, 0.5, seed);
      const MultigraphOracle oracle(g);
      for (NodeId u = 0; u < 10; ++u) {
        Count sum = 0;
        for (NodeId v = 0; v < 10; ++v) {
          CHECK(oracle.count(u, v) == oracle.count(v, u));
          if (v != u) sum += oracle.count(u, v);
        }
        CHECK(sum == g.attribute_degree(u));
        CHECK(oracle.degree(u) == g.attribute_degree(u));
      }
    }
  }
  SUBCASE("size guard") {
    const AttributedGraph g = random_graph(30, 0.1, 2, 0.5, 1);
    CHECK_THROWS_AS(MultigraphOracle(g, 20), SizeError);
  }
}

TEST_CASE("bounds checking on construction") {
  const std::vector<Edge> bad_edge = {{0, 5}};
  CHECK_THROWS_AS(AttributedGraph(3, bad_edge, {}, 1), BoundsError);
  const std::vector<Edge> ok = {{0, 1}};
  CHECK_THROWS_AS(AttributedGraph(2, ok, {{3}}, 2), BoundsError);
}

TEST_CASE("communities") {
  const LoadedGraph lg = parse_graph("0 1\n1 2\n2 3\n3 4\n", "k=1\n");
  SUBCASE("two lines") {
    const CommunitySet s = parse_communities("0 1 2\n3 4\n", lg);
    REQUIRE(s.size() == 2);
    CHECK(s[0].size() == 3);
    CHECK(s[1].size() == 2);
  }
  SUBCASE("empty file") { CHECK(parse_communities("", lg).empty()); }
  SUBCASE("duplicates collapse") {
    const CommunitySet s = parse_communities("0 0 1\n", lg);
    REQUIRE(s.size() == 1);
    CHECK(s[0] == Community{lg.id_of(0), lg.id_of(1)});
  }
  SUBCASE("singletons are kept") { CHECK(parse_communities("4\n", lg).size() == 1); }
  SUBCASE("unknown id") { CHECK_THROWS_AS(parse_communities("0 9\n", lg), BoundsError); }
}

TEST_CASE("write and reload round trip") {
  const auto dir = scratch_dir("roundtrip");
  SyntheticSpec spec;
  spec.blocks = 3;
  spec.block_size = 10;
  spec.seed = 4;
  const SyntheticDataset data = gen_synthetic(spec);
  write_graph(data.graph, dir / "g.edges", dir / "g.attrs");
  write_communities(data.communities, dir / "c.txt");
  const LoadedGraph lg = load_graph(dir / "g.edges", dir / "g.attrs");
  const AttributedGraph& g = lg.graph;
  REQUIRE(g.num_nodes() == data.graph.num_nodes());
  CHECK(g.num_attributes() == data.graph.num_attributes());
  for (NodeId u = 0; u < g.num_nodes(); ++u) {
    REQUIRE(lg.id_of(u) == u);
    CHECK(std::equal(g.neighbors(u).begin(), g.neighbors(u).end(),
                     data.graph.neighbors(u).begin(), data.graph.neighbors(u).end()));
    CHECK(std::equal(g.attributes(u).begin(), g.attributes(u).end(),
                     data.graph.attributes(u).begin(), data.graph.attributes(u).end()));
  }
  const CommunitySet back = load_communities(dir / "c.txt", lg);
  CHECK(back.communities == data.communities.communities);
  CHECK_THROWS_AS(load_graph(dir / "missing.edges", dir / "g.attrs"), IoError);
}

TEST_CASE("synthetic generator") {
  SUBCASE("two disjoint cliques") {
    SyntheticSpec spec;
    spec.blocks = 2;
    spec.block_size = 4;
    spec.p_in = 1.0;
    spec.p_out = 0.0;
    spec.attr_noise = 0.0;
    spec.k = 4;
    spec.attrs_per_block = 2;
    const SyntheticDataset d = gen_synthetic(spec);
    CHECK(d.graph.num_edges() == 12);
    for (const Community& c : d.communities.communities) {
      CHECK(c.size() == 4);
      CHECK(phi_t(d.graph, c) == 0.0);
      CHECK(phi_a(d.graph, c) == 0.0);
      for (double beta : {0.0, 0.2, 0.7, 1.0}) CHECK(phi_aug(d.graph, c, beta) == 0.0);
    }
  }
  SUBCASE("edge count near its binomial expectation") {
    SyntheticSpec spec;
    spec.blocks = 4;
    spec.block_size = 25;
    spec.p_in = 0.3;
    spec.p_out = 0.02;
    spec.attr_noise = 0.05;
    spec.seed = 7;
    const SyntheticDataset d = gen_synthetic(spec);
    const double pairs_in = 4 * (25.0 * 24 / 2);
    const double pairs_out = 100.0 * 99 / 2 - pairs_in;
    const double mean = pairs_in * 0.3 + pairs_out * 0.02;
    const double sd = std::sqrt(pairs_in * 0.3 * 0.7 + pairs_out * 0.02 * 0.98);
    CHECK(std::abs(static_cast<double>(d.graph.num_edges()) - mean) < 3 * sd);
  }
  SUBCASE("attribute bits follow the planted layout and noise rate") {
    SyntheticSpec spec;
    spec.blocks = 4;
    spec.block_size = 50;
    spec.k = 20;
    spec.attrs_per_block = 3;
    spec.attr_noise = 0.1;
    spec.seed = 2;
    const SyntheticDataset d = gen_synthetic(spec);
    double flips = 0;
    for (NodeId u = 0; u < 200; ++u) {
      std::vector<char> row(20, 0);
      for (AttrId f : d.graph.attributes(u)) row[f] = 1;
      const std::size_t b = u / 50;
      for (std::size_t f = 0; f < 20; ++f) {
        const bool planted = f >= b * 3 && f < b * 3 + 3;
        flips += row[f] != planted;
      }
    }
    const double cells = 200.0 * 20;
    CHECK(std::abs(flips / cells - 0.1) < 3 * std::sqrt(0.1 * 0.9 / cells));
  }
  SUBCASE("deterministic per seed") {
    SyntheticSpec spec;
    spec.seed = 9;
    const SyntheticDataset a = gen_synthetic(spec), b = gen_synthetic(spec);
    CHECK(a.graph.edge_list().size() == b.graph.edge_list().size());
    const auto ea = a.graph.edge_list(), eb = b.graph.edge_list();
    CHECK(std::equal(ea.begin(), ea.end(), eb.begin(),
                     [](Edge x, Edge y) { return x.u == y.u && x.v == y.v; }));
  }
  SUBCASE("invalid specs") {
    SyntheticSpec spec;
    spec.k = 7;  // 4 blocks * 4 attributes does not fit
    CHECK_THROWS_AS(gen_synthetic(spec), ConfigError);
    SyntheticSpec p;
    p.p_out = 0.5;
    p.p_in = 0.4;
    CHECK_THROWS_AS(gen_synthetic(p), ConfigError);
    SyntheticSpec noise;
    noise.attr_noise = 0.6;
    CHECK_THROWS_AS(gen_synthetic(noise), ConfigError);
  }
}

TEST_CASE("community split") {
  CommunitySet ten;
  for (NodeId i = 0; i < 10; ++i) ten.communities.push_back({i});
  SUBCASE("5:1:4 of ten") {
    const CommunitySplit s = split_communities(ten, {5, 1, 4}, 1);
    CHECK(s.train.size() == 5);
    CHECK(s.validation.size() == 1);
    CHECK(s.test.size() == 4);
  }
  SUBCASE("single community, 1:0:0") {
    CommunitySet one;
    one.communities.push_back({0, 1});
    const CommunitySplit s = split_communities(one, {1, 0, 0}, 3);
    CHECK(s.train.size() == 1);
    CHECK(s.validation.empty());
    CHECK(s.test.empty());
  }
  SUBCASE("deterministic, disjoint, covering") {
    CommunitySet seven;
    for (NodeId i = 0; i < 7; ++i) seven.communities.push_back({i});
    const CommunitySplit a = split_communities(seven, {5, 1, 4}, 11);
    const CommunitySplit b = split_communities(seven, {5, 1, 4}, 11);
    CHECK(a.train.communities == b.train.communities);
    CHECK(a.test.communities == b.test.communities);
    std::vector<NodeId> all;
    for (const CommunitySet* s : {&a.train, &a.validation, &a.test})
      for (const Community& c : s->communities) all.push_back(c[0]);
    std::sort(all.begin(), all.end());
    CHECK(all == std::vector<NodeId>{0, 1, 2, 3, 4, 5, 6});
  }
  SUBCASE("too few communities") {
    CommunitySet two;
    two.communities = {{0}, {1}};
    CHECK_THROWS_AS(split_communities(two, {5, 1, 4}, 1), ConfigError);
  }
}
