#include <doctest.h>

#include <numeric>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "ncsac/encoder.hpp"
#include "ncsac/error.hpp"
#include "ncsac/io.hpp"
#include "support.hpp"

using namespace ncsac;
using namespace testsupport;

namespace {

double cosd(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  double dot = 0, na = 0, nb = 0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0 || nb == 0) return 1.0;
  return 1.0 - dot / std::sqrt(na * nb);
}

AttributedGraph path6() {
  const std::vector<Edge> e = {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 5}};
  return AttributedGraph(6, e, {{0}, {1}, {0, 2}, {}, {1, 2}, {0}}, 3);
}

SyntheticDataset two_blocks(std::uint64_t seed) {
  SyntheticSpec spec;
  spec.blocks = 2;
  spec.block_size = 15;
  spec.p_in = 0.4;
  spec.p_out = 0.05;
  spec.k = 8;
  spec.attrs_per_block = 3;
  spec.seed = seed;
  return gen_synthetic(spec);
}

std::vector<double> flat(EncoderModel m) {
  std::vector<double> out;
  m.for_each_parameter([&](double& p) { out.push_back(p); });
  return out;
}

}  // namespace

TEST_CASE("degenerate weights give identical rows") {
  const AttributedGraph g = path6();
  EncoderModel m = EncoderModel::random(4, 3, 2, 0.0, 1).zeros_like();
  m.layers[0].bias << 0.5, -1.0, 2.0;
  m.layers[1].bias << 0.25, -3.0;
  const std::vector<std::uint8_t> ind(6, 0);
  const Eigen::MatrixXd emb = encode(m, g, ind);
  for (Eigen::Index u = 0; u < 6; ++u) {
    CHECK(emb(u, 0) == 0.25);
    CHECK(emb(u, 1) == 0.0);
  }
}

TEST_CASE("isolated node sees only its own row") {
  const std::vector<Edge> e = {{0, 1}, {1, 2}};
  const AttributedGraph a(4, e, {{0}, {1}, {0}, {1}}, 2);
  const AttributedGraph b(4, e, {{1}, {0}, {1}, {1}}, 2);
  const EncoderModel m = EncoderModel::random(3, 4, 3, 0.0, 2);
  const std::vector<std::uint8_t> ia = {1, 0, 0, 1}, ib = {0, 1, 1, 1};
  const Eigen::MatrixXd ea = encode(m, a, ia), eb = encode(m, b, ib);
  CHECK((ea.row(3) - eb.row(3)).norm() == 0.0);
}

TEST_CASE("layer-1 pre-activations against a dense oracle") {
  const AttributedGraph g = path6();
  const EncoderModel m = EncoderModel::random(4, 5, 3, 0.0, 3);
  const std::vector<std::uint8_t> ind = {1, 1, 0, 0, 1, 0};
  const GraphTensors t = make_graph_tensors(g);
  const ForwardPass pass = forward(m, t, encoder_input(t, ind), false, nullptr);

  for (int u = 0; u < 6; ++u) {
    for (int j = 0; j < 5; ++j) {
      auto x = [&](int v, int f) -> double {
        if (f == 3) return ind[v];
        for (AttrId a : g.attributes(v))
          if (static_cast<int>(a) == f) return 1.0;
        return 0.0;
      };
      double z = m.layers[0].bias[j];
      for (int f = 0; f < 4; ++f) z += x(u, f) * m.layers[0].self_weight(f, j);
      for (int v = 0; v < 6; ++v) {
        if (!g.has_edge(u, v)) continue;
        const double w = 1.0 / std::sqrt((g.degree(u) + 1.0) * (g.degree(v) + 1.0));
        for (int f = 0; f < 4; ++f) z += w * x(v, f) * m.layers[0].neighbor_weight(f, j);
      }
      CHECK(std::abs(pass.preactivation[0](u, j) - z) < 1e-10);
      CHECK(pass.output[0](u, j) == std::max(pass.preactivation[0](u, j), 0.0));
    }
  }
  CHECK_THROWS_AS(encoder_input(t, std::vector<std::uint8_t>(5, 0)), ShapeError);
}

TEST_CASE("contrastive loss") {
  Eigen::MatrixXd emb(4, 3);
  emb << 1, 0, 0, 1, 0, 0, 0, 1, 0, 0.5, 0.5, 0;
  SUBCASE("identical embeddings on a positive pair") {
    TrainingBatch b;
    b.positive_pairs = {{0, 1}};
    CHECK(loss_contrastive(emb, b, 0.5) == 0.0);
  }
  SUBCASE("negative pair beyond the margin") {
    TrainingBatch b;
    b.negative_pairs = {{0, 2}};
    CHECK(loss_contrastive(emb, b, 0.5) == 0.0);
  }
  SUBCASE("direct summation on random embeddings") {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> nd;
    const Eigen::MatrixXd r = Eigen::MatrixXd::NullaryExpr(4, 3, [&] { return nd(rng); });
    TrainingBatch b;
    b.positive_pairs = {{0, 1}, {2, 3}};
    b.negative_pairs = {{0, 2}, {1, 3}};
    double expected = 0;
    for (auto [u, v] : b.positive_pairs) expected += cosd(r.row(u), r.row(v));
    for (auto [u, v] : b.negative_pairs) expected += std::max(0.0, 0.5 - cosd(r.row(u), r.row(v)));
    CHECK(loss_contrastive(r, b, 0.5) == doctest::Approx(expected).epsilon(1e-14));
  }
  SUBCASE("zero vector counts as distance 1") {
    Eigen::MatrixXd z = Eigen::MatrixXd::Zero(2, 3);
    z(0, 0) = 1;
    TrainingBatch b;
    b.positive_pairs = {{0, 1}};
    CHECK(loss_contrastive(z, b, 0.5) == 1.0);
  }
}

TEST_CASE("triplet loss") {
  Eigen::MatrixXd emb(3, 2);
  emb << 1, 0, 1, 0, -1, 0;
  const std::vector<Triplet> far = {{0, 1, 2}};
  CHECK(loss_triplet(emb, far, 0.5) == 0.0);
  Eigen::MatrixXd same(3, 2);
  same << 1, 0, 0.3, 0.7, 0.3, 0.7;
  CHECK(loss_triplet(same, far, 0.5) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(loss_triplet(same, std::vector<Triplet>{{0, 1, 2}, {0, 2, 1}}, 0.3) ==
        doctest::Approx(0.6).epsilon(1e-15));

  std::mt19937_64 rng(2);
  std::normal_distribution<double> nd;
  const Eigen::MatrixXd r = Eigen::MatrixXd::NullaryExpr(6, 4, [&] { return nd(rng); });
  const std::vector<Triplet> ts = {{0, 1, 2}, {3, 4, 5}, {5, 0, 3}, {2, 2, 1}};
  double expected = 0;
  for (const Triplet& t : ts)
    expected += std::max(0.0, cosd(r.row(t.anchor), r.row(t.positive)) -
                                  cosd(r.row(t.anchor), r.row(t.negative)) + 0.4);
  CHECK(loss_triplet(r, ts, 0.4) == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("aggregate loss is non-negative and blends by alpha") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd;
  const Eigen::MatrixXd r = Eigen::MatrixXd::NullaryExpr(6, 4, [&] { return nd(rng); });
  TrainingBatch b;
  b.positive_pairs = {{0, 1}, {1, 2}};
  b.negative_pairs = {{0, 5}, {2, 4}};
  b.triplets = {{0, 1, 5}, {3, 4, 0}};
  LossWeights w;
  const LossValue v = aggregate_loss(r, b, w);
  CHECK(v.contrastive >= 0.0);
  CHECK(v.triplet >= 0.0);
  CHECK(v.total == doctest::Approx(v.triplet + 0.5 * v.contrastive).epsilon(1e-14));
  w.normalize = true;
  const LossValue n = aggregate_loss(r, b, w);
  CHECK(n.total == doctest::Approx(v.triplet / 2 + 0.5 * v.contrastive / 4).epsilon(1e-14));
}

TEST_CASE("pretraining") {
  const SyntheticDataset d = two_blocks(5);
  EncoderConfig cfg;
  cfg.hidden = 8;
  cfg.out = 6;
  cfg.epochs = 30;

  SUBCASE("alpha = 0 is pure triplet descent") {
    EncoderConfig c = cfg;
    c.loss.alpha = 0.0;
    c.dropout = 0.0;
    c.epochs = 200;
    const PretrainResult r = pretrain_encoder(d.graph, d.communities, c, 3);
    REQUIRE(r.triplet_history.size() == 200);
    const auto& h = r.triplet_history;
    CHECK(std::accumulate(h.end() - 20, h.end(), 0.0) < std::accumulate(h.begin(), h.begin() + 20, 0.0));
  }
  SUBCASE("learning rate 0 leaves parameters bit-identical") {
    EncoderConfig c = cfg;
    c.learning_rate = 0.0;
    c.epochs = 1;
    const PretrainResult r = pretrain_encoder(d.graph, d.communities, c, 4);
    std::mt19937_64 same_stream(4);
    const EncoderModel init = EncoderModel::random(
        static_cast<Eigen::Index>(d.graph.num_attributes() + 1), 8, 6, cfg.dropout, same_stream());
    CHECK(flat(r.model) == flat(init));
  }
  SUBCASE("deterministic per seed") {
    const PretrainResult a = pretrain_encoder(d.graph, d.communities, cfg, 9);
    const PretrainResult b = pretrain_encoder(d.graph, d.communities, cfg, 9);
    CHECK(flat(a.model) == flat(b.model));
    CHECK(a.loss_history == b.loss_history);
  }
  SUBCASE("empty training set") {
    CHECK_THROWS_AS(pretrain_encoder(d.graph, CommunitySet{}, cfg, 1), ConfigError);
  }
  SUBCASE("invalid config") {
    EncoderConfig c = cfg;
    c.dropout = 1.0;
    CHECK_THROWS_AS(pretrain_encoder(d.graph, d.communities, c, 1), ConfigError);
  }
}

TEST_CASE("trained embeddings separate the planted blocks") {
  SyntheticSpec spec;
  spec.blocks = 2;
  spec.block_size = 20;
  spec.p_in = 0.35;
  spec.p_out = 0.04;
  spec.k = 8;
  spec.attrs_per_block = 3;
  spec.seed = 11;
  const SyntheticDataset d = gen_synthetic(spec);
  EncoderConfig cfg;
  cfg.epochs = 200;
  const PretrainResult r = pretrain_encoder(d.graph, d.communities, cfg, 11);
  const std::vector<std::uint8_t> ind(d.graph.num_nodes(), 0);
  const Eigen::MatrixXd emb = encode(r.model, d.graph, ind);
  double intra = 0, inter = 0;
  int ni = 0, nx = 0;
  for (NodeId u = 0; u < 40; ++u)
    for (NodeId v = u + 1; v < 40; ++v) {
      if (d.graph.has_edge(u, v)) continue;  // positives seen in training
      const double dist = cosd(emb.row(u), emb.row(v));
      if (u / 20 == v / 20) {
        intra += dist;
        ++ni;
      } else {
        inter += dist;
        ++nx;
      }
    }
  CHECK(intra / ni < inter / nx);
}

TEST_CASE("gradient check") {
  const SyntheticDataset d = two_blocks(6);
  std::mt19937_64 rng(12);
  EncoderConfig cfg;
  cfg.pair_budget = 1.0;
  cfg.triplets_per_community = 4;
  std::vector<std::uint8_t> ind(d.graph.num_nodes(), 0);
  for (NodeId u : d.communities[0]) ind[u] = 1;

  SUBCASE("flat region: no positives, hinges inactive") {
    const EncoderModel m = EncoderModel::random(9, 4, 3, 0.0, 1);
    TrainingBatch b;
    LossWeights w;
    w.margin_contrastive = 1e-9;
    const Eigen::MatrixXd emb = encode(m, d.graph, ind);
    for (NodeId u = 0; u < 30 && b.negative_pairs.size() < 5; ++u)
      for (NodeId v = u + 1; v < 30; ++v)
        if (cosd(emb.row(u), emb.row(v)) > 0.01) {
          b.negative_pairs.push_back({u, v});
          break;
        }
    const GradCheckResult gc = grad_check(m, d.graph, ind, b, w, 1e-5);
    CHECK(gc.max_relative_error < 1e-4);
    Eigen::MatrixXd grad;
    aggregate_loss(emb, b, w, &grad);
    CHECK(grad.norm() == 0.0);
  }
  SUBCASE("tiny random models, stable under doubling epsilon") {
    int checked = 0;
    for (int attempt = 0; attempt < 30 && checked < 3; ++attempt) {
      const EncoderModel m = EncoderModel::random(9, 4, 3, 0.0, rng());
      const TrainingBatch b = sample_batch(d.graph, d.communities, cfg, rng);
      const LossWeights w;
      const GradCheckResult gc1 = grad_check(m, d.graph, ind, b, w, 1e-5);
      if (gc1.kink_margin < 1e-3) continue;
      const GradCheckResult gc2 = grad_check(m, d.graph, ind, b, w, 2e-5);
      CHECK(gc1.max_relative_error < 1e-4);
      CHECK(gc2.max_relative_error < 1e-4);
      CHECK(gc1.parameters == m.parameter_count());
      ++checked;
    }
    CHECK(checked == 3);
  }
}

TEST_CASE("dropout keeps the expectation") {
  const AttributedGraph g = path6();
  EncoderModel m = EncoderModel::random(4, 5, 3, 0.4, 7);
  const GraphTensors t = make_graph_tensors(g);
  const std::vector<std::uint8_t> ind = {0, 1, 1, 0, 0, 1};
  const Eigen::MatrixXd input = encoder_input(t, ind);
  const ForwardPass ref = forward(m, t, input, false, nullptr);
  const Eigen::MatrixXd target = ref.output[0];
  std::mt19937_64 rng(1);
  const int draws = 20000;
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(6, 5), sq = Eigen::MatrixXd::Zero(6, 5);
  for (int i = 0; i < draws; ++i) {
    const ForwardPass p = forward(m, t, input, true, &rng);
    sum += p.output[0];
    sq += p.output[0].cwiseProduct(p.output[0]);
  }
  const Eigen::MatrixXd mean = sum / draws;
  for (Eigen::Index i = 0; i < mean.size(); ++i) {
    const double var = sq.data()[i] / draws - mean.data()[i] * mean.data()[i];
    const double se = std::sqrt(std::max(var, 0.0) / draws);
    CHECK(std::abs(mean.data()[i] - target.data()[i]) <= 3 * se + 1e-12);
  }
}

TEST_CASE("model file round trip and corruption") {
  const auto dir = std::filesystem::temp_directory_path() / "ncsac_test_encoder";
  std::filesystem::create_directories(dir);
  const EncoderModel m = EncoderModel::random(5, 4, 3, 0.25, 77);
  save_encoder(m, dir / "m.bin");
  const EncoderModel back = load_encoder(dir / "m.bin");
  CHECK(flat(back) == flat(m));
  CHECK(back.dropout == 0.25);
  CHECK(back.seed == 77);

  std::ifstream in(dir / "m.bin", std::ios::binary);
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), {});
  {
    std::vector<char> bad = bytes;
    bad[0] = 'X';
    std::ofstream(dir / "bad.bin", std::ios::binary).write(bad.data(), bad.size());
    CHECK_THROWS_AS(load_encoder(dir / "bad.bin"), ParseError);
  }
  {
    std::ofstream(dir / "short.bin", std::ios::binary).write(bytes.data(), bytes.size() / 2);
    CHECK_THROWS_AS(load_encoder(dir / "short.bin"), ParseError);
  }
  CHECK_THROWS_AS(load_encoder(dir / "absent.bin"), IoError);
}
