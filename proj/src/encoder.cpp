#include "ncsac/encoder.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <string>

#include "ncsac/error.hpp"
#include "ncsac/serialize.hpp"

namespace ncsac {

namespace {

GcnLayer random_layer(Eigen::Index in, Eigen::Index out, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  std::uniform_real_distribution<double> u(-limit, limit);
  GcnLayer layer;
  layer.self_weight = Eigen::MatrixXd::NullaryExpr(in, out, [&] { return u(rng); });
  layer.neighbor_weight =
      Eigen::MatrixXd::NullaryExpr(in, out, [&] { return u(rng); });
  layer.bias = Eigen::VectorXd::Constant(out, 0.01);
  return layer;
}

// Adds s * d(delta)/d(a) to grad_a and s * d(delta)/d(b) to grad_b for the
// cosine distance delta(a, b) between rows i and j of emb.
void add_cosine_gradient(const Eigen::MatrixXd& emb, NodeId i, NodeId j,
                         double s, Eigen::MatrixXd& grad) {
  const auto a = emb.row(i);
  const auto b = emb.row(j);
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) return;
  const double cos = a.dot(b) / (na * nb);
  const Eigen::RowVectorXd ga = -(b / (na * nb) - cos * a / (na * na));
  const Eigen::RowVectorXd gb = -(a / (na * nb) - cos * b / (nb * nb));
  grad.row(i) += s * ga;
  grad.row(j) += s * gb;
}

double pair_distance(const Eigen::MatrixXd& emb, NodeId u, NodeId v) {
  return cosine_distance(emb.row(u), emb.row(v));
}

void apply_update(EncoderModel& model, const EncoderModel& grad, double lr) {
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    model.layers[l].self_weight -= lr * grad.layers[l].self_weight;
    model.layers[l].neighbor_weight -= lr * grad.layers[l].neighbor_weight;
    model.layers[l].bias -= lr * grad.layers[l].bias;
  }
}

}  // namespace

EncoderModel EncoderModel::random(Eigen::Index in_dim, Eigen::Index hidden,
                                  Eigen::Index out, double dropout,
                                  std::uint64_t seed) {
  if (in_dim <= 0 || hidden <= 0 || out <= 0) {
    throw ShapeError("encoder dimensions must be positive");
  }
  std::mt19937_64 rng(seed);
  EncoderModel model;
  model.layers[0] = random_layer(in_dim, hidden, rng);
  model.layers[1] = random_layer(hidden, out, rng);
  model.dropout = dropout;
  model.seed = seed;
  model.validate();
  return model;
}

EncoderModel EncoderModel::zeros_like() const {
  EncoderModel z = *this;
  for (GcnLayer& layer : z.layers) {
    layer.self_weight.setZero();
    layer.neighbor_weight.setZero();
    layer.bias.setZero();
  }
  return z;
}

void EncoderModel::validate() const {
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const GcnLayer& layer = layers[l];
    if (layer.self_weight.rows() != layer.neighbor_weight.rows() ||
        layer.self_weight.cols() != layer.neighbor_weight.cols() ||
        layer.bias.size() != layer.self_weight.cols()) {
      throw ShapeError("encoder layer " + std::to_string(l + 1) +
                       " has inconsistent shapes");
    }
    if (!layer.self_weight.allFinite() || !layer.neighbor_weight.allFinite() ||
        !layer.bias.allFinite()) {
      throw ConfigError("encoder layer " + std::to_string(l + 1) +
                        " holds non-finite weights");
    }
  }
  if (layers[1].self_weight.rows() != layers[0].self_weight.cols()) {
    throw ShapeError("encoder layer 2 input does not match layer 1 output");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) {
    throw ConfigError("dropout rate must lie in [0, 1)");
  }
}

std::size_t EncoderModel::parameter_count() const {
  std::size_t total = 0;
  for (const GcnLayer& layer : layers) {
    total += static_cast<std::size_t>(layer.self_weight.size() +
                                      layer.neighbor_weight.size() +
                                      layer.bias.size());
  }
  return total;
}

GraphTensors make_graph_tensors(const AttributedGraph& g) {
  const auto n = static_cast<Eigen::Index>(g.num_nodes());
  std::vector<Eigen::Triplet<double>> entries;
  entries.reserve(2 * g.num_edges());
  for (NodeId u = 0; u < g.num_nodes(); ++u) {
    for (NodeId v : g.neighbors(u)) {
      const double w = 1.0 / std::sqrt(static_cast<double>(g.degree(u) + 1) *
                                       static_cast<double>(g.degree(v) + 1));
      entries.emplace_back(static_cast<Eigen::Index>(u),
                           static_cast<Eigen::Index>(v), w);
    }
  }
  GraphTensors t;
  t.propagation.resize(n, n);
  t.propagation.setFromTriplets(entries.begin(), entries.end());
  t.attributes = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(g.num_attributes()));
  for (NodeId u = 0; u < g.num_nodes(); ++u) {
    for (AttrId f : g.attributes(u)) t.attributes(u, f) = 1.0;
  }
  return t;
}

Eigen::MatrixXd encoder_input(const GraphTensors& t,
                              std::span<const std::uint8_t> indicator) {
  const Eigen::Index n = t.attributes.rows();
  if (static_cast<Eigen::Index>(indicator.size()) != n) {
    throw ShapeError("indicator length " + std::to_string(indicator.size()) +
                     " does not match n=" + std::to_string(n));
  }
  Eigen::MatrixXd x(n, t.attributes.cols() + 1);
  x.leftCols(t.attributes.cols()) = t.attributes;
  for (Eigen::Index u = 0; u < n; ++u) {
    x(u, t.attributes.cols()) = indicator[static_cast<std::size_t>(u)] ? 1.0 : 0.0;
  }
  return x;
}

ForwardPass forward(const EncoderModel& model, const GraphTensors& t,
                    Eigen::MatrixXd input, bool train, std::mt19937_64* rng) {
  if (input.cols() != model.in_dim()) {
    throw ShapeError("encoder expects " + std::to_string(model.in_dim()) +
                     " input columns, got " + std::to_string(input.cols()));
  }
  if (input.rows() != t.propagation.rows()) {
    throw ShapeError("encoder input rows do not match the graph");
  }
  const bool drop = train && model.dropout > 0.0;
  if (drop && rng == nullptr) {
    throw PreconditionError("train-mode dropout needs a random generator");
  }
  const double keep_scale = 1.0 / (1.0 - model.dropout);
  std::bernoulli_distribution keep(1.0 - model.dropout);

  ForwardPass pass;
  pass.input = std::move(input);
  for (std::size_t l = 0; l < 2; ++l) {
    const Eigen::MatrixXd& h = l == 0 ? pass.input : pass.output[0];
    const GcnLayer& layer = model.layers[l];
    pass.propagated[l] = t.propagation * h;
    Eigen::MatrixXd z = h * layer.self_weight +
                        pass.propagated[l] * layer.neighbor_weight;
    z.rowwise() += layer.bias.transpose();
    pass.preactivation[l] = std::move(z);
    const Eigen::MatrixXd& zr = pass.preactivation[l];
    if (drop) {
      pass.mask[l] = Eigen::MatrixXd::NullaryExpr(zr.rows(), zr.cols(), [&] {
        return keep(*rng) ? keep_scale : 0.0;
      });
    } else {
      pass.mask[l] = Eigen::MatrixXd::Ones(zr.rows(), zr.cols());
    }
    pass.output[l] = zr.cwiseMax(0.0).cwiseProduct(pass.mask[l]);
  }
  return pass;
}

Eigen::MatrixXd encode(const EncoderModel& model, const GraphTensors& t,
                       std::span<const std::uint8_t> indicator, bool train_mode,
                       std::uint64_t dropout_seed) {
  std::mt19937_64 rng(dropout_seed);
  return forward(model, t, encoder_input(t, indicator), train_mode, &rng)
      .output[1];
}

Eigen::MatrixXd encode(const EncoderModel& model, const AttributedGraph& g,
                       std::span<const std::uint8_t> indicator, bool train_mode,
                       std::uint64_t dropout_seed) {
  return encode(model, make_graph_tensors(g), indicator, train_mode,
                dropout_seed);
}

EncoderModel backward(const EncoderModel& model, const GraphTensors& t,
                      const ForwardPass& pass,
                      const Eigen::MatrixXd& grad_embeddings) {
  EncoderModel grad = model.zeros_like();
  Eigen::MatrixXd upstream = grad_embeddings;
  for (int l = 1; l >= 0; --l) {
    const auto li = static_cast<std::size_t>(l);
    const Eigen::MatrixXd& h = l == 0 ? pass.input : pass.output[0];
    const Eigen::MatrixXd dz =
        upstream.cwiseProduct(pass.mask[li])
            .cwiseProduct(
                (pass.preactivation[li].array() > 0.0).cast<double>().matrix());
    grad.layers[li].self_weight = h.transpose() * dz;
    grad.layers[li].neighbor_weight = pass.propagated[li].transpose() * dz;
    grad.layers[li].bias = dz.colwise().sum().transpose();
    if (l > 0) {
      const GcnLayer& layer = model.layers[li];
      upstream = dz * layer.self_weight.transpose() +
                 t.propagation * (dz * layer.neighbor_weight.transpose());
    }
  }
  return grad;
}

double loss_contrastive(const Eigen::MatrixXd& emb, const TrainingBatch& batch,
                        double margin) {
  double total = 0.0;
  for (auto [u, v] : batch.positive_pairs) total += pair_distance(emb, u, v);
  for (auto [u, v] : batch.negative_pairs) {
    total += std::max(0.0, margin - pair_distance(emb, u, v));
  }
  return total;
}

double loss_triplet(const Eigen::MatrixXd& emb,
                    std::span<const Triplet> triplets, double margin) {
  double total = 0.0;
  for (const Triplet& t : triplets) {
    total += std::max(0.0, pair_distance(emb, t.anchor, t.positive) -
                               pair_distance(emb, t.anchor, t.negative) +
                               margin);
  }
  return total;
}

LossValue aggregate_loss(const Eigen::MatrixXd& emb, const TrainingBatch& batch,
                         const LossWeights& w, Eigen::MatrixXd* grad) {
  LossValue out;
  const std::size_t pair_count =
      batch.positive_pairs.size() + batch.negative_pairs.size();
  const double pair_scale =
      w.normalize && pair_count > 0 ? 1.0 / static_cast<double>(pair_count) : 1.0;
  const double triplet_scale =
      w.normalize && !batch.triplets.empty()
          ? 1.0 / static_cast<double>(batch.triplets.size())
          : 1.0;
  if (grad) grad->setZero(emb.rows(), emb.cols());

  out.triplet = loss_triplet(emb, batch.triplets, w.margin_triplet);
  if (w.alpha != 0.0) {
    out.contrastive = loss_contrastive(emb, batch, w.margin_contrastive);
  }
  out.total = triplet_scale * out.triplet +
              w.alpha * pair_scale * out.contrastive;
  if (!grad) return out;

  for (const Triplet& t : batch.triplets) {
    const double pos = pair_distance(emb, t.anchor, t.positive);
    const double neg = pair_distance(emb, t.anchor, t.negative);
    if (pos - neg + w.margin_triplet > 0.0) {
      add_cosine_gradient(emb, t.anchor, t.positive, triplet_scale, *grad);
      add_cosine_gradient(emb, t.anchor, t.negative, -triplet_scale, *grad);
    }
  }
  if (w.alpha != 0.0) {
    const double s = w.alpha * pair_scale;
    for (auto [u, v] : batch.positive_pairs) add_cosine_gradient(emb, u, v, s, *grad);
    for (auto [u, v] : batch.negative_pairs) {
      if (w.margin_contrastive - pair_distance(emb, u, v) > 0.0) {
        add_cosine_gradient(emb, u, v, -s, *grad);
      }
    }
  }
  return out;
}

void EncoderConfig::validate() const {
  if (hidden <= 0 || out <= 0) throw ConfigError("encoder widths must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) {
    throw ConfigError("dropout rate must lie in [0, 1)");
  }
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("encoder learning rate must be finite and >= 0");
  }
  if (!(loss.margin_contrastive > 0.0) || !(loss.margin_triplet > 0.0)) {
    throw ConfigError("loss margins must be positive");
  }
  if (!(loss.alpha >= 0.0) || !std::isfinite(loss.alpha)) {
    throw ConfigError("alpha must be finite and >= 0");
  }
  if (!(pair_budget > 0.0)) throw ConfigError("pair budget must be positive");
}

TrainingBatch sample_batch(const AttributedGraph& g, const CommunitySet& train,
                           const EncoderConfig& cfg, std::mt19937_64& rng) {
  TrainingBatch batch;
  const std::size_t n = g.num_nodes();

  std::vector<Edge> edges = g.edge_list();
  const auto budget = static_cast<std::size_t>(
      cfg.pair_budget * static_cast<double>(g.num_edges()));
  const std::size_t positives = std::min(edges.size(), budget / 2);
  // Partial Fisher-Yates picks `positives` edges without replacement.
  for (std::size_t i = 0; i < positives; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, edges.size() - 1);
    std::swap(edges[i], edges[pick(rng)]);
    batch.positive_pairs.emplace_back(edges[i].u, edges[i].v);
  }

  if (n >= 2) {
    std::uniform_int_distribution<NodeId> node(0, static_cast<NodeId>(n - 1));
    std::size_t tries = 0;
    while (batch.negative_pairs.size() < positives && tries < 100 * positives) {
      ++tries;
      const NodeId u = node(rng);
      const NodeId v = node(rng);
      if (u != v && !g.has_edge(u, v)) batch.negative_pairs.emplace_back(u, v);
    }
  }

  std::vector<std::vector<std::uint32_t>> owner(n);
  for (std::size_t c = 0; c < train.size(); ++c) {
    for (NodeId u : train[c]) owner[u].push_back(static_cast<std::uint32_t>(c));
  }
  auto shares_community = [&](NodeId a, NodeId b) {
    for (auto ca : owner[a]) {
      if (std::find(owner[b].begin(), owner[b].end(), ca) != owner[b].end())
        return true;
    }
    return false;
  };
  if (n >= 2) {
    std::uniform_int_distribution<NodeId> node(0, static_cast<NodeId>(n - 1));
    for (const Community& c : train.communities) {
      if (c.size() < 2) continue;
      std::uniform_int_distribution<std::size_t> member(0, c.size() - 1);
      for (std::size_t t = 0; t < cfg.triplets_per_community; ++t) {
        const NodeId anchor = c[member(rng)];
        NodeId positive = anchor;
        while (positive == anchor) positive = c[member(rng)];
        for (int attempt = 0; attempt < 64; ++attempt) {
          const NodeId negative = node(rng);
          if (negative != anchor && !shares_community(anchor, negative)) {
            batch.triplets.push_back({anchor, positive, negative});
            break;
          }
        }
      }
    }
  }
  return batch;
}

PretrainResult pretrain_encoder(const AttributedGraph& g,
                                const CommunitySet& train,
                                const EncoderConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (train.empty()) throw ConfigError("encoder pretraining needs training communities");
  std::mt19937_64 rng(seed);
  const GraphTensors tensors = make_graph_tensors(g);

  PretrainResult result;
  result.model = EncoderModel::random(
      static_cast<Eigen::Index>(g.num_attributes() + 1), cfg.hidden, cfg.out,
      cfg.dropout, rng());
  result.model.seed = seed;

  std::vector<std::uint8_t> indicator(g.num_nodes(), 0);
  std::uniform_int_distribution<std::size_t> pick_community(0, train.size() - 1);
  Eigen::MatrixXd grad_emb;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const TrainingBatch batch = sample_batch(g, train, cfg, rng);
    std::fill(indicator.begin(), indicator.end(), 0);
    for (NodeId u : train[pick_community(rng)]) indicator[u] = 1;

    const ForwardPass pass = forward(result.model, tensors,
                                     encoder_input(tensors, indicator), true, &rng);
    const LossValue loss = aggregate_loss(pass.embeddings(), batch, cfg.loss, &grad_emb);
    result.loss_history.push_back(loss.total);
    result.triplet_history.push_back(loss.triplet);
    if (cfg.learning_rate == 0.0) continue;
    const EncoderModel grad = backward(result.model, tensors, pass, grad_emb);
    apply_update(result.model, grad, cfg.learning_rate);
  }
  result.model.validate();
  return result;
}

GradCheckResult grad_check(const EncoderModel& model, const AttributedGraph& g,
                           std::span<const std::uint8_t> indicator,
                           const TrainingBatch& batch, const LossWeights& weights,
                           double epsilon) {
  const GraphTensors tensors = make_graph_tensors(g);
  const Eigen::MatrixXd input = encoder_input(tensors, indicator);

  const ForwardPass pass = forward(model, tensors, input, false, nullptr);
  Eigen::MatrixXd grad_emb;
  aggregate_loss(pass.embeddings(), batch, weights, &grad_emb);
  EncoderModel analytic = backward(model, tensors, pass, grad_emb);

  GradCheckResult result;
  result.kink_margin = std::numeric_limits<double>::infinity();
  for (const auto& z : pass.preactivation) {
    result.kink_margin = std::min(result.kink_margin, z.cwiseAbs().minCoeff());
  }
  const Eigen::MatrixXd& emb = pass.embeddings();
  for (auto [u, v] : batch.negative_pairs) {
    result.kink_margin = std::min(
        result.kink_margin,
        std::abs(weights.margin_contrastive - pair_distance(emb, u, v)));
  }
  for (const Triplet& t : batch.triplets) {
    result.kink_margin = std::min(
        result.kink_margin,
        std::abs(pair_distance(emb, t.anchor, t.positive) -
                 pair_distance(emb, t.anchor, t.negative) +
                 weights.margin_triplet));
  }

  EncoderModel probe = model;
  std::vector<double*> params;
  probe.for_each_parameter([&](double& p) { params.push_back(&p); });
  std::vector<double> grads;
  analytic.for_each_parameter([&](double& p) { grads.push_back(p); });

  auto loss_at = [&] {
    const ForwardPass p = forward(probe, tensors, input, false, nullptr);
    return aggregate_loss(p.embeddings(), batch, weights).total;
  };
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double saved = *params[i];
    *params[i] = saved + epsilon;
    const double up = loss_at();
    *params[i] = saved - epsilon;
    const double down = loss_at();
    *params[i] = saved;
    const double numeric = (up - down) / (2.0 * epsilon);
    const double denom = std::max({std::abs(grads[i]), std::abs(numeric), 1e-4});
    result.max_relative_error =
        std::max(result.max_relative_error, std::abs(grads[i] - numeric) / denom);
  }
  result.parameters = params.size();
  return result;
}

void save_encoder(const EncoderModel& model, const std::filesystem::path& path) {
  model.validate();
  BinaryWriter w(ModelKind::encoder);
  w.u64(static_cast<std::uint64_t>(model.in_dim()));
  w.u64(static_cast<std::uint64_t>(model.hidden_dim()));
  w.u64(static_cast<std::uint64_t>(model.out_dim()));
  w.f64(model.dropout);
  w.u64(model.seed);
  for (const GcnLayer& layer : model.layers) {
    w.matrix(layer.self_weight);
    w.matrix(layer.neighbor_weight);
    w.vector(layer.bias);
  }
  w.save(path);
}

EncoderModel load_encoder(const std::filesystem::path& path) {
  BinaryReader r = BinaryReader::open(path, ModelKind::encoder);
  const auto in = r.u64();
  const auto hidden = r.u64();
  const auto out = r.u64();
  EncoderModel model;
  model.dropout = r.f64();
  model.seed = r.u64();
  for (GcnLayer& layer : model.layers) {
    layer.self_weight = r.matrix();
    layer.neighbor_weight = r.matrix();
    layer.bias = r.vector();
  }
  if (!r.at_end()) throw ParseError("trailing bytes in encoder file");
  model.validate();
  if (static_cast<std::uint64_t>(model.in_dim()) != in ||
      static_cast<std::uint64_t>(model.hidden_dim()) != hidden ||
      static_cast<std::uint64_t>(model.out_dim()) != out) {
    throw ShapeError("encoder header dims disagree with stored weights");
  }
  return model;
}

}  // namespace ncsac
