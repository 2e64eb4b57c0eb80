#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include "ncsac/graph.hpp"
#include "ncsac/io.hpp"

namespace ncsac {

/// One graph-convolution layer:
///   h' = Dr(relu(h W_s + A_hat h W + b)),
///   A_hat(u, v) = 1 / sqrt((d(u)+1)(d(v)+1)) for every edge (u, v).
struct GcnLayer {
  Eigen::MatrixXd self_weight;      // in x out
  Eigen::MatrixXd neighbor_weight;  // in x out
  Eigen::VectorXd bias;             // out
};

/// Two-layer community-aware encoder. Input rows are [F[u] || indicator[u]].
struct EncoderModel {
  std::array<GcnLayer, 2> layers;
  double dropout = 0.3;
  std::uint64_t seed = 0;

  Eigen::Index in_dim() const { return layers[0].self_weight.rows(); }
  Eigen::Index hidden_dim() const { return layers[0].self_weight.cols(); }
  Eigen::Index out_dim() const { return layers[1].self_weight.cols(); }

  /// Glorot-uniform weights, small positive biases.
  static EncoderModel random(Eigen::Index in_dim, Eigen::Index hidden,
                             Eigen::Index out, double dropout,
                             std::uint64_t seed);
  /// Same shapes, every entry zero.
  EncoderModel zeros_like() const;

  /// Throws ShapeError on inconsistent dims, ConfigError on a bad dropout
  /// rate or non-finite weights.
  void validate() const;

  std::size_t parameter_count() const;
  /// Visits every scalar parameter in a fixed order.
  template <typename Fn>
  void for_each_parameter(Fn&& fn);
};

/// Per-graph tensors reused across forward passes.
struct GraphTensors {
  Eigen::SparseMatrix<double> propagation;  // A_hat, symmetric
  Eigen::MatrixXd attributes;               // n x k, 0/1
};

GraphTensors make_graph_tensors(const AttributedGraph& g);

/// n x (k+1) input matrix [F || indicator].
Eigen::MatrixXd encoder_input(const GraphTensors& t,
                              std::span<const std::uint8_t> indicator);

/// Intermediate values of one forward pass, kept for backpropagation.
struct ForwardPass {
  Eigen::MatrixXd input;
  std::array<Eigen::MatrixXd, 2> propagated;      // A_hat h_in
  std::array<Eigen::MatrixXd, 2> preactivation;   // Z
  std::array<Eigen::MatrixXd, 2> mask;            // inverted-dropout scale
  std::array<Eigen::MatrixXd, 2> output;          // h_out

  const Eigen::MatrixXd& embeddings() const { return output[1]; }
};

/// Full forward pass. Dropout is active only when `train` is set; the masks
/// are drawn from `rng`.
ForwardPass forward(const EncoderModel& model, const GraphTensors& t,
                    Eigen::MatrixXd input, bool train, std::mt19937_64* rng);

/// n x out embeddings for the given membership indicator.
Eigen::MatrixXd encode(const EncoderModel& model, const GraphTensors& t,
                       std::span<const std::uint8_t> indicator,
                       bool train_mode = false, std::uint64_t dropout_seed = 0);
Eigen::MatrixXd encode(const EncoderModel& model, const AttributedGraph& g,
                       std::span<const std::uint8_t> indicator,
                       bool train_mode = false, std::uint64_t dropout_seed = 0);

/// Gradient of a scalar loss w.r.t. every parameter, given dL/d(embeddings).
EncoderModel backward(const EncoderModel& model, const GraphTensors& t,
                      const ForwardPass& pass,
                      const Eigen::MatrixXd& grad_embeddings);

/// 1 - cos(a, b); 1 when either vector has zero norm.
template <typename DerivedA, typename DerivedB>
double cosine_distance(const Eigen::MatrixBase<DerivedA>& a,
                       const Eigen::MatrixBase<DerivedB>& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 1.0;
  return 1.0 - a.dot(b) / (na * nb);
}

using NodePair = std::pair<NodeId, NodeId>;

struct Triplet {
  NodeId anchor;
  NodeId positive;
  NodeId negative;
};

struct TrainingBatch {
  std::vector<NodePair> positive_pairs;  // edges
  std::vector<NodePair> negative_pairs;  // non-edges
  std::vector<Triplet> triplets;
};

/// Sum over positives of delta + sum over negatives of max(0, margin - delta).
double loss_contrastive(const Eigen::MatrixXd& emb, const TrainingBatch& batch,
                        double margin);

/// Sum of max(delta(q, q+) - delta(q, q-) + margin, 0).
double loss_triplet(const Eigen::MatrixXd& emb,
                    std::span<const Triplet> triplets, double margin);

struct LossWeights {
  double margin_contrastive = 0.5;
  double margin_triplet = 0.5;
  double alpha = 0.5;
  // Divide each sum by its term count before blending.
  bool normalize = false;
};

struct LossValue {
  double total = 0.0;
  double contrastive = 0.0;  // raw sum
  double triplet = 0.0;      // raw sum
};

/// L = L_T + alpha * L_C (each optionally averaged). When grad is given it
/// receives dL/d(emb). L_C is skipped entirely when alpha = 0.
LossValue aggregate_loss(const Eigen::MatrixXd& emb, const TrainingBatch& batch,
                         const LossWeights& weights,
                         Eigen::MatrixXd* grad = nullptr);

struct EncoderConfig {
  Eigen::Index hidden = 64;
  Eigen::Index out = 64;
  double dropout = 0.3;
  double learning_rate = 0.01;
  std::size_t epochs = 200;
  LossWeights loss{0.5, 0.5, 0.5, true};
  // Positive + negative pairs per epoch are capped at this multiple of m.
  double pair_budget = 4.0;
  std::size_t triplets_per_community = 16;

  void validate() const;
};

/// Samples one epoch's worth of pairs and triplets.
TrainingBatch sample_batch(const AttributedGraph& g, const CommunitySet& train,
                           const EncoderConfig& cfg, std::mt19937_64& rng);

struct PretrainResult {
  EncoderModel model;
  std::vector<double> loss_history;     // aggregate loss before each update
  std::vector<double> triplet_history;  // raw triplet sum before each update
};

/// Gradient descent on the aggregate loss with a fixed step. Each epoch
/// draws a fresh batch and marks one training community in the indicator
/// channel.
PretrainResult pretrain_encoder(const AttributedGraph& g,
                                const CommunitySet& train,
                                const EncoderConfig& cfg, std::uint64_t seed);

struct GradCheckResult {
  double max_relative_error = 0.0;
  // Smallest distance of any ReLU input, hinge argument, or embedding norm
  // from its kink. Finite differences are only meaningful when this is
  // well above epsilon.
  double kink_margin = 0.0;
  std::size_t parameters = 0;
};

/// Central differences of the aggregate loss against backward() over every
/// parameter, dropout disabled. Relative error uses max(|a|, |n|, 1e-4) as
/// denominator.
GradCheckResult grad_check(const EncoderModel& model, const AttributedGraph& g,
                           std::span<const std::uint8_t> indicator,
                           const TrainingBatch& batch,
                           const LossWeights& weights, double epsilon);

void save_encoder(const EncoderModel& model, const std::filesystem::path& path);
EncoderModel load_encoder(const std::filesystem::path& path);

template <typename Fn>
void EncoderModel::for_each_parameter(Fn&& fn) {
  for (GcnLayer& layer : layers) {
    for (Eigen::Index i = 0; i < layer.self_weight.size(); ++i)
      fn(layer.self_weight.data()[i]);
    for (Eigen::Index i = 0; i < layer.neighbor_weight.size(); ++i)
      fn(layer.neighbor_weight.data()[i]);
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) fn(layer.bias[i]);
  }
}

}  // namespace ncsac
