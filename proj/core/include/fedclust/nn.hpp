#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "fedclust/data.hpp"

namespace fedclust {

/// One dense layer, weights [fan_out x fan_in] plus bias [fan_out].
struct LayerParams {
  Eigen::MatrixXd weights;
  Eigen::VectorXd bias;

  Eigen::Index fan_in() const { return weights.cols(); }
  Eigen::Index fan_out() const { return weights.rows(); }
};

bool operator==(const LayerParams& a, const LayerParams& b);

/// Feed-forward classifier: ReLU hidden layers, linear logits on the final
/// layer. Adjacent layer dimensions must compose.
struct ModelParams {
  std::vector<LayerParams> layers;

  Eigen::Index input_dim() const { return layers.front().fan_in(); }
  Eigen::Index output_dim() const { return layers.back().fan_out(); }
  std::size_t num_layers() const { return layers.size(); }
};

bool operator==(const ModelParams& a, const ModelParams& b);

void check_model(const ModelParams& model);

/// Same shape as the model it was computed for.
struct Gradients {
  std::vector<LayerParams> layers;
};

/// Final-layer weights flattened row-major, then the final-layer bias.
struct PartialWeights {
  std::vector<double> values;
  Eigen::Index fan_out = 0;
  Eigen::Index fan_in = 0;
};

struct TrainSpec {
  int epochs = 10;
  int batch_size = 10;
  double learning_rate = 0.1;
  double momentum = 0.0;     // classical heavy ball, buffers reset per call
  double proximal_mu = 0.0;  // 0 disables the proximal term
  std::uint64_t seed = 0;
};

void check_train_spec(const TrainSpec& spec);

/// Glorot-uniform weights (+-sqrt(6/(fan_in+fan_out))), zero biases.
/// dims is the full chain [input, hidden..., output].
ModelParams init_model(const std::vector<Eigen::Index>& dims, std::uint64_t seed);

/// Logits [B x C] for a feature batch [B x d].
Eigen::MatrixXd forward(const ModelParams& model, const Eigen::MatrixXd& features);

struct LossGrad {
  double loss = 0.0;
  Gradients grads;
};

/// Mean softmax cross-entropy plus, when mu > 0, the proximal penalty
/// (mu/2)*||theta - anchor||^2. Gradients are the exact analytic gradients of
/// that objective.
LossGrad loss_and_grad(const ModelParams& model, const Eigen::MatrixXd& features,
                       const std::vector<int>& labels,
                       const ModelParams* anchor = nullptr, double mu = 0.0);

/// Mini-batch SGD on the shard's train split. Batch order is a fresh seeded
/// permutation per epoch; the final incomplete batch is used. When
/// spec.proximal_mu > 0 the proximal anchor is the model passed in.
ModelParams local_train(const ModelParams& model, const ClientShard& shard,
                        const TrainSpec& spec);
ModelParams local_train_on(const ModelParams& model, const LabeledDataset& data,
                           const TrainSpec& spec);

/// Top-1 accuracy (argmax logits, lowest index wins ties).
double accuracy(const ModelParams& model, const LabeledDataset& data);

/// Row-major flattening of one layer's weights followed by its bias.
std::vector<double> flatten_layer(const LayerParams& layer);

PartialWeights extract_partial_weights(const ModelParams& model);

std::size_t param_count(const ModelParams& model);
std::size_t final_layer_param_count(const ModelParams& model);

/// Per-parameter convex combination with weights normalized by their sum,
/// accumulated in ascending input-index order. Identical inputs reproduce
/// exactly regardless of the weights.
ModelParams weighted_average(std::span<const ModelParams> models,
                             std::span<const double> weights);

}  // namespace fedclust
