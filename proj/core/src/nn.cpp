#include "fedclust/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "fedclust/rng.hpp"

namespace fedclust {
namespace {

std::string shape_of(const Eigen::MatrixXd& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void check_congruent(const ModelParams& a, const ModelParams& b, const char* what) {
  if (a.num_layers() != b.num_layers())
    throw std::invalid_argument(std::string(what) + ": layer counts differ");
  for (std::size_t l = 0; l < a.num_layers(); ++l) {
    if (a.layers[l].fan_in() != b.layers[l].fan_in() ||
        a.layers[l].fan_out() != b.layers[l].fan_out())
      throw std::invalid_argument(std::string(what) + ": layer " + std::to_string(l) +
                                  " shapes differ (" + shape_of(a.layers[l].weights) + " vs " +
                                  shape_of(b.layers[l].weights) + ")");
  }
}

/// Forward pass keeping pre-activations and activations for backprop.
struct ForwardTrace {
  std::vector<Eigen::MatrixXd> pre;  // per layer, [B x fan_out]
  std::vector<Eigen::MatrixXd> act;  // act[0] = input, act[l+1] = layer l output
};

ForwardTrace traced_forward(const ModelParams& model, const Eigen::MatrixXd& features) {
  ForwardTrace trace;
  trace.act.push_back(features);
  for (std::size_t l = 0; l < model.num_layers(); ++l) {
    const auto& layer = model.layers[l];
    Eigen::MatrixXd z = trace.act.back() * layer.weights.transpose();
    z.rowwise() += layer.bias.transpose();
    if (l + 1 < model.num_layers()) {
      trace.act.push_back(z.cwiseMax(0.0));
    } else {
      trace.act.push_back(z);  // linear logits
    }
    trace.pre.push_back(std::move(z));
  }
  return trace;
}

Gradients zero_like(const ModelParams& model) {
  Gradients g;
  g.layers.reserve(model.num_layers());
  for (const auto& layer : model.layers) {
    g.layers.push_back({Eigen::MatrixXd::Zero(layer.fan_out(), layer.fan_in()),
                        Eigen::VectorXd::Zero(layer.fan_out())});
  }
  return g;
}

}  // namespace

bool operator==(const LayerParams& a, const LayerParams& b) {
  return a.weights.rows() == b.weights.rows() && a.weights.cols() == b.weights.cols() &&
         a.bias.size() == b.bias.size() && a.weights.cwiseEqual(b.weights).all() &&
         a.bias.cwiseEqual(b.bias).all();
}

bool operator==(const ModelParams& a, const ModelParams& b) {
  return a.layers.size() == b.layers.size() &&
         std::equal(a.layers.begin(), a.layers.end(), b.layers.begin());
}

void check_model(const ModelParams& model) {
  if (model.layers.empty()) throw std::invalid_argument("model: must have at least one layer");
  for (std::size_t l = 0; l < model.num_layers(); ++l) {
    const auto& layer = model.layers[l];
    if (layer.fan_out() < 1 || layer.fan_in() < 1)
      throw std::invalid_argument("model: layer " + std::to_string(l) + " has empty dimensions");
    if (layer.bias.size() != layer.fan_out())
      throw std::invalid_argument("model: layer " + std::to_string(l) +
                                  " bias length does not match weight rows");
    if (!layer.weights.allFinite() || !layer.bias.allFinite())
      throw std::invalid_argument("model: layer " + std::to_string(l) + " has non-finite entries");
    if (l > 0 && model.layers[l - 1].fan_out() != layer.fan_in())
      throw std::invalid_argument("model: layer " + std::to_string(l) +
                                  " fan_in does not match previous fan_out");
  }
}

void check_train_spec(const TrainSpec& spec) {
  if (spec.epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
  if (spec.batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
  if (!(spec.learning_rate >= 0.0)) throw std::invalid_argument("train: learning_rate must be >= 0");
  if (!(spec.momentum >= 0.0 && spec.momentum < 1.0))
    throw std::invalid_argument("train: momentum must be in [0, 1)");
  if (!(spec.proximal_mu >= 0.0)) throw std::invalid_argument("train: proximal_mu must be >= 0");
}

ModelParams init_model(const std::vector<Eigen::Index>& dims, std::uint64_t seed) {
  if (dims.size() < 2) throw std::invalid_argument("init_model: need at least [input, output] dims");
  for (auto d : dims) {
    if (d < 1) throw std::invalid_argument("init_model: dimensions must be >= 1");
  }
  Rng rng(seed);
  ModelParams model;
  model.layers.reserve(dims.size() - 1);
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const Eigen::Index fan_in = dims[l];
    const Eigen::Index fan_out = dims[l + 1];
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    LayerParams layer{Eigen::MatrixXd(fan_out, fan_in), Eigen::VectorXd::Zero(fan_out)};
    for (Eigen::Index r = 0; r < fan_out; ++r) {
      for (Eigen::Index c = 0; c < fan_in; ++c) {
        layer.weights(r, c) = rng.uniform(-limit, limit);
      }
    }
    model.layers.push_back(std::move(layer));
  }
  return model;
}

Eigen::MatrixXd forward(const ModelParams& model, const Eigen::MatrixXd& features) {
  check_model(model);
  if (features.cols() != model.input_dim())
    throw std::invalid_argument("forward: feature dim " + std::to_string(features.cols()) +
                                " does not match model input dim " +
                                std::to_string(model.input_dim()));
  return traced_forward(model, features).act.back();
}

LossGrad loss_and_grad(const ModelParams& model, const Eigen::MatrixXd& features,
                       const std::vector<int>& labels, const ModelParams* anchor,
                       double mu) {
  check_model(model);
  const auto batch = features.rows();
  if (static_cast<Eigen::Index>(labels.size()) != batch)
    throw std::invalid_argument("loss_and_grad: labels size does not match batch");
  if (batch < 1) throw std::invalid_argument("loss_and_grad: empty batch");
  if (features.cols() != model.input_dim())
    throw std::invalid_argument("loss_and_grad: feature dim " + std::to_string(features.cols()) +
                                " does not match model input dim " +
                                std::to_string(model.input_dim()));
  const auto classes = model.output_dim();
  for (int label : labels) {
    if (label < 0 || label >= classes)
      throw std::invalid_argument("loss_and_grad: label " + std::to_string(label) +
                                  " out of range [0, " + std::to_string(classes) + ")");
  }
  if (mu > 0.0) {
    if (anchor == nullptr) throw std::invalid_argument("loss_and_grad: mu > 0 requires an anchor");
    check_congruent(model, *anchor, "loss_and_grad anchor");
  }

  const ForwardTrace trace = traced_forward(model, features);
  const Eigen::MatrixXd& logits = trace.act.back();

  // Stabilized softmax cross-entropy.
  const Eigen::VectorXd row_max = logits.rowwise().maxCoeff();
  const Eigen::MatrixXd shifted = logits.colwise() - row_max;
  const Eigen::MatrixXd expd = shifted.array().exp();
  const Eigen::VectorXd denom = expd.rowwise().sum();

  double loss = 0.0;
  Eigen::MatrixXd dlogits = expd.array().colwise() / denom.array();
  for (Eigen::Index i = 0; i < batch; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    loss += std::log(denom(i)) - shifted(i, y);
    dlogits(i, y) -= 1.0;
  }
  loss /= static_cast<double>(batch);
  dlogits /= static_cast<double>(batch);

  LossGrad out;
  out.grads = zero_like(model);
  Eigen::MatrixXd delta = std::move(dlogits);
  for (std::size_t l = model.num_layers(); l-- > 0;) {
    out.grads.layers[l].weights = delta.transpose() * trace.act[l];
    out.grads.layers[l].bias = delta.colwise().sum();
    if (l > 0) {
      Eigen::MatrixXd back = delta * model.layers[l].weights;
      delta = back.cwiseProduct((trace.pre[l - 1].array() > 0.0).cast<double>().matrix());
    }
  }

  if (mu > 0.0) {
    for (std::size_t l = 0; l < model.num_layers(); ++l) {
      const Eigen::MatrixXd dw = model.layers[l].weights - anchor->layers[l].weights;
      const Eigen::VectorXd db = model.layers[l].bias - anchor->layers[l].bias;
      loss += 0.5 * mu * (dw.squaredNorm() + db.squaredNorm());
      out.grads.layers[l].weights += mu * dw;
      out.grads.layers[l].bias += mu * db;
    }
  }
  out.loss = loss;
  return out;
}

ModelParams local_train_on(const ModelParams& model, const LabeledDataset& data,
                           const TrainSpec& spec) {
  check_model(model);
  check_train_spec(spec);
  if (data.size() < 1) throw std::invalid_argument("local_train: empty training data");

  // The proximal anchor is the received model itself.
  const ModelParams anchor = model;
  const ModelParams* anchor_ptr = spec.proximal_mu > 0.0 ? &anchor : nullptr;

  ModelParams out = model;
  std::vector<LayerParams> velocity;
  velocity.reserve(out.num_layers());
  for (const auto& layer : out.layers) {
    velocity.push_back({Eigen::MatrixXd::Zero(layer.fan_out(), layer.fan_in()),
                        Eigen::VectorXd::Zero(layer.fan_out())});
  }

  Rng rng(spec.seed);
  const auto n = data.size();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < spec.epochs; ++epoch) {
    rng.shuffle(order);
    for (Eigen::Index start = 0; start < n; start += spec.batch_size) {
      const Eigen::Index count = std::min<Eigen::Index>(spec.batch_size, n - start);
      Eigen::MatrixXd batch(count, data.dim());
      std::vector<int> labels(static_cast<std::size_t>(count));
      for (Eigen::Index i = 0; i < count; ++i) {
        batch.row(i) = data.features.row(order[static_cast<std::size_t>(start + i)]);
        labels[static_cast<std::size_t>(i)] =
            data.labels[static_cast<std::size_t>(order[static_cast<std::size_t>(start + i)])];
      }
      const LossGrad lg = loss_and_grad(out, batch, labels, anchor_ptr, spec.proximal_mu);
      for (std::size_t l = 0; l < out.num_layers(); ++l) {
        velocity[l].weights = spec.momentum * velocity[l].weights + lg.grads.layers[l].weights;
        velocity[l].bias = spec.momentum * velocity[l].bias + lg.grads.layers[l].bias;
        out.layers[l].weights -= spec.learning_rate * velocity[l].weights;
        out.layers[l].bias -= spec.learning_rate * velocity[l].bias;
      }
    }
  }
  return out;
}

ModelParams local_train(const ModelParams& model, const ClientShard& shard,
                        const TrainSpec& spec) {
  return local_train_on(model, shard.train, spec);
}

double accuracy(const ModelParams& model, const LabeledDataset& data) {
  if (data.size() < 1) throw std::invalid_argument("accuracy: empty dataset");
  const Eigen::MatrixXd logits = forward(model, data.features);
  Eigen::Index hits = 0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Eigen::Index best = 0;
    logits.row(i).maxCoeff(&best);
    if (static_cast<int>(best) == data.labels[static_cast<std::size_t>(i)]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

std::vector<double> flatten_layer(const LayerParams& layer) {
  std::vector<double> flat;
  flat.reserve(static_cast<std::size_t>(layer.fan_out() * layer.fan_in() + layer.fan_out()));
  for (Eigen::Index r = 0; r < layer.fan_out(); ++r) {
    for (Eigen::Index c = 0; c < layer.fan_in(); ++c) {
      flat.push_back(layer.weights(r, c));
    }
  }
  for (Eigen::Index r = 0; r < layer.fan_out(); ++r) flat.push_back(layer.bias(r));
  return flat;
}

PartialWeights extract_partial_weights(const ModelParams& model) {
  check_model(model);
  const auto& last = model.layers.back();
  return {flatten_layer(last), last.fan_out(), last.fan_in()};
}

std::size_t param_count(const ModelParams& model) {
  std::size_t total = 0;
  for (const auto& layer : model.layers) {
    total += static_cast<std::size_t>(layer.fan_out() * layer.fan_in() + layer.fan_out());
  }
  return total;
}

std::size_t final_layer_param_count(const ModelParams& model) {
  check_model(model);
  const auto& last = model.layers.back();
  return static_cast<std::size_t>(last.fan_out() * last.fan_in() + last.fan_out());
}

ModelParams weighted_average(std::span<const ModelParams> models,
                             std::span<const double> weights) {
  if (models.empty()) throw std::invalid_argument("weighted_average: no models");
  if (models.size() != weights.size())
    throw std::invalid_argument("weighted_average: weight count does not match model count");
  double sum = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw std::invalid_argument("weighted_average: weights must be non-negative");
    sum += w;
  }
  if (!(sum > 0.0)) throw std::invalid_argument("weighted_average: weight sum must be positive");
  for (std::size_t i = 1; i < models.size(); ++i) {
    check_congruent(models[0], models[i], "weighted_average");
  }

  // Baseline-plus-deviations form: identical inputs reproduce bit-exactly for
  // any weights, and a single member passes through untouched.
  ModelParams out = models[0];
  for (std::size_t i = 1; i < models.size(); ++i) {
    const double a = weights[i] / sum;
    for (std::size_t l = 0; l < out.num_layers(); ++l) {
      out.layers[l].weights += a * (models[i].layers[l].weights - models[0].layers[l].weights);
      out.layers[l].bias += a * (models[i].layers[l].bias - models[0].layers[l].bias);
    }
  }
  return out;
}

}  // namespace fedclust
