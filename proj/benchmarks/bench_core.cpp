#include <benchmark/benchmark.h>

#include <vector>

#include "fedclust/federation.hpp"

using namespace fedclust;

namespace {

LabeledDataset make_dataset(int classes, int dim, int per_class) {
  return synth_gaussian_classes(classes, dim, per_class, 3.0, 42);
}

std::vector<PartialWeights> make_fingerprints(int count, int length) {
  Rng rng(7);
  std::vector<PartialWeights> fps(static_cast<std::size_t>(count));
  for (auto& fp : fps) {
    fp.fan_out = length;
    fp.fan_in = 0;
    fp.values.resize(static_cast<std::size_t>(length));
    for (auto& v : fp.values) v = rng.normal();
  }
  return fps;
}

void BM_LossAndGrad(benchmark::State& state) {
  const auto model = init_model({16, 32, 10}, 1);
  const auto ds = make_dataset(10, 16, 10);
  const std::vector<int> labels(ds.labels.begin(), ds.labels.begin() + 10);
  const Eigen::MatrixXd batch = ds.features.topRows(10);
  for (auto _ : state) {
    auto lg = loss_and_grad(model, batch, labels);
    benchmark::DoNotOptimize(lg.loss);
  }
}
BENCHMARK(BM_LossAndGrad);

void BM_LocalTrain(benchmark::State& state) {
  const auto model = init_model({16, 32, 10}, 1);
  const auto ds = make_dataset(10, 16, static_cast<int>(state.range(0)) / 10);
  PartitionSpec spec;
  spec.delta = 1.0;
  spec.num_clients = 1;
  spec.seed = 3;
  const auto shards = partition_label_skew(ds, spec);
  TrainSpec train;
  train.epochs = 10;
  train.batch_size = 10;
  train.learning_rate = 0.1;
  train.momentum = 0.5;
  train.seed = 5;
  for (auto _ : state) {
    auto trained = local_train(model, shards[0], train);
    benchmark::DoNotOptimize(trained.layers[0].weights(0, 0));
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_LocalTrain)->Range(100, 1600)->Complexity(benchmark::oN);

void BM_PairwiseDistance(benchmark::State& state) {
  const auto fps = make_fingerprints(static_cast<int>(state.range(0)), 170);
  for (auto _ : state) {
    auto m = pairwise_distance(fps);
    benchmark::DoNotOptimize(m.distances(0, 1));
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_PairwiseDistance)->RangeMultiplier(2)->Range(16, 256)->Complexity();

void BM_Agglomerative(benchmark::State& state) {
  const auto m = pairwise_distance(
      make_fingerprints(static_cast<int>(state.range(0)), 170));
  for (auto _ : state) {
    auto result = agglomerative(m, LinkageKind::average, 1.0);
    benchmark::DoNotOptimize(result.assignment.num_clusters);
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_Agglomerative)->RangeMultiplier(2)->Range(16, 256)->Complexity();

void BM_WeightedAverage(benchmark::State& state) {
  std::vector<ModelParams> models;
  std::vector<double> weights;
  for (int i = 0; i < state.range(0); ++i) {
    models.push_back(init_model({16, 32, 10}, static_cast<std::uint64_t>(i)));
    weights.push_back(1.0 + i);
  }
  for (auto _ : state) {
    auto avg = weighted_average(models, weights);
    benchmark::DoNotOptimize(avg.layers[0].weights(0, 0));
  }
}
BENCHMARK(BM_WeightedAverage)->Arg(2)->Arg(10)->Arg(50);

void BM_FederatedRound(benchmark::State& state) {
  const auto ds = make_dataset(10, 16, 100);
  auto [shards, groups] = planted_cluster_partition(
      2, 10, {{0, 1, 2, 3, 4}, {5, 6, 7, 8, 9}}, ds, 0.2, 11);
  benchmark::DoNotOptimize(groups.num_groups);

  FederationConfig config;
  config.num_clients = 20;
  config.rounds = 2;
  config.sampling_rate = 0.5;
  config.lambda = 2.0;
  config.train.epochs = 10;
  config.train.batch_size = 10;
  config.train.learning_rate = 0.1;
  config.train.momentum = 0.5;
  config.round0_train = config.train;
  config.model_dims = {16, 32, 10};
  config.seed = 13;

  auto rz = round_zero(config, shards);
  for (auto _ : state) {
    auto st = rz.state;
    auto log = federated_round(st, shards, config, 1);
    benchmark::DoNotOptimize(log.avg_accuracy);
  }
}
BENCHMARK(BM_FederatedRound);

}  // namespace

BENCHMARK_MAIN();
