#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "fedclust/federation.hpp"

using namespace fedclust;

namespace {

/// Planted two-group setup small enough for unit tests.
struct Fixture {
  LabeledDataset dataset;
  std::vector<ClientShard> shards;
  GroundTruthGroups groups;
  FederationConfig config;
};

Fixture planted_fixture(int clients_per_group, std::uint64_t seed, int rounds = 3,
                        double sampling_rate = 1.0) {
  Fixture f;
  f.dataset = synth_gaussian_classes(4, 6, 40 * clients_per_group, 4.0,
                                     derive_seed(seed, {seed_purpose::kDataset}));
  auto [shards, groups] = planted_cluster_partition(
      2, clients_per_group, {{0, 1}, {2, 3}}, f.dataset, 0.25,
      derive_seed(seed, {seed_purpose::kPartition}));
  f.shards = std::move(shards);
  f.groups = std::move(groups);

  f.config.num_clients = 2 * clients_per_group;
  f.config.rounds = rounds;
  f.config.sampling_rate = sampling_rate;
  f.config.lambda = 1.0;
  f.config.algorithm = Algorithm::fedclust;
  f.config.train.epochs = 3;
  f.config.train.batch_size = 8;
  f.config.train.learning_rate = 0.1;
  f.config.train.momentum = 0.5;
  f.config.round0_train = f.config.train;
  f.config.model_dims = {6, 8, 4};
  f.config.seed = seed;
  return f;
}

std::uint64_t total_bytes(const FederationHistory& h) {
  return h.total_uplink_bytes() + h.total_downlink_bytes();
}

}  // namespace

TEST_CASE("init_server: deterministic, seed-sensitive, zero biases") {
  const auto f = planted_fixture(2, 5);
  const auto a = init_server(f.config);
  const auto b = init_server(f.config);
  CHECK(a == b);

  auto other = f.config;
  other.seed = 6;
  CHECK_FALSE(a == init_server(other));

  for (const auto& layer : a.layers) CHECK(layer.bias.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("sample_clients: size rule and boundary cases") {
  CHECK(sample_clients(100, 0.1, 1, 7).size() == 10);
  CHECK(sample_clients(100, 1.0, 1, 7).size() == 100);
  CHECK(sample_clients(100, 0.001, 1, 7).size() == 1);
  CHECK(sample_clients(1, 0.5, 3, 7).size() == 1);

  const auto s = sample_clients(20, 0.35, 2, 9);
  CHECK(s.size() == 7);
  CHECK(std::is_sorted(s.begin(), s.end()));
  CHECK(std::adjacent_find(s.begin(), s.end()) == s.end());
  CHECK(s.back() < 20);
}

TEST_CASE("sample_clients: depends only on (seed, round_index, N, R)") {
  const auto a = sample_clients(30, 0.4, 5, 11);
  const auto b = sample_clients(30, 0.4, 5, 11);
  CHECK(a == b);
  CHECK_FALSE(sample_clients(30, 0.4, 6, 11) == a);
  CHECK_FALSE(sample_clients(30, 0.4, 5, 12) == a);
}

TEST_CASE("round_zero: fedavg forms one cluster with no traffic") {
  auto f = planted_fixture(2, 13);
  f.config.algorithm = Algorithm::fedavg;
  const auto rz = round_zero(f.config, f.shards);
  CHECK(rz.state.assignment.num_clusters == 1);
  CHECK(rz.state.assignment.cluster_of == std::vector<int>{0, 0, 0, 0});
  CHECK(rz.log.traffic.empty());
  CHECK(rz.log.sampled.empty());
  CHECK_FALSE(rz.dendrogram.has_value());
  CHECK(rz.state.cluster_models.at(0) == rz.state.initial_model);
}

TEST_CASE("round_zero: local forms singletons with no traffic at all") {
  auto f = planted_fixture(2, 13);
  f.config.algorithm = Algorithm::local;
  const auto rz = round_zero(f.config, f.shards);
  CHECK(rz.state.assignment.num_clusters == 4);
  CHECK(rz.state.assignment.cluster_of == std::vector<int>{0, 1, 2, 3});
  CHECK(rz.log.traffic.empty());
  for (int c = 0; c < 4; ++c) CHECK(rz.state.cluster_models.at(c) == rz.state.initial_model);
}

TEST_CASE("round_zero: fedclust charges partial uplink and full downlink per client") {
  auto f = planted_fixture(3, 17);
  const auto rz = round_zero(f.config, f.shards);
  const auto full = param_count(rz.state.initial_model) * 4;
  const auto partial = final_layer_param_count(rz.state.initial_model) * 4;
  REQUIRE(rz.log.traffic.size() == 6);
  for (const auto& t : rz.log.traffic) {
    CHECK(t.uplink_bytes == partial);
    CHECK(t.downlink_bytes == full);
  }
  CHECK(rz.log.sampled == std::vector<int>{0, 1, 2, 3, 4, 5});
  CHECK(rz.dendrogram.has_value());
  CHECK(rz.dendrogram->merges.size() == 5);

  // Representatives mirror the cluster models' final layers.
  for (const auto& [cluster, rep] : rz.state.representatives) {
    CHECK(rep.values == extract_partial_weights(rz.state.cluster_models.at(cluster)).values);
  }
}

TEST_CASE("round_zero: planted groups are recovered with a mid-gap lambda") {
  auto f = planted_fixture(4, 19);
  // Cut in the top gap of the dendrogram: between the last within-group merge
  // and the cross-group merge.
  const auto probe = round_zero(f.config, f.shards);
  REQUIRE(probe.dendrogram.has_value());
  const auto& merges = probe.dendrogram->merges;
  f.config.lambda = std::sqrt(merges[merges.size() - 2].distance * merges.back().distance);

  const auto rz = round_zero(f.config, f.shards);
  CHECK(rz.state.assignment.num_clusters == 2);
  for (int i = 0; i < 8; ++i) {
    CHECK(rz.state.assignment.cluster_of[static_cast<std::size_t>(i)] ==
          f.groups.group_of[static_cast<std::size_t>(i)]);
  }
}

TEST_CASE("federated_round: one cluster, two equal clients aggregate to the midpoint") {
  auto f = planted_fixture(1, 23, 2);
  f.config.algorithm = Algorithm::fedavg;
  auto rz = round_zero(f.config, f.shards);
  const auto received = rz.state.cluster_models.at(0);
  const auto log = federated_round(rz.state, f.shards, f.config, 1);

  REQUIRE(log.sampled == std::vector<int>{0, 1});
  TrainSpec s0 = f.config.train;
  s0.seed = derive_seed(f.config.seed, {seed_purpose::kClientTrain, 1, 0});
  TrainSpec s1 = f.config.train;
  s1.seed = derive_seed(f.config.seed, {seed_purpose::kClientTrain, 1, 1});
  const auto m0 = local_train(received, f.shards[0], s0);
  const auto m1 = local_train(received, f.shards[1], s1);
  REQUIRE(f.shards[0].train.size() == f.shards[1].train.size());

  const auto expected = weighted_average(
      std::vector<ModelParams>{m0, m1},
      std::vector<double>{static_cast<double>(f.shards[0].train.size()),
                          static_cast<double>(f.shards[1].train.size())});
  CHECK(rz.state.cluster_models.at(0) == expected);
  for (std::size_t l = 0; l < expected.num_layers(); ++l) {
    const Eigen::MatrixXd mid = 0.5 * (m0.layers[l].weights + m1.layers[l].weights);
    CHECK((expected.layers[l].weights - mid).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("federated_round: clusters with no sampled member keep their model") {
  auto f = planted_fixture(3, 29, 2, 0.3);  // ceil(0.3 * 6) = 2 of 6 sampled
  f.config.algorithm = Algorithm::local;     // singleton clusters
  auto rz = round_zero(f.config, f.shards);
  const auto before = rz.state.cluster_models;
  const auto log = federated_round(rz.state, f.shards, f.config, 1);
  CHECK(log.sampled.size() == 2);
  const std::set<int> sampled(log.sampled.begin(), log.sampled.end());
  for (const auto& [cluster, model] : rz.state.cluster_models) {
    if (sampled.count(cluster) == 0) {
      CHECK(model == before.at(cluster));
    } else {
      CHECK_FALSE(model == before.at(cluster));
    }
  }
  CHECK(log.traffic.empty());  // local moves no bytes
}

TEST_CASE("run: T=1 keeps cluster models at the initial server model") {
  auto f = planted_fixture(2, 31, 1);
  const auto result = run(f.config, f.shards);
  CHECK(result.history.rounds.size() == 1);
  for (const auto& [cluster, model] : result.state.cluster_models) {
    (void)cluster;
    CHECK(model == result.state.initial_model);
  }
  CHECK(result.history.final_client_accuracy.size() == 4);
}

TEST_CASE("run: fedclust with huge lambda matches fedavg bit-for-bit each round") {
  auto f = planted_fixture(2, 37, 4, 0.5);
  auto clustered = f.config;
  clustered.lambda = 1e9;
  auto avg = f.config;
  avg.algorithm = Algorithm::fedavg;

  auto rz_clustered = round_zero(clustered, f.shards);
  auto rz_avg = round_zero(avg, f.shards);
  REQUIRE(rz_clustered.state.assignment.num_clusters == 1);
  CHECK(rz_clustered.state.cluster_models.at(0) == rz_avg.state.cluster_models.at(0));
  for (int round = 1; round < 4; ++round) {
    federated_round(rz_clustered.state, f.shards, clustered, round);
    federated_round(rz_avg.state, f.shards, avg, round);
    CHECK(rz_clustered.state.cluster_models.at(0) == rz_avg.state.cluster_models.at(0));
  }
}

TEST_CASE("run: local equals independent per-client training, round for round") {
  auto f = planted_fixture(2, 41, 3);
  f.config.algorithm = Algorithm::local;
  const auto result = run(f.config, f.shards);

  for (int client = 0; client < 4; ++client) {
    ModelParams model = result.state.initial_model;
    for (int round = 1; round < 3; ++round) {
      TrainSpec spec = f.config.train;
      spec.seed = derive_seed(f.config.seed, {seed_purpose::kClientTrain,
                                              static_cast<std::uint64_t>(round),
                                              static_cast<std::uint64_t>(client)});
      model = local_train(model, f.shards[static_cast<std::size_t>(client)], spec);
    }
    CHECK(result.state.cluster_models.at(client) == model);
    CHECK(result.history.final_client_accuracy[static_cast<std::size_t>(client)] ==
          accuracy(model, f.shards[static_cast<std::size_t>(client)].test));
  }
  CHECK(total_bytes(result.history) == 0);
}

TEST_CASE("run: identical config and shards give an identical serialized history") {
  auto f = planted_fixture(2, 43, 3, 0.5);
  const auto a = run(f.config, f.shards);
  const auto b = run(f.config, f.shards);
  nlohmann::json ja;
  nlohmann::json jb;
  for (const auto& log : a.history.rounds) ja.push_back(log);
  for (const auto& log : b.history.rounds) jb.push_back(log);
  CHECK(ja.dump() == jb.dump());
  CHECK(a.history.final_client_accuracy == b.history.final_client_accuracy);
}

TEST_CASE("run: accounting is recomputable from config, counts, and the sampling trace") {
  auto f = planted_fixture(3, 47, 4, 0.5);
  const auto result = run(f.config, f.shards);
  const auto full = param_count(result.state.initial_model) * 4;
  const auto partial = final_layer_param_count(result.state.initial_model) * 4;

  std::uint64_t expected_up = 6 * partial;  // round 0: every client uploads a fingerprint
  std::uint64_t expected_down = 6 * full;
  for (int round = 1; round < f.config.rounds; ++round) {
    const auto sampled =
        sample_clients(f.config.num_clients, f.config.sampling_rate, round, f.config.seed);
    expected_up += sampled.size() * full;
    expected_down += sampled.size() * full;
    CHECK(result.history.rounds[static_cast<std::size_t>(round)].sampled == sampled);
  }
  CHECK(result.history.total_uplink_bytes() == expected_up);
  CHECK(result.history.total_downlink_bytes() == expected_down);
}

TEST_CASE("fedprox: differs from fedavg only through the proximal term") {
  auto f = planted_fixture(2, 53, 3, 1.0);
  auto avg = f.config;
  avg.algorithm = Algorithm::fedavg;
  auto prox = f.config;
  prox.algorithm = Algorithm::fedprox;
  prox.prox_mu = 0.5;

  const auto r_avg = run(avg, f.shards);
  const auto r_prox = run(prox, f.shards);
  CHECK_FALSE(r_avg.state.cluster_models.at(0) == r_prox.state.cluster_models.at(0));

  auto bad = prox;
  bad.prox_mu = 0.0;
  CHECK_THROWS_AS(check_config(bad), std::invalid_argument);
}

TEST_CASE("newcomer_flow: assigns by representative distance and personalizes") {
  auto f = planted_fixture(4, 59, 3);
  const auto probe = round_zero(f.config, f.shards);
  REQUIRE(probe.dendrogram.has_value());
  const auto& merges = probe.dendrogram->merges;
  f.config.lambda = std::sqrt(merges[merges.size() - 2].distance * merges.back().distance);

  // Hold out the last client of group 1 as the newcomer.
  std::vector<ClientShard> participants(f.shards.begin(), f.shards.end() - 1);
  auto config = f.config;
  config.num_clients = 7;
  const auto result = run(config, participants);
  REQUIRE(result.state.assignment.num_clusters == 2);

  const ClientShard& newcomer = f.shards.back();
  const auto res = newcomer_flow(result.state, newcomer, config);
  // Group-1 participants all sit in one cluster; the newcomer joins it.
  const int expected = result.state.assignment.cluster_of[4];
  CHECK(res.cluster_id == expected);
  CHECK(res.uplink_bytes == final_layer_param_count(result.state.initial_model) * 4);
  CHECK(res.downlink_bytes == param_count(result.state.initial_model) * 4);

  auto no_finetune = config;
  no_finetune.personalization_epochs = 0;
  const auto res0 = newcomer_flow(result.state, newcomer, no_finetune);
  CHECK(res0.personalized == result.state.cluster_models.at(res0.cluster_id));
  CHECK(res0.personalized_accuracy == res0.cluster_model_accuracy);
}

TEST_CASE("newcomer_flow: single existing cluster always wins") {
  auto f = planted_fixture(2, 61, 2);
  f.config.algorithm = Algorithm::fedavg;
  const auto result = run(f.config, f.shards);
  const auto res = newcomer_flow(result.state, f.shards[0], f.config);
  CHECK(res.cluster_id == 0);
}

TEST_CASE("config validation: bad fields are rejected") {
  auto f = planted_fixture(2, 67);
  auto c = f.config;
  c.num_clients = 0;
  CHECK_THROWS_AS(check_config(c), std::invalid_argument);
  c = f.config;
  c.sampling_rate = 0.0;
  CHECK_THROWS_AS(check_config(c), std::invalid_argument);
  c = f.config;
  c.sampling_rate = 1.5;
  CHECK_THROWS_AS(check_config(c), std::invalid_argument);
  c = f.config;
  c.lambda = 0.0;
  CHECK_THROWS_AS(check_config(c), std::invalid_argument);
  c = f.config;
  c.model_dims = {6};
  CHECK_THROWS_AS(check_config(c), std::invalid_argument);
  c = f.config;
  c.train.epochs = 0;
  CHECK_THROWS_AS(check_config(c), std::invalid_argument);
}

TEST_CASE("round log json round-trips") {
  auto f = planted_fixture(2, 71, 2, 0.5);
  const auto result = run(f.config, f.shards);
  for (const auto& log : result.history.rounds) {
    const nlohmann::json j = log;
    CHECK(j.get<RoundLog>() == log);
  }
}
