#include "fedclust/federation.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace fedclust {
namespace {

constexpr std::uint64_t kBytesPerParam = 4;  // transmitted as 32-bit floats

void check_shards(const FederationConfig& config, const std::vector<ClientShard>& shards) {
  if (static_cast<int>(shards.size()) != config.num_clients)
    throw std::invalid_argument("federation: expected " + std::to_string(config.num_clients) +
                                " shards, got " + std::to_string(shards.size()));
  for (std::size_t i = 0; i < shards.size(); ++i) {
    if (shards[i].client_id != static_cast<int>(i))
      throw std::invalid_argument("federation: shard " + std::to_string(i) +
                                  " has client_id " + std::to_string(shards[i].client_id));
    if (shards[i].train.size() < 1 || shards[i].test.size() < 1)
      throw std::invalid_argument("federation: shard " + std::to_string(i) +
                                  " has an empty train or test split");
  }
}

TrainSpec client_train_spec(const FederationConfig& config, int round_index, int client) {
  TrainSpec spec = round_index == 0 ? config.round0_train : config.train;
  spec.seed = derive_seed(config.seed, {seed_purpose::kClientTrain,
                                        static_cast<std::uint64_t>(round_index),
                                        static_cast<std::uint64_t>(client)});
  // Only fedprox trains with a proximal anchor, and only from round 1 on.
  spec.proximal_mu =
      (round_index > 0 && config.algorithm == Algorithm::fedprox) ? config.prox_mu : 0.0;
  return spec;
}

void refresh_representatives(ServerState& state) {
  state.representatives.clear();
  for (const auto& [cluster, model] : state.cluster_models) {
    state.representatives.emplace(cluster, extract_partial_weights(model));
  }
}

struct Evaluation {
  std::vector<double> per_client;
  std::vector<double> per_cluster;
  double avg = 0.0;
};

/// Every client is scored on its own test split against its cluster's model.
Evaluation evaluate_all(const ServerState& state, const std::vector<ClientShard>& shards) {
  Evaluation eval;
  eval.per_client.resize(shards.size(), 0.0);
  std::vector<double> cluster_sum(static_cast<std::size_t>(state.assignment.num_clusters), 0.0);
  std::vector<int> cluster_count(static_cast<std::size_t>(state.assignment.num_clusters), 0);
  double total = 0.0;
  for (std::size_t i = 0; i < shards.size(); ++i) {
    const int cluster = state.assignment.cluster_of[i];
    const double acc = accuracy(state.cluster_models.at(cluster), shards[i].test);
    eval.per_client[i] = acc;
    cluster_sum[static_cast<std::size_t>(cluster)] += acc;
    ++cluster_count[static_cast<std::size_t>(cluster)];
    total += acc;
  }
  eval.per_cluster.resize(cluster_sum.size());
  for (std::size_t c = 0; c < cluster_sum.size(); ++c) {
    eval.per_cluster[c] = cluster_sum[c] / static_cast<double>(cluster_count[c]);
  }
  eval.avg = total / static_cast<double>(shards.size());
  return eval;
}

}  // namespace

std::string to_string(Algorithm algorithm) {
  switch (algorithm) {
    case Algorithm::fedclust: return "fedclust";
    case Algorithm::fedavg: return "fedavg";
    case Algorithm::fedprox: return "fedprox";
    case Algorithm::local: return "local";
  }
  throw std::invalid_argument("algorithm: unknown enum value");
}

Algorithm parse_algorithm(const std::string& name) {
  if (name == "fedclust") return Algorithm::fedclust;
  if (name == "fedavg") return Algorithm::fedavg;
  if (name == "fedprox") return Algorithm::fedprox;
  if (name == "local") return Algorithm::local;
  throw std::invalid_argument("algorithm: expected fedclust|fedavg|fedprox|local, got '" +
                              name + "'");
}

void check_config(const FederationConfig& config) {
  if (config.num_clients < 1) throw std::invalid_argument("config: num_clients must be >= 1");
  if (config.rounds < 1) throw std::invalid_argument("config: rounds must be >= 1");
  if (!(config.sampling_rate > 0.0 && config.sampling_rate <= 1.0))
    throw std::invalid_argument("config: sampling_rate must be in (0, 1]");
  if (config.algorithm == Algorithm::fedclust && !(config.lambda > 0.0))
    throw std::invalid_argument("config: lambda must be positive");
  if (config.algorithm == Algorithm::fedprox && !(config.prox_mu > 0.0))
    throw std::invalid_argument("config: fedprox requires prox_mu > 0");
  if (config.personalization_epochs < 0)
    throw std::invalid_argument("config: personalization_epochs must be >= 0");
  if (config.model_dims.size() < 2)
    throw std::invalid_argument("config: model_dims needs at least [input, output]");
  for (auto d : config.model_dims) {
    if (d < 1) throw std::invalid_argument("config: model dimensions must be >= 1");
  }
  check_train_spec(config.train);
  check_train_spec(config.round0_train);
}

std::uint64_t RoundLog::uplink_total() const {
  std::uint64_t total = 0;
  for (const auto& t : traffic) total += t.uplink_bytes;
  return total;
}

std::uint64_t RoundLog::downlink_total() const {
  std::uint64_t total = 0;
  for (const auto& t : traffic) total += t.downlink_bytes;
  return total;
}

bool operator==(const ClientTraffic& a, const ClientTraffic& b) {
  return a.client == b.client && a.uplink_bytes == b.uplink_bytes &&
         a.downlink_bytes == b.downlink_bytes;
}

bool operator==(const RoundLog& a, const RoundLog& b) {
  return a.round_index == b.round_index && a.sampled == b.sampled && a.traffic == b.traffic &&
         a.cluster_accuracy == b.cluster_accuracy && a.avg_accuracy == b.avg_accuracy;
}

double FederationHistory::final_avg_accuracy() const {
  if (rounds.empty()) throw std::logic_error("history: no rounds");
  return rounds.back().avg_accuracy;
}

std::uint64_t FederationHistory::total_uplink_bytes() const {
  std::uint64_t total = 0;
  for (const auto& log : rounds) total += log.uplink_total();
  return total;
}

std::uint64_t FederationHistory::total_downlink_bytes() const {
  std::uint64_t total = 0;
  for (const auto& log : rounds) total += log.downlink_total();
  return total;
}

ModelParams init_server(const FederationConfig& config) {
  check_config(config);
  return init_model(config.model_dims, derive_seed(config.seed, {seed_purpose::kServerInit}));
}

std::vector<ModelParams> round_zero_local_models(const FederationConfig& config,
                                                 const std::vector<ClientShard>& shards) {
  check_shards(config, shards);
  const ModelParams init = init_server(config);
  std::vector<ModelParams> models;
  models.reserve(shards.size());
  for (std::size_t i = 0; i < shards.size(); ++i) {
    models.push_back(
        local_train(init, shards[i], client_train_spec(config, 0, static_cast<int>(i))));
  }
  return models;
}

std::vector<PartialWeights> round_zero_fingerprints(const FederationConfig& config,
                                                    const std::vector<ClientShard>& shards) {
  std::vector<PartialWeights> fingerprints;
  for (const auto& model : round_zero_local_models(config, shards)) {
    fingerprints.push_back(extract_partial_weights(model));
  }
  return fingerprints;
}

RoundZeroResult round_zero(const FederationConfig& config, const std::vector<ClientShard>& shards,
                           const std::vector<PartialWeights>* cached_fingerprints) {
  check_config(config);
  check_shards(config, shards);
  const int n = config.num_clients;

  RoundZeroResult result;
  result.state.initial_model = init_server(config);
  result.log.round_index = 0;

  switch (config.algorithm) {
    case Algorithm::fedclust: {
      if (n == 1) {
        result.state.assignment = {{0}, 1};
        break;
      }
      const std::vector<PartialWeights> fingerprints =
          cached_fingerprints != nullptr ? *cached_fingerprints
                                         : round_zero_fingerprints(config, shards);
      auto clustered = agglomerative(pairwise_distance(fingerprints), config.linkage,
                                     config.lambda);
      result.state.assignment = std::move(clustered.assignment);
      result.dendrogram = std::move(clustered.dendrogram);

      const std::uint64_t up =
          final_layer_param_count(result.state.initial_model) * kBytesPerParam;
      const std::uint64_t down = param_count(result.state.initial_model) * kBytesPerParam;
      result.log.sampled.resize(static_cast<std::size_t>(n));
      std::iota(result.log.sampled.begin(), result.log.sampled.end(), 0);
      for (int i = 0; i < n; ++i) result.log.traffic.push_back({i, up, down});
      break;
    }
    case Algorithm::fedavg:
    case Algorithm::fedprox:
      result.state.assignment.cluster_of.assign(static_cast<std::size_t>(n), 0);
      result.state.assignment.num_clusters = 1;
      break;
    case Algorithm::local:
      result.state.assignment.cluster_of.resize(static_cast<std::size_t>(n));
      std::iota(result.state.assignment.cluster_of.begin(),
                result.state.assignment.cluster_of.end(), 0);
      result.state.assignment.num_clusters = n;
      break;
  }

  for (int cluster = 0; cluster < result.state.assignment.num_clusters; ++cluster) {
    result.state.cluster_models.emplace(cluster, result.state.initial_model);
  }
  refresh_representatives(result.state);
  result.state.round_index = 0;

  const Evaluation eval = evaluate_all(result.state, shards);
  result.log.cluster_accuracy = eval.per_cluster;
  result.log.avg_accuracy = eval.avg;
  return result;
}

std::vector<int> sample_clients(int num_clients, double sampling_rate, int round_index,
                                std::uint64_t seed) {
  if (!(sampling_rate > 0.0 && sampling_rate <= 1.0))
    throw std::invalid_argument("sample_clients: sampling_rate must be in (0, 1]");
  const int size = std::max(ceil_fraction(sampling_rate, num_clients), 1);
  Rng rng(derive_seed(seed, {seed_purpose::kSampling, static_cast<std::uint64_t>(round_index)}));
  return rng.sample_without_replacement(num_clients, size);
}

RoundLog federated_round(ServerState& state, const std::vector<ClientShard>& shards,
                         const FederationConfig& config, int round_index) {
  check_config(config);
  check_shards(config, shards);
  if (round_index < 1) throw std::invalid_argument("federated_round: round_index must be >= 1");

  RoundLog log;
  log.round_index = round_index;
  log.sampled =
      sample_clients(config.num_clients, config.sampling_rate, round_index, config.seed);

  const std::uint64_t full_model_bytes =
      param_count(state.initial_model) * kBytesPerParam;
  const bool moves_bytes = config.algorithm != Algorithm::local;

  // cluster -> (models, weights) of its sampled members, ascending client id.
  std::map<int, std::pair<std::vector<ModelParams>, std::vector<double>>> updates;
  for (int client : log.sampled) {
    const int cluster = state.assignment.cluster_of[static_cast<std::size_t>(client)];
    const ModelParams& received = state.cluster_models.at(cluster);
    ModelParams trained = local_train(received, shards[static_cast<std::size_t>(client)],
                                      client_train_spec(config, round_index, client));
    auto& [models, weights] = updates[cluster];
    models.push_back(std::move(trained));
    weights.push_back(static_cast<double>(shards[static_cast<std::size_t>(client)].train.size()));
    if (moves_bytes) log.traffic.push_back({client, full_model_bytes, full_model_bytes});
  }

  for (auto& [cluster, contribution] : updates) {
    state.cluster_models.at(cluster) =
        weighted_average(contribution.first, contribution.second);
  }
  refresh_representatives(state);
  state.round_index = round_index;

  const Evaluation eval = evaluate_all(state, shards);
  log.cluster_accuracy = eval.per_cluster;
  log.avg_accuracy = eval.avg;
  return log;
}

FederationResult run(const FederationConfig& config, const std::vector<ClientShard>& shards,
                     const std::vector<PartialWeights>* cached_fingerprints) {
  RoundZeroResult rz = round_zero(config, shards, cached_fingerprints);

  FederationResult result;
  result.state = std::move(rz.state);
  result.history.config = config;
  result.history.assignment = result.state.assignment;
  result.history.dendrogram = std::move(rz.dendrogram);
  result.history.rounds.push_back(std::move(rz.log));

  for (int round = 1; round < config.rounds; ++round) {
    result.history.rounds.push_back(federated_round(result.state, shards, config, round));
  }

  const Evaluation eval = evaluate_all(result.state, shards);
  result.history.final_client_accuracy = eval.per_client;
  return result;
}

NewcomerResult newcomer_flow(const ServerState& state, const ClientShard& newcomer,
                             const FederationConfig& config) {
  check_config(config);
  if (newcomer.train.size() < 1 || newcomer.test.size() < 1)
    throw std::invalid_argument("newcomer_flow: newcomer shard has an empty split");
  if (state.representatives.empty())
    throw std::invalid_argument("newcomer_flow: server has no trained clusters");

  TrainSpec spec = config.round0_train;
  spec.seed = derive_seed(config.seed, {seed_purpose::kNewcomerTrain,
                                        static_cast<std::uint64_t>(newcomer.client_id)});
  spec.proximal_mu = 0.0;
  const ModelParams local_model = local_train(state.initial_model, newcomer, spec);

  NewcomerResult result;
  result.cluster_id =
      assign_newcomer(extract_partial_weights(local_model), state.representatives);
  result.uplink_bytes = final_layer_param_count(state.initial_model) * kBytesPerParam;
  result.downlink_bytes = param_count(state.initial_model) * kBytesPerParam;

  const ModelParams& cluster_model = state.cluster_models.at(result.cluster_id);
  result.cluster_model_accuracy = accuracy(cluster_model, newcomer.test);

  if (config.personalization_epochs > 0) {
    TrainSpec fine = config.train;
    fine.epochs = config.personalization_epochs;
    fine.proximal_mu = 0.0;
    fine.seed = derive_seed(config.seed, {seed_purpose::kNewcomerFinetune,
                                          static_cast<std::uint64_t>(newcomer.client_id)});
    result.personalized = local_train(cluster_model, newcomer, fine);
  } else {
    result.personalized = cluster_model;
  }
  result.personalized_accuracy = accuracy(result.personalized, newcomer.test);
  return result;
}

void to_json(nlohmann::json& j, const TrainSpec& spec) {
  j = nlohmann::json{{"epochs", spec.epochs},
                     {"batch_size", spec.batch_size},
                     {"learning_rate", spec.learning_rate},
                     {"momentum", spec.momentum}};
}

void from_json(const nlohmann::json& j, TrainSpec& spec) {
  j.at("epochs").get_to(spec.epochs);
  j.at("batch_size").get_to(spec.batch_size);
  j.at("learning_rate").get_to(spec.learning_rate);
  j.at("momentum").get_to(spec.momentum);
}

void to_json(nlohmann::json& j, const FederationConfig& config) {
  j = nlohmann::json{{"num_clients", config.num_clients},
                     {"rounds", config.rounds},
                     {"sampling_rate", config.sampling_rate},
                     {"linkage", to_string(config.linkage)},
                     {"algorithm", to_string(config.algorithm)},
                     {"train", config.train},
                     {"round0_train", config.round0_train},
                     {"personalization_epochs", config.personalization_epochs},
                     {"model_dims", config.model_dims},
                     {"seed", config.seed}};
  if (config.algorithm == Algorithm::fedclust) j["lambda"] = config.lambda;
  if (config.algorithm == Algorithm::fedprox) j["prox_mu"] = config.prox_mu;
}

void from_json(const nlohmann::json& j, FederationConfig& config) {
  j.at("num_clients").get_to(config.num_clients);
  j.at("rounds").get_to(config.rounds);
  j.at("sampling_rate").get_to(config.sampling_rate);
  config.linkage = parse_linkage(j.at("linkage").get<std::string>());
  config.algorithm = parse_algorithm(j.at("algorithm").get<std::string>());
  j.at("train").get_to(config.train);
  j.at("round0_train").get_to(config.round0_train);
  j.at("personalization_epochs").get_to(config.personalization_epochs);
  config.model_dims.clear();
  for (const auto& d : j.at("model_dims")) {
    config.model_dims.push_back(d.get<Eigen::Index>());
  }
  j.at("seed").get_to(config.seed);
  config.lambda = j.value("lambda", 1.0);
  config.prox_mu = j.value("prox_mu", 0.0);
}

void to_json(nlohmann::json& j, const ClientTraffic& t) {
  j = nlohmann::json{{"client", t.client},
                     {"up", t.uplink_bytes},
                     {"down", t.downlink_bytes}};
}

void from_json(const nlohmann::json& j, ClientTraffic& t) {
  j.at("client").get_to(t.client);
  j.at("up").get_to(t.uplink_bytes);
  j.at("down").get_to(t.downlink_bytes);
}

void to_json(nlohmann::json& j, const RoundLog& log) {
  j = nlohmann::json{{"round", log.round_index},
                     {"sampled", log.sampled},
                     {"traffic", log.traffic},
                     {"cluster_accuracy", log.cluster_accuracy},
                     {"avg_accuracy", log.avg_accuracy}};
}

void from_json(const nlohmann::json& j, RoundLog& log) {
  j.at("round").get_to(log.round_index);
  j.at("sampled").get_to(log.sampled);
  j.at("traffic").get_to(log.traffic);
  j.at("cluster_accuracy").get_to(log.cluster_accuracy);
  j.at("avg_accuracy").get_to(log.avg_accuracy);
}

}  // namespace fedclust
