#pragma once

#include <cstdint>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "fedclust/clustering.hpp"
#include "fedclust/data.hpp"
#include "fedclust/nn.hpp"

namespace fedclust {

enum class Algorithm { fedclust, fedavg, fedprox, local };

std::string to_string(Algorithm algorithm);
Algorithm parse_algorithm(const std::string& name);

struct FederationConfig {
  int num_clients = 0;
  int rounds = 1;
  double sampling_rate = 1.0;  // (0, 1]
  double lambda = 1.0;         // clustering threshold, fedclust only
  LinkageKind linkage = LinkageKind::average;
  Algorithm algorithm = Algorithm::fedclust;
  double prox_mu = 0.0;  // fedprox proximal coefficient, > 0 when fedprox
  TrainSpec train;
  TrainSpec round0_train;  // round-0 fingerprint training; defaults to train
  int personalization_epochs = 5;
  std::vector<Eigen::Index> model_dims;  // full chain [input, hidden..., output]
  std::uint64_t seed = 0;
};

void check_config(const FederationConfig& config);

/// Bytes moved by one client in one round; 4 bytes per transmitted parameter.
struct ClientTraffic {
  int client = 0;
  std::uint64_t uplink_bytes = 0;
  std::uint64_t downlink_bytes = 0;
};

struct RoundLog {
  int round_index = 0;
  std::vector<int> sampled;              // ascending client ids
  std::vector<ClientTraffic> traffic;    // ascending client ids
  std::vector<double> cluster_accuracy;  // indexed by cluster id, all members
  double avg_accuracy = 0.0;             // mean over all clients

  std::uint64_t uplink_total() const;
  std::uint64_t downlink_total() const;
};

bool operator==(const ClientTraffic& a, const ClientTraffic& b);
bool operator==(const RoundLog& a, const RoundLog& b);

struct ServerState {
  ModelParams initial_model;  // theta_s^0, reused for newcomer onboarding
  ClusterAssignment assignment;
  std::map<int, ModelParams> cluster_models;
  std::map<int, PartialWeights> representatives;  // final layers of cluster models
  int round_index = 0;
};

struct FederationHistory {
  FederationConfig config;
  ClusterAssignment assignment;
  std::optional<Dendrogram> dendrogram;  // fedclust only
  std::vector<RoundLog> rounds;
  std::vector<double> final_client_accuracy;

  double final_avg_accuracy() const;
  std::uint64_t total_uplink_bytes() const;
  std::uint64_t total_downlink_bytes() const;
};

/// Seeded initial server model; identical across algorithms for one seed.
ModelParams init_server(const FederationConfig& config);

/// Every client's locally trained copy of theta_s^0 (round-0 training pass),
/// in client order. These are what the per-layer observation report inspects.
std::vector<ModelParams> round_zero_local_models(const FederationConfig& config,
                                                 const std::vector<ClientShard>& shards);

/// Round-0 fingerprints: every client trains theta_s^0 locally with
/// round0_train and reports its final-layer flattening. Independent of
/// lambda, so sweeps can reuse them.
std::vector<PartialWeights> round_zero_fingerprints(const FederationConfig& config,
                                                    const std::vector<ClientShard>& shards);

struct RoundZeroResult {
  ServerState state;
  RoundLog log;
  std::optional<Dendrogram> dendrogram;
};

/// The clustering round. fedclust broadcasts theta_s^0 (full-model downlink),
/// collects final-layer fingerprints (partial uplink), clusters, and starts
/// every cluster model at theta_s^0; the locally trained models are
/// discarded. fedavg/fedprox form one cluster and local forms singletons,
/// both with no round-0 traffic.
RoundZeroResult round_zero(const FederationConfig& config,
                           const std::vector<ClientShard>& shards,
                           const std::vector<PartialWeights>* cached_fingerprints = nullptr);

/// Uniform sample without replacement of size max(ceil(R*N), 1), a pure
/// function of (seed, round_index, N, R). Returned ascending.
std::vector<int> sample_clients(int num_clients, double sampling_rate, int round_index,
                                std::uint64_t seed);

/// One communication round: sampled clients download their cluster model,
/// train locally (fedprox anchors to the received model), and upload full
/// parameters; each cluster with sampled members aggregates them weighted by
/// train-shard size in ascending client order. Untouched clusters keep their
/// model. The local algorithm moves no bytes.
RoundLog federated_round(ServerState& state, const std::vector<ClientShard>& shards,
                         const FederationConfig& config, int round_index);

struct FederationResult {
  FederationHistory history;
  ServerState state;
};

/// round_zero followed by rounds 1..T-1.
FederationResult run(const FederationConfig& config, const std::vector<ClientShard>& shards,
                     const std::vector<PartialWeights>* cached_fingerprints = nullptr);

struct NewcomerResult {
  int cluster_id = 0;
  ModelParams personalized;
  std::uint64_t uplink_bytes = 0;    // final-layer fingerprint
  std::uint64_t downlink_bytes = 0;  // full cluster model
  double cluster_model_accuracy = 0.0;  // before personalization, on own test
  double personalized_accuracy = 0.0;
};

/// Newcomer onboarding: train theta_s^0 locally, upload the fingerprint, get
/// assigned to the nearest representative, download that cluster model and
/// fine-tune it for personalization_epochs (0 keeps it untouched).
NewcomerResult newcomer_flow(const ServerState& state, const ClientShard& newcomer,
                             const FederationConfig& config);

void to_json(nlohmann::json& j, const TrainSpec& spec);
void from_json(const nlohmann::json& j, TrainSpec& spec);
void to_json(nlohmann::json& j, const FederationConfig& config);
void from_json(const nlohmann::json& j, FederationConfig& config);
void to_json(nlohmann::json& j, const ClientTraffic& t);
void from_json(const nlohmann::json& j, ClientTraffic& t);
void to_json(nlohmann::json& j, const RoundLog& log);
void from_json(const nlohmann::json& j, RoundLog& log);

}  // namespace fedclust
