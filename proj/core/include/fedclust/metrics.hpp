#pragma once

#include <filesystem>
#include <nlohmann/json.hpp>
#include <optional>
#include <vector>

#include "fedclust/federation.hpp"

namespace fedclust {

struct SweepEntry {
  double lambda = 0.0;
  int num_clusters = 0;
  double final_accuracy = 0.0;
};

/// Lambda sweep outcome, entries sorted by lambda ascending.
struct SweepResult {
  FederationConfig base_config;
  std::vector<SweepEntry> entries;
};

struct CostReport {
  double target_accuracy = 0.0;
  std::optional<int> rounds_to_target;       // empty mirrors a "--" table entry
  std::optional<double> megabytes_at_target; // 1 Mb = 1e6 bytes, 4 bytes/param
};

/// First round index whose overall average accuracy reaches the target.
std::optional<int> rounds_to_target(const FederationHistory& history, double target);

/// Cumulative communication through round `upto_round`, in Mb (1e6 bytes).
double comm_cost_mb(const FederationHistory& history, int upto_round);

CostReport make_cost_report(const FederationHistory& history, double target);

/// Runs the full federation once per lambda with identical seeds and shards.
/// Round-0 fingerprints do not depend on lambda, so they are computed once
/// and shared across all entries.
SweepResult lambda_sweep(const FederationConfig& base, const std::vector<ClientShard>& shards,
                         std::vector<double> lambdas,
                         const std::vector<PartialWeights>* cached_fingerprints = nullptr);

/// Lambda grid for sweeps, derived from dendrogram merge distances: targets a
/// geometric spread of cluster counts from num_leaves down to 1 and places
/// each lambda in the corresponding merge-distance gap. Endpoints sit below
/// the minimum and above the maximum merge distance.
std::vector<double> dendrogram_lambda_grid(const Dendrogram& dendrogram, int points);

void to_json(nlohmann::json& j, const SweepEntry& entry);
void to_json(nlohmann::json& j, const SweepResult& sweep);
void to_json(nlohmann::json& j, const CostReport& report);

/// summary.json: config echo, assignment, accuracies, byte totals.
nlohmann::json summary_json(const FederationHistory& history,
                            const std::optional<CostReport>& cost = std::nullopt);
void write_summary_json(const std::filesystem::path& path, const FederationHistory& history,
                        const std::optional<CostReport>& cost = std::nullopt);

/// history.jsonl: one RoundLog object per line.
void write_history_jsonl(const std::filesystem::path& path, const FederationHistory& history);
std::vector<RoundLog> load_history_jsonl(const std::filesystem::path& path);

/// Round-trip load of summary.json + history.jsonl.
FederationHistory load_history(const std::filesystem::path& summary_path,
                               const std::filesystem::path& jsonl_path);

/// rounds.csv: round,avg_accuracy,uplink_bytes,downlink_bytes,cumulative_mb.
void write_rounds_csv(const std::filesystem::path& path, const FederationHistory& history);

/// sweep.csv: lambda,num_clusters,final_accuracy.
void write_sweep_csv(const std::filesystem::path& path, const SweepResult& sweep);

}  // namespace fedclust
