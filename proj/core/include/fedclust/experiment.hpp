#pragma once

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedclust/metrics.hpp"

namespace fedclust {

/// Config-file rejection with a field-path message ("federation.prox_mu: ...").
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DatasetSpec {
  int num_classes = 0;
  int dim = 0;
  int per_class = 0;
  double sep = 0.0;
};

struct PartitionFileSpec {
  std::string scheme;  // label_skew | dirichlet | planted
  double delta = 0.2;
  double alpha = 0.1;
  int num_groups = 0;
  std::vector<std::vector<int>> labels_per_group;
  double test_fraction = 0.2;
};

/// Parsed and validated experiment file. Unknown keys are rejected; defaults
/// are materialized at parse time so the echo is complete.
struct ExperimentFile {
  DatasetSpec dataset;
  PartitionFileSpec partition;
  std::vector<int> hidden;
  int num_clients = 0;
  int rounds = 1;
  double sampling_rate = 1.0;
  std::optional<double> lambda;
  LinkageKind linkage = LinkageKind::average;
  Algorithm algorithm = Algorithm::fedclust;
  std::optional<double> prox_mu;
  TrainSpec train;
  TrainSpec round0_train;
  int personalization_epochs = 5;
  double newcomer_holdout_fraction = 0.2;
  std::optional<double> target_accuracy;
  std::vector<std::uint64_t> seeds;
  std::string output_dir = "out";
};

ExperimentFile parse_experiment(const nlohmann::json& j);
ExperimentFile load_experiment(const std::filesystem::path& path);

/// Full config echo with every default resolved; parsing it back yields the
/// same experiment.
nlohmann::json resolved_config_json(const ExperimentFile& file);

/// Everything one seeded run needs: dataset, shards, federation config, and
/// the planted ground truth when the partition provides one.
struct MaterializedRun {
  LabeledDataset dataset;
  std::vector<ClientShard> shards;
  std::optional<GroundTruthGroups> groups;
  FederationConfig config;
};

MaterializedRun materialize(const ExperimentFile& file, std::uint64_t seed);

struct CliOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> output_dir;
  std::vector<double> lambdas;
  std::optional<int> rounds;
  int auto_grid = 0;  // sweep only: derive the grid from the dendrogram
};

ExperimentFile apply_overrides(ExperimentFile file, const CliOverrides& overrides);

/// Output directory for one seeded run: <output_dir>/<cmd>-<confighash>-s<seed>.
std::filesystem::path run_directory(const ExperimentFile& file, const std::string& command,
                                    std::uint64_t seed);

// Command entry points. Exit codes: 0 success, 2 validation error, 3 runtime
// error. Artifact schemas are documented in the repository README.
int cmd_run(const std::filesystem::path& config_path, const CliOverrides& overrides);
int cmd_sweep(const std::filesystem::path& config_path, const CliOverrides& overrides);
int cmd_newcomer(const std::filesystem::path& config_path, const CliOverrides& overrides);
int cmd_observe_layers(const std::filesystem::path& config_path, const CliOverrides& overrides);

}  // namespace fedclust
