#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <set>
#include <utility>
#include <vector>

#include "fedclust/rng.hpp"

namespace fedclust {

/// Dense labeled dataset: one feature row per sample, class ids in [0, C).
struct LabeledDataset {
  Eigen::MatrixXd features;  // [n x d]
  std::vector<int> labels;   // size n
  int num_classes = 0;

  Eigen::Index size() const { return features.rows(); }
  Eigen::Index dim() const { return features.cols(); }
};

void check_dataset(const LabeledDataset& ds);

/// One client's local data: held-out test split plus the label set spanning
/// train and test.
struct ClientShard {
  int client_id = 0;
  LabeledDataset train;
  LabeledDataset test;
  std::set<int> label_set;

  Eigen::Index size() const { return train.size() + test.size(); }
};

enum class PartitionScheme { label_skew, dirichlet };

struct PartitionSpec {
  PartitionScheme scheme = PartitionScheme::label_skew;
  double delta = 0.2;  // label_skew: fraction of labels owned per client, (0, 1]
  double alpha = 0.1;  // dirichlet: concentration, > 0
  int num_clients = 0;
  double test_fraction = 0.2;  // (0, 1)
  std::uint64_t seed = 0;
};

/// Latent group id per client, for benchmarks with planted cluster structure.
struct GroundTruthGroups {
  std::vector<int> group_of;
  int num_groups = 0;
};

/// Isotropic Gaussian blobs (sigma = 1), one blob per class, centered at a
/// seeded random unit direction scaled by `sep`. Exactly `per_class` samples
/// per class, emitted class-by-class.
LabeledDataset synth_gaussian_classes(int num_classes, int dim, int per_class,
                                      double sep, std::uint64_t seed);

/// Pre-repair label ownership draw: each client independently owns
/// ceil(delta*C) labels chosen uniformly without replacement. Exposed so the
/// ownership cardinality contract is testable before orphan repair.
std::vector<std::vector<int>> draw_label_ownership(int num_classes, double delta,
                                                   int num_clients, Rng& rng);

/// Label-skew partition: per-client ownership draw, orphan labels re-assigned
/// to a random client, each label's samples dealt evenly among its owners.
std::vector<ClientShard> partition_label_skew(const LabeledDataset& ds,
                                              const PartitionSpec& spec);

/// Dirichlet partition: per label, proportions p ~ Dir(alpha * 1_m) route the
/// label's shuffled samples to clients by cumulative-proportion cut points.
std::vector<ClientShard> partition_dirichlet(const LabeledDataset& ds,
                                             const PartitionSpec& spec);

/// Planted-cluster partition: clients in group g receive samples only from
/// labels_per_group[g], split evenly within the group. Label sets must be
/// disjoint and jointly cover every label present in the dataset.
std::pair<std::vector<ClientShard>, GroundTruthGroups> planted_cluster_partition(
    int num_groups, int clients_per_group,
    const std::vector<std::vector<int>>& labels_per_group, const LabeledDataset& ds,
    double test_fraction, std::uint64_t seed);

/// CSV fixture format, header "f0,...,f{d-1},label". Values round-trip exactly.
void write_dataset_csv(const LabeledDataset& ds, const std::filesystem::path& path);
LabeledDataset read_dataset_csv(const std::filesystem::path& path, int num_classes = -1);

}  // namespace fedclust
