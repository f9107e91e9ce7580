#pragma once

#include <Eigen/Dense>
#include <map>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "fedclust/data.hpp"
#include "fedclust/nn.hpp"

namespace fedclust {

/// Symmetric pairwise-distance matrix: zero diagonal, non-negative, finite.
struct ProximityMatrix {
  Eigen::MatrixXd distances;

  int size() const { return static_cast<int>(distances.rows()); }
};

void check_proximity_matrix(const ProximityMatrix& m);

enum class LinkageKind { single, average, complete };

std::string to_string(LinkageKind linkage);
LinkageKind parse_linkage(const std::string& name);

/// One agglomerative merge. Cluster ids follow the usual dendrogram
/// convention: leaves are 0..m-1 and merge step k creates cluster m+k.
struct MergeStep {
  int left = 0;
  int right = 0;
  double distance = 0.0;
};

struct Dendrogram {
  int num_leaves = 0;
  std::vector<MergeStep> merges;  // exactly num_leaves - 1 steps

  double min_merge_distance() const;
  double max_merge_distance() const;
};

/// Flat clustering: contiguous cluster ids ordered by smallest member.
struct ClusterAssignment {
  std::vector<int> cluster_of;
  int num_clusters = 0;
};

bool same_partition(const ClusterAssignment& a, const ClusterAssignment& b);

/// Euclidean distances between client fingerprints, computed once per
/// unordered pair.
ProximityMatrix pairwise_distance(const std::vector<PartialWeights>& fingerprints);

struct ClusteringResult {
  ClusterAssignment assignment;
  Dendrogram dendrogram;
};

/// Bottom-up merging of the closest pair under the linkage rule. Merging for
/// the assignment stops once the minimum inter-cluster distance exceeds
/// lambda (strict >); the dendrogram always carries all m-1 merges. Equal
/// distances break ties toward the lexicographically smallest pair of
/// smallest-member ids.
ClusteringResult agglomerative(const ProximityMatrix& m, LinkageKind linkage, double lambda);

/// Assignment obtained by applying every merge with distance <= lambda.
ClusterAssignment cut_dendrogram(const Dendrogram& dendrogram, double lambda);
int num_clusters_at(const Dendrogram& dendrogram, double lambda);

/// Distance matrix over the flattened (weights, bias) of one chosen layer.
ProximityMatrix per_layer_distance(const std::vector<ModelParams>& models, int layer_index);

/// (mean between-group distance) / (mean within-group distance); +infinity
/// when the within mean is zero. Groups with one member contribute no
/// within-pairs; at least one within-pair must exist overall.
double block_structure_score(const ProximityMatrix& m, const GroundTruthGroups& groups);

/// Cluster id whose representative fingerprint is nearest (Euclidean); ties
/// break toward the smallest cluster id.
int assign_newcomer(const PartialWeights& fingerprint,
                    const std::map<int, PartialWeights>& representatives);

void to_json(nlohmann::json& j, const ProximityMatrix& m);
void from_json(const nlohmann::json& j, ProximityMatrix& m);
void to_json(nlohmann::json& j, const MergeStep& step);
void from_json(const nlohmann::json& j, MergeStep& step);
void to_json(nlohmann::json& j, const Dendrogram& d);
void from_json(const nlohmann::json& j, Dendrogram& d);
void to_json(nlohmann::json& j, const ClusterAssignment& a);
void from_json(const nlohmann::json& j, ClusterAssignment& a);

}  // namespace fedclust
