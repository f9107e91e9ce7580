#include "fedclust/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace fedclust {
namespace {

ProximityMatrix pairwise_from_rows(const std::vector<std::vector<double>>& rows) {
  const int m = static_cast<int>(rows.size());
  if (m < 2) throw std::invalid_argument("pairwise_distance: need at least 2 fingerprints");
  const std::size_t len = rows.front().size();
  for (const auto& row : rows) {
    if (row.size() != len)
      throw std::invalid_argument("pairwise_distance: fingerprint lengths differ");
  }
  ProximityMatrix out;
  out.distances = Eigen::MatrixXd::Zero(m, m);
  for (int p = 0; p < m; ++p) {
    const Eigen::Map<const Eigen::VectorXd> a(rows[static_cast<std::size_t>(p)].data(),
                                              static_cast<Eigen::Index>(len));
    for (int q = p + 1; q < m; ++q) {
      const Eigen::Map<const Eigen::VectorXd> b(rows[static_cast<std::size_t>(q)].data(),
                                                static_cast<Eigen::Index>(len));
      const double d = (a - b).norm();
      out.distances(p, q) = d;
      out.distances(q, p) = d;
    }
  }
  return out;
}

/// Labels connected components 0..k-1 ordered by smallest member id.
ClusterAssignment label_components(const std::vector<int>& root_of) {
  const int m = static_cast<int>(root_of.size());
  ClusterAssignment out;
  out.cluster_of.assign(static_cast<std::size_t>(m), -1);
  int next = 0;
  std::map<int, int> label_of_root;
  for (int i = 0; i < m; ++i) {
    auto [it, inserted] = label_of_root.try_emplace(root_of[static_cast<std::size_t>(i)], next);
    if (inserted) ++next;
    out.cluster_of[static_cast<std::size_t>(i)] = it->second;
  }
  out.num_clusters = next;
  return out;
}

struct UnionFind {
  std::vector<int> parent;

  explicit UnionFind(int n) : parent(static_cast<std::size_t>(n)) {
    std::iota(parent.begin(), parent.end(), 0);
  }
  int find(int x) {
    while (parent[static_cast<std::size_t>(x)] != x) {
      parent[static_cast<std::size_t>(x)] =
          parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
      x = parent[static_cast<std::size_t>(x)];
    }
    return x;
  }
  void unite(int a, int b) { parent[static_cast<std::size_t>(find(a))] = find(b); }
};

}  // namespace

void check_proximity_matrix(const ProximityMatrix& m) {
  const auto n = m.distances.rows();
  if (n < 1 || m.distances.cols() != n)
    throw std::invalid_argument("proximity matrix: must be square and nonempty");
  if (!m.distances.allFinite())
    throw std::invalid_argument("proximity matrix: entries must be finite");
  for (Eigen::Index i = 0; i < n; ++i) {
    if (m.distances(i, i) != 0.0)
      throw std::invalid_argument("proximity matrix: diagonal must be zero");
    for (Eigen::Index j = i + 1; j < n; ++j) {
      if (m.distances(i, j) < 0.0)
        throw std::invalid_argument("proximity matrix: entries must be non-negative");
      if (m.distances(i, j) != m.distances(j, i))
        throw std::invalid_argument("proximity matrix: must be symmetric");
    }
  }
}

std::string to_string(LinkageKind linkage) {
  switch (linkage) {
    case LinkageKind::single: return "single";
    case LinkageKind::average: return "average";
    case LinkageKind::complete: return "complete";
  }
  throw std::invalid_argument("linkage: unknown enum value");
}

LinkageKind parse_linkage(const std::string& name) {
  if (name == "single") return LinkageKind::single;
  if (name == "average") return LinkageKind::average;
  if (name == "complete") return LinkageKind::complete;
  throw std::invalid_argument("linkage: expected single|average|complete, got '" + name + "'");
}

double Dendrogram::min_merge_distance() const {
  if (merges.empty()) throw std::logic_error("dendrogram: no merges");
  return merges.front().distance;
}

double Dendrogram::max_merge_distance() const {
  if (merges.empty()) throw std::logic_error("dendrogram: no merges");
  return merges.back().distance;
}

bool same_partition(const ClusterAssignment& a, const ClusterAssignment& b) {
  // Both use smallest-member canonical labels, so equal partitions have
  // identical label vectors.
  return a.num_clusters == b.num_clusters && a.cluster_of == b.cluster_of;
}

ProximityMatrix pairwise_distance(const std::vector<PartialWeights>& fingerprints) {
  std::vector<std::vector<double>> rows;
  rows.reserve(fingerprints.size());
  for (const auto& fp : fingerprints) rows.push_back(fp.values);
  return pairwise_from_rows(rows);
}

ClusteringResult agglomerative(const ProximityMatrix& m, LinkageKind linkage, double lambda) {
  check_proximity_matrix(m);
  const int n = m.size();

  struct Cluster {
    bool alive = true;
    int min_member = 0;
    int size = 1;
    int dendro_id = 0;
  };
  std::vector<Cluster> clusters(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    clusters[static_cast<std::size_t>(i)].min_member = i;
    clusters[static_cast<std::size_t>(i)].dendro_id = i;
  }
  Eigen::MatrixXd dist = m.distances;

  Dendrogram dendro;
  dendro.num_leaves = n;
  dendro.merges.reserve(static_cast<std::size_t>(n > 0 ? n - 1 : 0));

  for (int step = 0; step < n - 1; ++step) {
    int best_i = -1;
    int best_j = -1;
    double best_d = std::numeric_limits<double>::infinity();
    std::pair<int, int> best_key{0, 0};
    for (int i = 0; i < n; ++i) {
      if (!clusters[static_cast<std::size_t>(i)].alive) continue;
      for (int j = i + 1; j < n; ++j) {
        if (!clusters[static_cast<std::size_t>(j)].alive) continue;
        const double d = dist(i, j);
        const std::pair<int, int> key{
            std::min(clusters[static_cast<std::size_t>(i)].min_member,
                     clusters[static_cast<std::size_t>(j)].min_member),
            std::max(clusters[static_cast<std::size_t>(i)].min_member,
                     clusters[static_cast<std::size_t>(j)].min_member)};
        if (d < best_d || (d == best_d && key < best_key)) {
          best_d = d;
          best_key = key;
          best_i = i;
          best_j = j;
        }
      }
    }

    auto& keep = clusters[static_cast<std::size_t>(best_i)];
    auto& gone = clusters[static_cast<std::size_t>(best_j)];
    dendro.merges.push_back({std::min(keep.dendro_id, gone.dendro_id),
                             std::max(keep.dendro_id, gone.dendro_id), best_d});

    for (int k = 0; k < n; ++k) {
      if (!clusters[static_cast<std::size_t>(k)].alive || k == best_i || k == best_j) continue;
      double updated = 0.0;
      switch (linkage) {
        case LinkageKind::single:
          updated = std::min(dist(best_i, k), dist(best_j, k));
          break;
        case LinkageKind::complete:
          updated = std::max(dist(best_i, k), dist(best_j, k));
          break;
        case LinkageKind::average: {
          const double si = static_cast<double>(keep.size);
          const double sj = static_cast<double>(gone.size);
          updated = (si * dist(best_i, k) + sj * dist(best_j, k)) / (si + sj);
          break;
        }
      }
      dist(best_i, k) = updated;
      dist(k, best_i) = updated;
    }

    keep.min_member = std::min(keep.min_member, gone.min_member);
    keep.size += gone.size;
    keep.dendro_id = n + step;
    gone.alive = false;
  }

  return {cut_dendrogram(dendro, lambda), dendro};
}

ClusterAssignment cut_dendrogram(const Dendrogram& dendrogram, double lambda) {
  const int n = dendrogram.num_leaves;
  if (n < 1) throw std::invalid_argument("cut_dendrogram: empty dendrogram");
  if (static_cast<int>(dendrogram.merges.size()) != n - 1)
    throw std::invalid_argument("cut_dendrogram: expected " + std::to_string(n - 1) + " merges");

  // dendro_id -> representative leaf; merged ids alias their leaf components.
  UnionFind uf(n + static_cast<int>(dendrogram.merges.size()));
  std::vector<int> leaf_of(static_cast<std::size_t>(n + dendrogram.merges.size()));
  std::iota(leaf_of.begin(), leaf_of.end(), 0);

  for (std::size_t k = 0; k < dendrogram.merges.size(); ++k) {
    const auto& step = dendrogram.merges[k];
    const int merged_id = n + static_cast<int>(k);
    leaf_of[static_cast<std::size_t>(merged_id)] = leaf_of[static_cast<std::size_t>(step.left)];
    if (step.distance <= lambda) {
      uf.unite(leaf_of[static_cast<std::size_t>(step.left)],
               leaf_of[static_cast<std::size_t>(step.right)]);
    }
  }

  std::vector<int> root_of(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) root_of[static_cast<std::size_t>(i)] = uf.find(i);
  return label_components(root_of);
}

int num_clusters_at(const Dendrogram& dendrogram, double lambda) {
  int merged = 0;
  for (const auto& step : dendrogram.merges) {
    if (step.distance <= lambda) ++merged;
  }
  return dendrogram.num_leaves - merged;
}

ProximityMatrix per_layer_distance(const std::vector<ModelParams>& models, int layer_index) {
  if (models.size() < 2) throw std::invalid_argument("per_layer_distance: need at least 2 models");
  for (const auto& model : models) check_model(model);
  for (std::size_t i = 1; i < models.size(); ++i) {
    if (models[i].num_layers() != models[0].num_layers())
      throw std::invalid_argument("per_layer_distance: models are not shape-congruent");
  }
  if (layer_index < 0 || layer_index >= static_cast<int>(models[0].num_layers()))
    throw std::invalid_argument("per_layer_distance: layer index " + std::to_string(layer_index) +
                                " out of range [0, " + std::to_string(models[0].num_layers()) + ")");
  std::vector<std::vector<double>> rows;
  rows.reserve(models.size());
  for (const auto& model : models) {
    rows.push_back(flatten_layer(model.layers[static_cast<std::size_t>(layer_index)]));
  }
  return pairwise_from_rows(rows);
}

double block_structure_score(const ProximityMatrix& m, const GroundTruthGroups& groups) {
  check_proximity_matrix(m);
  if (static_cast<int>(groups.group_of.size()) != m.size())
    throw std::invalid_argument("block_structure_score: group map size does not match matrix");
  if (groups.num_groups < 2)
    throw std::invalid_argument("block_structure_score: need at least 2 groups");
  std::vector<int> counts(static_cast<std::size_t>(groups.num_groups), 0);
  for (int g : groups.group_of) {
    if (g < 0 || g >= groups.num_groups)
      throw std::invalid_argument("block_structure_score: group id out of range");
    ++counts[static_cast<std::size_t>(g)];
  }
  for (int c : counts) {
    if (c == 0) throw std::invalid_argument("block_structure_score: empty group");
  }

  double within_sum = 0.0;
  double between_sum = 0.0;
  long within_pairs = 0;
  long between_pairs = 0;
  for (int i = 0; i < m.size(); ++i) {
    for (int j = i + 1; j < m.size(); ++j) {
      if (groups.group_of[static_cast<std::size_t>(i)] ==
          groups.group_of[static_cast<std::size_t>(j)]) {
        within_sum += m.distances(i, j);
        ++within_pairs;
      } else {
        between_sum += m.distances(i, j);
        ++between_pairs;
      }
    }
  }
  if (within_pairs == 0)
    throw std::invalid_argument("block_structure_score: no within-group pairs (all groups singletons)");
  const double within_mean = within_sum / static_cast<double>(within_pairs);
  const double between_mean = between_sum / static_cast<double>(between_pairs);
  if (within_mean == 0.0) return std::numeric_limits<double>::infinity();
  return between_mean / within_mean;
}

int assign_newcomer(const PartialWeights& fingerprint,
                    const std::map<int, PartialWeights>& representatives) {
  if (representatives.empty())
    throw std::invalid_argument("assign_newcomer: no cluster representatives");
  const Eigen::Map<const Eigen::VectorXd> fp(fingerprint.values.data(),
                                             static_cast<Eigen::Index>(fingerprint.values.size()));
  int best_cluster = -1;
  double best_dist = std::numeric_limits<double>::infinity();
  for (const auto& [cluster, rep] : representatives) {
    if (rep.values.size() != fingerprint.values.size())
      throw std::invalid_argument("assign_newcomer: representative length mismatch for cluster " +
                                  std::to_string(cluster));
    const Eigen::Map<const Eigen::VectorXd> rv(rep.values.data(),
                                               static_cast<Eigen::Index>(rep.values.size()));
    const double d = (fp - rv).norm();
    if (d < best_dist) {  // strict <: map order keeps the smallest id on ties
      best_dist = d;
      best_cluster = cluster;
    }
  }
  return best_cluster;
}

void to_json(nlohmann::json& j, const ProximityMatrix& m) {
  std::vector<std::vector<double>> rows(static_cast<std::size_t>(m.size()));
  for (int i = 0; i < m.size(); ++i) {
    rows[static_cast<std::size_t>(i)].resize(static_cast<std::size_t>(m.size()));
    for (int k = 0; k < m.size(); ++k) {
      rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)] = m.distances(i, k);
    }
  }
  j = nlohmann::json{{"size", m.size()}, {"distances", rows}};
}

void from_json(const nlohmann::json& j, ProximityMatrix& m) {
  const auto rows = j.at("distances").get<std::vector<std::vector<double>>>();
  const auto n = static_cast<Eigen::Index>(rows.size());
  m.distances.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (static_cast<Eigen::Index>(rows[static_cast<std::size_t>(i)].size()) != n)
      throw std::invalid_argument("proximity matrix json: ragged rows");
    for (Eigen::Index k = 0; k < n; ++k) {
      m.distances(i, k) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
    }
  }
  check_proximity_matrix(m);
}

void to_json(nlohmann::json& j, const MergeStep& step) {
  j = nlohmann::json{{"left", step.left}, {"right", step.right}, {"distance", step.distance}};
}

void from_json(const nlohmann::json& j, MergeStep& step) {
  j.at("left").get_to(step.left);
  j.at("right").get_to(step.right);
  j.at("distance").get_to(step.distance);
}

void to_json(nlohmann::json& j, const Dendrogram& d) {
  j = nlohmann::json{{"num_leaves", d.num_leaves}, {"merges", d.merges}};
}

void from_json(const nlohmann::json& j, Dendrogram& d) {
  j.at("num_leaves").get_to(d.num_leaves);
  j.at("merges").get_to(d.merges);
}

void to_json(nlohmann::json& j, const ClusterAssignment& a) {
  j = nlohmann::json{{"cluster_of", a.cluster_of}, {"num_clusters", a.num_clusters}};
}

void from_json(const nlohmann::json& j, ClusterAssignment& a) {
  j.at("cluster_of").get_to(a.cluster_of);
  j.at("num_clusters").get_to(a.num_clusters);
}

}  // namespace fedclust
