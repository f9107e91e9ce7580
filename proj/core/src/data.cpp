#include "fedclust/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>

namespace fedclust {
namespace {

constexpr int kMaxPartitionRetries = 32;

std::string pos(const char* what, long long v) {
  return std::string(what) + " (got " + std::to_string(v) + ")";
}

void check_partition_spec(const LabeledDataset& ds, const PartitionSpec& spec) {
  check_dataset(ds);
  if (spec.num_clients < 1)
    throw std::invalid_argument("partition: " + pos("num_clients must be >= 1", spec.num_clients));
  if (!(spec.test_fraction > 0.0 && spec.test_fraction < 1.0))
    throw std::invalid_argument("partition: test_fraction must be in (0, 1)");
}

std::vector<std::vector<Eigen::Index>> indices_by_label(const LabeledDataset& ds) {
  std::vector<std::vector<Eigen::Index>> by_label(static_cast<std::size_t>(ds.num_classes));
  for (Eigen::Index i = 0; i < ds.size(); ++i) {
    by_label[static_cast<std::size_t>(ds.labels[static_cast<std::size_t>(i)])].push_back(i);
  }
  return by_label;
}

LabeledDataset gather(const LabeledDataset& ds, const std::vector<Eigen::Index>& rows) {
  LabeledDataset out;
  out.num_classes = ds.num_classes;
  out.features.resize(static_cast<Eigen::Index>(rows.size()), ds.dim());
  out.labels.resize(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.features.row(static_cast<Eigen::Index>(i)) = ds.features.row(rows[i]);
    out.labels[i] = ds.labels[static_cast<std::size_t>(rows[i])];
  }
  return out;
}

/// Splits one client's sample rows into train/test with a per-client derived
/// stream. Requires at least 2 samples so both splits are nonempty.
ClientShard make_shard(const LabeledDataset& ds, int client_id,
                       std::vector<Eigen::Index> rows, double test_fraction,
                       std::uint64_t base_seed) {
  Rng rng(derive_seed(base_seed, {seed_purpose::kTestSplit,
                                  static_cast<std::uint64_t>(client_id)}));
  rng.shuffle(rows);
  const int n = static_cast<int>(rows.size());
  int test_count = static_cast<int>(std::llround(test_fraction * n));
  test_count = std::clamp(test_count, 1, n - 1);

  ClientShard shard;
  shard.client_id = client_id;
  shard.test = gather(ds, {rows.begin(), rows.begin() + test_count});
  shard.train = gather(ds, {rows.begin() + test_count, rows.end()});
  for (int label : shard.train.labels) shard.label_set.insert(label);
  for (int label : shard.test.labels) shard.label_set.insert(label);
  return shard;
}

std::vector<ClientShard> make_shards(const LabeledDataset& ds,
                                     const std::vector<std::vector<Eigen::Index>>& per_client,
                                     double test_fraction, std::uint64_t seed) {
  std::vector<ClientShard> shards;
  shards.reserve(per_client.size());
  for (std::size_t c = 0; c < per_client.size(); ++c) {
    shards.push_back(make_shard(ds, static_cast<int>(c), per_client[c], test_fraction, seed));
  }
  return shards;
}

bool all_clients_splittable(const std::vector<std::vector<Eigen::Index>>& per_client) {
  return std::all_of(per_client.begin(), per_client.end(),
                     [](const auto& rows) { return rows.size() >= 2; });
}

std::vector<double> dirichlet(Rng& rng, double alpha, int m) {
  std::vector<double> p(static_cast<std::size_t>(m));
  double sum = 0.0;
  do {
    sum = 0.0;
    for (auto& v : p) {
      v = rng.gamma(alpha);
      sum += v;
    }
  } while (!(sum > 0.0));  // redraw on total underflow (tiny alpha)
  for (auto& v : p) v /= sum;
  return p;
}

}  // namespace

void check_dataset(const LabeledDataset& ds) {
  if (ds.size() < 1) throw std::invalid_argument("dataset: must contain at least one sample");
  if (ds.num_classes < 1) throw std::invalid_argument("dataset: num_classes must be >= 1");
  if (static_cast<Eigen::Index>(ds.labels.size()) != ds.size())
    throw std::invalid_argument("dataset: labels size does not match feature rows");
  for (int label : ds.labels) {
    if (label < 0 || label >= ds.num_classes)
      throw std::invalid_argument("dataset: " + pos("label out of range", label));
  }
  if (!ds.features.allFinite()) throw std::invalid_argument("dataset: features must be finite");
}

LabeledDataset synth_gaussian_classes(int num_classes, int dim, int per_class,
                                      double sep, std::uint64_t seed) {
  if (num_classes < 2) throw std::invalid_argument("synth: " + pos("num_classes must be >= 2", num_classes));
  if (dim < 2) throw std::invalid_argument("synth: " + pos("dim must be >= 2", dim));
  if (per_class < 1) throw std::invalid_argument("synth: " + pos("per_class must be >= 1", per_class));
  if (!(sep >= 0.0)) throw std::invalid_argument("synth: sep must be non-negative");

  Rng rng(seed);
  LabeledDataset ds;
  ds.num_classes = num_classes;
  ds.features.resize(static_cast<Eigen::Index>(num_classes) * per_class, dim);
  ds.labels.resize(static_cast<std::size_t>(num_classes) * static_cast<std::size_t>(per_class));

  Eigen::Index row = 0;
  for (int c = 0; c < num_classes; ++c) {
    Eigen::VectorXd direction(dim);
    for (Eigen::Index j = 0; j < dim; ++j) direction(j) = rng.normal();
    const double norm = direction.norm();
    const Eigen::VectorXd mean =
        norm > 0.0 ? Eigen::VectorXd(sep * direction / norm) : Eigen::VectorXd::Zero(dim);
    for (int i = 0; i < per_class; ++i, ++row) {
      for (Eigen::Index j = 0; j < dim; ++j) ds.features(row, j) = mean(j) + rng.normal();
      ds.labels[static_cast<std::size_t>(row)] = c;
    }
  }
  return ds;
}

std::vector<std::vector<int>> draw_label_ownership(int num_classes, double delta,
                                                   int num_clients, Rng& rng) {
  if (!(delta > 0.0 && delta <= 1.0))
    throw std::invalid_argument("label_skew: delta must be in (0, 1]");
  const int owned = ceil_fraction(delta, num_classes);
  if (owned < 1 || owned > num_classes)
    throw std::invalid_argument("label_skew: " + pos("ceil(delta*C) out of range", owned));
  std::vector<std::vector<int>> ownership(static_cast<std::size_t>(num_clients));
  for (auto& labels : ownership) labels = rng.sample_without_replacement(num_classes, owned);
  return ownership;
}

std::vector<ClientShard> partition_label_skew(const LabeledDataset& ds,
                                              const PartitionSpec& spec) {
  check_partition_spec(ds, spec);
  const int m = spec.num_clients;
  const auto by_label = indices_by_label(ds);
  Rng rng(spec.seed);

  for (int attempt = 0; attempt < kMaxPartitionRetries; ++attempt) {
    auto ownership = draw_label_ownership(ds.num_classes, spec.delta, m, rng);

    std::vector<std::vector<int>> owners(static_cast<std::size_t>(ds.num_classes));
    for (int c = 0; c < m; ++c) {
      for (int label : ownership[static_cast<std::size_t>(c)]) {
        owners[static_cast<std::size_t>(label)].push_back(c);
      }
    }
    // Orphan repair: a label nobody drew goes to one random client, so no
    // sample is ever dropped.
    for (int label = 0; label < ds.num_classes; ++label) {
      if (owners[static_cast<std::size_t>(label)].empty()) {
        owners[static_cast<std::size_t>(label)].push_back(static_cast<int>(rng.below(m)));
      }
    }

    std::vector<std::vector<Eigen::Index>> per_client(static_cast<std::size_t>(m));
    for (int label = 0; label < ds.num_classes; ++label) {
      auto rows = by_label[static_cast<std::size_t>(label)];
      auto label_owners = owners[static_cast<std::size_t>(label)];
      rng.shuffle(rows);
      rng.shuffle(label_owners);
      for (std::size_t j = 0; j < rows.size(); ++j) {
        per_client[static_cast<std::size_t>(label_owners[j % label_owners.size()])].push_back(rows[j]);
      }
    }

    if (all_clients_splittable(per_client)) {
      return make_shards(ds, per_client, spec.test_fraction, spec.seed);
    }
  }
  throw std::runtime_error("label_skew: a client kept ending up with fewer than 2 samples after " +
                           std::to_string(kMaxPartitionRetries) + " ownership redraws");
}

std::vector<ClientShard> partition_dirichlet(const LabeledDataset& ds,
                                             const PartitionSpec& spec) {
  check_partition_spec(ds, spec);
  if (!(spec.alpha > 0.0)) throw std::invalid_argument("dirichlet: alpha must be positive");
  const int m = spec.num_clients;
  const auto by_label = indices_by_label(ds);
  Rng rng(spec.seed);

  for (int attempt = 0; attempt < kMaxPartitionRetries; ++attempt) {
    std::vector<std::vector<Eigen::Index>> per_client(static_cast<std::size_t>(m));
    for (int label = 0; label < ds.num_classes; ++label) {
      auto rows = by_label[static_cast<std::size_t>(label)];
      if (rows.empty()) continue;
      rng.shuffle(rows);
      const auto p = dirichlet(rng, spec.alpha, m);
      const auto n = static_cast<double>(rows.size());
      // Cumulative-proportion cut points; the last boundary is forced to n so
      // every sample is routed.
      double cum = 0.0;
      std::size_t begin = 0;
      for (int c = 0; c < m; ++c) {
        cum += p[static_cast<std::size_t>(c)];
        std::size_t end = c + 1 == m ? rows.size()
                                     : static_cast<std::size_t>(std::floor(cum * n));
        end = std::clamp(end, begin, rows.size());
        for (std::size_t j = begin; j < end; ++j) {
          per_client[static_cast<std::size_t>(c)].push_back(rows[j]);
        }
        begin = end;
      }
    }

    if (all_clients_splittable(per_client)) {
      return make_shards(ds, per_client, spec.test_fraction, spec.seed);
    }
  }
  throw std::runtime_error("dirichlet: a client kept ending up with fewer than 2 samples after " +
                           std::to_string(kMaxPartitionRetries) + " redraws");
}

std::pair<std::vector<ClientShard>, GroundTruthGroups> planted_cluster_partition(
    int num_groups, int clients_per_group,
    const std::vector<std::vector<int>>& labels_per_group, const LabeledDataset& ds,
    double test_fraction, std::uint64_t seed) {
  check_dataset(ds);
  if (num_groups < 1) throw std::invalid_argument("planted: num_groups must be >= 1");
  if (clients_per_group < 1) throw std::invalid_argument("planted: clients_per_group must be >= 1");
  if (static_cast<int>(labels_per_group.size()) != num_groups)
    throw std::invalid_argument("planted: labels_per_group size must equal num_groups");
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw std::invalid_argument("planted: test_fraction must be in (0, 1)");

  std::vector<int> group_of_label(static_cast<std::size_t>(ds.num_classes), -1);
  for (int g = 0; g < num_groups; ++g) {
    if (labels_per_group[static_cast<std::size_t>(g)].empty())
      throw std::invalid_argument("planted: group " + std::to_string(g) + " has no labels");
    for (int label : labels_per_group[static_cast<std::size_t>(g)]) {
      if (label < 0 || label >= ds.num_classes)
        throw std::invalid_argument("planted: " + pos("label out of range", label));
      if (group_of_label[static_cast<std::size_t>(label)] != -1)
        throw std::invalid_argument("planted: label sets overlap at label " + std::to_string(label));
      group_of_label[static_cast<std::size_t>(label)] = g;
    }
  }
  for (int label : ds.labels) {
    if (group_of_label[static_cast<std::size_t>(label)] == -1)
      throw std::invalid_argument("planted: label " + std::to_string(label) +
                                  " present in the dataset is not covered by any group");
  }

  Rng rng(seed);
  const int total_clients = num_groups * clients_per_group;
  std::vector<std::vector<Eigen::Index>> per_client(static_cast<std::size_t>(total_clients));

  for (int g = 0; g < num_groups; ++g) {
    std::vector<Eigen::Index> pool;
    for (Eigen::Index i = 0; i < ds.size(); ++i) {
      if (group_of_label[static_cast<std::size_t>(ds.labels[static_cast<std::size_t>(i)])] == g) {
        pool.push_back(i);
      }
    }
    rng.shuffle(pool);
    const std::size_t base = pool.size() / static_cast<std::size_t>(clients_per_group);
    const std::size_t rem = pool.size() % static_cast<std::size_t>(clients_per_group);
    std::size_t at = 0;
    for (int j = 0; j < clients_per_group; ++j) {
      const std::size_t take = base + (static_cast<std::size_t>(j) < rem ? 1 : 0);
      if (take < 2)
        throw std::invalid_argument("planted: group " + std::to_string(g) +
                                    " has too few samples for " + std::to_string(clients_per_group) +
                                    " clients");
      auto& rows =
          per_client[static_cast<std::size_t>(g) * static_cast<std::size_t>(clients_per_group) +
                     static_cast<std::size_t>(j)];
      rows.assign(pool.begin() + static_cast<std::ptrdiff_t>(at),
                  pool.begin() + static_cast<std::ptrdiff_t>(at + take));
      at += take;
    }
  }

  GroundTruthGroups groups;
  groups.num_groups = num_groups;
  groups.group_of.resize(static_cast<std::size_t>(total_clients));
  for (int c = 0; c < total_clients; ++c) {
    groups.group_of[static_cast<std::size_t>(c)] = c / clients_per_group;
  }
  return {make_shards(ds, per_client, test_fraction, seed), groups};
}

void write_dataset_csv(const LabeledDataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_dataset_csv: cannot open " + path.string());
  for (Eigen::Index j = 0; j < ds.dim(); ++j) out << 'f' << j << ',';
  out << "label\n";
  char buf[32];
  for (Eigen::Index i = 0; i < ds.size(); ++i) {
    for (Eigen::Index j = 0; j < ds.dim(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", ds.features(i, j));
      out << buf << ',';
    }
    out << ds.labels[static_cast<std::size_t>(i)] << '\n';
  }
  if (!out) throw std::runtime_error("write_dataset_csv: write failed for " + path.string());
}

LabeledDataset read_dataset_csv(const std::filesystem::path& path, int num_classes) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_dataset_csv: cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("read_dataset_csv: empty file " + path.string());

  Eigen::Index dim = static_cast<Eigen::Index>(std::count(line.begin(), line.end(), ','));
  std::vector<double> values;
  std::vector<int> labels;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream row(line);
    std::string cell;
    for (Eigen::Index j = 0; j < dim; ++j) {
      if (!std::getline(row, cell, ','))
        throw std::runtime_error("read_dataset_csv: short row in " + path.string());
      values.push_back(std::stod(cell));
    }
    if (!std::getline(row, cell, ','))
      throw std::runtime_error("read_dataset_csv: missing label in " + path.string());
    labels.push_back(std::stoi(cell));
  }

  LabeledDataset ds;
  const auto n = static_cast<Eigen::Index>(labels.size());
  ds.features.resize(n, dim);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < dim; ++j) {
      ds.features(i, j) = values[static_cast<std::size_t>(i * dim + j)];
    }
  }
  ds.labels = std::move(labels);
  ds.num_classes = num_classes > 0
                       ? num_classes
                       : (ds.labels.empty() ? 0 : *std::max_element(ds.labels.begin(), ds.labels.end()) + 1);
  check_dataset(ds);
  return ds;
}

}  // namespace fedclust
