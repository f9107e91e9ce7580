#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include "fedclust/metrics.hpp"

using namespace fedclust;

namespace {

/// History fixture with hand-set accuracies and traffic.
FederationHistory fixture_history(const std::vector<double>& accuracies,
                                  std::uint64_t up_per_round = 0,
                                  std::uint64_t down_per_round = 0) {
  FederationHistory h;
  for (std::size_t r = 0; r < accuracies.size(); ++r) {
    RoundLog log;
    log.round_index = static_cast<int>(r);
    log.avg_accuracy = accuracies[r];
    if (up_per_round + down_per_round > 0) {
      log.traffic.push_back({0, up_per_round, down_per_round});
    }
    h.rounds.push_back(std::move(log));
  }
  return h;
}

struct SweepFixture {
  LabeledDataset dataset;
  std::vector<ClientShard> shards;
  FederationConfig config;
};

SweepFixture sweep_fixture(std::uint64_t seed) {
  SweepFixture f;
  f.dataset = synth_gaussian_classes(4, 6, 120, 4.0, derive_seed(seed, {seed_purpose::kDataset}));
  auto [shards, groups] = planted_cluster_partition(2, 3, {{0, 1}, {2, 3}}, f.dataset, 0.25,
                                                    derive_seed(seed, {seed_purpose::kPartition}));
  (void)groups;
  f.shards = std::move(shards);
  f.config.num_clients = 6;
  f.config.rounds = 3;
  f.config.sampling_rate = 1.0;
  f.config.lambda = 1.0;
  f.config.algorithm = Algorithm::fedclust;
  f.config.train.epochs = 2;
  f.config.train.batch_size = 8;
  f.config.train.learning_rate = 0.1;
  f.config.train.momentum = 0.5;
  f.config.round0_train = f.config.train;
  f.config.model_dims = {6, 8, 4};
  f.config.seed = seed;
  return f;
}

}  // namespace

TEST_CASE("rounds_to_target: boundary and fixture cases") {
  const auto h = fixture_history({0.1, 0.2, 0.4, 0.5, 0.6, 0.7, 0.75, 0.85, 0.9});
  CHECK(rounds_to_target(h, 0.0) == 0);
  CHECK(rounds_to_target(h, 0.8) == 7);
  CHECK_FALSE(rounds_to_target(h, 0.95).has_value());
  CHECK_THROWS_AS((void)rounds_to_target(h, 1.0), std::invalid_argument);
}

TEST_CASE("rounds_to_target: monotone non-increasing as the target drops") {
  const auto h = fixture_history({0.1, 0.3, 0.25, 0.5, 0.45, 0.8});
  int prev = 1000;
  for (double target = 0.79; target >= 0.0; target -= 0.05) {
    const auto r = rounds_to_target(h, target);
    REQUIRE(r.has_value());
    CHECK(*r <= prev);
    prev = *r;
  }
}

TEST_CASE("comm_cost_mb: hand-computed example") {
  // 1 federated round, 10 clients, 67-param model, full model both ways:
  // 10 * 2 * 67 * 4 = 5360 bytes.
  FederationHistory h;
  RoundLog r0;
  r0.round_index = 0;
  h.rounds.push_back(r0);
  RoundLog r1;
  r1.round_index = 1;
  for (int c = 0; c < 10; ++c) r1.traffic.push_back({c, 67 * 4, 67 * 4});
  h.rounds.push_back(r1);

  CHECK(comm_cost_mb(h, 0) == 0.0);
  CHECK(comm_cost_mb(h, 1) == doctest::Approx(0.00536).epsilon(1e-12));
  CHECK_THROWS_AS(comm_cost_mb(h, 2), std::invalid_argument);

  // A round-0 fingerprint upload of 27 params is 108 bytes.
  CHECK(27 * 4 == 108);
}

TEST_CASE("make_cost_report: megabytes consistent with history sums") {
  const auto h = fixture_history({0.2, 0.5, 0.9}, 1000, 3000);
  const auto report = make_cost_report(h, 0.6);
  REQUIRE(report.rounds_to_target.has_value());
  CHECK(*report.rounds_to_target == 2);
  CHECK(*report.megabytes_at_target == doctest::Approx(3 * 4000 / 1e6).epsilon(1e-12));

  const auto missed = make_cost_report(h, 0.95);
  CHECK_FALSE(missed.rounds_to_target.has_value());
  CHECK_FALSE(missed.megabytes_at_target.has_value());
}

TEST_CASE("lambda_sweep: single lambda equals a direct run") {
  auto f = sweep_fixture(3);
  const auto sweep = lambda_sweep(f.config, f.shards, {0.7});
  REQUIRE(sweep.entries.size() == 1);

  auto direct = f.config;
  direct.lambda = 0.7;
  const auto result = run(direct, f.shards);
  CHECK(sweep.entries[0].lambda == 0.7);
  CHECK(sweep.entries[0].num_clusters == result.history.assignment.num_clusters);
  CHECK(sweep.entries[0].final_accuracy == result.history.final_avg_accuracy());
}

TEST_CASE("lambda_sweep: extreme grid covers all cluster counts, sorted by lambda") {
  auto f = sweep_fixture(5);
  const auto fingerprints = round_zero_fingerprints(f.config, f.shards);
  const auto clustered = agglomerative(pairwise_distance(fingerprints), f.config.linkage, 1e300);
  const double lo = 0.8 * clustered.dendrogram.min_merge_distance();
  const double hi = 1.2 * clustered.dendrogram.max_merge_distance();

  const auto sweep = lambda_sweep(f.config, f.shards, {hi, lo}, &fingerprints);
  REQUIRE(sweep.entries.size() == 2);
  CHECK(sweep.entries[0].lambda == lo);
  CHECK(sweep.entries[0].num_clusters == 6);
  CHECK(sweep.entries[1].num_clusters == 1);
}

TEST_CASE("lambda_sweep: rejects non-fedclust bases and empty grids") {
  auto f = sweep_fixture(7);
  CHECK_THROWS_AS(lambda_sweep(f.config, f.shards, {}), std::invalid_argument);
  auto avg = f.config;
  avg.algorithm = Algorithm::fedavg;
  CHECK_THROWS_AS(lambda_sweep(avg, f.shards, {1.0}), std::invalid_argument);
  CHECK_THROWS_AS(lambda_sweep(f.config, f.shards, {-1.0}), std::invalid_argument);
}

TEST_CASE("dendrogram_lambda_grid: endpoints below min and above max, counts decreasing") {
  Dendrogram d;
  d.num_leaves = 20;
  for (int k = 0; k < 19; ++k) {
    d.merges.push_back({k, 20 + k - 1, 0.5 + 0.25 * k});
  }
  const auto grid = dendrogram_lambda_grid(d, 8);
  REQUIRE(grid.size() == 8);
  CHECK(std::is_sorted(grid.begin(), grid.end()));
  CHECK(grid.front() < d.min_merge_distance());
  CHECK(grid.back() > d.max_merge_distance());

  int prev = 21;
  bool saw_two = false;
  for (const double lambda : grid) {
    const int count = num_clusters_at(d, lambda);
    CHECK(count <= prev);
    prev = count;
    if (count == 2) saw_two = true;
  }
  CHECK(num_clusters_at(d, grid.front()) == 20);
  CHECK(num_clusters_at(d, grid.back()) == 1);
  CHECK(saw_two);
}

TEST_CASE("export: history round-trips through summary.json + history.jsonl") {
  auto f = sweep_fixture(9);
  f.config.rounds = 3;
  f.config.sampling_rate = 0.5;
  const auto result = run(f.config, f.shards);

  const auto dir = std::filesystem::temp_directory_path() / "fedclust_metrics_test";
  std::filesystem::create_directories(dir);
  write_summary_json(dir / "summary.json", result.history);
  write_history_jsonl(dir / "history.jsonl", result.history);
  write_rounds_csv(dir / "rounds.csv", result.history);

  const auto loaded = load_history(dir / "summary.json", dir / "history.jsonl");
  CHECK(loaded.assignment.cluster_of == result.history.assignment.cluster_of);
  CHECK(loaded.assignment.num_clusters == result.history.assignment.num_clusters);
  CHECK(loaded.final_client_accuracy == result.history.final_client_accuracy);
  REQUIRE(loaded.rounds.size() == result.history.rounds.size());
  for (std::size_t r = 0; r < loaded.rounds.size(); ++r) {
    CHECK(loaded.rounds[r] == result.history.rounds[r]);
  }
  CHECK(loaded.config.num_clients == result.history.config.num_clients);
  CHECK(loaded.config.seed == result.history.config.seed);
  REQUIRE(loaded.dendrogram.has_value());
  CHECK(loaded.dendrogram->merges.size() == result.history.dendrogram->merges.size());

  // rounds.csv: one header plus one row per round.
  std::ifstream csv(dir / "rounds.csv");
  std::string line;
  int lines = 0;
  while (std::getline(csv, line)) ++lines;
  CHECK(lines == 1 + static_cast<int>(result.history.rounds.size()));

  std::filesystem::remove_all(dir);
}

TEST_CASE("export: sweep csv schema and determinism") {
  auto f = sweep_fixture(11);
  const auto sweep = lambda_sweep(f.config, f.shards, {0.5, 2.0, 8.0});
  const auto dir = std::filesystem::temp_directory_path() / "fedclust_sweep_test";
  std::filesystem::create_directories(dir);
  write_sweep_csv(dir / "a.csv", sweep);
  write_sweep_csv(dir / "b.csv", sweep);

  {
    std::ifstream a(dir / "a.csv");
    std::string header;
    std::getline(a, header);
    CHECK(header == "lambda,num_clusters,final_accuracy");
    int rows = 0;
    std::string line;
    while (std::getline(a, line)) ++rows;
    CHECK(rows == 3);
  }

  std::ifstream a(dir / "a.csv");
  std::ifstream b(dir / "b.csv");
  std::stringstream sa;
  std::stringstream sb;
  sa << a.rdbuf();
  sb << b.rdbuf();
  CHECK(sa.str() == sb.str());
  std::filesystem::remove_all(dir);
}
