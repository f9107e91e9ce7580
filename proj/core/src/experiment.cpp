#include "fedclust/experiment.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <set>
#include <string_view>

namespace fedclust {
namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& message) {
  throw ValidationError(path.empty() ? message : path + ": " + message);
}

/// Strict object walker: every key must be consumed, unknown keys reject the
/// file with its field path.
class Cursor {
 public:
  Cursor(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_, "expected an object");
  }

  std::string key_path(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  const json& raw(const std::string& key) {
    auto it = j_.find(key);
    if (it == j_.end()) fail(key_path(key), "required key missing");
    seen_.insert(key);
    return *it;
  }

  Cursor child(const std::string& key) { return Cursor(raw(key), key_path(key)); }

  int get_int(const std::string& key, int min_value) {
    const json& v = raw(key);
    if (!v.is_number_integer() && !v.is_number_unsigned())
      fail(key_path(key), "expected an integer");
    const auto value = v.get<long long>();
    if (value < min_value)
      fail(key_path(key), "must be >= " + std::to_string(min_value));
    if (value > std::numeric_limits<int>::max()) fail(key_path(key), "value too large");
    return static_cast<int>(value);
  }

  int get_int_or(const std::string& key, int fallback, int min_value) {
    return has(key) ? get_int(key, min_value) : fallback;
  }

  double get_double(const std::string& key) {
    const json& v = raw(key);
    if (!v.is_number()) fail(key_path(key), "expected a number");
    return v.get<double>();
  }

  double get_double_or(const std::string& key, double fallback) {
    return has(key) ? get_double(key) : fallback;
  }

  std::string get_string(const std::string& key) {
    const json& v = raw(key);
    if (!v.is_string()) fail(key_path(key), "expected a string");
    return v.get<std::string>();
  }

  void finish() {
    for (const auto& [key, value] : j_.items()) {
      (void)value;
      if (seen_.count(key) == 0) fail(path_, "unknown key '" + key + "'");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

double fraction_in(Cursor& c, const std::string& key, double fallback, bool allow_zero,
                   bool allow_one) {
  const double v = c.has(key) ? c.get_double(key) : fallback;
  const bool lo_ok = allow_zero ? v >= 0.0 : v > 0.0;
  const bool hi_ok = allow_one ? v <= 1.0 : v < 1.0;
  if (!lo_ok || !hi_ok)
    fail(c.key_path(key), std::string("must be in ") + (allow_zero ? "[" : "(") + "0, 1" +
                              (allow_one ? "]" : ")"));
  return v;
}

TrainSpec parse_train(Cursor& parent, const std::string& key, const TrainSpec& defaults) {
  TrainSpec spec = defaults;
  if (!parent.has(key)) return spec;
  Cursor c = parent.child(key);
  spec.epochs = c.get_int_or("epochs", defaults.epochs, 1);
  spec.batch_size = c.get_int_or("batch_size", defaults.batch_size, 1);
  spec.learning_rate = c.get_double_or("learning_rate", defaults.learning_rate);
  if (!(spec.learning_rate > 0.0)) fail(c.key_path("learning_rate"), "must be positive");
  spec.momentum = fraction_in(c, "momentum", defaults.momentum, true, false);
  c.finish();
  return spec;
}

std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("config: cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError("config: " + path.string() + " is not valid JSON (" + e.what() + ")");
  }
}

void write_json_file(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

json echo_for_seed(const ExperimentFile& file, std::uint64_t seed) {
  ExperimentFile copy = file;
  copy.seeds = {seed};
  return resolved_config_json(copy);
}

int run_guarded(const std::function<void()>& body) {
  try {
    body();
    return 0;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
}

/// Single-lambda override shared by run/newcomer/observe-layers.
void apply_single_lambda(ExperimentFile& file, const CliOverrides& overrides) {
  if (overrides.lambdas.empty()) return;
  if (overrides.lambdas.size() > 1)
    throw ValidationError("--lambda: this command accepts a single value");
  if (file.algorithm != Algorithm::fedclust)
    throw ValidationError("--lambda: only valid for algorithm fedclust");
  if (!(overrides.lambdas.front() > 0.0)) throw ValidationError("--lambda: must be positive");
  file.lambda = overrides.lambdas.front();
}

void write_run_artifacts(const std::filesystem::path& dir, const ExperimentFile& file,
                         std::uint64_t seed, const FederationHistory& history) {
  std::filesystem::create_directories(dir);
  write_json_file(dir / "resolved_config.json", echo_for_seed(file, seed));
  std::optional<CostReport> cost;
  if (file.target_accuracy) cost = make_cost_report(history, *file.target_accuracy);
  write_summary_json(dir / "summary.json", history, cost);
  write_history_jsonl(dir / "history.jsonl", history);
  write_rounds_csv(dir / "rounds.csv", history);
}

}  // namespace

ExperimentFile parse_experiment(const json& j) {
  ExperimentFile file;
  Cursor root(j, "");

  {
    Cursor c = root.child("dataset");
    file.dataset.num_classes = c.get_int("num_classes", 2);
    file.dataset.dim = c.get_int("dim", 2);
    file.dataset.per_class = c.get_int("per_class", 1);
    file.dataset.sep = c.get_double("sep");
    if (!(file.dataset.sep >= 0.0)) fail(c.key_path("sep"), "must be non-negative");
    c.finish();
  }

  {
    Cursor c = root.child("partition");
    file.partition.scheme = c.get_string("scheme");
    if (file.partition.scheme == "label_skew") {
      if (!c.has("delta")) fail(c.key_path("delta"), "required for label_skew");
      file.partition.delta = fraction_in(c, "delta", 0.0, false, true);
    } else if (file.partition.scheme == "dirichlet") {
      file.partition.alpha = c.get_double("alpha");
      if (!(file.partition.alpha > 0.0)) fail(c.key_path("alpha"), "must be positive");
    } else if (file.partition.scheme == "planted") {
      file.partition.num_groups = c.get_int("num_groups", 2);
      const json& groups = c.raw("labels_per_group");
      if (!groups.is_array() || static_cast<int>(groups.size()) != file.partition.num_groups)
        fail(c.key_path("labels_per_group"), "expected an array of num_groups label arrays");
      std::set<int> all_labels;
      for (const auto& group : groups) {
        if (!group.is_array() || group.empty())
          fail(c.key_path("labels_per_group"), "each group needs a nonempty label array");
        std::vector<int> labels;
        for (const auto& label : group) {
          if (!label.is_number_integer() && !label.is_number_unsigned())
            fail(c.key_path("labels_per_group"), "labels must be integers");
          const int v = label.get<int>();
          if (v < 0 || v >= file.dataset.num_classes)
            fail(c.key_path("labels_per_group"),
                 "label " + std::to_string(v) + " out of range [0, " +
                     std::to_string(file.dataset.num_classes) + ")");
          if (!all_labels.insert(v).second)
            fail(c.key_path("labels_per_group"),
                 "label " + std::to_string(v) + " appears in more than one group");
          labels.push_back(v);
        }
        file.partition.labels_per_group.push_back(std::move(labels));
      }
      if (static_cast<int>(all_labels.size()) != file.dataset.num_classes)
        fail(c.key_path("labels_per_group"), "groups must jointly cover every class label");
    } else {
      fail(c.key_path("scheme"), "expected label_skew|dirichlet|planted, got '" +
                                     file.partition.scheme + "'");
    }
    file.partition.test_fraction = fraction_in(c, "test_fraction", 0.2, false, false);
    c.finish();
  }

  if (root.has("model")) {
    Cursor c = root.child("model");
    if (c.has("hidden")) {
      const json& hidden = c.raw("hidden");
      if (!hidden.is_array()) fail(c.key_path("hidden"), "expected an array of layer widths");
      for (const auto& width : hidden) {
        if (!width.is_number_integer() && !width.is_number_unsigned())
          fail(c.key_path("hidden"), "layer widths must be integers");
        const int v = width.get<int>();
        if (v < 1) fail(c.key_path("hidden"), "layer widths must be >= 1");
        file.hidden.push_back(v);
      }
    } else {
      file.hidden = {32};
    }
    c.finish();
  } else {
    file.hidden = {32};
  }

  {
    Cursor c = root.child("federation");
    file.num_clients = c.get_int("num_clients", 1);
    file.rounds = c.get_int("rounds", 1);
    file.sampling_rate = fraction_in(c, "sampling_rate", 1.0, false, true);
    file.algorithm =
        c.has("algorithm") ? parse_algorithm(c.get_string("algorithm")) : Algorithm::fedclust;
    file.linkage =
        c.has("linkage") ? parse_linkage(c.get_string("linkage")) : LinkageKind::average;

    if (file.algorithm == Algorithm::fedclust) {
      if (!c.has("lambda")) fail(c.key_path("lambda"), "required for algorithm fedclust");
      file.lambda = c.get_double("lambda");
      if (!(*file.lambda > 0.0)) fail(c.key_path("lambda"), "must be positive");
    } else if (c.has("lambda")) {
      fail(c.key_path("lambda"), "only valid for algorithm fedclust");
    }

    if (file.algorithm == Algorithm::fedprox) {
      if (!c.has("prox_mu")) fail(c.key_path("prox_mu"), "required for algorithm fedprox");
      file.prox_mu = c.get_double("prox_mu");
      if (!(*file.prox_mu > 0.0)) fail(c.key_path("prox_mu"), "must be positive");
    } else if (c.has("prox_mu")) {
      fail(c.key_path("prox_mu"), "only valid for algorithm fedprox");
    }

    TrainSpec defaults;
    defaults.epochs = 10;
    defaults.batch_size = 10;
    defaults.learning_rate = 0.1;
    defaults.momentum = 0.5;
    file.train = parse_train(c, "train", defaults);
    file.round0_train = parse_train(c, "round0_train", file.train);
    file.personalization_epochs = c.get_int_or("personalization_epochs", 5, 0);
    file.newcomer_holdout_fraction =
        fraction_in(c, "newcomer_holdout_fraction", 0.2, true, false);
    c.finish();
  }

  if (root.has("report")) {
    Cursor c = root.child("report");
    if (!c.has("target_accuracy"))
      fail(c.key_path("target_accuracy"), "required inside report");
    file.target_accuracy = fraction_in(c, "target_accuracy", 0.0, false, false);
    c.finish();
  }

  if (root.has("seeds")) {
    const json& seeds = root.raw("seeds");
    if (!seeds.is_array() || seeds.empty())
      fail("seeds", "expected a nonempty array of integers");
    for (const auto& seed : seeds) {
      if (!seed.is_number_unsigned() && !(seed.is_number_integer() && seed.get<long long>() >= 0))
        fail("seeds", "seeds must be non-negative integers");
      file.seeds.push_back(seed.get<std::uint64_t>());
    }
  } else {
    file.seeds = {1};
  }

  if (root.has("output_dir")) {
    file.output_dir = root.get_string("output_dir");
    if (file.output_dir.empty()) fail("output_dir", "must be nonempty");
  }

  root.finish();

  if (file.partition.scheme == "planted") {
    if (file.num_clients % file.partition.num_groups != 0)
      fail("federation.num_clients",
           "must be divisible by partition.num_groups for a planted partition");
  }
  return file;
}

ExperimentFile load_experiment(const std::filesystem::path& path) {
  return parse_experiment(read_json_file(path));
}

json resolved_config_json(const ExperimentFile& file) {
  json dataset{{"num_classes", file.dataset.num_classes},
               {"dim", file.dataset.dim},
               {"per_class", file.dataset.per_class},
               {"sep", file.dataset.sep}};

  json partition{{"scheme", file.partition.scheme},
                 {"test_fraction", file.partition.test_fraction}};
  if (file.partition.scheme == "label_skew") partition["delta"] = file.partition.delta;
  if (file.partition.scheme == "dirichlet") partition["alpha"] = file.partition.alpha;
  if (file.partition.scheme == "planted") {
    partition["num_groups"] = file.partition.num_groups;
    partition["labels_per_group"] = file.partition.labels_per_group;
  }

  json train{{"epochs", file.train.epochs},
             {"batch_size", file.train.batch_size},
             {"learning_rate", file.train.learning_rate},
             {"momentum", file.train.momentum}};
  json round0{{"epochs", file.round0_train.epochs},
              {"batch_size", file.round0_train.batch_size},
              {"learning_rate", file.round0_train.learning_rate},
              {"momentum", file.round0_train.momentum}};

  json federation{{"num_clients", file.num_clients},
                  {"rounds", file.rounds},
                  {"sampling_rate", file.sampling_rate},
                  {"algorithm", to_string(file.algorithm)},
                  {"linkage", to_string(file.linkage)},
                  {"train", train},
                  {"round0_train", round0},
                  {"personalization_epochs", file.personalization_epochs},
                  {"newcomer_holdout_fraction", file.newcomer_holdout_fraction}};
  if (file.lambda) federation["lambda"] = *file.lambda;
  if (file.prox_mu) federation["prox_mu"] = *file.prox_mu;

  json j{{"dataset", dataset},
         {"partition", partition},
         {"model", json{{"hidden", file.hidden}}},
         {"federation", federation},
         {"seeds", file.seeds},
         {"output_dir", file.output_dir}};
  if (file.target_accuracy) j["report"] = json{{"target_accuracy", *file.target_accuracy}};
  return j;
}

MaterializedRun materialize(const ExperimentFile& file, std::uint64_t seed) {
  MaterializedRun run;
  run.dataset = synth_gaussian_classes(file.dataset.num_classes, file.dataset.dim,
                                       file.dataset.per_class, file.dataset.sep,
                                       derive_seed(seed, {seed_purpose::kDataset}));

  const std::uint64_t partition_seed = derive_seed(seed, {seed_purpose::kPartition});
  if (file.partition.scheme == "planted") {
    auto [shards, groups] = planted_cluster_partition(
        file.partition.num_groups, file.num_clients / file.partition.num_groups,
        file.partition.labels_per_group, run.dataset, file.partition.test_fraction,
        partition_seed);
    run.shards = std::move(shards);
    run.groups = std::move(groups);
  } else {
    PartitionSpec spec;
    spec.scheme = file.partition.scheme == "label_skew" ? PartitionScheme::label_skew
                                                        : PartitionScheme::dirichlet;
    spec.delta = file.partition.delta;
    spec.alpha = file.partition.alpha;
    spec.num_clients = file.num_clients;
    spec.test_fraction = file.partition.test_fraction;
    spec.seed = partition_seed;
    run.shards = spec.scheme == PartitionScheme::label_skew
                     ? partition_label_skew(run.dataset, spec)
                     : partition_dirichlet(run.dataset, spec);
  }

  run.config.num_clients = file.num_clients;
  run.config.rounds = file.rounds;
  run.config.sampling_rate = file.sampling_rate;
  run.config.lambda = file.lambda.value_or(1.0);
  run.config.linkage = file.linkage;
  run.config.algorithm = file.algorithm;
  run.config.prox_mu = file.prox_mu.value_or(0.0);
  run.config.train = file.train;
  run.config.round0_train = file.round0_train;
  run.config.personalization_epochs = file.personalization_epochs;
  run.config.model_dims.push_back(file.dataset.dim);
  for (int width : file.hidden) run.config.model_dims.push_back(width);
  run.config.model_dims.push_back(file.dataset.num_classes);
  run.config.seed = seed;
  check_config(run.config);
  return run;
}

ExperimentFile apply_overrides(ExperimentFile file, const CliOverrides& overrides) {
  if (overrides.seed) file.seeds = {*overrides.seed};
  if (overrides.output_dir) {
    if (overrides.output_dir->empty()) throw ValidationError("--out: must be nonempty");
    file.output_dir = *overrides.output_dir;
  }
  if (overrides.rounds) {
    if (*overrides.rounds < 1) throw ValidationError("--rounds: must be >= 1");
    file.rounds = *overrides.rounds;
  }
  return file;
}

std::filesystem::path run_directory(const ExperimentFile& file, const std::string& command,
                                    std::uint64_t seed) {
  // The run id hashes the computation-relevant config only; output_dir and
  // the seed list do not change what a (config, seed) pair computes.
  json stripped = resolved_config_json(file);
  stripped.erase("output_dir");
  stripped.erase("seeds");
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s-%016llx-s%llu", command.c_str(),
                static_cast<unsigned long long>(fnv1a64(stripped.dump())),
                static_cast<unsigned long long>(seed));
  return std::filesystem::path(file.output_dir) / buf;
}

int cmd_run(const std::filesystem::path& config_path, const CliOverrides& overrides) {
  return run_guarded([&] {
    ExperimentFile file = apply_overrides(load_experiment(config_path), overrides);
    apply_single_lambda(file, overrides);
    for (const std::uint64_t seed : file.seeds) {
      const MaterializedRun mat = materialize(file, seed);
      const FederationResult result = run(mat.config, mat.shards);
      const auto dir = run_directory(file, "run", seed);
      write_run_artifacts(dir, file, seed, result.history);
      std::cout << dir.string() << '\n';
    }
  });
}

int cmd_sweep(const std::filesystem::path& config_path, const CliOverrides& overrides) {
  return run_guarded([&] {
    ExperimentFile file = apply_overrides(load_experiment(config_path), overrides);
    if (file.algorithm != Algorithm::fedclust)
      throw ValidationError("sweep: federation.algorithm must be fedclust");
    if (file.num_clients < 2) throw ValidationError("sweep: needs at least 2 clients");
    if (overrides.lambdas.empty() && overrides.auto_grid < 2)
      throw ValidationError("sweep: provide --lambda values or --grid with >= 2 points");
    for (double lambda : overrides.lambdas) {
      if (!(lambda > 0.0)) throw ValidationError("--lambda: values must be positive");
    }

    for (const std::uint64_t seed : file.seeds) {
      const MaterializedRun mat = materialize(file, seed);
      const auto fingerprints = round_zero_fingerprints(mat.config, mat.shards);
      const auto clustered =
          agglomerative(pairwise_distance(fingerprints), mat.config.linkage,
                        std::numeric_limits<double>::infinity());
      const std::vector<double> grid =
          overrides.lambdas.empty()
              ? dendrogram_lambda_grid(clustered.dendrogram, overrides.auto_grid)
              : overrides.lambdas;
      const SweepResult sweep = lambda_sweep(mat.config, mat.shards, grid, &fingerprints);

      const auto dir = run_directory(file, "sweep", seed);
      std::filesystem::create_directories(dir);
      write_json_file(dir / "resolved_config.json", echo_for_seed(file, seed));
      write_sweep_csv(dir / "sweep.csv", sweep);
      json sweep_json(sweep);
      sweep_json["dendrogram"] = clustered.dendrogram;
      write_json_file(dir / "sweep.json", sweep_json);
      std::cout << dir.string() << '\n';
    }
  });
}

int cmd_newcomer(const std::filesystem::path& config_path, const CliOverrides& overrides) {
  return run_guarded([&] {
    ExperimentFile file = apply_overrides(load_experiment(config_path), overrides);
    apply_single_lambda(file, overrides);
    const int holdout = floor_fraction(file.newcomer_holdout_fraction, file.num_clients);
    if (holdout < 1)
      throw ValidationError(
          "federation.newcomer_holdout_fraction: holds out no clients, nothing to evaluate");
    if (holdout >= file.num_clients)
      throw ValidationError("federation.newcomer_holdout_fraction: would hold out every client");

    for (const std::uint64_t seed : file.seeds) {
      const MaterializedRun mat = materialize(file, seed);
      Rng holdout_rng(derive_seed(seed, {seed_purpose::kHoldout}));
      const std::vector<int> held =
          holdout_rng.sample_without_replacement(file.num_clients, holdout);
      const std::set<int> held_set(held.begin(), held.end());

      std::vector<ClientShard> participants;
      std::vector<int> original_id;
      for (int i = 0; i < file.num_clients; ++i) {
        if (held_set.count(i) != 0) continue;
        ClientShard shard = mat.shards[static_cast<std::size_t>(i)];
        shard.client_id = static_cast<int>(participants.size());
        participants.push_back(std::move(shard));
        original_id.push_back(i);
      }

      FederationConfig config = mat.config;
      config.num_clients = static_cast<int>(participants.size());
      const FederationResult result = run(config, participants);

      // Majority cluster per planted group among the participants; that is
      // the cluster a newcomer from the group is expected to join.
      std::vector<int> expected_cluster;
      if (mat.groups) {
        expected_cluster.assign(static_cast<std::size_t>(mat.groups->num_groups), -1);
        for (int g = 0; g < mat.groups->num_groups; ++g) {
          std::map<int, int> votes;
          for (std::size_t p = 0; p < participants.size(); ++p) {
            if (mat.groups->group_of[static_cast<std::size_t>(original_id[p])] == g) {
              ++votes[result.history.assignment.cluster_of[p]];
            }
          }
          int best = -1;
          int best_votes = 0;
          for (const auto& [cluster, count] : votes) {
            if (count > best_votes) {
              best_votes = count;
              best = cluster;
            }
          }
          expected_cluster[static_cast<std::size_t>(g)] = best;
        }
      }

      json newcomers = json::array();
      int correct = 0;
      int judged = 0;
      double pre_sum = 0.0;
      double post_sum = 0.0;
      for (int h : held) {
        const NewcomerResult res =
            newcomer_flow(result.state, mat.shards[static_cast<std::size_t>(h)], config);
        json entry{{"client", h},
                   {"assigned_cluster", res.cluster_id},
                   {"pre_accuracy", res.cluster_model_accuracy},
                   {"post_accuracy", res.personalized_accuracy},
                   {"uplink_bytes", res.uplink_bytes},
                   {"downlink_bytes", res.downlink_bytes}};
        if (mat.groups) {
          const int group = mat.groups->group_of[static_cast<std::size_t>(h)];
          const int expected = expected_cluster[static_cast<std::size_t>(group)];
          if (expected >= 0) {
            entry["expected_cluster"] = expected;
            entry["correct"] = res.cluster_id == expected;
            ++judged;
            if (res.cluster_id == expected) ++correct;
          }
        }
        pre_sum += res.cluster_model_accuracy;
        post_sum += res.personalized_accuracy;
        newcomers.push_back(std::move(entry));
      }

      json report{{"holdout_clients", held},
                  {"newcomers", newcomers},
                  {"avg_pre_accuracy", pre_sum / static_cast<double>(held.size())},
                  {"avg_post_accuracy", post_sum / static_cast<double>(held.size())}};
      if (judged > 0) {
        report["assignment_accuracy"] =
            static_cast<double>(correct) / static_cast<double>(judged);
      }

      const auto dir = run_directory(file, "newcomer", seed);
      write_run_artifacts(dir, file, seed, result.history);
      write_json_file(dir / "newcomer.json", report);
      std::cout << dir.string() << '\n';
    }
  });
}

int cmd_observe_layers(const std::filesystem::path& config_path, const CliOverrides& overrides) {
  return run_guarded([&] {
    ExperimentFile file = apply_overrides(load_experiment(config_path), overrides);
    apply_single_lambda(file, overrides);
    if (file.partition.scheme != "planted")
      throw ValidationError("observe-layers: partition.scheme must be planted");
    if (file.num_clients < 2) throw ValidationError("observe-layers: needs at least 2 clients");

    for (const std::uint64_t seed : file.seeds) {
      const MaterializedRun mat = materialize(file, seed);
      const auto models = round_zero_local_models(mat.config, mat.shards);

      const auto dir = run_directory(file, "observe", seed);
      std::filesystem::create_directories(dir / "layers");
      write_json_file(dir / "resolved_config.json", echo_for_seed(file, seed));

      std::ofstream scores(dir / "layers" / "scores.csv");
      if (!scores) throw std::runtime_error("cannot open scores.csv under " + dir.string());
      scores << "layer,block_structure_score\n";
      for (std::size_t layer = 0; layer < models.front().num_layers(); ++layer) {
        const ProximityMatrix m = per_layer_distance(models, static_cast<int>(layer));
        const double score = block_structure_score(m, *mat.groups);
        json layer_json{{"layer_index", layer},
                        {"block_structure_score", score},
                        {"proximity", m}};
        write_json_file(dir / "layers" / ("layer_" + std::to_string(layer) + ".json"),
                        layer_json);
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.17g", score);
        scores << layer << ',' << buf << '\n';
      }
      if (!scores) throw std::runtime_error("write failed for scores.csv under " + dir.string());
      std::cout << dir.string() << '\n';
    }
  });
}

}  // namespace fedclust
