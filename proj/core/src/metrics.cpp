#include "fedclust/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>

namespace fedclust {
namespace {

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  return out;
}

}  // namespace

std::optional<int> rounds_to_target(const FederationHistory& history, double target) {
  if (!(target >= 0.0 && target < 1.0))
    throw std::invalid_argument("rounds_to_target: target must be in [0, 1)");
  for (const auto& log : history.rounds) {
    if (log.avg_accuracy >= target) return log.round_index;
  }
  return std::nullopt;
}

double comm_cost_mb(const FederationHistory& history, int upto_round) {
  if (upto_round < 0 || upto_round >= static_cast<int>(history.rounds.size()))
    throw std::invalid_argument("comm_cost_mb: upto_round out of range");
  std::uint64_t bytes = 0;
  for (const auto& log : history.rounds) {
    if (log.round_index > upto_round) break;
    bytes += log.uplink_total() + log.downlink_total();
  }
  return static_cast<double>(bytes) / 1e6;
}

CostReport make_cost_report(const FederationHistory& history, double target) {
  CostReport report;
  report.target_accuracy = target;
  report.rounds_to_target = rounds_to_target(history, target);
  if (report.rounds_to_target) {
    report.megabytes_at_target = comm_cost_mb(history, *report.rounds_to_target);
  }
  return report;
}

SweepResult lambda_sweep(const FederationConfig& base, const std::vector<ClientShard>& shards,
                         std::vector<double> lambdas,
                         const std::vector<PartialWeights>* cached_fingerprints) {
  check_config(base);
  if (base.algorithm != Algorithm::fedclust)
    throw std::invalid_argument("lambda_sweep: base algorithm must be fedclust");
  if (lambdas.empty()) throw std::invalid_argument("lambda_sweep: empty lambda list");
  for (double lambda : lambdas) {
    if (!(lambda > 0.0)) throw std::invalid_argument("lambda_sweep: lambdas must be positive");
  }
  std::sort(lambdas.begin(), lambdas.end());

  std::vector<PartialWeights> fingerprints;
  if (cached_fingerprints == nullptr && base.num_clients > 1) {
    fingerprints = round_zero_fingerprints(base, shards);
    cached_fingerprints = &fingerprints;
  }

  SweepResult sweep;
  sweep.base_config = base;
  for (double lambda : lambdas) {
    FederationConfig config = base;
    config.lambda = lambda;
    const FederationResult result = run(config, shards, cached_fingerprints);
    sweep.entries.push_back({lambda, result.history.assignment.num_clusters,
                             result.history.final_avg_accuracy()});
  }
  return sweep;
}

std::vector<double> dendrogram_lambda_grid(const Dendrogram& dendrogram, int points) {
  if (points < 2) throw std::invalid_argument("lambda grid: need at least 2 points");
  const int m = dendrogram.num_leaves;
  if (m < 2 || dendrogram.merges.empty())
    throw std::invalid_argument("lambda grid: dendrogram has no merges");

  std::vector<double> heights;
  heights.reserve(dendrogram.merges.size());
  for (const auto& step : dendrogram.merges) heights.push_back(step.distance);
  std::sort(heights.begin(), heights.end());

  // lambda realizing cluster count k: inside the gap between the merge that
  // reaches k clusters and the next one. Degenerate (tied) gaps yield no
  // lambda for that count.
  auto lambda_for_count = [&](int k) -> std::optional<double> {
    if (k == m) {
      const double lo = heights.front();
      return lo > 0.0 ? std::optional<double>(0.8 * lo) : std::nullopt;
    }
    if (k == 1) return 1.2 * heights.back();
    const double lo = heights[static_cast<std::size_t>(m - k - 1)];
    const double hi = heights[static_cast<std::size_t>(m - k)];
    if (!(lo < hi)) return std::nullopt;
    if (lo > 0.0) return std::sqrt(lo * hi);
    return 0.5 * (lo + hi);
  };

  // Geometric spread of target counts between m and 1, then maximin fill in
  // log space until `points` distinct counts are reached.
  std::set<int> targets{m, 1};
  for (int i = 1; i + 1 < points; ++i) {
    const double t = static_cast<double>(i) / static_cast<double>(points - 1);
    targets.insert(static_cast<int>(std::lround(std::exp((1.0 - t) * std::log(m)))));
  }
  while (static_cast<int>(targets.size()) < std::min(points, m)) {
    int best = -1;
    double best_gap = -1.0;
    for (int k = 2; k < m; ++k) {
      if (targets.count(k) != 0) continue;
      double gap = std::numeric_limits<double>::infinity();
      for (int t : targets) gap = std::min(gap, std::abs(std::log(k) - std::log(t)));
      if (gap > best_gap) {
        best_gap = gap;
        best = k;
      }
    }
    if (best < 0) break;
    targets.insert(best);
  }

  std::vector<double> grid;
  for (int k : targets) {
    if (auto lambda = lambda_for_count(k)) grid.push_back(*lambda);
  }
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  if (grid.empty()) throw std::runtime_error("lambda grid: no realizable cluster counts");
  return grid;
}

void to_json(nlohmann::json& j, const SweepEntry& entry) {
  j = nlohmann::json{{"lambda", entry.lambda},
                     {"num_clusters", entry.num_clusters},
                     {"final_accuracy", entry.final_accuracy}};
}

void to_json(nlohmann::json& j, const SweepResult& sweep) {
  j = nlohmann::json{{"base_config", sweep.base_config}, {"entries", sweep.entries}};
}

void to_json(nlohmann::json& j, const CostReport& report) {
  j = nlohmann::json{{"target_accuracy", report.target_accuracy}};
  if (report.rounds_to_target) {
    j["rounds_to_target"] = *report.rounds_to_target;
    j["megabytes_at_target"] = *report.megabytes_at_target;
  } else {
    j["rounds_to_target"] = nullptr;
    j["megabytes_at_target"] = nullptr;
  }
}

nlohmann::json summary_json(const FederationHistory& history,
                            const std::optional<CostReport>& cost) {
  nlohmann::json j{{"comm_convention", "Mb = 1e6 bytes; 4 bytes per transmitted parameter"},
                   {"federation_config", history.config},
                   {"assignment", history.assignment.cluster_of},
                   {"num_clusters", history.assignment.num_clusters},
                   {"final_client_accuracy", history.final_client_accuracy},
                   {"final_avg_accuracy", history.final_avg_accuracy()},
                   {"num_rounds", history.rounds.size()},
                   {"total_uplink_bytes", history.total_uplink_bytes()},
                   {"total_downlink_bytes", history.total_downlink_bytes()},
                   {"total_comm_mb",
                    comm_cost_mb(history, static_cast<int>(history.rounds.size()) - 1)}};
  if (history.dendrogram) j["dendrogram"] = *history.dendrogram;
  if (cost) j["cost_report"] = *cost;
  return j;
}

void write_summary_json(const std::filesystem::path& path, const FederationHistory& history,
                        const std::optional<CostReport>& cost) {
  auto out = open_out(path);
  out << summary_json(history, cost).dump(2) << '\n';
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

void write_history_jsonl(const std::filesystem::path& path, const FederationHistory& history) {
  auto out = open_out(path);
  for (const auto& log : history.rounds) {
    out << nlohmann::json(log).dump() << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::vector<RoundLog> load_history_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path.string());
  std::vector<RoundLog> rounds;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    rounds.push_back(nlohmann::json::parse(line).get<RoundLog>());
  }
  return rounds;
}

FederationHistory load_history(const std::filesystem::path& summary_path,
                               const std::filesystem::path& jsonl_path) {
  std::ifstream in(summary_path);
  if (!in) throw std::runtime_error("cannot open: " + summary_path.string());
  const nlohmann::json j = nlohmann::json::parse(in);

  FederationHistory history;
  j.at("federation_config").get_to(history.config);
  j.at("assignment").get_to(history.assignment.cluster_of);
  j.at("num_clusters").get_to(history.assignment.num_clusters);
  j.at("final_client_accuracy").get_to(history.final_client_accuracy);
  if (j.contains("dendrogram")) history.dendrogram = j.at("dendrogram").get<Dendrogram>();
  history.rounds = load_history_jsonl(jsonl_path);
  return history;
}

void write_rounds_csv(const std::filesystem::path& path, const FederationHistory& history) {
  auto out = open_out(path);
  out << "round,avg_accuracy,uplink_bytes,downlink_bytes,cumulative_mb\n";
  std::uint64_t bytes = 0;
  for (const auto& log : history.rounds) {
    bytes += log.uplink_total() + log.downlink_total();
    out << log.round_index << ',' << fmt_double(log.avg_accuracy) << ',' << log.uplink_total()
        << ',' << log.downlink_total() << ',' << fmt_double(static_cast<double>(bytes) / 1e6)
        << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

void write_sweep_csv(const std::filesystem::path& path, const SweepResult& sweep) {
  auto out = open_out(path);
  out << "lambda,num_clusters,final_accuracy\n";
  for (const auto& entry : sweep.entries) {
    out << fmt_double(entry.lambda) << ',' << entry.num_clusters << ','
        << fmt_double(entry.final_accuracy) << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace fedclust
