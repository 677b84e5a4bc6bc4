#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mtsp/heuristics.hpp"
#include "mtsp/instance.hpp"
#include "mtsp/poolnet.hpp"

namespace mtsp {

/// depot (square marker), cities (circles) and one closed polyline per route.
std::string render_svg(const Instance& instance, const Solution& solution, int size = 600);

/// Decodes the network output with a beam of `beam` states.
Solution solve_with_model(const NetworkParams& params, const Instance& instance, int beam, int iterations);

/// Spends 10% of `total` on the beam (at least 1) and the rest on guided
/// local search from the decoded solution.
Solution solve_pipeline(const NetworkParams& params, const Instance& instance, std::int64_t total, int iterations,
                        std::uint64_t seed);

struct BenchInstance {
  std::string id;
  Instance instance;
  std::optional<double> reference;  // external best-known cost, if any
};

/// Method names: "exact", "model", "pipeline", "ensemble", "or_min"
/// (path_cheapest_arc + guided_local_search), or "<strategy>+<metaheuristic>".
struct BenchConfig {
  std::vector<std::string> methods{"exact", "model", "ensemble", "or_min"};
  std::vector<std::int64_t> settings{1, 20, 200, 2000};  // beam widths or budgets
  const NetworkParams* model = nullptr;
  int iterations = 100;
  std::uint64_t seed = 0;
  int threads = 0;
  std::filesystem::path plot_dir;  // empty = no plots
};

struct BenchRow {
  std::string instance;
  std::string method;
  std::int64_t setting = 0;  // 0 for the exact method
  double cost = 0.0;
  double error = 0.0;  // cost / reference - 1
  double seconds = 0.0;
  bool failed = false;
  std::string message;
};

struct AggregateRow {
  std::string method;
  std::int64_t setting = 0;
  int count = 0;
  int failures = 0;
  double mean_cost = 0.0;
  double mean_error = 0.0;
  double mean_seconds = 0.0;
};

struct BenchReport {
  std::vector<BenchRow> rows;  // instance order, then method order, then setting
  std::vector<AggregateRow> aggregate;
};

/// References: the exact optimum when within the solver guard, else the
/// external reference, else the best cost any method reached.
BenchReport bench(const std::vector<BenchInstance>& instances, const BenchConfig& config);

/// Pure aggregation over raw rows, in first-appearance order of (method, setting).
std::vector<AggregateRow> aggregate_rows(const std::vector<BenchRow>& rows);

nlohmann::json report_to_json(const BenchReport& report);
BenchReport report_from_json(const nlohmann::json& j);
/// Plain-text table of the aggregate rows.
std::string format_aggregate(const std::vector<AggregateRow>& rows);

/// Per-combination ensemble report: {strategy, metaheuristic, budget, cost, best}.
nlohmann::json ensemble_to_json(const EnsembleResult& ensemble);

}  // namespace mtsp
