#include "mtsp/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "mtsp/decoder.hpp"
#include "mtsp/error.hpp"
#include "mtsp/exact.hpp"
#include "mtsp/parallel.hpp"
#include "mtsp/trainer.hpp"

namespace mtsp {
namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                    "#8c564b", "#e377c2", "#17becf", "#bcbd22", "#7f7f7f"};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

struct MethodRun {
  Solution solution;
  double cost = 0.0;
};

MethodRun run_method(const std::string& method, const Instance& inst, std::int64_t setting, const BenchConfig& cfg) {
  const DistanceMatrix d = distance_matrix(inst);
  Solution s;
  if (method == "model" || method == "pipeline") {
    if (!cfg.model) throw DataError("method '" + method + "' needs a model checkpoint");
    s = method == "model" ? solve_with_model(*cfg.model, inst, static_cast<int>(setting), cfg.iterations)
                          : solve_pipeline(*cfg.model, inst, setting, cfg.iterations, cfg.seed);
  } else if (method == "ensemble") {
    s = baseline_ensemble(inst, setting, cfg.seed, {}, 1).best_entry().solution;
  } else if (method == "or_min") {
    s = local_search(inst, first_solution(inst, Strategy::kPathCheapestArc), Metaheuristic::kGuidedLocalSearch,
                     setting, cfg.seed)
            .solution;
  } else {
    const auto plus = method.find('+');
    if (plus == std::string::npos) throw DataError("unknown method '" + method + "'");
    const Strategy st = parse_strategy(method.substr(0, plus));
    const Metaheuristic mh = parse_metaheuristic(method.substr(plus + 1));
    s = local_search(inst, first_solution(inst, st), mh, setting, cfg.seed).solution;
  }
  return {s, routes_cost(d, s)};
}

}  // namespace

std::string render_svg(const Instance& instance, const Solution& solution, int size) {
  double xmin = std::numeric_limits<double>::infinity(), ymin = xmin;
  double xmax = -xmin, ymax = -xmin;
  for (const Point& p : instance.coords()) {
    xmin = std::min(xmin, p.x);
    xmax = std::max(xmax, p.x);
    ymin = std::min(ymin, p.y);
    ymax = std::max(ymax, p.y);
  }
  const double margin = 20.0;
  const double span = std::max({xmax - xmin, ymax - ymin, 1e-12});
  const double scale = (size - 2 * margin) / span;
  auto px = [&](const Point& p) { return fmt(margin + (p.x - xmin) * scale); };
  // SVG y grows downwards.
  auto py = [&](const Point& p) { return fmt(size - margin - (p.y - ymin) * scale); };

  std::ostringstream out;
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size << "\" height=\"" << size
      << "\" viewBox=\"0 0 " << size << ' ' << size << "\">\n"
      << "  <rect x=\"0\" y=\"0\" width=\"" << size << "\" height=\"" << size << "\" fill=\"white\"/>\n";
  for (std::size_t k = 0; k < solution.routes.size(); ++k) {
    out << "  <polyline fill=\"none\" stroke-width=\"2\" stroke=\"" << kPalette[k % std::size(kPalette)]
        << "\" points=\"";
    const Point& depot = instance.coord(0);
    out << px(depot) << ',' << py(depot);
    for (int c : solution.routes[k]) out << ' ' << px(instance.coord(c)) << ',' << py(instance.coord(c));
    out << ' ' << px(depot) << ',' << py(depot) << "\"/>\n";
  }
  for (int c = 1; c < instance.n(); ++c) {
    out << "  <circle cx=\"" << px(instance.coord(c)) << "\" cy=\"" << py(instance.coord(c))
        << "\" r=\"4\" fill=\"black\"/>\n";
  }
  const Point& depot = instance.coord(0);
  out << "  <rect x=\"" << fmt(margin + (depot.x - xmin) * scale - 7) << "\" y=\""
      << fmt(size - margin - (depot.y - ymin) * scale - 7) << "\" width=\"14\" height=\"14\" fill=\"gold\" "
      << "stroke=\"black\"/>\n"
      << "</svg>\n";
  return out.str();
}

Solution solve_with_model(const NetworkParams& params, const Instance& instance, int beam, int iterations) {
  return beam_search(predict(params, instance, iterations), instance, beam).best().solution;
}

Solution solve_pipeline(const NetworkParams& params, const Instance& instance, std::int64_t total, int iterations,
                        std::uint64_t seed) {
  const int beam = static_cast<int>(std::max<std::int64_t>(1, total / 10));
  const Solution start = solve_with_model(params, instance, beam, iterations);
  return local_search(instance, start, Metaheuristic::kGuidedLocalSearch, std::max<std::int64_t>(0, total - beam), seed)
      .solution;
}

BenchReport bench(const std::vector<BenchInstance>& instances, const BenchConfig& cfg) {
  if (!cfg.plot_dir.empty()) std::filesystem::create_directories(cfg.plot_dir);
  std::vector<std::vector<BenchRow>> per_instance(instances.size());
  parallel_for(static_cast<int>(instances.size()), cfg.threads, [&](int i) {
    const BenchInstance& bi = instances[i];
    std::vector<BenchRow>& rows = per_instance[i];
    std::optional<ExactResult> exact;
    std::string exact_error;
    try {
      exact = solve_exact(bi.instance);
    } catch (const SizeGuardError& e) {
      exact_error = e.what();
    }
    for (const std::string& method : cfg.methods) {
      const std::vector<std::int64_t> settings =
          method == "exact" ? std::vector<std::int64_t>{0} : cfg.settings;
      Solution last;
      bool have_last = false;
      for (std::int64_t setting : settings) {
        BenchRow row;
        row.instance = bi.id;
        row.method = method;
        row.setting = setting;
        const auto t0 = std::chrono::steady_clock::now();
        try {
          if (method == "exact") {
            if (!exact) throw SizeGuardError(exact_error);
            // Report the solver's own time, not the cached result's.
            const ExactResult again = solve_exact(bi.instance);
            row.cost = again.cost;
            last = again.solution;
          } else {
            MethodRun run = run_method(method, bi.instance, setting, cfg);
            row.cost = run.cost;
            last = std::move(run.solution);
          }
          have_last = true;
        } catch (const std::exception& e) {
          row.failed = true;
          row.message = e.what();
          row.cost = std::numeric_limits<double>::quiet_NaN();
        }
        row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        rows.push_back(std::move(row));
      }
      if (have_last && !cfg.plot_dir.empty()) {
        std::ofstream(cfg.plot_dir / (bi.id + "_" + method + ".svg")) << render_svg(bi.instance, last);
      }
    }
    double reference = std::numeric_limits<double>::infinity();
    if (exact) {
      reference = exact->cost;
    } else if (bi.reference) {
      reference = *bi.reference;
    } else {
      for (const auto& r : rows) {
        if (!r.failed) reference = std::min(reference, r.cost);
      }
    }
    for (auto& r : rows) {
      if (r.failed) {
        r.error = std::numeric_limits<double>::quiet_NaN();
        continue;
      }
      // The same tour summed in another route order can land an ulp below the optimum.
      r.error = r.cost / reference - 1.0;
      if (r.error < 0.0 && r.error > -1e-12) r.error = 0.0;
    }
  });
  BenchReport report;
  for (auto& rows : per_instance) {
    for (auto& r : rows) report.rows.push_back(std::move(r));
  }
  report.aggregate = aggregate_rows(report.rows);
  return report;
}

std::vector<AggregateRow> aggregate_rows(const std::vector<BenchRow>& rows) {
  std::vector<AggregateRow> out;
  std::map<std::pair<std::string, std::int64_t>, std::size_t> index;
  for (const auto& r : rows) {
    const auto key = std::make_pair(r.method, r.setting);
    auto it = index.find(key);
    if (it == index.end()) {
      it = index.emplace(key, out.size()).first;
      AggregateRow fresh;
      fresh.method = r.method;
      fresh.setting = r.setting;
      out.push_back(fresh);
    }
    AggregateRow& a = out[it->second];
    if (r.failed) {
      ++a.failures;
      continue;
    }
    ++a.count;
    a.mean_cost += r.cost;
    a.mean_error += r.error;
    a.mean_seconds += r.seconds;
  }
  for (auto& a : out) {
    if (a.count == 0) continue;
    a.mean_cost /= a.count;
    a.mean_error /= a.count;
    a.mean_seconds /= a.count;
  }
  return out;
}

nlohmann::json report_to_json(const BenchReport& report) {
  auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : report.rows) {
    rows.push_back({{"instance", r.instance},
                    {"method", r.method},
                    {"setting", r.setting},
                    {"cost", num(r.cost)},
                    {"error", num(r.error)},
                    {"seconds", r.seconds},
                    {"failed", r.failed},
                    {"message", r.message}});
  }
  nlohmann::json agg = nlohmann::json::array();
  for (const auto& a : report.aggregate) {
    agg.push_back({{"method", a.method},
                   {"setting", a.setting},
                   {"count", a.count},
                   {"failures", a.failures},
                   {"mean_cost", num(a.mean_cost)},
                   {"mean_error", num(a.mean_error)},
                   {"mean_seconds", a.mean_seconds}});
  }
  return {{"rows", rows}, {"aggregate", agg}};
}

BenchReport report_from_json(const nlohmann::json& j) {
  auto num = [](const nlohmann::json& v) {
    return v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>();
  };
  BenchReport report;
  try {
    for (const auto& r : j.at("rows")) {
      report.rows.push_back({r.at("instance").get<std::string>(), r.at("method").get<std::string>(),
                             r.at("setting").get<std::int64_t>(), num(r.at("cost")), num(r.at("error")),
                             r.at("seconds").get<double>(), r.at("failed").get<bool>(),
                             r.at("message").get<std::string>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bench report: ") + e.what());
  }
  report.aggregate = aggregate_rows(report.rows);
  return report;
}

std::string format_aggregate(const std::vector<AggregateRow>& rows) {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof line, "%-44s %8s %6s %6s %12s %10s %10s\n", "method", "setting", "count", "fail",
                "mean_cost", "error_%", "seconds");
  out << line;
  for (const auto& a : rows) {
    std::snprintf(line, sizeof line, "%-44s %8lld %6d %6d %12.4f %10.3f %10.4f\n", a.method.c_str(),
                  static_cast<long long>(a.setting), a.count, a.failures, a.mean_cost, 100.0 * a.mean_error,
                  a.mean_seconds);
    out << line;
  }
  return out.str();
}

nlohmann::json ensemble_to_json(const EnsembleResult& ensemble) {
  nlohmann::json out = nlohmann::json::array();
  for (std::size_t e = 0; e < ensemble.entries.size(); ++e) {
    const auto& entry = ensemble.entries[e];
    out.push_back({{"strategy", std::string(to_string(entry.strategy))},
                   {"metaheuristic", std::string(to_string(entry.metaheuristic))},
                   {"budget", entry.budget},
                   {"cost", entry.cost},
                   {"best", e == ensemble.best}});
  }
  return out;
}

}  // namespace mtsp
