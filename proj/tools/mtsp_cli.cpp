// Command-line front end: dataset generation, solving, training, evaluation,
// benchmarking and plotting.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 size-guard violation.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "mtsp/bench.hpp"
#include "mtsp/config.hpp"
#include "mtsp/dataset.hpp"
#include "mtsp/decoder.hpp"
#include "mtsp/error.hpp"
#include "mtsp/exact.hpp"
#include "mtsp/heuristics.hpp"
#include "mtsp/trainer.hpp"
#include "mtsp/tsplib.hpp"

namespace {

using namespace mtsp;
namespace fs = std::filesystem;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

RunConfig config_from(const std::string& path) { return path.empty() ? RunConfig{} : load_run_config(path); }

Instance read_instance(const std::string& json_path, const std::string& tsplib_path, int m) {
  if (!json_path.empty() && !tsplib_path.empty()) throw UsageError("give either --instance or --tsplib, not both");
  if (!json_path.empty()) return instance_from_json(read_json(json_path));
  if (!tsplib_path.empty()) {
    if (m < 1) throw UsageError("--tsplib needs --m");
    return make_mtsplib(load_tsplib(tsplib_path), m);
  }
  throw UsageError("an instance is required (--instance or --tsplib)");
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << text;
}

// ---- gen ----
struct GenArgs {
  std::string out, config, single;
  int n_min = -1, n_max = -1, m_min = -1, m_max = -1, count = -1, threads = 0;
  long long seed = -1;
  int single_n = 10, single_m = 2;
  double verify = 0.0;
};

int run_gen(const GenArgs& a) {
  if (!a.single.empty()) {
    const Instance inst = generate_instance(a.single_n, a.single_m, a.seed < 0 ? 1 : a.seed);
    write_json(a.single, instance_to_json(inst));
    std::cout << "wrote instance n=" << inst.n() << " m=" << inst.m() << " to " << a.single << '\n';
    return 0;
  }
  DatasetSpec spec = config_from(a.config).data;
  if (a.n_min > 0) spec.n_min = a.n_min;
  if (a.n_max > 0) spec.n_max = a.n_max;
  if (a.m_min > 0) spec.m_min = a.m_min;
  if (a.m_max > 0) spec.m_max = a.m_max;
  if (a.count > 0) spec.count_per_cell = a.count;
  if (a.seed >= 0) spec.seed = static_cast<std::uint64_t>(a.seed);
  const fs::path dir = a.out.empty() ? data_directory() / "dataset" : fs::path(a.out);
  const Manifest mf = gen_dataset(spec, dir, a.threads);
  int total = 0;
  for (const auto& c : mf.cells) total += c.count;
  std::cout << "wrote " << total << " samples in " << mf.cells.size() << " cells to " << dir.string() << '\n';
  if (a.verify > 0.0) {
    const SpotCheck sc = spot_check(load_dataset(dir), a.verify, spec.seed, a.threads);
    std::cout << "spot check: " << sc.checked << " re-solved, " << sc.invalid << " invalid, " << sc.suboptimal
              << " suboptimal\n";
    if (sc.invalid + sc.suboptimal > 0) return 2;
  }
  return 0;
}

// ---- solve ----
struct SolveArgs {
  std::string instance, tsplib, method = "exact", checkpoint, out, svg, config;
  std::string strategy = "path_cheapest_arc", meta = "guided_local_search";
  int m = 0, beam = 20, threads = 1;
  long long budget = -1, seed = 0;
};

int run_solve(const SolveArgs& a) {
  const RunConfig cfg = config_from(a.config);
  const Instance inst = read_instance(a.instance, a.tsplib, a.m);
  const std::int64_t budget = a.budget >= 0 ? a.budget : cfg.budget;
  Solution s;
  std::optional<NetworkParams> params;
  if (a.method == "model" || a.method == "pipeline") {
    if (a.checkpoint.empty()) throw UsageError("--method " + a.method + " needs --checkpoint");
    params = load_checkpoint(a.checkpoint);
  }
  if (a.method == "exact") {
    s = solve_exact(inst, cfg.exact).solution;
  } else if (a.method == "heuristic") {
    s = local_search(inst, first_solution(inst, parse_strategy(a.strategy)), parse_metaheuristic(a.meta), budget,
                     a.seed, cfg.search)
            .solution;
  } else if (a.method == "ensemble") {
    const EnsembleResult e = baseline_ensemble(inst, budget, a.seed, cfg.search, a.threads);
    std::cerr << ensemble_to_json(e).dump(2) << '\n';
    s = e.best_entry().solution;
  } else if (a.method == "model") {
    s = solve_with_model(*params, inst, a.beam, cfg.train.iterations);
  } else if (a.method == "pipeline") {
    s = solve_pipeline(*params, inst, budget, cfg.train.iterations, a.seed);
  } else {
    throw UsageError("unknown method '" + a.method + "' (exact, heuristic, ensemble, model, pipeline)");
  }
  nlohmann::json out = solution_to_json(s);
  out["cost"] = solution_cost(inst, s);
  out["method"] = a.method;
  std::cout << out.dump() << '\n';
  if (!a.out.empty()) write_json(a.out, out);
  if (!a.svg.empty()) write_text(a.svg, render_svg(inst, s));
  return 0;
}

// ---- train ----
struct TrainArgs {
  std::string data, val, out = "run", config, resume;
  bool desk = false;
  int epochs = -1, threads = -1;
  long long max_steps = -1;
};

int run_train(const TrainArgs& a) {
  RunConfig cfg = config_from(a.config);
  if (a.desk) {
    const NetworkConfig d = NetworkConfig::desk();
    cfg.network.d_model = d.d_model;
    cfg.network.d_ff = d.d_ff;
    cfg.network.blocks = d.blocks;
  }
  if (a.epochs > 0) cfg.train.epochs = a.epochs;
  if (a.threads >= 0) cfg.train.threads = a.threads;
  if (a.max_steps >= 0) cfg.train.max_steps = a.max_steps;
  if (a.data.empty()) throw UsageError("--data is required");
  const auto data = load_dataset(a.data);
  const auto val = a.val.empty() ? std::vector<LabeledSample>{} : load_dataset(a.val);
  fs::create_directories(a.out);
  cfg.train.checkpoint_dir = fs::path(a.out) / "checkpoints";
  cfg.train.log_path = fs::path(a.out) / "train_log.csv";
  write_text((fs::path(a.out) / "config.toml").string(), format_run_config(cfg));
  std::cout << "training on " << data.size() << " samples (" << val.size() << " validation)\n";
  const TrainResult r = a.resume.empty() ? train(data, val, cfg.network, cfg.train)
                                         : train_from(load_checkpoint(a.resume), data, val, cfg.train);
  for (const auto& e : r.log) {
    std::printf("epoch %3d step %8lld loss %.6f val %.6f %.1fs\n", e.epoch, static_cast<long long>(e.step),
                e.mean_loss, e.validation_loss, e.wall_seconds);
  }
  save_checkpoint(fs::path(a.out) / "final.bin", r.params);
  std::cout << "best epoch " << r.best_epoch << (r.stopped_early ? " (early stop)" : "") << ", wrote "
            << (fs::path(a.out) / "final.bin").string() << '\n';
  return 0;
}

// ---- eval ----
struct EvalArgs {
  std::string checkpoint, data, config;
  std::vector<int> beams;
  int threads = 0;
};

int run_eval(const EvalArgs& a) {
  const RunConfig cfg = config_from(a.config);
  const NetworkParams params = load_checkpoint(a.checkpoint);
  const auto data = load_dataset(a.data);
  const EvalReport r = evaluate(params, data, a.beams.empty() ? cfg.beams : a.beams, cfg.train.iterations, a.threads);
  std::printf("%8s %12s %8s %8s\n", "beam", "error_%", "decoded", "failed");
  for (const auto& b : r.beams) {
    std::printf("%8d %12.4f %8d %8d\n", b.beam, 100.0 * b.mean_error, b.decoded, b.failures);
  }
  return 0;
}

// ---- bench ----
struct BenchArgs {
  std::string data, checkpoint, out, plots, config;
  std::vector<std::string> instances, tsplib, methods;
  std::vector<long long> settings;
  std::vector<int> ms{2, 3, 5, 7};
  int limit = 0, threads = 0;
  bool nint = false;
  long long seed = 0;
};

int run_bench(const BenchArgs& a) {
  const RunConfig cfg = config_from(a.config);
  std::vector<BenchInstance> items;
  if (!a.data.empty()) {
    const auto data = load_dataset(a.data);
    for (std::size_t i = 0; i < data.size(); ++i) {
      items.push_back({"sample" + std::to_string(i), data[i].instance, std::nullopt});
    }
  }
  for (const auto& p : a.instances) items.push_back({fs::path(p).stem().string(), instance_from_json(read_json(p)), {}});
  for (const auto& p : a.tsplib) {
    const TsplibProblem prob = load_tsplib(p);
    for (int m : a.ms) {
      items.push_back({prob.name + "_m" + std::to_string(m), make_mtsplib(prob, m), mtsplib_reference(prob.name, m)});
    }
  }
  if (a.nint && !a.tsplib.empty()) std::cerr << "note: --nint only affects reported TSPLIB distances\n";
  if (items.empty()) throw UsageError("nothing to benchmark (--data, --instance or --tsplib)");
  if (a.limit > 0 && static_cast<int>(items.size()) > a.limit) items.erase(items.begin() + a.limit, items.end());

  BenchConfig bc;
  if (!a.methods.empty()) bc.methods = a.methods;
  if (!a.settings.empty()) bc.settings.assign(a.settings.begin(), a.settings.end());
  std::optional<NetworkParams> params;
  if (!a.checkpoint.empty()) {
    params = load_checkpoint(a.checkpoint);
    bc.model = &*params;
  }
  bc.iterations = cfg.train.iterations;
  bc.seed = static_cast<std::uint64_t>(a.seed);
  bc.threads = a.threads;
  bc.plot_dir = a.plots;
  const BenchReport report = bench(items, bc);
  std::cout << format_aggregate(report.aggregate);
  if (!a.out.empty()) write_json(a.out, report_to_json(report));
  return 0;
}

// ---- plot ----
struct PlotArgs {
  std::string instance, tsplib, solution, out;
  int m = 0, size = 600;
};

int run_plot(const PlotArgs& a) {
  const Instance inst = read_instance(a.instance, a.tsplib, a.m);
  const Solution s = solution_from_json(read_json(a.solution));
  const ValidityReport report = validate_solution(inst, s);
  if (!report.ok()) throw DataError("solution does not validate: " + report.detail);
  write_text(a.out, render_svg(inst, s, a.size));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learned and classical solvers for the multiple traveling salesmen problem"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* g = app.add_subcommand("gen", "Generate a labeled dataset (or one instance with --single)");
  g->add_option("--out", gen.out, "Output directory (default $MTSP_DATA_DIR/dataset)");
  g->add_option("--config", gen.config, "Config file");
  g->add_option("--n-min", gen.n_min, "Smallest n (depot included)");
  g->add_option("--n-max", gen.n_max, "Largest n");
  g->add_option("--m-min", gen.m_min, "Smallest m");
  g->add_option("--m-max", gen.m_max, "Largest m");
  g->add_option("--count", gen.count, "Samples per (n, m) cell");
  g->add_option("--seed", gen.seed, "Dataset seed");
  g->add_option("--threads", gen.threads, "Worker threads (0 = all cores)");
  g->add_option("--verify", gen.verify, "Fraction of samples to re-solve by enumeration");
  g->add_option("--single", gen.single, "Write one unlabeled instance JSON to this path");
  g->add_option("--n", gen.single_n, "Cities (with --single), depot included");
  g->add_option("--m", gen.single_m, "Salesmen (with --single)");

  SolveArgs solve;
  auto* s = app.add_subcommand("solve", "Solve one instance");
  s->add_option("--instance", solve.instance, "Instance JSON");
  s->add_option("--tsplib", solve.tsplib, "TSPLIB file (first node is the depot)");
  s->add_option("--m", solve.m, "Salesmen for --tsplib");
  s->add_option("--method", solve.method, "exact|heuristic|ensemble|model|pipeline");
  s->add_option("--beam", solve.beam, "Beam width for model/pipeline");
  s->add_option("--budget", solve.budget, "Local-search candidate budget");
  s->add_option("--strategy", solve.strategy, "First-solution strategy");
  s->add_option("--meta", solve.meta, "Metaheuristic");
  s->add_option("--checkpoint", solve.checkpoint, "Model checkpoint");
  s->add_option("--seed", solve.seed, "Search seed");
  s->add_option("--threads", solve.threads, "Worker threads (0 = all cores)");
  s->add_option("--config", solve.config, "Config file");
  s->add_option("--out", solve.out, "Write the solution JSON here");
  s->add_option("--svg", solve.svg, "Write a route plot here");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train the network");
  t->add_option("--data", tr.data, "Dataset directory")->required();
  t->add_option("--val", tr.val, "Validation dataset directory");
  t->add_option("--out", tr.out, "Run directory");
  t->add_option("--config", tr.config, "Config file");
  t->add_option("--resume", tr.resume, "Start from this checkpoint");
  t->add_flag("--desk", tr.desk, "d_model 64, d_ff 256, 3 blocks");
  t->add_option("--epochs", tr.epochs, "Override the epoch count");
  t->add_option("--max-steps", tr.max_steps, "Stop after this many optimizer steps");
  t->add_option("--threads", tr.threads, "Worker threads (0 = all cores)");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Optimality gap of a checkpoint on a labeled dataset");
  e->add_option("--checkpoint", ev.checkpoint, "Model checkpoint")->required();
  e->add_option("--data", ev.data, "Labeled dataset directory")->required();
  e->add_option("--beams", ev.beams, "Beam widths")->delimiter(',');
  e->add_option("--threads", ev.threads, "Worker threads (0 = all cores)");
  e->add_option("--config", ev.config, "Config file");

  BenchArgs bn;
  auto* b = app.add_subcommand("bench", "Compare methods over instances");
  b->add_option("--data", bn.data, "Dataset directory");
  b->add_option("--instance", bn.instances, "Instance JSON files");
  b->add_option("--tsplib", bn.tsplib, "TSPLIB files");
  b->add_option("--m", bn.ms, "Salesmen counts for TSPLIB files")->delimiter(',');
  b->add_option("--methods", bn.methods, "exact, model, pipeline, ensemble, or_min, <strategy>+<metaheuristic>")->delimiter(',');
  b->add_option("--settings", bn.settings, "Beam widths / budgets")->delimiter(',');
  b->add_option("--checkpoint", bn.checkpoint, "Model checkpoint");
  b->add_option("--limit", bn.limit, "Use at most this many instances");
  b->add_option("--out", bn.out, "Report JSON");
  b->add_option("--plots", bn.plots, "SVG directory");
  b->add_option("--seed", bn.seed, "Search seed");
  b->add_option("--threads", bn.threads, "Worker threads (0 = all cores)");
  b->add_option("--config", bn.config, "Config file");
  b->add_flag("--nint", bn.nint, "Nearest-integer TSPLIB distances");

  PlotArgs pl;
  auto* p = app.add_subcommand("plot", "Render a solution as SVG");
  p->add_option("--instance", pl.instance, "Instance JSON");
  p->add_option("--tsplib", pl.tsplib, "TSPLIB file instead of an instance");
  p->add_option("--m", pl.m, "Salesmen for --tsplib");
  p->add_option("--solution", pl.solution, "Solution JSON")->required();
  p->add_option("--out", pl.out, "SVG path")->required();
  p->add_option("--size", pl.size, "Canvas size in pixels");

  auto* c = app.add_subcommand("config", "Print every configuration key with its default");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*g) return run_gen(gen);
    if (*s) return run_solve(solve);
    if (*t) return run_train(tr);
    if (*e) return run_eval(ev);
    if (*b) return run_bench(bn);
    if (*p) return run_plot(pl);
    if (*c) {
      std::cout << format_run_config(RunConfig{});
      return 0;
    }
  } catch (const UsageError& err) {
    std::cerr << "usage error: " << err.what() << '\n';
    return 1;
  } catch (const SizeGuardError& err) {
    std::cerr << "size guard: " << err.what() << '\n';
    return 3;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 2;
  }
  return 1;
}
