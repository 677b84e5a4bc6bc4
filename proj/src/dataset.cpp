#include "mtsp/dataset.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>

#include "mtsp/error.hpp"
#include "mtsp/exact.hpp"
#include "mtsp/parallel.hpp"

namespace mtsp {
namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

template <class T>
T field(const nlohmann::json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) throw DataError(std::string("JSON: missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("JSON: bad field '") + key + "': " + e.what());
  }
}

}  // namespace

nlohmann::json instance_to_json(const Instance& instance) {
  nlohmann::json coords = nlohmann::json::array();
  for (const Point& p : instance.coords()) coords.push_back({p.x, p.y});
  return {{"m", instance.m()}, {"coords", coords}};
}

Instance instance_from_json(const nlohmann::json& j) {
  const auto raw = field<std::vector<std::vector<double>>>(j, "coords");
  std::vector<Point> coords;
  for (const auto& xy : raw) {
    if (xy.size() != 2) throw DataError("JSON: coordinate pairs must have two entries");
    coords.push_back({xy[0], xy[1]});
  }
  return Instance(std::move(coords), field<int>(j, "m"));
}

nlohmann::json solution_to_json(const Solution& solution) { return {{"routes", solution.routes}}; }

Solution solution_from_json(const nlohmann::json& j) {
  return Solution{field<std::vector<std::vector<int>>>(j, "routes")};
}

nlohmann::json sample_to_json(const LabeledSample& s) {
  return {{"instance", instance_to_json(s.instance)}, {"solution", solution_to_json(s.solution)}, {"cost", s.cost}};
}

LabeledSample sample_from_json(const nlohmann::json& j) {
  LabeledSample s{instance_from_json(field<nlohmann::json>(j, "instance")),
                  solution_from_json(field<nlohmann::json>(j, "solution")), field<double>(j, "cost")};
  if (!validate_solution(s.instance, s.solution).ok()) throw DataError("sample label does not validate");
  return s;
}

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

std::vector<std::pair<int, int>> dataset_cells(const DatasetSpec& spec) {
  std::vector<std::pair<int, int>> cells;
  for (int m = spec.m_min; m <= spec.m_max; ++m) {
    for (int n = std::max(spec.n_min, 2 * m); n <= spec.n_max; ++n) {
      if (m >= 1 && m < n) cells.emplace_back(n, m);
    }
  }
  return cells;
}

std::uint64_t sample_seed(std::uint64_t seed, int n, int m, int index) {
  std::uint64_t h = splitmix(seed);
  h = splitmix(h ^ static_cast<std::uint64_t>(n));
  h = splitmix(h ^ static_cast<std::uint64_t>(m));
  return splitmix(h ^ static_cast<std::uint64_t>(index));
}

std::vector<LabeledSample> generate_cell(int n, int m, int count, std::uint64_t seed, int threads) {
  std::vector<std::optional<LabeledSample>> out(count);
  parallel_for(count, threads, [&](int i) {
    const Instance inst = generate_instance(n, m, sample_seed(seed, n, m, i));
    ExactResult r = solve_exact(inst);
    out[i] = LabeledSample{inst, std::move(r.solution), r.cost};
  });
  std::vector<LabeledSample> samples;
  samples.reserve(count);
  for (auto& s : out) samples.push_back(std::move(*s));
  return samples;
}

nlohmann::json manifest_to_json(const Manifest& mf) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : mf.cells) cells.push_back({{"n", c.n}, {"m", c.m}, {"count", c.count}, {"file", c.file}});
  const DatasetSpec& s = mf.spec;
  return {{"spec",
           {{"n_min", s.n_min},
            {"n_max", s.n_max},
            {"m_min", s.m_min},
            {"m_max", s.m_max},
            {"count_per_cell", s.count_per_cell},
            {"seed", s.seed}}},
          {"cells", cells},
          {"solver_version", mf.solver_version},
          {"note", "desk-scale corpus: small n and m ranges and per-cell counts, labels from the exact solver"}};
}

Manifest manifest_from_json(const nlohmann::json& j) {
  Manifest mf;
  const auto spec = field<nlohmann::json>(j, "spec");
  mf.spec.n_min = field<int>(spec, "n_min");
  mf.spec.n_max = field<int>(spec, "n_max");
  mf.spec.m_min = field<int>(spec, "m_min");
  mf.spec.m_max = field<int>(spec, "m_max");
  mf.spec.count_per_cell = field<int>(spec, "count_per_cell");
  mf.spec.seed = field<std::uint64_t>(spec, "seed");
  for (const auto& c : field<nlohmann::json>(j, "cells")) {
    mf.cells.push_back({field<int>(c, "n"), field<int>(c, "m"), field<int>(c, "count"), field<std::string>(c, "file")});
  }
  mf.solver_version = field<std::string>(j, "solver_version");
  return mf;
}

Manifest gen_dataset(const DatasetSpec& spec, const std::filesystem::path& dir, int threads) {
  if (spec.count_per_cell < 1) throw DataError("dataset: count per cell must be positive");
  const auto cells = dataset_cells(spec);
  if (cells.empty()) throw DataError("dataset: the n and m ranges contain no feasible cell");
  const ExactLimits limits;
  for (const auto& [n, m] : cells) {
    if (n > (m == 1 ? limits.max_n_single : limits.max_n_multi)) {
      throw SizeGuardError("dataset cell n=" + std::to_string(n) + ", m=" + std::to_string(m) +
                           " exceeds the exact solver guard");
    }
  }
  std::filesystem::create_directories(dir);
  Manifest mf;
  mf.spec = spec;
  for (const auto& [n, m] : cells) {
    char name[32];
    std::snprintf(name, sizeof name, "n%02d_m%d.jsonl", n, m);
    write_shard(dir / name, generate_cell(n, m, spec.count_per_cell, spec.seed, threads));
    mf.cells.push_back({n, m, spec.count_per_cell, name});
  }
  write_json(dir / "manifest.json", manifest_to_json(mf));
  return mf;
}

void write_shard(const std::filesystem::path& path, const std::vector<LabeledSample>& samples) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& s : samples) out << sample_to_json(s).dump() << '\n';
  if (!out) throw DataError("failed writing " + path.string());
}

std::vector<LabeledSample> read_shard(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  std::vector<LabeledSample> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(sample_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::vector<LabeledSample> load_dataset(const std::filesystem::path& dir) {
  const Manifest mf = manifest_from_json(read_json(dir / "manifest.json"));
  std::vector<LabeledSample> out;
  for (const auto& c : mf.cells) {
    auto shard = read_shard(dir / c.file);
    if (static_cast<int>(shard.size()) != c.count) {
      throw DataError(c.file + ": manifest lists " + std::to_string(c.count) + " samples, found " +
                      std::to_string(shard.size()));
    }
    for (auto& s : shard) {
      if (s.instance.n() != c.n || s.instance.m() != c.m) throw DataError(c.file + ": sample shape differs from its cell");
      out.push_back(std::move(s));
    }
  }
  return out;
}

SpotCheck spot_check(const std::vector<LabeledSample>& samples, double fraction, std::uint64_t seed,
                     int threads) {
  std::vector<int> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto take = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(fraction * samples.size())));
  order.resize(std::min(order.size(), take));

  std::vector<int> invalid(order.size(), 0), worse(order.size(), 0);
  parallel_for(static_cast<int>(order.size()), threads, [&](int i) {
    const LabeledSample& s = samples[order[i]];
    const DistanceMatrix d = distance_matrix(s.instance);
    const double label = routes_cost(d, s.solution);
    if (!validate_solution(s.instance, s.solution).ok() || std::abs(label - s.cost) > 1e-9 * std::max(1.0, label)) {
      invalid[i] = 1;
      return;
    }
    double best = label;
    enumerate_valid_solutions(s.instance, [&](const Solution& c) { best = std::min(best, routes_cost(d, c)); });
    worse[i] = best < label - 1e-9 * std::max(1.0, label) ? 1 : 0;
  });
  SpotCheck out;
  out.checked = static_cast<int>(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    out.invalid += invalid[i];
    out.suboptimal += worse[i];
  }
  return out;
}

}  // namespace mtsp
