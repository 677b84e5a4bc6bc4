#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mtsp/instance.hpp"
#include "mtsp/trainer.hpp"

namespace mtsp {

nlohmann::json instance_to_json(const Instance& instance);
Instance instance_from_json(const nlohmann::json& j);
nlohmann::json solution_to_json(const Solution& solution);
Solution solution_from_json(const nlohmann::json& j);
nlohmann::json sample_to_json(const LabeledSample& sample);
LabeledSample sample_from_json(const nlohmann::json& j);

/// Reads or writes a whole JSON document. Throws DataError on I/O or parse errors.
nlohmann::json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const nlohmann::json& j);

inline constexpr const char* kSolverVersion = "held-karp-partition-dp/1";

struct DatasetSpec {
  int n_min = 4;
  int n_max = 10;
  int m_min = 1;
  int m_max = 3;
  int count_per_cell = 2000;
  std::uint64_t seed = 1;
};

/// (n, m) cells of a spec: n in [max(n_min, 2m), n_max], m in [m_min, m_max].
std::vector<std::pair<int, int>> dataset_cells(const DatasetSpec& spec);

/// Seed of sample `index` of cell (n, m); independent of every other sample.
std::uint64_t sample_seed(std::uint64_t seed, int n, int m, int index);

/// Labels `count` fresh instances of one cell with the exact solver.
std::vector<LabeledSample> generate_cell(int n, int m, int count, std::uint64_t seed, int threads = 0);

struct DatasetCell {
  int n = 0;
  int m = 0;
  int count = 0;
  std::string file;
};

struct Manifest {
  DatasetSpec spec;
  std::vector<DatasetCell> cells;
  std::string solver_version = kSolverVersion;
};

nlohmann::json manifest_to_json(const Manifest& manifest);
Manifest manifest_from_json(const nlohmann::json& j);

/// Writes one JSONL shard per cell plus manifest.json into `dir`.
/// Throws SizeGuardError before writing anything if a cell exceeds the exact solver.
Manifest gen_dataset(const DatasetSpec& spec, const std::filesystem::path& dir, int threads = 0);

void write_shard(const std::filesystem::path& path, const std::vector<LabeledSample>& samples);
std::vector<LabeledSample> read_shard(const std::filesystem::path& path);

/// All shards listed in dir/manifest.json, in manifest order.
std::vector<LabeledSample> load_dataset(const std::filesystem::path& dir);

struct SpotCheck {
  int checked = 0;
  int invalid = 0;     // label does not validate or cost does not match
  int suboptimal = 0;  // enumeration found a cheaper solution
};

/// Re-solves a seeded `fraction` of the samples (at least one) by exhaustive
/// enumeration and compares with the stored labels.
SpotCheck spot_check(const std::vector<LabeledSample>& samples, double fraction, std::uint64_t seed,
                     int threads = 0);

}  // namespace mtsp
