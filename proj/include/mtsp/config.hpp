#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "mtsp/dataset.hpp"
#include "mtsp/exact.hpp"
#include "mtsp/heuristics.hpp"
#include "mtsp/poolnet.hpp"
#include "mtsp/trainer.hpp"

namespace mtsp {

/// Every tunable of the pipeline in one place.
struct RunConfig {
  NetworkConfig network;
  TrainConfig train;
  SearchConfig search;
  DatasetSpec data;
  int validation_per_cell = 1000;
  std::vector<int> beams{1, 20, 200, 2000};
  std::int64_t budget = 200;
  ExactLimits exact;
};

/// "key = value" lines, optional "[section]" headers that prefix later keys,
/// '#' comments. Lists are comma separated, optionally in brackets. Starts
/// from the defaults; throws DataError on unknown keys or bad values.
RunConfig parse_run_config(std::string_view text);
RunConfig load_run_config(const std::filesystem::path& path);

/// A complete config file listing every key at its current value.
std::string format_run_config(const RunConfig& config);

/// $MTSP_DATA_DIR if set and non-empty, otherwise "data".
std::filesystem::path data_directory();

}  // namespace mtsp
