#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mtsp/instance.hpp"

namespace mtsp {

/// A TSPLIB problem with EUC_2D node coordinates.
struct TsplibProblem {
  std::string name;
  int dimension = 0;
  std::vector<Point> coords;
};

/// Throws DataError on a non-EUC_2D edge weight type, a malformed or
/// missing NODE_COORD_SECTION, or a coordinate count that differs from DIMENSION.
TsplibProblem parse_tsplib(std::string_view text);
TsplibProblem load_tsplib(const std::filesystem::path& path);

/// First listed node becomes the depot; coordinates pass through unscaled.
/// Throws DataError if m >= n. Salesman counts outside {2, 3, 5, 7} are
/// accepted with a warning on stderr.
Instance make_mtsplib(const TsplibProblem& problem, int m);

/// Euclidean distances, each rounded to the nearest integer when `nint`.
DistanceMatrix tsplib_distances(const Instance& instance, bool nint);

/// Lowest route length reported for the mTSPLib benchmark (eil51, berlin52,
/// eil76, rat99 with m in {2, 3, 5, 7}). Reference metadata only.
std::optional<double> mtsplib_reference(std::string_view problem, int m);

}  // namespace mtsp
