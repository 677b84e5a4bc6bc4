#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "mtsp/instance.hpp"

namespace mtsp {

struct ExactResult {
  Solution solution;  // canonical form
  double cost = 0.0;
  std::uint64_t node_count = 0;  // DP transitions examined
};

struct ExactLimits {
  int max_n_multi = 12;   // m >= 2
  int max_n_single = 20;  // m == 1
};

/// Globally optimal mTSP solution. Held-Karp over depot-anchored subsets
/// gives the best closed loop for every city subset; a second subset DP
/// splits the cities into exactly m non-empty loops. Throws SizeGuardError
/// when n exceeds the limit for the instance's m.
ExactResult solve_exact(const Instance& instance, const ExactLimits& limits = {});

struct TspTour {
  std::vector<int> order;  // non-depot cities in visiting order, depot implied at both ends
  double cost = 0.0;
};

/// Optimal single tour through all cities of d, starting and ending at city 0.
TspTour solve_tsp_held_karp(const DistanceMatrix& d, int max_n = 20);

/// Calls `visit` once for every labeled solution (salesmen distinguishable,
/// route directions distinct). Requires n <= 10 and m <= 3.
void enumerate_valid_solutions(const Instance& instance,
                               const std::function<void(const Solution&)>& visit);

/// Materialized enumeration; additionally requires n <= 8.
std::vector<Solution> all_valid_solutions(const Instance& instance);

}  // namespace mtsp
