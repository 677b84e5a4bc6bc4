#pragma once

#include <span>
#include <vector>

#include "mtsp/instance.hpp"
#include "mtsp/tensor.hpp"

namespace mtsp {

/// Σ_k log z(k, depot, starts[k]). A zero arc yields -infinity.
/// Throws DataError if the starts repeat a city, hit the depot or mis-size m.
double start_value(const Tensor3& z, std::span<const int> starts);

/// Σ log z over every arc of the solution.
double log_value(const Tensor3& z, const Solution& solution);

struct DecodedSolution {
  Solution solution;
  double log_value = 0.0;
  double cost = 0.0;
};

struct DecodeResult {
  std::vector<DecodedSolution> solutions;  // sorted by log-value, best first
  std::size_t chosen = 0;                  // minimum cost; near-ties go to the higher log-value
  bool smoothed = false;                   // every state died once; z + 1e-12 was used

  const DecodedSolution& best() const { return solutions.at(chosen); }
};

/// Two-phase constrained beam search. Phase one keeps the `beam_width` best
/// assignments of pairwise-distinct first cities; phase two repeatedly extends
/// the first unfinished salesman of each state with an unvisited city or a
/// return to the depot and keeps the `beam_width` best states. The last
/// salesman may not return while cities remain unvisited.
///
/// Throws DataError for beam_width < 1 or a tensor not shaped m x n x n for
/// the instance; NumericError if no valid solution has non-zero value even
/// after smoothing.
DecodeResult beam_search(const Tensor3& z, const Instance& instance, int beam_width);

}  // namespace mtsp
