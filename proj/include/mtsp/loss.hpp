#pragma once

#include <cstdint>
#include <vector>

#include "mtsp/instance.hpp"
#include "mtsp/tensor.hpp"

namespace mtsp {

struct LossConfig {
  double lambda = 0.5;        // weight of the arcs leaving the depot
  int max_exhaustive_m = 6;   // permutation enumeration cutoff
};

/// Work done by one invariant_loss evaluation.
struct LossCounters {
  std::uint64_t layer_pairs = 0;        // (output layer, target layer) evaluations
  std::uint64_t permutation_terms = 0;  // scalar additions over all permutations
};

struct LossBreakdown {
  double value = 0.0;
  std::vector<int> permutation;  // output layer k is matched to target layer permutation[k]
  std::vector<int> directions;   // 1 = target layer used transposed (route reversed)
  std::vector<double> pairwise;  // m x m row-major: pairwise[k * m + p]
  LossCounters counters;
};

/// Binary m x n x n encoding of a valid solution; throws DataError otherwise.
Tensor3 encode_target(const Solution& solution, int n);

/// Cheaper of the two directions of target layer p scored against output
/// layer k. `direction`, when given, receives 1 if the transposed layer won.
double pairwise_layer_loss(const Tensor3& z, const Tensor3& t, int k, int p, double lambda,
                           int* direction = nullptr);

/// min over salesman matchings of Σ_k pairwise(k, match(k)). Enumerates all
/// m! matchings; throws SizeGuardError when m > config.max_exhaustive_m.
/// Ties resolve to the lexicographically smallest (permutation, directions).
LossBreakdown invariant_loss(const Tensor3& z, const Tensor3& t, const LossConfig& config = {});

/// Direct minimum over all 2^m * m! re-representations of the target, each
/// scored by a dense sum over every tensor entry. Requires m <= 4.
double naive_invariant_loss(const Tensor3& z, const Tensor3& t, const LossConfig& config = {});

/// Subgradient of invariant_loss at its minimizing representation:
/// -w(i) / z(k, i, j) on the re-represented target arcs, zero elsewhere.
/// Throws NumericError if the loss is not finite.
Tensor3 loss_gradient(const Tensor3& z, const Tensor3& t, const LossConfig& config = {});

/// Both at once, sharing the matching search.
struct LossAndGradient {
  LossBreakdown breakdown;
  Tensor3 gradient;
};
LossAndGradient loss_and_gradient(const Tensor3& z, const Tensor3& t, const LossConfig& config = {});

}  // namespace mtsp
