#pragma once

#include <algorithm>
#include <vector>

#include "mtsp/tensor.hpp"

namespace mtsp {

inline constexpr int kDefaultSoftassignIterations = 100;
inline constexpr double kDefaultResidualTolerance = 1e-5;

/// Max absolute deviation of each degree constraint from 1:
/// from_depot: per salesman, out-flow of the depot;
/// to_depot:   per salesman, in-flow of the depot;
/// leave:      per non-depot city, out-flow summed over salesmen;
/// enter:      per non-depot city, in-flow summed over salesmen.
struct ConstraintResiduals {
  double from_depot = 0.0;
  double to_depot = 0.0;
  double leave = 0.0;
  double enter = 0.0;
  double max() const { return std::max({from_depot, to_depot, leave, enter}); }
};

ConstraintResiduals constraint_residuals(const Tensor3& z);

/// Alternating normalization of exp(scores) towards a semi multi-stochastic
/// tensor. Self-loop arcs (i -> i, depot included) are masked to zero.
///
/// Odd iterations rescale each salesman's depot row to sum 1 and each city's
/// out-flow (over all salesmen and destinations) to sum 1. Even iterations do
/// the same for depot columns and city in-flows. Every iteration therefore
/// divides each entry by the sum of exactly one group of a partition of the
/// tensor, which is what the recorded tape replays in reverse.
class SoftassignTape {
 public:
  /// Throws NumericError on non-finite scores; DataError if iterations < 1.
  SoftassignTape(const Tensor3& scores, int iterations);

  int iterations() const { return static_cast<int>(iterates_.size()) - 1; }
  const Tensor3& output() const { return iterates_.back(); }
  /// iterate(0) is the masked exp(scores - max), iterate(r) the state after iteration r.
  const Tensor3& iterate(int r) const { return iterates_[r]; }

  /// Gradient of <upstream, output()> with respect to the scores.
  Tensor3 backward(const Tensor3& upstream) const;

 private:
  std::vector<Tensor3> iterates_;
  std::vector<std::vector<double>> group_sums_;
};

struct SoftTensor {
  Tensor3 z;
  int iterations = 0;
};

SoftTensor softassign(const Tensor3& scores, int iterations = kDefaultSoftassignIterations);

Tensor3 softassign_vjp(const Tensor3& scores, int iterations, const Tensor3& upstream);

/// Group id of entry (k, i, j) under the normalization used by iteration
/// parity `odd`. Groups 0..m-1 are the per-salesman depot rows (columns);
/// group m + c - 1 is city c's out-flow (in-flow).
int softassign_group(bool odd, int m, int k, int i, int j);

}  // namespace mtsp
