#include "mtsp/loss.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "mtsp/error.hpp"

namespace mtsp {
namespace {

constexpr double kProbabilityFloor = 1e-300;

double floored_log(double z) { return std::log(std::max(z, kProbabilityFloor)); }

// Row weight: the depot row is scaled by lambda/m, city rows by (1-lambda)/(n-1).
double row_weight(int i, int m, int n, double lambda) {
  return i == 0 ? lambda / m : (1.0 - lambda) / (n - 1);
}

// Per target layer, the unique successor/predecessor of each city (-1 if none).
struct LayerArcs {
  std::vector<int> succ;
  std::vector<int> pred;
};

LayerArcs layer_arcs(const Tensor3& t, int p) {
  const int n = t.n();
  LayerArcs arcs{std::vector<int>(n, -1), std::vector<int>(n, -1)};
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (t(p, i, j) != 0.0) {
        arcs.succ[i] = j;
        arcs.pred[j] = i;
      }
    }
  }
  return arcs;
}

// Row i of the direction-b target picks arc i -> next[i]; rows are summed in
// ascending order so a transposed target layer reproduces the same bits.
double directed_loss(const Tensor3& z, int k, const std::vector<int>& next, double lambda) {
  const int m = z.m();
  const int n = z.n();
  double cities = 0.0;
  for (int i = 1; i < n; ++i) {
    if (next[i] >= 0) cities += floored_log(z(k, i, next[i]));
  }
  const double depot = next[0] >= 0 ? floored_log(z(k, 0, next[0])) : 0.0;
  return -((1.0 - lambda) / (n - 1) * cities + lambda / m * depot);
}

void check_shapes(const Tensor3& z, const Tensor3& t, double lambda) {
  if (!z.same_shape(t)) throw DataError("loss: output and target shapes differ");
  if (z.n() < 2 || z.m() < 1) throw DataError("loss: need m >= 1 and n >= 2");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw DataError("loss: lambda must lie in [0, 1]");
}

}  // namespace

Tensor3 encode_target(const Solution& solution, int n) {
  const int m = static_cast<int>(solution.routes.size());
  if (m < 1 || n < 2 || m > n - 1) throw DataError("encode_target: infeasible (n, m)");
  std::vector<int> seen(n, 0);
  for (const auto& route : solution.routes) {
    if (route.empty()) throw DataError("encode_target: empty route");
    for (int c : route) {
      if (c <= 0 || c >= n || seen[c]++) throw DataError("encode_target: invalid city in route");
    }
  }
  for (int c = 1; c < n; ++c) {
    if (!seen[c]) throw DataError("encode_target: city " + std::to_string(c) + " not visited");
  }
  return to_tensor(solution, n);
}

double pairwise_layer_loss(const Tensor3& z, const Tensor3& t, int k, int p, double lambda,
                           int* direction) {
  check_shapes(z, t, lambda);
  const LayerArcs arcs = layer_arcs(t, p);
  const double forward = directed_loss(z, k, arcs.succ, lambda);
  const double reverse = directed_loss(z, k, arcs.pred, lambda);
  const bool use_reverse = reverse < forward;
  if (direction) *direction = use_reverse ? 1 : 0;
  return use_reverse ? reverse : forward;
}

LossBreakdown invariant_loss(const Tensor3& z, const Tensor3& t, const LossConfig& config) {
  check_shapes(z, t, config.lambda);
  const int m = z.m();
  if (m > config.max_exhaustive_m) {
    throw SizeGuardError("invariant_loss: m=" + std::to_string(m) + " exceeds exhaustive cutoff " +
                         std::to_string(config.max_exhaustive_m));
  }
  LossBreakdown out;
  out.pairwise.assign(static_cast<std::size_t>(m) * m, 0.0);
  std::vector<int> best_dir(static_cast<std::size_t>(m) * m, 0);
  std::vector<LayerArcs> arcs;
  arcs.reserve(m);
  for (int p = 0; p < m; ++p) arcs.push_back(layer_arcs(t, p));
  for (int k = 0; k < m; ++k) {
    for (int p = 0; p < m; ++p) {
      const double forward = directed_loss(z, k, arcs[p].succ, config.lambda);
      const double reverse = directed_loss(z, k, arcs[p].pred, config.lambda);
      const bool use_reverse = reverse < forward;
      out.pairwise[k * m + p] = use_reverse ? reverse : forward;
      best_dir[k * m + p] = use_reverse ? 1 : 0;
      ++out.counters.layer_pairs;
    }
  }

  std::vector<int> perm(m);
  std::iota(perm.begin(), perm.end(), 0);
  out.value = std::numeric_limits<double>::infinity();
  do {
    double total = 0.0;
    for (int k = 0; k < m; ++k) total += out.pairwise[k * m + perm[k]];
    out.counters.permutation_terms += m;
    if (total < out.value || out.permutation.empty()) {
      out.value = total;
      out.permutation = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));

  out.directions.resize(m);
  for (int k = 0; k < m; ++k) out.directions[k] = best_dir[k * m + out.permutation[k]];
  return out;
}

double naive_invariant_loss(const Tensor3& z, const Tensor3& t, const LossConfig& config) {
  check_shapes(z, t, config.lambda);
  const int m = z.m();
  const int n = z.n();
  if (m > 4) throw SizeGuardError("naive_invariant_loss: m=" + std::to_string(m) + " exceeds 4");

  Tensor3 logz(m, n);
  for (std::size_t e = 0; e < z.size(); ++e) logz.storage()[e] = floored_log(z.storage()[e]);

  std::vector<int> perm(m);
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    for (int bits = 0; bits < (1 << m); ++bits) {
      double total = 0.0;
      for (int k = 0; k < m; ++k) {
        const bool transposed = (bits >> k) & 1;
        const int p = perm[k];
        for (int i = 0; i < n; ++i) {
          const double w = row_weight(i, m, n, config.lambda);
          for (int j = 0; j < n; ++j) {
            const double target = transposed ? t(p, j, i) : t(p, i, j);
            total += w * logz(k, i, j) * target;
          }
        }
      }
      best = std::min(best, -total);
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

LossAndGradient loss_and_gradient(const Tensor3& z, const Tensor3& t, const LossConfig& config) {
  LossAndGradient out{invariant_loss(z, t, config), Tensor3(z.m(), z.n())};
  if (!std::isfinite(out.breakdown.value)) throw NumericError("loss_gradient: loss is not finite");
  const int m = z.m();
  const int n = z.n();
  for (int k = 0; k < m; ++k) {
    const LayerArcs arcs = layer_arcs(t, out.breakdown.permutation[k]);
    const std::vector<int>& next = out.breakdown.directions[k] ? arcs.pred : arcs.succ;
    for (int i = 0; i < n; ++i) {
      const int j = next[i];
      if (j < 0) continue;
      const double zij = z(k, i, j);
      if (zij > kProbabilityFloor) {
        out.gradient(k, i, j) = -row_weight(i, m, n, config.lambda) / zij;
      }
    }
  }
  return out;
}

Tensor3 loss_gradient(const Tensor3& z, const Tensor3& t, const LossConfig& config) {
  return loss_and_gradient(z, t, config).gradient;
}

}  // namespace mtsp
