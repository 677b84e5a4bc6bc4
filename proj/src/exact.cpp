#include "mtsp/exact.hpp"

#include <algorithm>
#include <bit>
#include <limits>
#include <numeric>
#include <string>

#include "mtsp/error.hpp"

namespace mtsp {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Held-Karp over the non-depot cities 1..n-1, mapped to bits 0..n-2.
// path(mask, j): cheapest depot -> ... -> j covering exactly `mask`.
class SubsetPaths {
 public:
  explicit SubsetPaths(const DistanceMatrix& d) : d_(d), k_(d.n() - 1) {
    const std::size_t masks = std::size_t{1} << k_;
    cost_.assign(masks * k_, kInf);
    parent_.assign(masks * k_, -1);
    for (std::uint32_t mask = 1; mask < masks; ++mask) {
      for (int j = 0; j < k_; ++j) {
        if (!(mask & (1u << j))) continue;
        const std::uint32_t prev = mask & ~(1u << j);
        double& slot = cost_[mask * k_ + j];
        if (prev == 0) {
          slot = d_(0, j + 1);
          continue;
        }
        for (int i = 0; i < k_; ++i) {
          if (!(prev & (1u << i))) continue;
          ++transitions_;
          const double c = cost_[prev * k_ + i] + d_(i + 1, j + 1);
          if (c < slot) {
            slot = c;
            parent_[mask * k_ + j] = static_cast<std::int8_t>(i);
          }
        }
      }
    }
  }

  int cities() const { return k_; }
  std::uint64_t transitions() const { return transitions_; }

  // Closed loop cost and its last city for `mask`.
  std::pair<double, int> loop(std::uint32_t mask) const {
    double best = kInf;
    int arg = -1;
    for (int j = 0; j < k_; ++j) {
      if (!(mask & (1u << j))) continue;
      const double c = cost_[mask * k_ + j] + d_(j + 1, 0);
      if (c < best) {
        best = c;
        arg = j;
      }
    }
    return {best, arg};
  }

  std::vector<int> route(std::uint32_t mask) const {
    std::vector<int> out;
    int j = loop(mask).second;
    while (j >= 0) {
      out.push_back(j + 1);
      const int p = parent_[mask * k_ + j];
      mask &= ~(1u << j);
      j = p;
    }
    std::reverse(out.begin(), out.end());
    return out;
  }

 private:
  const DistanceMatrix& d_;
  int k_;
  std::vector<double> cost_;
  std::vector<std::int8_t> parent_;
  std::uint64_t transitions_ = 0;
};

}  // namespace

TspTour solve_tsp_held_karp(const DistanceMatrix& d, int max_n) {
  const int n = d.n();
  if (n > max_n) {
    throw SizeGuardError("Held-Karp size guard: n=" + std::to_string(n) + " exceeds " +
                         std::to_string(max_n));
  }
  if (n < 2) throw DataError("Held-Karp needs at least 2 cities");
  const SubsetPaths paths(d);
  const std::uint32_t full = (1u << (n - 1)) - 1;
  TspTour out;
  out.cost = paths.loop(full).first;
  out.order = paths.route(full);
  return out;
}

ExactResult solve_exact(const Instance& instance, const ExactLimits& limits) {
  const int n = instance.n();
  const int m = instance.m();
  const int guard = m == 1 ? limits.max_n_single : limits.max_n_multi;
  if (n > guard) {
    throw SizeGuardError("exact solver size guard: n=" + std::to_string(n) + " exceeds " +
                         std::to_string(guard) + " for m=" + std::to_string(m));
  }
  const DistanceMatrix d = distance_matrix(instance);
  const SubsetPaths paths(d);
  const int k = paths.cities();
  const std::uint32_t full = (1u << k) - 1;
  const std::size_t masks = std::size_t{1} << k;

  ExactResult result;
  result.node_count = paths.transitions();
  if (m == 1) {
    result.solution.routes = {paths.route(full)};
  } else {
    std::vector<double> loop(masks, kInf);
    for (std::uint32_t mask = 1; mask < masks; ++mask) loop[mask] = paths.loop(mask).first;

    // best[r][mask]: cheapest split of mask into r loops; choice[r][mask] is
    // the loop holding the lowest city of mask.
    std::vector<std::vector<double>> best(m + 1, std::vector<double>(masks, kInf));
    std::vector<std::vector<std::uint32_t>> choice(m + 1, std::vector<std::uint32_t>(masks, 0));
    best[1] = loop;
    for (int r = 2; r <= m; ++r) {
      for (std::uint32_t mask = 1; mask < masks; ++mask) {
        if (std::popcount(mask) < r) continue;
        const std::uint32_t low = mask & (~mask + 1);
        const std::uint32_t rest = mask & ~low;
        // Enumerate submasks of `rest`; the loop is low | sub.
        for (std::uint32_t sub = rest;; sub = (sub - 1) & rest) {
          const std::uint32_t part = low | sub;
          if (part != mask) {
            ++result.node_count;
            const double c = loop[part] + best[r - 1][mask & ~part];
            if (c < best[r][mask]) {
              best[r][mask] = c;
              choice[r][mask] = part;
            }
          }
          if (sub == 0) break;
        }
      }
    }
    std::uint32_t mask = full;
    for (int r = m; r >= 1; --r) {
      const std::uint32_t part = r == 1 ? mask : choice[r][mask];
      result.solution.routes.push_back(paths.route(part));
      mask &= ~part;
    }
  }
  result.solution = canonicalize(std::move(result.solution));
  result.cost = routes_cost(d, result.solution);
  return result;
}

void enumerate_valid_solutions(const Instance& instance,
                               const std::function<void(const Solution&)>& visit) {
  const int n = instance.n();
  const int m = instance.m();
  if (n > 10 || m > 3) {
    throw SizeGuardError("enumeration guard: requires n <= 10 and m <= 3, got n=" +
                         std::to_string(n) + ", m=" + std::to_string(m));
  }
  const int k = n - 1;
  std::vector<int> perm(k);
  std::iota(perm.begin(), perm.end(), 1);
  // Every (ordering of the cities, cut points splitting it into m non-empty
  // consecutive pieces) pair is a distinct labeled solution.
  std::vector<int> cuts(m - 1);
  Solution s;
  s.routes.resize(m);
  do {
    std::function<void(int, int)> place = [&](int piece, int start) {
      if (piece == m - 1) {
        const int prev = m == 1 ? 0 : cuts[m - 2];
        s.routes[m - 1].assign(perm.begin() + prev, perm.end());
        for (int p = 0; p + 1 < m; ++p) {
          const int from = p == 0 ? 0 : cuts[p - 1];
          s.routes[p].assign(perm.begin() + from, perm.begin() + cuts[p]);
        }
        visit(s);
        return;
      }
      // Leave at least one city for each remaining piece.
      for (int cut = start + 1; cut <= k - (m - 1 - piece); ++cut) {
        cuts[piece] = cut;
        place(piece + 1, cut);
      }
    };
    place(0, 0);
  } while (std::next_permutation(perm.begin(), perm.end()));
}

std::vector<Solution> all_valid_solutions(const Instance& instance) {
  if (instance.n() > 8) {
    throw SizeGuardError("all_valid_solutions: requires n <= 8, got n=" + std::to_string(instance.n()));
  }
  std::vector<Solution> out;
  enumerate_valid_solutions(instance, [&](const Solution& s) { out.push_back(s); });
  return out;
}

}  // namespace mtsp
