#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "mtsp/instance.hpp"

namespace mtsp {

enum class Strategy {
  kPathCheapestArc,
  kPathMostConstrainedArc,
  kGlobalCheapestArc,
  kLocalCheapestArc,
  kFirstUnboundMinValue,
};
inline constexpr std::array<Strategy, 5> kAllStrategies = {
    Strategy::kPathCheapestArc, Strategy::kPathMostConstrainedArc, Strategy::kGlobalCheapestArc,
    Strategy::kLocalCheapestArc, Strategy::kFirstUnboundMinValue};

enum class Metaheuristic {
  kGreedyDescent,
  kSimulatedAnnealing,
  kTabuSearch,
  kGuidedLocalSearch,
};
inline constexpr std::array<Metaheuristic, 4> kAllMetaheuristics = {
    Metaheuristic::kGreedyDescent, Metaheuristic::kSimulatedAnnealing, Metaheuristic::kTabuSearch,
    Metaheuristic::kGuidedLocalSearch};

std::string_view to_string(Strategy s);
std::string_view to_string(Metaheuristic m);
/// Accepts the names produced by to_string; throws DataError otherwise.
Strategy parse_strategy(std::string_view name);
Metaheuristic parse_metaheuristic(std::string_view name);

/// Constructive first solution. Always valid for a valid instance.
Solution first_solution(const Instance& instance, Strategy strategy);

/// One neighborhood move. Positions index into the route's city list.
///  kTwoOpt:   reverse routes[r1][p1..p2] (p1 < p2).
///  kRelocate: move routes[r1][p1] to position p2 of routes[r2] (r1 != r2).
///  kSwap:     exchange routes[r1][p1] and routes[r2][p2] (r1 != r2).
struct Move {
  enum class Kind { kTwoOpt, kRelocate, kSwap };
  Kind kind = Kind::kTwoOpt;
  int r1 = 0;
  int p1 = 0;
  int r2 = 0;
  int p2 = 0;
  friend bool operator==(const Move&, const Move&) = default;
};

/// Cost change of applying `move`, from the four or fewer arcs it replaces.
double move_delta(const DistanceMatrix& d, const Solution& s, const Move& move);
void apply_move(Solution& s, const Move& move);
/// The move that undoes `move` once it has been applied.
Move inverse_move(const Move& move);
/// Every legal move of `s` in a fixed order: 2-opt, relocate, swap.
std::vector<Move> neighborhood(const Solution& s);

struct SearchConfig {
  double initial_temperature = 1.0;  // annealing, in units of the mean arc length
  double cooling = 0.99;             // per accepted move
  int tabu_tenure = 0;               // 0 = n / 2
  bool objective_tabu = false;       // tabu on visited cost values instead of moved cities
  double penalty_factor = 0.1;       // guided local search, times the mean arc length
};

struct SearchResult {
  Solution solution;
  double cost = 0.0;
  std::int64_t evaluated = 0;        // candidate solutions examined
  std::vector<double> accepted;      // current cost after every accepted move
  bool local_optimum = false;        // greedy descent only: a full pass found no improvement
};

/// Local search from a valid start. At most `budget` candidates are examined;
/// the best solution seen is returned. Deterministic for a given seed.
SearchResult local_search(const Instance& instance, const Solution& start, Metaheuristic meta,
                          std::int64_t budget, std::uint64_t seed = 0, const SearchConfig& config = {});

struct EnsembleEntry {
  Strategy strategy{};
  Metaheuristic metaheuristic{};
  std::int64_t budget = 0;
  double cost = 0.0;
  Solution solution;
};

struct EnsembleResult {
  std::vector<EnsembleEntry> entries;  // strategy-major order
  std::size_t best = 0;                // lowest cost, earliest entry on ties
  const EnsembleEntry& best_entry() const { return entries[best]; }
};

/// Every strategy followed by every metaheuristic at the same budget.
EnsembleResult baseline_ensemble(const Instance& instance, std::int64_t budget, std::uint64_t seed = 0,
                                 const SearchConfig& config = {}, int threads = 1);

}  // namespace mtsp
