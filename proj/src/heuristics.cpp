#include "mtsp/heuristics.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>
#include <random>

#include "mtsp/error.hpp"
#include "mtsp/parallel.hpp"

namespace mtsp {
namespace {

constexpr double kImprovement = 1e-12;
constexpr double kInf = std::numeric_limits<double>::infinity();

// Mutable construction state shared by the path-building strategies.
struct Builder {
  const DistanceMatrix& d;
  int m;
  std::vector<std::vector<int>> routes;
  std::vector<char> free;
  int free_count;

  Builder(const DistanceMatrix& dist, int salesmen)
      : d(dist), m(salesmen), routes(salesmen), free(dist.n(), 1), free_count(dist.n() - 1) {
    free[0] = 0;
  }

  void take(int k, int c) {
    routes[k].push_back(c);
    free[c] = 0;
    --free_count;
  }
  int last(int k) const { return routes[k].empty() ? 0 : routes[k].back(); }

  // Nearest free city to `from`; lowest index on ties, -1 if none.
  int nearest(int from) const {
    const int n = static_cast<int>(free.size());
    int best = -1;
    for (int c = 1; c < n; ++c) {
      if (free[c] && (best < 0 || d(from, c) < d(from, best))) best = c;
    }
    return best;
  }
};

// Regret of attaching c: second-cheapest minus cheapest arc from c to the
// open nodes (the route end and the other free cities).
double regret(const Builder& b, int c, int end) {
  double first = b.d(c, end);
  double second = kInf;
  const int n = b.d.n();
  for (int o = 1; o < n; ++o) {
    if (!b.free[o] || o == c) continue;
    const double v = b.d(c, o);
    if (v < first) {
      second = first;
      first = v;
    } else if (v < second) {
      second = v;
    }
  }
  return second - first;
}

// Salesmen are routed one at a time. A route may end once it has a city and
// the remaining free cities still cover the salesmen after it.
Solution build_paths(const DistanceMatrix& d, int m, Strategy strategy) {
  Builder b(d, m);
  const int n = d.n();
  for (int k = 0; k < m; ++k) {
    const int later = m - 1 - k;
    const int quota = (n - 1) / m + (k < (n - 1) % m ? 1 : 0);
    while (b.free_count > later) {
      const int end = b.last(k);
      const bool may_close = !b.routes[k].empty() && k < m - 1;
      int next = -1;
      bool close = false;
      switch (strategy) {
        case Strategy::kPathCheapestArc:
          next = b.nearest(end);
          close = may_close && d(end, 0) < d(end, next);
          break;
        case Strategy::kPathMostConstrainedArc: {
          double best = -kInf;
          for (int c = 1; c < n; ++c) {
            if (!b.free[c]) continue;
            const double r = regret(b, c, end);
            if (next < 0 || r > best || (r == best && d(end, c) < d(end, next))) {
              best = r;
              next = c;
            }
          }
          close = may_close && d(end, 0) < d(end, b.nearest(end));
          break;
        }
        case Strategy::kFirstUnboundMinValue:
          for (int c = 1; c < n && next < 0; ++c) {
            if (b.free[c]) next = c;
          }
          close = may_close && static_cast<int>(b.routes[k].size()) >= quota;
          break;
        default:
          throw DataError("build_paths: not a path strategy");
      }
      if (close) break;
      b.take(k, next);
    }
  }
  return Solution{std::move(b.routes)};
}

// Every route is seeded from the depot first; then the first open route in
// index order takes its nearest free city or returns to the depot.
Solution build_local(const DistanceMatrix& d, int m) {
  Builder b(d, m);
  for (int k = 0; k < m; ++k) b.take(k, b.nearest(0));
  std::vector<char> open(m, 1);
  while (b.free_count > 0) {
    int k = 0;
    while (!open[k]) ++k;
    const int end = b.last(k);
    const int next = b.nearest(end);
    const bool last_open = std::count(open.begin(), open.end(), 1) == 1;
    if (!last_open && d(end, 0) < d(end, next)) {
      open[k] = 0;
      continue;
    }
    b.take(k, next);
  }
  return Solution{std::move(b.routes)};
}

// Greedy edge matching over city pairs: join the closest two fragment ends
// until m fragments remain; each fragment becomes a route.
Solution build_global(const DistanceMatrix& d, int m) {
  const int n = d.n();
  std::vector<std::pair<int, int>> edges;
  for (int i = 1; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) edges.emplace_back(i, j);
  }
  std::stable_sort(edges.begin(), edges.end(),
                   [&](auto a, auto b) { return d(a.first, a.second) < d(b.first, b.second); });
  std::vector<int> degree(n, 0);
  std::vector<int> root(n);
  std::iota(root.begin(), root.end(), 0);
  auto find = [&](int x) {
    while (root[x] != x) x = root[x] = root[root[x]];
    return x;
  };
  std::vector<std::vector<int>> adj(n);
  int fragments = n - 1;
  for (const auto& [i, j] : edges) {
    if (fragments == m) break;
    if (degree[i] >= 2 || degree[j] >= 2 || find(i) == find(j)) continue;
    root[find(i)] = find(j);
    ++degree[i];
    ++degree[j];
    adj[i].push_back(j);
    adj[j].push_back(i);
    --fragments;
  }
  Solution s;
  std::vector<char> seen(n, 0);
  for (int c = 1; c < n; ++c) {
    if (seen[c] || degree[c] == 2) continue;
    std::vector<int> route;
    int prev = -1;
    for (int cur = c; cur >= 0;) {
      seen[cur] = 1;
      route.push_back(cur);
      int nxt = -1;
      for (int o : adj[cur]) {
        if (o != prev) nxt = o;
      }
      prev = cur;
      cur = nxt;
    }
    s.routes.push_back(std::move(route));
  }
  return s;
}

int node(const std::vector<int>& route, int pos) {
  return pos < 0 || pos >= static_cast<int>(route.size()) ? 0 : route[pos];
}

struct ArcChange {
  std::array<std::pair<int, int>, 4> removed;
  std::array<std::pair<int, int>, 4> added;
  int removed_count = 0;
  int added_count = 0;
};

ArcChange arc_change(const Solution& s, const Move& mv) {
  ArcChange ch;
  const auto& r1 = s.routes[mv.r1];
  auto rem = [&](int a, int b) { ch.removed[ch.removed_count++] = {a, b}; };
  auto add = [&](int a, int b) { ch.added[ch.added_count++] = {a, b}; };
  switch (mv.kind) {
    case Move::Kind::kTwoOpt: {
      const int prev = node(r1, mv.p1 - 1), a = r1[mv.p1], b = r1[mv.p2], next = node(r1, mv.p2 + 1);
      rem(prev, a);
      rem(b, next);
      add(prev, b);
      add(a, next);
      break;
    }
    case Move::Kind::kRelocate: {
      const auto& r2 = s.routes[mv.r2];
      const int a = node(r1, mv.p1 - 1), c = r1[mv.p1], b = node(r1, mv.p1 + 1);
      const int x = node(r2, mv.p2 - 1), y = node(r2, mv.p2);
      rem(a, c);
      rem(c, b);
      rem(x, y);
      add(a, b);
      add(x, c);
      add(c, y);
      break;
    }
    case Move::Kind::kSwap: {
      const auto& r2 = s.routes[mv.r2];
      const int a1 = node(r1, mv.p1 - 1), c1 = r1[mv.p1], b1 = node(r1, mv.p1 + 1);
      const int a2 = node(r2, mv.p2 - 1), c2 = r2[mv.p2], b2 = node(r2, mv.p2 + 1);
      rem(a1, c1);
      rem(c1, b1);
      rem(a2, c2);
      rem(c2, b2);
      add(a1, c2);
      add(c2, b1);
      add(a2, c1);
      add(c1, b2);
      break;
    }
  }
  return ch;
}

template <class Weight>
double weighted_delta(const Solution& s, const Move& mv, const Weight& w) {
  const ArcChange ch = arc_change(s, mv);
  double delta = 0.0;
  for (int i = 0; i < ch.added_count; ++i) delta += w(ch.added[i].first, ch.added[i].second);
  for (int i = 0; i < ch.removed_count; ++i) delta -= w(ch.removed[i].first, ch.removed[i].second);
  return delta;
}

std::array<int, 2> moved_cities(const Solution& s, const Move& mv) {
  switch (mv.kind) {
    case Move::Kind::kTwoOpt:
      return {s.routes[mv.r1][mv.p1], s.routes[mv.r1][mv.p2]};
    case Move::Kind::kRelocate:
      return {s.routes[mv.r1][mv.p1], -1};
    case Move::Kind::kSwap:
      return {s.routes[mv.r1][mv.p1], s.routes[mv.r2][mv.p2]};
  }
  return {-1, -1};
}

double mean_arc(const DistanceMatrix& d) {
  const int n = d.n();
  return d.values().sum() / static_cast<double>(n * (n - 1));
}

class Search {
 public:
  Search(const Instance& inst, const Solution& start, std::int64_t budget)
      : d_(distance_matrix(inst)), budget_(std::max<std::int64_t>(budget, 0)) {
    const ValidityReport report = validate_solution(inst, start);
    if (!report.ok()) throw DataError("local_search: invalid start solution: " + report.detail);
    result_.solution = start;
    result_.cost = routes_cost(d_, start);
    current_ = start;
    cost_ = result_.cost;
  }

  bool exhausted() const { return result_.evaluated >= budget_; }
  double evaluate(const Move& mv) {
    ++result_.evaluated;
    return move_delta(d_, current_, mv);
  }
  void accept(const Move& mv) {
    apply_move(current_, mv);
    cost_ = routes_cost(d_, current_);
    result_.accepted.push_back(cost_);
    if (cost_ < result_.cost) {
      result_.cost = cost_;
      result_.solution = current_;
    }
  }

  SearchResult greedy();
  SearchResult anneal(std::uint64_t seed, const SearchConfig& cfg);
  SearchResult tabu(const SearchConfig& cfg);
  SearchResult guided(const SearchConfig& cfg);

 private:
  DistanceMatrix d_;
  std::int64_t budget_;
  SearchResult result_;
  Solution current_;
  double cost_ = 0.0;
};

SearchResult Search::greedy() {
  std::vector<Move> moves = neighborhood(current_);
  std::size_t idx = 0;
  std::size_t since = 0;
  while (!moves.empty() && !exhausted()) {
    if (since == moves.size()) {
      result_.local_optimum = true;
      break;
    }
    const Move mv = moves[idx];
    if (evaluate(mv) < -kImprovement) {
      const double before = cost_;
      accept(mv);
      if (cost_ > before) throw NumericError("greedy descent increased the cost");
      moves = neighborhood(current_);
      idx %= moves.size();
      since = 0;
    } else {
      idx = (idx + 1) % moves.size();
      ++since;
    }
  }
  if (moves.empty()) result_.local_optimum = true;
  return result_;
}

SearchResult Search::anneal(std::uint64_t seed, const SearchConfig& cfg) {
  std::mt19937_64 rng(seed);
  const double scale = mean_arc(d_);
  double temperature = cfg.initial_temperature;
  while (!exhausted()) {
    const std::vector<Move> moves = neighborhood(current_);
    if (moves.empty()) break;
    const Move mv = moves[rng() % moves.size()];
    const double delta = evaluate(mv);
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    if (delta <= 0.0 || (temperature > 0.0 && u < std::exp(-delta / (temperature * scale)))) {
      accept(mv);
      temperature *= cfg.cooling;
    }
  }
  return result_;
}

SearchResult Search::tabu(const SearchConfig& cfg) {
  const int n = d_.n();
  const int tenure = cfg.tabu_tenure > 0 ? cfg.tabu_tenure : std::max(1, n / 2);
  std::vector<std::int64_t> tabu_until(n, 0);
  std::deque<double> recent;
  std::int64_t iteration = 0;
  while (!exhausted()) {
    const std::vector<Move> moves = neighborhood(current_);
    if (moves.empty()) break;
    const Move* chosen = nullptr;
    double chosen_delta = kInf;
    for (const Move& mv : moves) {
      if (exhausted()) break;
      const double delta = evaluate(mv);
      const double next = cost_ + delta;
      bool forbidden = false;
      if (cfg.objective_tabu) {
        for (double c : recent) forbidden = forbidden || std::abs(c - next) <= 1e-9 * std::max(1.0, c);
      } else {
        for (int c : moved_cities(current_, mv)) forbidden = forbidden || (c > 0 && tabu_until[c] > iteration);
      }
      if (forbidden && !(next < result_.cost - kImprovement)) continue;
      if (delta < chosen_delta) {
        chosen_delta = delta;
        chosen = &mv;
      }
    }
    ++iteration;
    if (!chosen) continue;
    for (int c : moved_cities(current_, *chosen)) {
      if (c > 0) tabu_until[c] = iteration + tenure;
    }
    recent.push_back(cost_);
    if (static_cast<int>(recent.size()) > tenure) recent.pop_front();
    accept(*chosen);
  }
  return result_;
}

SearchResult Search::guided(const SearchConfig& cfg) {
  const int n = d_.n();
  const double lambda = cfg.penalty_factor * mean_arc(d_);
  Eigen::MatrixXi penalty = Eigen::MatrixXi::Zero(n, n);
  const auto augmented = [&](int a, int b) { return d_(a, b) + lambda * penalty(a, b); };

  std::vector<Move> moves = neighborhood(current_);
  std::size_t idx = 0;
  std::size_t since = 0;
  while (!moves.empty() && !exhausted()) {
    if (since == moves.size()) {
      // Local optimum of the augmented cost: penalize the arcs of maximal utility.
      double best = -1.0;
      std::vector<std::pair<int, int>> arcs;
      for (const auto& route : current_.routes) {
        int prev = 0;
        for (std::size_t p = 0; p <= route.size(); ++p) {
          const int cur = p < route.size() ? route[p] : 0;
          const double util = d_(prev, cur) / (1.0 + penalty(prev, cur));
          if (util > best) {
            best = util;
            arcs.clear();
          }
          if (util == best) arcs.emplace_back(prev, cur);
          prev = cur;
        }
      }
      for (const auto& [a, b] : arcs) {
        ++penalty(a, b);
        if (a != b) ++penalty(b, a);
      }
      since = 0;
      continue;
    }
    const Move mv = moves[idx];
    ++result_.evaluated;
    if (weighted_delta(current_, mv, augmented) < -kImprovement) {
      accept(mv);
      moves = neighborhood(current_);
      idx %= moves.size();
      since = 0;
    } else {
      idx = (idx + 1) % moves.size();
      ++since;
    }
  }
  return result_;
}

}  // namespace

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::kPathCheapestArc: return "path_cheapest_arc";
    case Strategy::kPathMostConstrainedArc: return "path_most_constrained_arc";
    case Strategy::kGlobalCheapestArc: return "global_cheapest_arc";
    case Strategy::kLocalCheapestArc: return "local_cheapest_arc";
    case Strategy::kFirstUnboundMinValue: return "first_unbound_min_value";
  }
  return "unknown";
}

std::string_view to_string(Metaheuristic m) {
  switch (m) {
    case Metaheuristic::kGreedyDescent: return "greedy_descent";
    case Metaheuristic::kSimulatedAnnealing: return "simulated_annealing";
    case Metaheuristic::kTabuSearch: return "tabu_search";
    case Metaheuristic::kGuidedLocalSearch: return "guided_local_search";
  }
  return "unknown";
}

Strategy parse_strategy(std::string_view name) {
  for (Strategy s : kAllStrategies) {
    if (to_string(s) == name) return s;
  }
  throw DataError("unknown strategy: " + std::string(name));
}

Metaheuristic parse_metaheuristic(std::string_view name) {
  for (Metaheuristic m : kAllMetaheuristics) {
    if (to_string(m) == name) return m;
  }
  throw DataError("unknown metaheuristic: " + std::string(name));
}

Solution first_solution(const Instance& instance, Strategy strategy) {
  const DistanceMatrix d = distance_matrix(instance);
  switch (strategy) {
    case Strategy::kGlobalCheapestArc: return build_global(d, instance.m());
    case Strategy::kLocalCheapestArc: return build_local(d, instance.m());
    default: return build_paths(d, instance.m(), strategy);
  }
}

double move_delta(const DistanceMatrix& d, const Solution& s, const Move& move) {
  return weighted_delta(s, move, [&d](int a, int b) { return d(a, b); });
}

void apply_move(Solution& s, const Move& mv) {
  auto& r1 = s.routes[mv.r1];
  switch (mv.kind) {
    case Move::Kind::kTwoOpt:
      std::reverse(r1.begin() + mv.p1, r1.begin() + mv.p2 + 1);
      break;
    case Move::Kind::kRelocate: {
      const int c = r1[mv.p1];
      r1.erase(r1.begin() + mv.p1);
      auto& r2 = s.routes[mv.r2];
      r2.insert(r2.begin() + mv.p2, c);
      break;
    }
    case Move::Kind::kSwap:
      std::swap(r1[mv.p1], s.routes[mv.r2][mv.p2]);
      break;
  }
}

Move inverse_move(const Move& mv) {
  if (mv.kind == Move::Kind::kRelocate) return {mv.kind, mv.r2, mv.p2, mv.r1, mv.p1};
  return mv;
}

std::vector<Move> neighborhood(const Solution& s) {
  std::vector<Move> out;
  const int m = static_cast<int>(s.routes.size());
  for (int r = 0; r < m; ++r) {
    const int len = static_cast<int>(s.routes[r].size());
    for (int i = 0; i < len; ++i) {
      for (int j = i + 1; j < len; ++j) {
        // Reversing a whole route only changes its direction.
        if (i == 0 && j == len - 1) continue;
        out.push_back({Move::Kind::kTwoOpt, r, i, r, j});
      }
    }
  }
  for (int r1 = 0; r1 < m; ++r1) {
    const int len1 = static_cast<int>(s.routes[r1].size());
    if (len1 < 2) continue;
    for (int p1 = 0; p1 < len1; ++p1) {
      for (int r2 = 0; r2 < m; ++r2) {
        if (r2 == r1) continue;
        for (int p2 = 0; p2 <= static_cast<int>(s.routes[r2].size()); ++p2) {
          out.push_back({Move::Kind::kRelocate, r1, p1, r2, p2});
        }
      }
    }
  }
  for (int r1 = 0; r1 < m; ++r1) {
    for (int r2 = r1 + 1; r2 < m; ++r2) {
      for (int p1 = 0; p1 < static_cast<int>(s.routes[r1].size()); ++p1) {
        for (int p2 = 0; p2 < static_cast<int>(s.routes[r2].size()); ++p2) {
          out.push_back({Move::Kind::kSwap, r1, p1, r2, p2});
        }
      }
    }
  }
  return out;
}

SearchResult local_search(const Instance& instance, const Solution& start, Metaheuristic meta,
                          std::int64_t budget, std::uint64_t seed, const SearchConfig& config) {
  Search search(instance, start, budget);
  switch (meta) {
    case Metaheuristic::kGreedyDescent: return search.greedy();
    case Metaheuristic::kSimulatedAnnealing: return search.anneal(seed, config);
    case Metaheuristic::kTabuSearch: return search.tabu(config);
    case Metaheuristic::kGuidedLocalSearch: return search.guided(config);
  }
  throw DataError("unknown metaheuristic");
}

EnsembleResult baseline_ensemble(const Instance& instance, std::int64_t budget, std::uint64_t seed,
                                 const SearchConfig& config, int threads) {
  EnsembleResult out;
  out.entries.resize(kAllStrategies.size() * kAllMetaheuristics.size());
  parallel_for(static_cast<int>(out.entries.size()), threads, [&](int e) {
    EnsembleEntry& entry = out.entries[e];
    entry.strategy = kAllStrategies[e / kAllMetaheuristics.size()];
    entry.metaheuristic = kAllMetaheuristics[e % kAllMetaheuristics.size()];
    entry.budget = budget;
    SearchResult r = local_search(instance, first_solution(instance, entry.strategy), entry.metaheuristic,
                                  budget, seed, config);
    entry.cost = r.cost;
    entry.solution = std::move(r.solution);
  });
  for (std::size_t e = 1; e < out.entries.size(); ++e) {
    if (out.entries[e].cost < out.entries[out.best].cost) out.best = e;
  }
  return out;
}

}  // namespace mtsp
