#include "mtsp/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "mtsp/error.hpp"

namespace mtsp {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kSmoothing = 1e-12;

double safe_log(double v) { return v > 0.0 ? std::log(v) : kNegInf; }

struct State {
  std::vector<std::vector<int>> routes;
  std::vector<char> visited;
  int active = 0;  // first salesman whose route has not returned
  int unvisited = 0;
  double value = 0.0;
};

// A candidate extension of pool[parent] by `city` (0 closes the route).
struct Move {
  int parent = 0;
  int city = 0;
  double value = 0.0;
};

std::vector<std::vector<int>> routes_after(const std::vector<State>& pool, const Move& mv) {
  auto routes = pool[mv.parent].routes;
  if (mv.city != 0) routes[pool[mv.parent].active].push_back(mv.city);
  return routes;
}

// Best `width` moves by value; equal values fall back to the resulting route list.
void prune(std::vector<Move>& moves, const std::vector<State>& pool, int width) {
  auto better = [&](const Move& a, const Move& b) {
    if (a.value != b.value) return a.value > b.value;
    return routes_after(pool, a) < routes_after(pool, b);
  };
  if (static_cast<int>(moves.size()) > width) {
    std::nth_element(moves.begin(), moves.begin() + width, moves.end(), better);
    moves.resize(width);
  }
  std::sort(moves.begin(), moves.end(), better);
}

std::vector<State> start_phase(const Tensor3& logz, int m, int n, int width) {
  std::vector<State> pool(1);
  pool[0].routes.resize(m);
  pool[0].visited.assign(n, 0);
  pool[0].unvisited = n - 1;
  for (int k = 0; k < m; ++k) {
    std::vector<Move> moves;
    for (int p = 0; p < static_cast<int>(pool.size()); ++p) {
      for (int c = 1; c < n; ++c) {
        if (pool[p].visited[c]) continue;
        const double v = pool[p].value + logz(k, 0, c);
        if (v == kNegInf) continue;
        moves.push_back({p, c, v});
      }
    }
    // Route lists compare correctly here because `active` is still k.
    for (auto& s : pool) s.active = k;
    prune(moves, pool, width);
    std::vector<State> next;
    next.reserve(moves.size());
    for (const Move& mv : moves) {
      State s = pool[mv.parent];
      s.routes[k].push_back(mv.city);
      s.visited[mv.city] = 1;
      --s.unvisited;
      s.value = mv.value;
      next.push_back(std::move(s));
    }
    pool = std::move(next);
    if (pool.empty()) break;
  }
  for (auto& s : pool) s.active = 0;
  return pool;
}

std::vector<State> route_phase(std::vector<State> pool, const Tensor3& logz, int m, int n,
                               int width) {
  // Every step visits one city or closes one route, so all states finish together.
  while (!pool.empty() && pool.front().active < m) {
    std::vector<Move> moves;
    for (int p = 0; p < static_cast<int>(pool.size()); ++p) {
      const State& s = pool[p];
      const int k = s.active;
      const int last = s.routes[k].back();
      for (int c = 1; c < n; ++c) {
        if (s.visited[c]) continue;
        const double v = s.value + logz(k, last, c);
        if (v != kNegInf) moves.push_back({p, c, v});
      }
      if (k < m - 1 || s.unvisited == 0) {
        const double v = s.value + logz(k, last, 0);
        if (v != kNegInf) moves.push_back({p, 0, v});
      }
    }
    prune(moves, pool, width);
    std::vector<State> next;
    next.reserve(moves.size());
    for (const Move& mv : moves) {
      State s = pool[mv.parent];
      if (mv.city == 0) {
        ++s.active;
      } else {
        s.routes[s.active].push_back(mv.city);
        s.visited[mv.city] = 1;
        --s.unvisited;
      }
      s.value = mv.value;
      next.push_back(std::move(s));
    }
    pool = std::move(next);
  }
  return pool;
}

std::vector<State> search(const Tensor3& z, int m, int n, int width) {
  Tensor3 logz(m, n);
  for (std::size_t e = 0; e < z.size(); ++e) logz.storage()[e] = safe_log(z.storage()[e]);
  return route_phase(start_phase(logz, m, n, width), logz, m, n, width);
}

}  // namespace

double start_value(const Tensor3& z, std::span<const int> starts) {
  const int m = z.m();
  const int n = z.n();
  if (static_cast<int>(starts.size()) != m) {
    throw DataError("start assignment needs " + std::to_string(m) + " cities");
  }
  std::vector<char> used(n, 0);
  double total = 0.0;
  for (int k = 0; k < m; ++k) {
    const int c = starts[k];
    if (c <= 0 || c >= n) throw DataError("start city out of range: " + std::to_string(c));
    if (used[c]) throw DataError("start city repeated: " + std::to_string(c));
    used[c] = 1;
    total += safe_log(z(k, 0, c));
  }
  return total;
}

double log_value(const Tensor3& z, const Solution& solution) {
  double total = 0.0;
  for (int k = 0; k < static_cast<int>(solution.routes.size()); ++k) {
    int prev = 0;
    for (int c : solution.routes[k]) {
      total += safe_log(z(k, prev, c));
      prev = c;
    }
    total += safe_log(z(k, prev, 0));
  }
  return total;
}

DecodeResult beam_search(const Tensor3& z, const Instance& instance, int beam_width) {
  if (beam_width < 1) throw DataError("beam width must be >= 1, got " + std::to_string(beam_width));
  const int m = instance.m();
  const int n = instance.n();
  if (z.m() != m || z.n() != n) throw DataError("beam_search: tensor shape does not match instance");

  DecodeResult result;
  std::vector<State> pool = search(z, m, n, beam_width);
  if (pool.empty()) {
    Tensor3 smooth = z;
    for (double& v : smooth.storage()) v += kSmoothing;
    pool = search(smooth, m, n, beam_width);
    result.smoothed = true;
  }
  if (pool.empty()) throw NumericError("beam_search: no valid solution with non-zero value");

  const DistanceMatrix d = distance_matrix(instance);
  result.solutions.reserve(pool.size());
  for (State& s : pool) {
    DecodedSolution out;
    out.solution.routes = std::move(s.routes);
    out.log_value = s.value;
    out.cost = routes_cost(d, out.solution);
    result.solutions.push_back(std::move(out));
  }
  // Relabeled or reversed copies of one solution differ in cost only by
  // rounding. Costs within 1e-12 (relative) tie and go to the highest
  // log-value; log-values within 1e-12 tie and go to the smallest route list.
  auto near = [](double a, double b) { return std::abs(a - b) <= 1e-12 * std::max(std::abs(a), std::abs(b)); };
  double min_cost = INFINITY;
  for (const auto& s : result.solutions) min_cost = std::min(min_cost, s.cost);
  double top = -INFINITY;
  for (const auto& s : result.solutions) {
    if (near(s.cost, min_cost)) top = std::max(top, s.log_value);
  }
  bool found = false;
  for (std::size_t i = 0; i < result.solutions.size(); ++i) {
    const auto& s = result.solutions[i];
    if (!near(s.cost, min_cost) || !(s.log_value == top || near(s.log_value, top))) continue;
    if (!found || s.solution < result.solutions[result.chosen].solution) result.chosen = i;
    found = true;
  }
  return result;
}

}  // namespace mtsp
