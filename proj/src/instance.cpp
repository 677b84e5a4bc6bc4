#include "mtsp/instance.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "mtsp/error.hpp"

namespace mtsp {

Instance::Instance(std::vector<Point> coords, int m) : coords_(std::move(coords)), m_(m) {
  const int n = static_cast<int>(coords_.size());
  if (n < 2) {
    throw DataError("instance needs at least 2 cities, got " + std::to_string(n));
  }
  if (m < 1 || m > n - 1) {
    throw DataError("infeasible salesman count m=" + std::to_string(m) + " for n=" +
                    std::to_string(n) + ": need 1 <= m <= n-1 so every route visits a city");
  }
  for (const auto& p : coords_) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
      throw DataError("instance coordinates must be finite");
    }
  }
}

Instance generate_instance(int n, int m, std::uint64_t seed) {
  if (n < 2 || m < 1 || m > n - 1) {
    throw DataError("cannot generate instance with n=" + std::to_string(n) +
                    ", m=" + std::to_string(m) + ": need n >= 2 and 1 <= m <= n-1");
  }
  std::mt19937_64 rng(seed);
  // 53 random mantissa bits -> [0, 1); avoids implementation-defined distributions.
  auto unit = [&rng] { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };
  std::vector<Point> coords(n);
  for (auto& p : coords) {
    p.x = unit();
    p.y = unit();
  }
  return Instance(std::move(coords), m);
}

DistanceMatrix::DistanceMatrix(Eigen::MatrixXd values) : values_(std::move(values)) {
  if (values_.rows() != values_.cols()) {
    throw DataError("distance matrix must be square");
  }
}

DistanceMatrix distance_matrix(const Instance& instance) {
  const int n = instance.n();
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const double dx = instance.coord(i).x - instance.coord(j).x;
      const double dy = instance.coord(i).y - instance.coord(j).y;
      d(i, j) = d(j, i) = std::hypot(dx, dy);
    }
  }
  return DistanceMatrix(std::move(d));
}

DistanceMatrix normalize_by_mean(const DistanceMatrix& d) {
  const double mean = d.mean();
  if (!(mean > 0.0) || !std::isfinite(mean)) {
    throw DataError("cannot normalize distance matrix with mean " + std::to_string(mean) +
                    " (all cities coincide?)");
  }
  return DistanceMatrix(d.values() / mean);
}

SymmetricEigen jacobi_eigen(const Eigen::MatrixXd& input, double tol, int max_sweeps) {
  const int n = static_cast<int>(input.rows());
  Eigen::MatrixXd a = input;
  Eigen::MatrixXd v = Eigen::MatrixXd::Identity(n, n);
  const double scale = std::max(1.0, a.norm());
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < n; ++p) {
      for (int q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    }
    if (std::sqrt(off) <= tol * scale) break;
    for (int p = 0; p < n; ++p) {
      for (int q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (int k = 0; k < n; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  return {a.diagonal(), v};
}

TruncatedSvd symmetric_svd(const Eigen::MatrixXd& a, int rank) {
  const int n = static_cast<int>(a.rows());
  if (a.cols() != n) throw DataError("symmetric_svd: matrix must be square");
  if (rank < 1 || rank > n) {
    throw DataError("symmetric_svd: rank " + std::to_string(rank) + " outside [1, " +
                    std::to_string(n) + "]");
  }
  if (!a.allFinite()) throw DataError("symmetric_svd: non-finite entries");
  const double asym = (a - a.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-12 * std::max(1.0, a.cwiseAbs().maxCoeff())) {
    throw DataError("symmetric_svd: matrix is not symmetric");
  }

  const SymmetricEigen eig = jacobi_eigen(a);
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int x, int y) {
    return std::abs(eig.values(x)) > std::abs(eig.values(y));
  });

  TruncatedSvd out{Eigen::MatrixXd(n, rank), Eigen::VectorXd(rank), Eigen::MatrixXd(n, rank)};
  for (int c = 0; c < rank; ++c) {
    const int src = order[c];
    Eigen::VectorXd u = eig.vectors.col(src);
    int arg = 0;
    for (int i = 1; i < n; ++i) {
      if (std::abs(u(i)) > std::abs(u(arg))) arg = i;
    }
    if (u(arg) < 0) u = -u;
    const double lambda = eig.values(src);
    out.u.col(c) = u;
    out.s(c) = std::abs(lambda);
    out.v.col(c) = lambda < 0 ? Eigen::VectorXd(-u) : u;
  }
  return out;
}

Eigen::MatrixXd svd_city_embedding(const DistanceMatrix& d, int d_svd) {
  const TruncatedSvd svd = symmetric_svd(d.values(), d_svd);
  return svd.u * svd.s.asDiagonal();
}

std::array<double, 2> salesman_features(int k, int m) {
  if (m < 1 || k < 1 || k > m) {
    throw DataError("salesman index " + std::to_string(k) + " out of range [1, " +
                    std::to_string(m) + "]");
  }
  return {static_cast<double>(k) / m, static_cast<double>(m)};
}

Eigen::MatrixXd salesman_feature_matrix(int m) {
  Eigen::MatrixXd out(m, 2);
  for (int k = 0; k < m; ++k) {
    const auto f = salesman_features(k + 1, m);
    out(k, 0) = f[0];
    out(k, 1) = f[1];
  }
  return out;
}

double route_cost(const DistanceMatrix& d, const std::vector<int>& route) {
  if (route.empty()) return 0.0;
  double total = d(Instance::kDepot, route.front());
  for (std::size_t i = 1; i < route.size(); ++i) total += d(route[i - 1], route[i]);
  return total + d(route.back(), Instance::kDepot);
}

double routes_cost(const DistanceMatrix& d, const Solution& solution) {
  double total = 0.0;
  for (const auto& r : solution.routes) total += route_cost(d, r);
  return total;
}

double solution_cost(const Instance& instance, const Solution& solution) {
  const ValidityReport report = validate_solution(instance, solution);
  if (!report.ok()) throw DataError("invalid solution: " + report.detail);
  return routes_cost(distance_matrix(instance), solution);
}

Solution canonicalize(Solution solution) {
  for (auto& r : solution.routes) {
    if (r.size() > 1 && r.front() > r.back()) std::reverse(r.begin(), r.end());
  }
  std::sort(solution.routes.begin(), solution.routes.end());
  return solution;
}

Tensor3 to_tensor(const Solution& solution, int n) {
  const int m = static_cast<int>(solution.routes.size());
  Tensor3 delta(m, n);
  for (int k = 0; k < m; ++k) {
    int prev = Instance::kDepot;
    for (int city : solution.routes[k]) {
      if (city < 0 || city >= n) throw DataError("city index out of range in route");
      delta(k, prev, city) = 1.0;
      prev = city;
    }
    delta(k, prev, Instance::kDepot) = 1.0;
  }
  return delta;
}

Solution from_tensor(const Tensor3& delta) {
  const int m = delta.m();
  const int n = delta.n();
  Solution out;
  out.routes.resize(m);
  for (int k = 0; k < m; ++k) {
    int cur = Instance::kDepot;
    for (int step = 0; step <= n; ++step) {
      int next = -1;
      for (int j = 0; j < n; ++j) {
        if (delta(k, cur, j) != 0.0) {
          if (next != -1) throw DataError("tensor layer has a branching arc");
          next = j;
        }
      }
      if (next == -1) throw DataError("tensor layer has a dead end");
      if (next == Instance::kDepot) break;
      out.routes[k].push_back(next);
      cur = next;
    }
  }
  if (to_tensor(out, n) != delta) throw DataError("tensor is not a route encoding");
  return out;
}

namespace {

void note(ValidityReport& r, const std::string& what) {
  if (!r.detail.empty()) r.detail += "; ";
  r.detail += what;
}

}  // namespace

ValidityReport validate_solution(const Instance& instance, const Tensor3& delta) {
  const int n = instance.n();
  const int m = instance.m();
  if (delta.m() != m || delta.n() != n) {
    throw DataError("tensor shape " + std::to_string(delta.m()) + "x" + std::to_string(delta.n()) +
                    " does not match instance m=" + std::to_string(m) + ", n=" + std::to_string(n));
  }
  ValidityReport r;
  for (double v : delta.flat()) {
    if (v != 0.0 && v != 1.0) {
      r.binary = false;
      note(r, "non-binary entry");
      break;
    }
  }
  for (int k = 0; k < m; ++k) {
    double out = 0.0;
    double in = 0.0;
    for (int j = 1; j < n; ++j) out += delta(k, 0, j);
    for (int i = 1; i < n; ++i) in += delta(k, i, 0);
    if (out != 1.0) {
      r.from_depot = false;
      note(r, "salesman " + std::to_string(k) + " leaves the depot " + std::to_string(out) + " times");
    }
    if (in != 1.0) {
      r.to_depot = false;
      note(r, "salesman " + std::to_string(k) + " returns " + std::to_string(in) + " times");
    }
  }
  for (int c = 1; c < n; ++c) {
    double leave = 0.0;
    double enter = 0.0;
    for (int k = 0; k < m; ++k) {
      for (int j = 0; j < n; ++j) leave += delta(k, c, j);
      for (int i = 0; i < n; ++i) enter += delta(k, i, c);
    }
    if (leave != 1.0) {
      r.leave_once = false;
      note(r, "city " + std::to_string(c) + " left " + std::to_string(leave) + " times");
    }
    if (enter != 1.0) {
      r.enter_once = false;
      note(r, "city " + std::to_string(c) + " entered " + std::to_string(enter) + " times");
    }
    for (int k = 0; k < m; ++k) {
      double kin = 0.0;
      double kout = 0.0;
      for (int i = 0; i < n; ++i) kin += delta(k, i, c);
      for (int j = 0; j < n; ++j) kout += delta(k, c, j);
      if (kin != kout) {
        r.flow_conserved = false;
        note(r, "salesman " + std::to_string(k) + " flow mismatch at city " + std::to_string(c));
      }
    }
  }
  if (!r.binary) return r;

  // Structural subtour check: follow each layer's arcs from the depot; the
  // walk must close at the depot and cover every arc of the layer.
  for (int k = 0; k < m && r.no_subtour; ++k) {
    int arcs = 0;
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) arcs += delta(k, i, j) != 0.0;
    }
    int cur = 0;
    int walked = 0;
    bool closed = false;
    while (walked <= n) {
      int next = -1;
      int outs = 0;
      for (int j = 0; j < n; ++j) {
        if (delta(k, cur, j) != 0.0) {
          ++outs;
          if (next == -1) next = j;
        }
      }
      if (outs != 1 || (cur == 0 && next == 0)) break;
      ++walked;
      cur = next;
      if (cur == 0) {
        closed = true;
        break;
      }
    }
    if (!closed || walked != arcs || walked < 2) {
      r.no_subtour = false;
      note(r, "salesman " + std::to_string(k) + " arcs do not form a single depot cycle");
    }
  }
  return r;
}

ValidityReport validate_solution(const Instance& instance, const Solution& solution) {
  const int n = instance.n();
  ValidityReport r;
  if (static_cast<int>(solution.routes.size()) != instance.m()) {
    r.from_depot = r.to_depot = false;
    note(r, "expected " + std::to_string(instance.m()) + " routes, got " +
                std::to_string(solution.routes.size()));
    return r;
  }
  std::vector<int> seen(n, 0);
  for (const auto& route : solution.routes) {
    if (route.empty()) {
      r.from_depot = r.to_depot = false;
      note(r, "empty route");
    }
    for (int c : route) {
      if (c <= 0 || c >= n) {
        r.leave_once = r.enter_once = false;
        note(r, "city index " + std::to_string(c) + " out of range");
        return r;
      }
      ++seen[c];
    }
  }
  for (int c = 1; c < n; ++c) {
    if (seen[c] != 1) {
      r.leave_once = r.enter_once = false;
      note(r, "city " + std::to_string(c) + " visited " + std::to_string(seen[c]) + " times");
    }
  }
  if (!r.ok()) return r;
  return validate_solution(instance, to_tensor(solution, n));
}

}  // namespace mtsp
